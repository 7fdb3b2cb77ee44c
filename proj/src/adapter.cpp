#include "piwan/adapter.hpp"

namespace piwan {

namespace {

// RK4 step of the nominal derivative with a constant acceleration offset.
// A zero offset returns the plain nominal step so Λ = 0 is bit-identical.
DiscreteDynamics make_offset_dynamics(const Vec3& correction) {
  if (correction.isZero(0.0)) return nominal_discrete_dynamics();
  return [correction](const State& x, const ControlInput& u, double dt) {
    return rk4_step(
        [&correction](const State& s, const ControlInput& c) {
          StateDerivative d = nominal_derivative(s, c);
          d.dv += correction;
          return d;
        },
        x, u, dt);
  };
}

Vec3 saturate(const Vec3& v, double limit) {
  return v.cwiseMax(-limit).cwiseMin(limit);
}

}  // namespace

void AdapterConfig::validate(int model_window_len) const {
  if (estimate_window < 1 || estimate_window > model_window_len) {
    throw ConfigError("adapter.estimate_window must be in [1, T]");
  }
  if ((gains.array() < 0.0).any() || (gains.array() > 1.0).any()) {
    throw ConfigError("adapter.gains entries must be in [0, 1]");
  }
  if (!(correction_limit >= 0.0)) {
    throw ConfigError("adapter.correction_limit must be >= 0");
  }
}

ControlHistory::ControlHistory(int window_len, int estimate_window)
    : capacity_(window_len + estimate_window - 1) {
  if (window_len < 1 || estimate_window < 1) {
    throw Error("ControlHistory: window lengths must be >= 1");
  }
  frames_.resize(capacity_);
}

void ControlHistory::push(double t, const State& x, const ControlInput& u) {
  frames_[head_] = Frame{t, x, u};
  head_ = (head_ + 1) % capacity_;
  if (size_ < capacity_) ++size_;
}

const ControlHistory::Frame& ControlHistory::from_newest(int i_back) const {
  if (i_back < 0 || i_back >= size_) throw Error("ControlHistory: index out of range");
  const int idx = (head_ - 1 - i_back + 2 * capacity_) % capacity_;
  return frames_[idx];
}

Vec3 estimate(const ModelParams& params, const ControlHistory& history,
              const AdapterConfig& cfg) {
  const int t_len = params.config.window_len;
  cfg.validate(t_len);
  if (!history.full()) {
    throw HistoryNotWarm("estimate: history has " + std::to_string(history.size()) + " of " +
                         std::to_string(history.capacity()) + " frames");
  }

  // One window per averaged step, newest step first; all windows share the
  // same batched forward pass.
  const int n_t = cfg.estimate_window;
  std::vector<TrainingWindow> windows(n_t);
  std::vector<Vec3> nominal_dv(n_t);
  for (int i = 0; i < n_t; ++i) {
    TrainingWindow& w = windows[i];
    w.features.resize(kFeatureChannels, t_len);
    for (int j = 0; j < t_len; ++j) {
      const auto& frame = history.from_newest(i + (t_len - 1 - j));
      w.features.col(j) = frame_features(frame.state, frame.input);
    }
    const auto& last = history.from_newest(i);
    nominal_dv[i] = nominal_derivative(last.state, last.input).dv;
  }

  const Eigen::MatrixXd pred = predict_windows(params, windows);
  Vec3 fw = Vec3::Zero();
  for (int i = 0; i < n_t; ++i) {
    fw += Vec3(pred.row(i).transpose()) - nominal_dv[i];
  }
  return fw / static_cast<double>(n_t);
}

DiscreteDynamics corrected_dynamics(const ModelParams& params, const ControlHistory& history,
                                    const AdapterConfig& cfg) {
  return make_offset_dynamics(saturate(cfg.gains.cwiseProduct(estimate(params, history, cfg)),
                                       cfg.correction_limit));
}

AdaptiveModel::AdaptiveModel(ModelParams params, const AdapterConfig& cfg)
    : params_(std::move(params)), cfg_(cfg), history_(params_.config.window_len, cfg.estimate_window) {
  cfg_.validate(params_.config.window_len);
}

DiscreteDynamics AdaptiveModel::model_at(double /*t*/) {
  if (!history_.full()) {
    last_fw_ = Vec3::Zero();
    return nominal_discrete_dynamics();
  }
  last_fw_ = estimate(params_, history_, cfg_);
  return make_offset_dynamics(saturate(cfg_.gains.cwiseProduct(last_fw_), cfg_.correction_limit));
}

void AdaptiveModel::observe(double t, const State& x, const ControlInput& u) {
  history_.push(t, x, u);
}

}  // namespace piwan
