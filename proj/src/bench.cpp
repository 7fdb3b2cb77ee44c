#include "piwan/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "piwan/common.hpp"

namespace piwan {

namespace {

struct CellKey {
  Method method;
  std::size_t traj_index;
  std::size_t wind_index;
};

double wind_magnitude(const WindField& w) { return w.v_w.norm(); }

std::size_t strongest_wind_index(const std::vector<WindField>& winds) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < winds.size(); ++i) {
    if (wind_magnitude(winds[i]) > wind_magnitude(winds[best])) best = i;
  }
  return best;
}

std::string svg_header(int width, int height) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return os.str();
}

// Blue (low) → red (high) two-stop ramp.
std::string heat_color(double v, double lo, double hi) {
  double t = (hi > lo) ? (v - lo) / (hi - lo) : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const int r = static_cast<int>(40 + 215 * t);
  const int g = static_cast<int>(90 + 40 * (1.0 - t));
  const int b = static_cast<int>(255 - 215 * t);
  std::ostringstream os;
  os << "rgb(" << r << ',' << g << ',' << b << ')';
  return os.str();
}

std::string polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                     const std::string& dash) {
  std::ostringstream os;
  os << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\"";
  if (!dash.empty()) os << " stroke-dasharray=\"" << dash << "\"";
  os << " points=\"";
  for (const auto& [x, y] : pts) os << x << ',' << y << ' ';
  os << "\"/>\n";
  return os.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

MethodConfig method_config(Method method) {
  switch (method) {
    case Method::Nom: return {Backbone::Tcn, CollocationMode::Off, false};
    case Method::Tcn: return {Backbone::Tcn, CollocationMode::Off, true};
    case Method::PiMlp: return {Backbone::Mlp, CollocationMode::Resampled, true};
    case Method::PiTcn: return {Backbone::Tcn, CollocationMode::Fixed, true};
    case Method::PiWan: return {Backbone::Tcn, CollocationMode::Resampled, true};
  }
  throw UnknownKind("invalid method");
}

std::string to_string(Method method) {
  switch (method) {
    case Method::Nom: return "nom";
    case Method::Tcn: return "tcn";
    case Method::PiMlp: return "pi-mlp";
    case Method::PiTcn: return "pi-tcn";
    case Method::PiWan: return "pi-wan";
  }
  throw UnknownKind("invalid method");
}

Method method_from_string(const std::string& name) {
  for (Method m : kAllMethods) {
    if (to_string(m) == name) return m;
  }
  throw UnknownKind("unknown method: " + name);
}

double prediction_rmse(const ModelParams* model, const Rollout& rollout, int window_len) {
  const std::vector<TrainingWindow> windows = windowize_rollout(rollout, window_len);
  double acc = 0.0;
  if (model != nullptr) {
    const Eigen::MatrixXd pred = predict_windows(*model, windows);
    for (std::size_t i = 0; i < windows.size(); ++i) {
      acc += (Vec3(pred.row(static_cast<Eigen::Index>(i)).transpose()) - windows[i].target)
                 .squaredNorm();
    }
  } else {
    const int first_end = window_len - 1;
    for (std::size_t i = 0; i < windows.size(); ++i) {
      const FlightRecord& rec = rollout.records[first_end + i];
      acc += (nominal_derivative(rec.state, rec.input).dv - rec.dv_true).squaredNorm();
    }
  }
  return std::sqrt(acc / static_cast<double>(windows.size()));
}

BenchConfig BenchConfig::defaults() {
  BenchConfig cfg;
  for (TrajectoryKind kind : kAllTrajectoryKinds) cfg.trajectories.push_back(Trajectory::of(kind));
  for (double wx : {0.0, 2.0, 4.0, 6.0}) cfg.winds.push_back(WindField::xy(wx, 0.0));
  return cfg;
}

BenchReport run_matrix(const BenchConfig& cfg, const std::map<Method, ModelParams>& checkpoints) {
  if (cfg.methods.empty() || cfg.trajectories.empty() || cfg.winds.empty()) {
    throw ConfigError("run_matrix: methods, trajectories, and winds must be non-empty");
  }
  for (Method m : cfg.methods) {
    if (m != Method::Nom && !checkpoints.contains(m)) {
      throw ConfigError("run_matrix: missing checkpoint for method '" + to_string(m) + "'");
    }
  }

  const std::size_t n_traj = cfg.trajectories.size();
  const std::size_t n_wind = cfg.winds.size();

  // Shared nominal-MPC evaluation rollouts, one per (trajectory, wind).
  Dataset eval_rollouts;
  if (cfg.run_prediction) {
    std::vector<std::pair<Trajectory, WindField>> cells;
    cells.reserve(n_traj * n_wind);
    for (const Trajectory& traj : cfg.trajectories) {
      for (const WindField& wind : cfg.winds) cells.emplace_back(traj, wind);
    }
    CollectConfig ccfg;
    ccfg.duration = cfg.duration;
    ccfg.dt = cfg.mpc.dt;
    ccfg.window_len = cfg.window_len;
    ccfg.seed = cfg.seed;
    ccfg.threads = cfg.threads;
    ccfg.mpc = cfg.mpc;
    ccfg.weights = cfg.weights;
    eval_rollouts = collect_cells(cells, ccfg);
  }

  struct TaskResult {
    double value{std::numeric_limits<double>::quiet_NaN()};
    std::string error;
    double wall_time_s{0.0};
    std::optional<TrackLog> log;
  };

  std::vector<CellKey> keys;
  for (Method m : cfg.methods) {
    for (std::size_t ti = 0; ti < n_traj; ++ti) {
      for (std::size_t wi = 0; wi < n_wind; ++wi) keys.push_back({m, ti, wi});
    }
  }

  const std::size_t keep_wind = strongest_wind_index(cfg.winds);

  std::vector<TaskResult> pred_results(cfg.run_prediction ? keys.size() : 0);
  if (cfg.run_prediction) {
    parallel_for(static_cast<int>(keys.size()), cfg.threads, [&](int i) {
      const CellKey& key = keys[i];
      TaskResult& out = pred_results[i];
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const Rollout& rollout = eval_rollouts.rollouts[key.traj_index * n_wind + key.wind_index];
        const ModelParams* model =
            key.method == Method::Nom ? nullptr : &checkpoints.at(key.method);
        out.value = prediction_rmse(model, rollout, cfg.window_len);
      } catch (const std::exception& e) {
        out.error = e.what();
      }
      out.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    });
  }

  std::vector<TaskResult> track_results(cfg.run_tracking ? keys.size() : 0);
  if (cfg.run_tracking) {
    parallel_for(static_cast<int>(keys.size()), cfg.threads, [&](int i) {
      const CellKey& key = keys[i];
      TaskResult& out = track_results[i];
      const auto t0 = std::chrono::steady_clock::now();
      try {
        TrackLog log;
        if (key.method == Method::Nom) {
          NominalModel model;
          log = track(cfg.trajectories[key.traj_index], model, cfg.winds[key.wind_index], cfg.mpc,
                      cfg.weights, cfg.duration);
        } else {
          AdaptiveModel model(checkpoints.at(key.method), cfg.adapter);
          log = track(cfg.trajectories[key.traj_index], model, cfg.winds[key.wind_index], cfg.mpc,
                      cfg.weights, cfg.duration);
        }
        out.value = log.rmse;
        if (key.wind_index == keep_wind) out.log = std::move(log);
      } catch (const std::exception& e) {
        out.error = e.what();
      }
      out.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    });
  }

  // Deterministic assembly: metric, then method/trajectory/wind in config order.
  BenchReport report;
  auto append = [&](const std::string& metric, std::vector<TaskResult>& results) {
    for (std::size_t i = 0; i < results.size(); ++i) {
      const CellKey& key = keys[i];
      BenchCell cell;
      cell.method = key.method;
      cell.trajectory = cfg.trajectories[key.traj_index].kind;
      cell.wind_x = cfg.winds[key.wind_index].v_w.x();
      cell.wind_y = cfg.winds[key.wind_index].v_w.y();
      cell.metric = metric;
      cell.value = results[i].value;
      cell.seed = cfg.seed;
      cell.error = results[i].error;
      report.cells.push_back(std::move(cell));
      report.timings.push_back(CellTiming{report.cells.size() - 1, results[i].wall_time_s});
      if (results[i].log.has_value()) {
        report.track_logs.emplace_back(report.cells.size() - 1, std::move(*results[i].log));
      }
    }
  };
  if (cfg.run_prediction) append("prediction_rmse", pred_results);
  if (cfg.run_tracking) append("tracking_rmse", track_results);
  return report;
}

void write_matrix_csv(const std::filesystem::path& path, const BenchReport& report) {
  if (report.cells.empty()) throw EmptyReport("write_matrix_csv: no cells");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "method,trajectory,wind_x,wind_y,metric,value,seed,error\n";
  for (const BenchCell& c : report.cells) {
    out << to_string(c.method) << ',' << to_string(c.trajectory) << ','
        << format_double(c.wind_x) << ',' << format_double(c.wind_y) << ',' << c.metric << ','
        << format_double(c.value) << ',' << c.seed << ',' << c.error << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

BenchReport load_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "method,trajectory,wind_x,wind_y,metric,value,seed,error") {
    throw IoError("unexpected matrix header in " + path.string());
  }
  BenchReport report;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 8) throw IoError("malformed matrix row in " + path.string());
    BenchCell cell;
    cell.method = method_from_string(f[0]);
    cell.trajectory = trajectory_kind_from_string(f[1]);
    cell.wind_x = std::stod(f[2]);
    cell.wind_y = std::stod(f[3]);
    cell.metric = f[4];
    cell.value = std::stod(f[5]);
    cell.seed = std::stoull(f[6]);
    cell.error = f[7];
    report.cells.push_back(std::move(cell));
  }
  return report;
}

namespace {

void write_timings_csv(const std::filesystem::path& path, const BenchReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "cell_index,wall_time_s\n";
  for (const CellTiming& t : report.timings) {
    out << t.cell_index << ',' << format_double(t.wall_time_s) << '\n';
  }
}

std::filesystem::path write_heatmap_svg(const std::filesystem::path& dir, TrajectoryKind traj,
                                        const std::vector<const BenchCell*>& cells) {
  // Axes: methods across, winds down, one rect per tracking cell.
  std::vector<std::string> methods, winds;
  for (const BenchCell* c : cells) {
    const std::string m = to_string(c->method);
    if (std::find(methods.begin(), methods.end(), m) == methods.end()) methods.push_back(m);
    const std::string w = format_double(c->wind_x) + "," + format_double(c->wind_y);
    if (std::find(winds.begin(), winds.end(), w) == winds.end()) winds.push_back(w);
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const BenchCell* c : cells) {
    if (std::isfinite(c->value)) {
      lo = std::min(lo, c->value);
      hi = std::max(hi, c->value);
    }
  }

  const int cell_w = 90, cell_h = 34, left = 90, top = 50;
  const int width = left + cell_w * static_cast<int>(methods.size()) + 20;
  const int height = top + cell_h * static_cast<int>(winds.size()) + 20;

  std::ostringstream os;
  os << svg_header(width, height);
  os << "<text x=\"10\" y=\"20\" font-size=\"14\">tracking RMSE [m] — " << to_string(traj)
     << "</text>\n";
  for (std::size_t m = 0; m < methods.size(); ++m) {
    os << "<text x=\"" << left + cell_w * m + 8 << "\" y=\"" << top - 8
       << "\" font-size=\"11\">" << methods[m] << "</text>\n";
  }
  for (std::size_t w = 0; w < winds.size(); ++w) {
    os << "<text x=\"8\" y=\"" << top + cell_h * w + 20 << "\" font-size=\"11\">wind " << winds[w]
       << "</text>\n";
  }
  for (const BenchCell* c : cells) {
    const std::size_t m = std::find(methods.begin(), methods.end(), to_string(c->method)) -
                          methods.begin();
    const std::string wkey = format_double(c->wind_x) + "," + format_double(c->wind_y);
    const std::size_t w = std::find(winds.begin(), winds.end(), wkey) - winds.begin();
    const double x = left + cell_w * m, y = top + cell_h * w;
    const std::string fill =
        std::isfinite(c->value) ? heat_color(c->value, lo, hi) : std::string("rgb(150,150,150)");
    os << "<rect class=\"cell\" x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell_w - 2
       << "\" height=\"" << cell_h - 2 << "\" fill=\"" << fill << "\"/>\n";
    os << "<text x=\"" << x + 6 << "\" y=\"" << y + 21 << "\" font-size=\"11\" fill=\"white\">";
    if (std::isfinite(c->value)) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.4f", c->value);
      os << buf;
    } else {
      os << "error";
    }
    os << "</text>\n";
  }
  os << "</svg>\n";

  const std::filesystem::path path = dir / ("heatmap-" + to_string(traj) + ".svg");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << os.str();
  return path;
}

}  // namespace

void write_track_svg(const std::filesystem::path& path, const TrackLog& log) {
  if (log.steps.empty()) throw EmptyReport("write_track_svg: empty log");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());

  double min_x = 1e30, max_x = -1e30, min_y = 1e30, max_y = -1e30;
  double min_z = 1e30, max_z = -1e30;
  for (const TrackStep& s : log.steps) {
    for (const Vec3& p : {s.state.p, s.ref.p_r}) {
      min_x = std::min(min_x, p.x()); max_x = std::max(max_x, p.x());
      min_y = std::min(min_y, p.y()); max_y = std::max(max_y, p.y());
      min_z = std::min(min_z, p.z()); max_z = std::max(max_z, p.z());
    }
  }
  const double pad = 0.3;
  min_x -= pad; max_x += pad; min_y -= pad; max_y += pad; min_z -= pad; max_z += pad;

  const int panel = 360, margin = 40;
  const int width = 2 * panel + 3 * margin, height = panel + 2 * margin + 20;
  auto map_xy = [&](double x, double y) {
    const double sx = margin + (x - min_x) / (max_x - min_x) * panel;
    const double sy = margin + 20 + (max_y - y) / (max_y - min_y) * panel;
    return std::pair{sx, sy};
  };
  const double t_end = log.steps.back().t;
  auto map_tz = [&](double t, double z) {
    const double sx = 2 * margin + panel + t / std::max(t_end, 1e-9) * panel;
    const double sy = margin + 20 + (max_z - z) / (max_z - min_z) * panel;
    return std::pair{sx, sy};
  };

  std::vector<std::pair<double, double>> ref_xy, act_xy, ref_tz, act_tz;
  for (const TrackStep& s : log.steps) {
    ref_xy.push_back(map_xy(s.ref.p_r.x(), s.ref.p_r.y()));
    act_xy.push_back(map_xy(s.state.p.x(), s.state.p.y()));
    ref_tz.push_back(map_tz(s.t, s.ref.p_r.z()));
    act_tz.push_back(map_tz(s.t, s.state.p.z()));
  }

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << svg_header(width, height);
  char title[160];
  std::snprintf(title, sizeof(title), "%s — wind (%.1f, %.1f) m/s — RMSE %.4f m",
                to_string(log.trajectory.kind).c_str(), log.wind.v_w.x(), log.wind.v_w.y(),
                log.rmse);
  out << "<text x=\"10\" y=\"20\" font-size=\"14\">" << title << "</text>\n";
  out << "<text x=\"" << margin << "\" y=\"" << margin + 12 << "\" font-size=\"11\">x-y</text>\n";
  out << "<text x=\"" << 2 * margin + panel << "\" y=\"" << margin + 12
      << "\" font-size=\"11\">t-z</text>\n";
  out << polyline(ref_xy, "rgb(60,60,60)", "6,4");
  out << polyline(act_xy, "rgb(200,40,40)", "");
  out << polyline(ref_tz, "rgb(60,60,60)", "6,4");
  out << polyline(act_tz, "rgb(200,40,40)", "");
  out << "</svg>\n";
}

std::vector<std::filesystem::path> emit_report(const std::filesystem::path& dir,
                                               const BenchReport& report, ReportFormat format) {
  if (report.cells.empty()) throw EmptyReport("emit_report: no cells");
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;

  switch (format) {
    case ReportFormat::Csv: {
      const std::filesystem::path matrix = dir / "matrix.csv";
      write_matrix_csv(matrix, report);
      written.push_back(matrix);
      if (!report.timings.empty()) {
        const std::filesystem::path timings = dir / "timings.csv";
        write_timings_csv(timings, report);
        written.push_back(timings);
      }
      break;
    }
    case ReportFormat::SvgHeatmap: {
      std::vector<TrajectoryKind> seen;
      for (const BenchCell& c : report.cells) {
        if (c.metric != "tracking_rmse") continue;
        if (std::find(seen.begin(), seen.end(), c.trajectory) == seen.end()) {
          seen.push_back(c.trajectory);
        }
      }
      if (seen.empty()) throw EmptyReport("emit_report: no tracking cells for heatmaps");
      for (TrajectoryKind traj : seen) {
        std::vector<const BenchCell*> cells;
        for (const BenchCell& c : report.cells) {
          if (c.metric == "tracking_rmse" && c.trajectory == traj) cells.push_back(&c);
        }
        written.push_back(write_heatmap_svg(dir, traj, cells));
      }
      break;
    }
    case ReportFormat::SvgTrajectory: {
      if (report.track_logs.empty()) {
        throw EmptyReport("emit_report: report holds no track logs (rendered only by fresh runs)");
      }
      for (const auto& [index, log] : report.track_logs) {
        const BenchCell& cell = report.cells[index];
        const std::filesystem::path path =
            dir / ("track-" + to_string(cell.method) + "-" + to_string(cell.trajectory) + ".svg");
        write_track_svg(path, log);
        written.push_back(path);
      }
      break;
    }
  }
  return written;
}

}  // namespace piwan
