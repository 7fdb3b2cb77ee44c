#include "piwan/config.hpp"

#include <cstdlib>
#include <fstream>

#include <json.hpp>

namespace piwan {

namespace {

using nlohmann::json;

void require_known_keys(const json& obj, const std::string& section,
                        std::initializer_list<const char*> known) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* k : known) {
      if (key == k) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ConfigError("unknown config key '" + section + key + "'");
  }
}

double get_num(const json& obj, const std::string& section, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number()) throw ConfigError("config key '" + section + key + "' must be a number");
  return obj[key].get<double>();
}

std::int64_t get_int(const json& obj, const std::string& section, const char* key,
                     std::int64_t fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number_integer()) {
    throw ConfigError("config key '" + section + key + "' must be an integer");
  }
  return obj[key].get<std::int64_t>();
}

std::string get_str(const json& obj, const std::string& section, const char* key,
                    const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_string()) throw ConfigError("config key '" + section + key + "' must be a string");
  return obj[key].get<std::string>();
}

std::vector<double> get_vec(const json& obj, const std::string& section, const char* key,
                            std::size_t size, const std::vector<double>& fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_array() || obj[key].size() != size) {
    throw ConfigError("config key '" + section + key + "' must be an array of " +
                      std::to_string(size) + " numbers");
  }
  std::vector<double> out;
  for (const auto& v : obj[key]) {
    if (!v.is_number()) {
      throw ConfigError("config key '" + section + key + "' must contain numbers only");
    }
    out.push_back(v.get<double>());
  }
  return out;
}

std::vector<int> get_int_list(const json& obj, const std::string& section, const char* key,
                              const std::vector<int>& fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_array()) throw ConfigError("config key '" + section + key + "' must be an array");
  std::vector<int> out;
  for (const auto& v : obj[key]) {
    if (!v.is_number_integer()) {
      throw ConfigError("config key '" + section + key + "' must contain integers only");
    }
    out.push_back(v.get<int>());
  }
  return out;
}

}  // namespace

Trajectory RunConfig::make_trajectory(TrajectoryKind kind) const {
  Trajectory t;
  t.kind = kind;
  t.radius_x = shape.radius_x;
  t.radius_y = shape.radius_y;
  t.height = shape.height;
  t.angular_rate = shape.angular_rate;
  t.climb_rate = shape.climb_rate;
  t.warp_amplitude = shape.warp_amplitude;
  return t;
}

WindField RunConfig::make_wind(double wx, double wy) const {
  return WindField{Vec3{wx, wy, 0.0}, plant.drag_coeffs};
}

BenchConfig RunConfig::make_bench_config() const {
  BenchConfig b;
  b.methods = bench.methods;
  b.trajectories.clear();
  for (TrajectoryKind kind : bench.trajectories) b.trajectories.push_back(make_trajectory(kind));
  b.winds.clear();
  for (const auto& [wx, wy] : bench.winds) b.winds.push_back(make_wind(wx, wy));
  b.duration = bench.duration;
  b.window_len = data.window_len;
  b.mpc = mpc;
  b.weights = weights;
  b.adapter = adapter;
  b.seed = seed;
  b.threads = threads;
  return b;
}

CollectConfig RunConfig::make_collect_config() const {
  CollectConfig c;
  c.duration = data.duration;
  c.dt = mpc.dt;
  c.window_len = data.window_len;
  c.seed = seed;
  c.threads = threads;
  c.mpc = mpc;
  c.weights = weights;
  return c;
}

std::filesystem::path RunConfig::artifacts_dir() const {
  return std::filesystem::path(output_dir) / "artifacts" / run_id;
}

std::filesystem::path RunConfig::reports_dir() const {
  return std::filesystem::path(output_dir) / "reports" / run_id;
}

void RunConfig::validate() const {
  if (run_id.empty()) throw ConfigError("run_id must not be empty");
  if (run_id.find('/') != std::string::npos) throw ConfigError("run_id must not contain '/'");
  if (threads < 0) throw ConfigError("threads must be >= 0");
  if ((plant.drag_coeffs.array() < 0.0).any()) {
    throw ConfigError("plant.drag_coeffs entries must be >= 0");
  }
  if (!(shape.radius_x > 0.0) || !(shape.radius_y > 0.0) || !(shape.height > 0.0) ||
      !(shape.angular_rate > 0.0)) {
    throw ConfigError("trajectories.{radius_x, radius_y, height, angular_rate} must be positive");
  }
  if ((weights.q_state.array() < 0.0).any() || (weights.r_input.array() < 0.0).any() ||
      (weights.q_terminal.array() < 0.0).any()) {
    throw ConfigError("mpc.weights entries must be >= 0");
  }
  mpc.validate();
  if (!(data.duration > 0.0)) throw ConfigError("data.duration must be positive");
  if (data.window_len < 1) throw ConfigError("data.window_len must be >= 1");
  net.validate();
  if (net.window_len != data.window_len) {
    throw ConfigError("net.window_len must equal data.window_len");
  }
  train.validate();
  adapter.validate(net.window_len);
  if (bench.methods.empty()) throw ConfigError("bench.methods must not be empty");
  if (bench.trajectories.empty()) throw ConfigError("bench.trajectories must not be empty");
  if (bench.winds.empty()) throw ConfigError("bench.winds must not be empty");
  if (!(bench.duration > 0.0)) throw ConfigError("bench.duration must be positive");
}

RunConfig default_config() { return RunConfig{}; }

RunConfig parse_config_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config root must be a JSON object");
  require_known_keys(root, "",
                     {"run_id", "seed", "output_dir", "threads", "plant", "trajectories", "mpc",
                      "data", "net", "train", "adapter", "bench"});

  RunConfig cfg;
  cfg.run_id = get_str(root, "", "run_id", cfg.run_id);
  cfg.seed = static_cast<std::uint64_t>(get_int(root, "", "seed", static_cast<std::int64_t>(cfg.seed)));
  cfg.output_dir = get_str(root, "", "output_dir", cfg.output_dir);
  cfg.threads = static_cast<int>(get_int(root, "", "threads", cfg.threads));

  if (root.contains("plant")) {
    const json& p = root["plant"];
    require_known_keys(p, "plant.", {"wind", "drag_coeffs"});
    const auto wind = get_vec(p, "plant.", "wind", 2, {cfg.plant.wind.x(), cfg.plant.wind.y()});
    cfg.plant.wind = Vec3{wind[0], wind[1], 0.0};
    const auto drag = get_vec(p, "plant.", "drag_coeffs", 3,
                              {cfg.plant.drag_coeffs.x(), cfg.plant.drag_coeffs.y(),
                               cfg.plant.drag_coeffs.z()});
    cfg.plant.drag_coeffs = Vec3{drag[0], drag[1], drag[2]};
  }

  if (root.contains("trajectories")) {
    const json& t = root["trajectories"];
    require_known_keys(t, "trajectories.",
                       {"radius_x", "radius_y", "height", "angular_rate", "climb_rate",
                        "warp_amplitude"});
    cfg.shape.radius_x = get_num(t, "trajectories.", "radius_x", cfg.shape.radius_x);
    cfg.shape.radius_y = get_num(t, "trajectories.", "radius_y", cfg.shape.radius_y);
    cfg.shape.height = get_num(t, "trajectories.", "height", cfg.shape.height);
    cfg.shape.angular_rate = get_num(t, "trajectories.", "angular_rate", cfg.shape.angular_rate);
    cfg.shape.climb_rate = get_num(t, "trajectories.", "climb_rate", cfg.shape.climb_rate);
    cfg.shape.warp_amplitude =
        get_num(t, "trajectories.", "warp_amplitude", cfg.shape.warp_amplitude);
  }

  if (root.contains("mpc")) {
    const json& m = root["mpc"];
    require_known_keys(m, "mpc.",
                       {"horizon", "dt", "u_min", "u_max", "max_sqp_iters", "kkt_tol",
                        "merit_penalty", "q_state", "r_input", "q_terminal"});
    cfg.mpc.horizon = static_cast<int>(get_int(m, "mpc.", "horizon", cfg.mpc.horizon));
    cfg.mpc.dt = get_num(m, "mpc.", "dt", cfg.mpc.dt);
    auto umin = get_vec(m, "mpc.", "u_min", 4,
                        {cfg.mpc.u_min[0], cfg.mpc.u_min[1], cfg.mpc.u_min[2], cfg.mpc.u_min[3]});
    auto umax = get_vec(m, "mpc.", "u_max", 4,
                        {cfg.mpc.u_max[0], cfg.mpc.u_max[1], cfg.mpc.u_max[2], cfg.mpc.u_max[3]});
    for (int i = 0; i < 4; ++i) {
      cfg.mpc.u_min[i] = umin[i];
      cfg.mpc.u_max[i] = umax[i];
    }
    cfg.mpc.max_sqp_iters =
        static_cast<int>(get_int(m, "mpc.", "max_sqp_iters", cfg.mpc.max_sqp_iters));
    cfg.mpc.kkt_tol = get_num(m, "mpc.", "kkt_tol", cfg.mpc.kkt_tol);
    cfg.mpc.merit_penalty = get_num(m, "mpc.", "merit_penalty", cfg.mpc.merit_penalty);
    if (m.contains("q_state")) {
      const auto q = get_vec(m, "mpc.", "q_state", 10, {});
      for (int i = 0; i < 10; ++i) cfg.weights.q_state[i] = q[i];
      cfg.weights.q_terminal = cfg.weights.q_state;
    }
    if (m.contains("r_input")) {
      const auto r = get_vec(m, "mpc.", "r_input", 4, {});
      for (int i = 0; i < 4; ++i) cfg.weights.r_input[i] = r[i];
    }
    if (m.contains("q_terminal")) {
      const auto q = get_vec(m, "mpc.", "q_terminal", 10, {});
      for (int i = 0; i < 10; ++i) cfg.weights.q_terminal[i] = q[i];
    }
  }

  if (root.contains("data")) {
    const json& d = root["data"];
    require_known_keys(d, "data.", {"duration", "window_len"});
    cfg.data.duration = get_num(d, "data.", "duration", cfg.data.duration);
    cfg.data.window_len = static_cast<int>(get_int(d, "data.", "window_len", cfg.data.window_len));
  }
  cfg.net.window_len = cfg.data.window_len;

  if (root.contains("net")) {
    const json& n = root["net"];
    require_known_keys(n, "net.",
                       {"tcn_blocks", "tcn_channels", "tcn_kernel", "tcn_dilations", "head_hidden",
                        "mlp_hidden"});
    cfg.net.tcn.blocks = static_cast<int>(get_int(n, "net.", "tcn_blocks", cfg.net.tcn.blocks));
    cfg.net.tcn.channels =
        static_cast<int>(get_int(n, "net.", "tcn_channels", cfg.net.tcn.channels));
    cfg.net.tcn.kernel = static_cast<int>(get_int(n, "net.", "tcn_kernel", cfg.net.tcn.kernel));
    cfg.net.tcn.dilations = get_int_list(n, "net.", "tcn_dilations", cfg.net.tcn.dilations);
    cfg.net.head_hidden = get_int_list(n, "net.", "head_hidden", cfg.net.head_hidden);
    cfg.net.mlp_hidden = get_int_list(n, "net.", "mlp_hidden", cfg.net.mlp_hidden);
  }

  if (root.contains("train")) {
    const json& t = root["train"];
    require_known_keys(t, "train.",
                       {"epochs", "batch_size", "learning_rate", "adam_beta1", "adam_beta2",
                        "adam_eps", "lambda_pi", "collocation_count", "resample_period",
                        "val_fraction"});
    cfg.train.epochs = static_cast<int>(get_int(t, "train.", "epochs", cfg.train.epochs));
    cfg.train.batch_size =
        static_cast<int>(get_int(t, "train.", "batch_size", cfg.train.batch_size));
    cfg.train.learning_rate = get_num(t, "train.", "learning_rate", cfg.train.learning_rate);
    cfg.train.adam_beta1 = get_num(t, "train.", "adam_beta1", cfg.train.adam_beta1);
    cfg.train.adam_beta2 = get_num(t, "train.", "adam_beta2", cfg.train.adam_beta2);
    cfg.train.adam_eps = get_num(t, "train.", "adam_eps", cfg.train.adam_eps);
    cfg.train.lambda_pi = get_num(t, "train.", "lambda_pi", cfg.train.lambda_pi);
    cfg.train.collocation_count =
        static_cast<int>(get_int(t, "train.", "collocation_count", cfg.train.collocation_count));
    cfg.train.resample_period =
        static_cast<int>(get_int(t, "train.", "resample_period", cfg.train.resample_period));
    cfg.train.val_fraction = get_num(t, "train.", "val_fraction", cfg.train.val_fraction);
  }
  cfg.train.seed = cfg.seed;

  if (root.contains("adapter")) {
    const json& a = root["adapter"];
    require_known_keys(a, "adapter.", {"estimate_window", "gains", "correction_limit"});
    cfg.adapter.estimate_window =
        static_cast<int>(get_int(a, "adapter.", "estimate_window", cfg.adapter.estimate_window));
    const auto gains = get_vec(a, "adapter.", "gains", 3,
                               {cfg.adapter.gains.x(), cfg.adapter.gains.y(),
                                cfg.adapter.gains.z()});
    cfg.adapter.gains = Vec3{gains[0], gains[1], gains[2]};
    cfg.adapter.correction_limit =
        get_num(a, "adapter.", "correction_limit", cfg.adapter.correction_limit);
  }

  if (root.contains("bench")) {
    const json& b = root["bench"];
    require_known_keys(b, "bench.", {"methods", "trajectories", "winds", "duration"});
    if (b.contains("methods")) {
      cfg.bench.methods.clear();
      for (const auto& m : b["methods"]) cfg.bench.methods.push_back(method_from_string(m.get<std::string>()));
    }
    if (b.contains("trajectories")) {
      cfg.bench.trajectories.clear();
      for (const auto& t : b["trajectories"]) {
        cfg.bench.trajectories.push_back(trajectory_kind_from_string(t.get<std::string>()));
      }
    }
    if (b.contains("winds")) {
      cfg.bench.winds.clear();
      for (const auto& w : b["winds"]) {
        if (!w.is_array() || w.size() != 2) {
          throw ConfigError("config key 'bench.winds' must be an array of [wx, wy] pairs");
        }
        cfg.bench.winds.emplace_back(w[0].get<double>(), w[1].get<double>());
      }
    }
    cfg.bench.duration = get_num(b, "bench.", "duration", cfg.bench.duration);
  }

  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config_json(text);
}

std::string config_to_json(const RunConfig& cfg) {
  json root;
  root["run_id"] = cfg.run_id;
  root["seed"] = cfg.seed;
  root["output_dir"] = cfg.output_dir;
  root["threads"] = cfg.threads;
  root["plant"] = {{"wind", {cfg.plant.wind.x(), cfg.plant.wind.y()}},
                   {"drag_coeffs",
                    {cfg.plant.drag_coeffs.x(), cfg.plant.drag_coeffs.y(),
                     cfg.plant.drag_coeffs.z()}}};
  root["trajectories"] = {{"radius_x", cfg.shape.radius_x},
                          {"radius_y", cfg.shape.radius_y},
                          {"height", cfg.shape.height},
                          {"angular_rate", cfg.shape.angular_rate},
                          {"climb_rate", cfg.shape.climb_rate},
                          {"warp_amplitude", cfg.shape.warp_amplitude}};
  root["mpc"] = {{"horizon", cfg.mpc.horizon},
                 {"dt", cfg.mpc.dt},
                 {"u_min", {cfg.mpc.u_min[0], cfg.mpc.u_min[1], cfg.mpc.u_min[2], cfg.mpc.u_min[3]}},
                 {"u_max", {cfg.mpc.u_max[0], cfg.mpc.u_max[1], cfg.mpc.u_max[2], cfg.mpc.u_max[3]}},
                 {"max_sqp_iters", cfg.mpc.max_sqp_iters},
                 {"kkt_tol", cfg.mpc.kkt_tol},
                 {"merit_penalty", cfg.mpc.merit_penalty}};
  json q_state = json::array(), r_input = json::array(), q_terminal = json::array();
  for (int i = 0; i < 10; ++i) q_state.push_back(cfg.weights.q_state[i]);
  for (int i = 0; i < 4; ++i) r_input.push_back(cfg.weights.r_input[i]);
  for (int i = 0; i < 10; ++i) q_terminal.push_back(cfg.weights.q_terminal[i]);
  root["mpc"]["q_state"] = q_state;
  root["mpc"]["r_input"] = r_input;
  root["mpc"]["q_terminal"] = q_terminal;
  root["data"] = {{"duration", cfg.data.duration}, {"window_len", cfg.data.window_len}};
  root["net"] = {{"tcn_blocks", cfg.net.tcn.blocks},
                 {"tcn_channels", cfg.net.tcn.channels},
                 {"tcn_kernel", cfg.net.tcn.kernel},
                 {"tcn_dilations", cfg.net.tcn.dilations},
                 {"head_hidden", cfg.net.head_hidden},
                 {"mlp_hidden", cfg.net.mlp_hidden}};
  root["train"] = {{"epochs", cfg.train.epochs},
                   {"batch_size", cfg.train.batch_size},
                   {"learning_rate", cfg.train.learning_rate},
                   {"adam_beta1", cfg.train.adam_beta1},
                   {"adam_beta2", cfg.train.adam_beta2},
                   {"adam_eps", cfg.train.adam_eps},
                   {"lambda_pi", cfg.train.lambda_pi},
                   {"collocation_count", cfg.train.collocation_count},
                   {"resample_period", cfg.train.resample_period},
                   {"val_fraction", cfg.train.val_fraction}};
  root["adapter"] = {{"estimate_window", cfg.adapter.estimate_window},
                     {"gains",
                      {cfg.adapter.gains.x(), cfg.adapter.gains.y(), cfg.adapter.gains.z()}},
                     {"correction_limit", cfg.adapter.correction_limit}};
  json methods = json::array(), trajectories = json::array(), winds = json::array();
  for (Method m : cfg.bench.methods) methods.push_back(to_string(m));
  for (TrajectoryKind t : cfg.bench.trajectories) trajectories.push_back(to_string(t));
  for (const auto& [wx, wy] : cfg.bench.winds) winds.push_back({wx, wy});
  root["bench"] = {{"methods", methods},
                   {"trajectories", trajectories},
                   {"winds", winds},
                   {"duration", cfg.bench.duration}};
  return root.dump(2) + "\n";
}

void apply_env_overrides(RunConfig& cfg) {
  if (const char* dir = std::getenv("PIWAN_OUTPUT_DIR"); dir != nullptr && *dir != '\0') {
    cfg.output_dir = dir;
  }
  if (const char* threads = std::getenv("PIWAN_THREADS"); threads != nullptr && *threads != '\0') {
    try {
      cfg.threads = std::stoi(threads);
    } catch (const std::exception&) {
      throw ConfigError("PIWAN_THREADS must be an integer");
    }
    if (cfg.threads < 0) throw ConfigError("PIWAN_THREADS must be >= 0");
  }
}

void write_config_echo(const std::filesystem::path& dir, const RunConfig& cfg) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path path = dir / "config-echo.json";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << config_to_json(cfg);
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace piwan
