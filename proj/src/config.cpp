#include "d2c/config.hpp"

#include <set>

#include <json.hpp>

#include "d2c/textio.hpp"

namespace d2c::config {
namespace {

using json = nlohmann::json;

// A JSON object whose keys must all be consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  ~Section() = default;

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_number()) throw ConfigError(name(key) + " must be a number");
    return v.get<double>();
  }

  double positive(const std::string& key, double fallback) {
    const double v = number(key, fallback);
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(name(key) + " must be positive");
    return v;
  }

  double non_negative(const std::string& key, double fallback) {
    const double v = number(key, fallback);
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(name(key) + " must be non-negative");
    return v;
  }

  std::size_t count(const std::string& key, std::size_t fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_number_unsigned()) throw ConfigError(name(key) + " must be a non-negative integer");
    return v.get<std::size_t>();
  }

  std::uint64_t u64(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_number_unsigned()) throw ConfigError(name(key) + " must be a non-negative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(name(key) + " must be true or false");
    return v.get<bool>();
  }

  std::string text(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_string()) throw ConfigError(name(key) + " must be a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_array()) throw ConfigError(name(key) + " must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigError(name(key) + " must be an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  Vector vector(const std::string& key) {
    const auto v = numbers(key, {});
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  /// A scalar (times I), a diagonal array, or an array of rows.
  Matrix weight(const std::string& key, std::size_t dim) {
    if (!has(key)) throw ConfigError(name(key) + " is required");
    const json& v = raw(key);
    const auto n = static_cast<Eigen::Index>(dim);
    if (v.is_number()) return v.get<double>() * Matrix::Identity(n, n);
    if (!v.is_array() || v.size() != dim) {
      throw ConfigError(name(key) + " must be a number, " + std::to_string(dim) + " diagonal entries, or a " +
                        std::to_string(dim) + "x" + std::to_string(dim) + " matrix");
    }
    if (!v.empty() && v.front().is_array()) {
      Matrix m(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const json& row = v[static_cast<std::size_t>(i)];
        if (!row.is_array() || row.size() != dim) throw ConfigError(name(key) + " row " + std::to_string(i) + " has the wrong length");
        for (Eigen::Index j = 0; j < n; ++j) {
          const json& e = row[static_cast<std::size_t>(j)];
          if (!e.is_number()) throw ConfigError(name(key) + " entries must be numbers");
          m(i, j) = e.get<double>();
        }
      }
      return m;
    }
    Vector d(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const json& e = v[static_cast<std::size_t>(i)];
      if (!e.is_number()) throw ConfigError(name(key) + " entries must be numbers");
      d(i) = e.get<double>();
    }
    return d.asDiagonal();
  }

  Section child(const std::string& key) {
    used_.insert(key);
    return Section(j_.at(key), name(key));
  }

  /// Throws on any key that was never read.
  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.count(key)) throw ConfigError("unknown key '" + name(key) + "'");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(textio::format_double(m(i, j)));
    rows.push_back(row);
  }
  return rows;
}

json to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(textio::format_double(v(i)));
  return out;
}

json to_json(const std::vector<double>& v) {
  json out = json::array();
  for (double x : v) out.push_back(textio::format_double(x));
  return out;
}

}  // namespace

std::size_t PipelineConfig::horizon_steps() const {
  const double seconds = system.horizon > 0.0 ? system.horizon : dynamics::benchmark_task(system.benchmark).horizon_seconds;
  return dynamics::horizon_steps(seconds, system.dt);
}

Vector PipelineConfig::initial_state() const {
  return system.initial_state.size() > 0 ? system.initial_state
                                         : dynamics::benchmark_task(system.benchmark).initial_state;
}

std::string PipelineConfig::canonical() const {
  // Doubles are stored as shortest round-trip strings so the dump is exact.
  json j;
  j["system"] = {{"benchmark", system.benchmark},
                 {"dt", textio::format_double(system.dt)},
                 {"horizon", textio::format_double(system.horizon)},
                 {"initial_state", to_json(system.initial_state)},
                 {"target_state", to_json(system.target_state)}};
  j["cost"] = {{"state_weight", to_json(cost.state_weight)},
               {"control_weight", to_json(cost.control_weight)},
               {"terminal_weight", to_json(cost.terminal_weight)},
               {"target", to_json(cost.target)}};
  j["optimizer"] = {{"method", openloop::to_string(optimizer.method)},
                    {"step_size", textio::format_double(optimizer.step_size)},
                    {"perturbation", textio::format_double(optimizer.perturbation)},
                    {"tolerance", textio::format_double(optimizer.tolerance)},
                    {"max_iterations", optimizer.max_iterations},
                    {"backtracking", optimizer.backtracking},
                    {"armijo", textio::format_double(optimizer.armijo)},
                    {"max_backtracks", optimizer.max_backtracks},
                    {"terminal_continuation", to_json(optimizer.terminal_continuation)}};
  const auto& c = sysid.collect;
  const auto& id = sysid.identify;
  j["sysid"] = {{"excitation", sysid::to_string(c.excitation)},
                {"experiments", c.experiments},
                {"margin", c.margin},
                {"sigma", textio::format_double(c.sigma)},
                {"stride", c.stride},
                {"p", id.p},
                {"q", id.q},
                {"order", id.order ? json(*id.order) : json("auto")},
                {"energy", textio::format_double(id.energy)},
                {"rank_tol", textio::format_double(id.rank_tol)},
                {"lstsq_tol", textio::format_double(id.lstsq_tol)},
                {"output_coordinates", id.output_coordinates}};
  j["feedback"] = {{"measurement_std", textio::format_double(feedback.measurement_std)},
                   {"initial_covariance", textio::format_double(feedback.initial_covariance)},
                   {"process_noise_std", textio::format_double(feedback.process_noise_std)}};
  json ev = {{"nsr_grid", to_json(evaluation.nsr_grid)},
             {"runs", evaluation.runs},
             {"success_threshold", textio::format_double(evaluation.success_threshold)},
             {"open_loop_baseline", evaluation.open_loop_baseline}};
  if (evaluation.tail) {
    ev["tail"] = {{"epsilons", to_json(evaluation.tail->epsilons)},
                  {"threshold", textio::format_double(evaluation.tail->threshold)},
                  {"runs", evaluation.tail->runs}};
  }
  if (evaluation.ranking) {
    ev["ranking"] = {{"policy", evaluation.ranking->policy},
                     {"epsilons", to_json(evaluation.ranking->epsilons)},
                     {"runs", evaluation.ranking->runs}};
  }
  j["evaluation"] = ev;
  j["seed"] = seed;
  // The output directory does not affect results, so it is left out.
  return j.dump();
}

std::string PipelineConfig::provenance() const { return textio::fnv1a_hex(canonical()); }

PipelineConfig parse(std::string_view json_text, const std::string& source) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ": invalid JSON: " + e.what());
  }
  try {
    PipelineConfig cfg;
    Section top(root, "");

    {
      if (!top.has("system")) throw ConfigError("system section is required");
      Section s = top.child("system");
      cfg.system.benchmark = s.text("benchmark", "");
      if (cfg.system.benchmark.empty()) throw ConfigError("system.benchmark is required");
      const auto task = dynamics::benchmark_task(cfg.system.benchmark);
      cfg.system.dt = s.positive("dt", cfg.system.dt);
      cfg.system.horizon = s.non_negative("horizon", 0.0);
      cfg.system.initial_state = s.vector("initial_state");
      cfg.system.target_state = s.vector("target_state");
      const auto nx = task.initial_state.size();
      if (cfg.system.initial_state.size() != 0 && cfg.system.initial_state.size() != nx) {
        throw ConfigError("system.initial_state must have " + std::to_string(nx) + " entries");
      }
      if (cfg.system.target_state.size() != 0 && cfg.system.target_state.size() != nx) {
        throw ConfigError("system.target_state must have " + std::to_string(nx) + " entries");
      }
      s.finish();
    }
    const auto model = dynamics::make_model(cfg.system.benchmark, cfg.system.dt);
    const std::size_t nx = model->state_dim();
    const std::size_t nu = model->control_dim();
    if (cfg.horizon_steps() == 0) throw ConfigError("system.horizon gives zero steps");

    {
      if (!top.has("cost")) throw ConfigError("cost section is required");
      Section s = top.child("cost");
      cfg.cost.state_weight = s.weight("state_weight", nx);
      cfg.cost.control_weight = s.weight("control_weight", nu);
      cfg.cost.terminal_weight = s.weight("terminal_weight", nx);
      cfg.cost.target = cfg.system.target_state.size() > 0 ? cfg.system.target_state
                                                             : dynamics::benchmark_task(cfg.system.benchmark).target_state;
      s.finish();
      cfg.cost.validate(nx, nu);
    }

    if (top.has("optimizer")) {
      Section s = top.child("optimizer");
      auto& o = cfg.optimizer;
      o.method = openloop::method_from_string(s.text("method", openloop::to_string(o.method)));
      o.step_size = s.positive("step_size", o.step_size);
      o.perturbation = s.positive("perturbation", o.perturbation);
      o.tolerance = s.positive("tolerance", o.tolerance);
      o.max_iterations = s.count("max_iterations", o.max_iterations);
      o.backtracking = s.boolean("backtracking", o.backtracking);
      o.armijo = s.positive("armijo", o.armijo);
      o.max_backtracks = s.count("max_backtracks", o.max_backtracks);
      o.terminal_continuation = s.numbers("terminal_continuation", o.terminal_continuation);
      s.finish();
    }
    cfg.optimizer.validate();

    if (top.has("sysid")) {
      Section s = top.child("sysid");
      auto& c = cfg.sysid.collect;
      auto& id = cfg.sysid.identify;
      c.excitation = sysid::excitation_from_string(s.text("excitation", sysid::to_string(c.excitation)));
      c.experiments = s.count("experiments", c.experiments);
      c.margin = s.count("margin", c.margin);
      c.sigma = s.non_negative("sigma", c.sigma);
      c.stride = s.count("stride", c.stride);
      id.p = s.count("p", id.p);
      id.q = s.count("q", id.q);
      if (s.has("order")) {
        const json& v = s.raw("order");
        if (v.is_string() && v.get<std::string>() == "auto") {
          id.order.reset();
        } else if (v.is_number_unsigned() && v.get<std::size_t>() > 0) {
          id.order = v.get<std::size_t>();
        } else {
          throw ConfigError("sysid.order must be \"auto\" or a positive integer");
        }
      }
      id.energy = s.positive("energy", id.energy);
      if (id.energy > 1.0) throw ConfigError("sysid.energy must lie in (0, 1]");
      id.rank_tol = s.positive("rank_tol", id.rank_tol);
      id.lstsq_tol = s.positive("lstsq_tol", id.lstsq_tol);
      id.output_coordinates = s.boolean("output_coordinates", id.output_coordinates);
      s.finish();
    }
    {
      auto& id = cfg.sysid.identify;
      const auto d = sysid::default_depths(nx, nx, nu);
      if (id.p == 0) id.p = d.first;
      if (id.q == 0) id.q = d.second;
      if (id.p < 2) throw ConfigError("sysid.p must be at least 2");
      if (id.p + 1 > cfg.horizon_steps()) throw ConfigError("sysid.p is too large for the horizon");
      if (cfg.sysid.collect.excitation == sysid::Excitation::kWindowed) cfg.sysid.collect.band = id.p + id.q - 1;
    }

    if (top.has("feedback")) {
      Section s = top.child("feedback");
      auto& f = cfg.feedback;
      f.measurement_std = s.positive("measurement_std", f.measurement_std);
      f.initial_covariance = s.non_negative("initial_covariance", f.initial_covariance);
      f.process_noise_std = s.non_negative("process_noise_std", f.process_noise_std);
      s.finish();
    }

    if (top.has("evaluation")) {
      Section s = top.child("evaluation");
      auto& e = cfg.evaluation;
      e.nsr_grid = s.numbers("nsr_grid", e.nsr_grid);
      if (e.nsr_grid.empty()) throw ConfigError("evaluation.nsr_grid must not be empty");
      for (double v : e.nsr_grid) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("evaluation.nsr_grid entries must be non-negative");
      }
      e.runs = s.count("runs", e.runs);
      if (e.runs == 0) throw ConfigError("evaluation.runs must be positive");
      e.success_threshold = s.positive("success_threshold", e.success_threshold);
      e.open_loop_baseline = s.boolean("open_loop_baseline", e.open_loop_baseline);
      if (s.has("tail")) {
        Section t = s.child("tail");
        TailConfig tc;
        tc.epsilons = t.numbers("epsilons", {});
        if (tc.epsilons.size() < 2) throw ConfigError("evaluation.tail.epsilons needs at least two values");
        for (std::size_t i = 0; i < tc.epsilons.size(); ++i) {
          if (!(tc.epsilons[i] > 0.0) || (i > 0 && !(tc.epsilons[i] > tc.epsilons[i - 1]))) {
            throw ConfigError("evaluation.tail.epsilons must be positive and strictly increasing");
          }
        }
        tc.threshold = t.positive("threshold", 0.0);
        tc.runs = t.count("runs", tc.runs);
        if (tc.runs == 0) throw ConfigError("evaluation.tail.runs must be positive");
        t.finish();
        e.tail = tc;
      }
      if (s.has("ranking")) {
        Section r = s.child("ranking");
        RankingConfig rc;
        rc.policy = r.text("policy", "");
        if (rc.policy.empty()) throw ConfigError("evaluation.ranking.policy is required");
        rc.epsilons = r.numbers("epsilons", {});
        if (rc.epsilons.empty()) throw ConfigError("evaluation.ranking.epsilons must not be empty");
        for (double v : rc.epsilons) {
          if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("evaluation.ranking.epsilons must be non-negative");
        }
        rc.runs = r.count("runs", rc.runs);
        if (rc.runs == 0) throw ConfigError("evaluation.ranking.runs must be positive");
        r.finish();
        e.ranking = rc;
      }
      s.finish();
    }

    cfg.seed = top.u64("seed", cfg.seed);
    cfg.output = top.text("output", cfg.output);
    top.finish();
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(source + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

PipelineConfig load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file '" + path.string() + "' does not exist");
  return parse(textio::read_file(path), path.string());
}

}  // namespace d2c::config
