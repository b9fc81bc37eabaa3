#include "d2c/cli.hpp"

#include <chrono>
#include <ostream>
#include <sstream>

#include "d2c/artifacts.hpp"
#include "d2c/config.hpp"
#include "d2c/parallel.hpp"
#include "d2c/random.hpp"
#include "d2c/textio.hpp"

namespace d2c::cli {
namespace {

namespace fs = std::filesystem;
using textio::format_double;

// Seed streams for the stochastic stages.
constexpr std::uint64_t kSysidStream = 1;
constexpr std::uint64_t kEvaluationStream = 2;
constexpr std::uint64_t kTailStream = 3;
constexpr std::uint64_t kRankingStream = 4;

struct Context {
  config::PipelineConfig cfg;
  fs::path out_dir;
  std::size_t threads = 1;
  std::string provenance;
  std::shared_ptr<const dynamics::SimModel> model;
};

Context load_context(const Options& options) {
  Context ctx;
  ctx.cfg = config::load(options.config);
  if (options.seed) ctx.cfg.seed = *options.seed;
  ctx.out_dir = options.out ? *options.out : fs::path(ctx.cfg.output);
  ctx.threads = resolve_threads(options.threads);
  ctx.provenance = ctx.cfg.provenance();
  ctx.model = dynamics::make_model(ctx.cfg.system.benchmark, ctx.cfg.system.dt);
  return ctx;
}

artifacts::Header make_header(const Context& ctx, const std::string& parent) {
  artifacts::Header h;
  h.provenance = ctx.provenance;
  h.parent = parent;
  h.benchmark = ctx.cfg.system.benchmark;
  h.dt = ctx.cfg.system.dt;
  return h;
}

void write_text(const fs::path& path, const std::string& text) { textio::write_file_atomic(path, text); }

template <class F>
void write_csv(const fs::path& path, F&& body) {
  std::ostringstream ss;
  body(ss);
  write_text(path, ss.str());
}

class StageTimer {
 public:
  StageTimer(std::ostream& err, std::string name)
      : err_(err), name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    err_ << "stage " << name_ << ' ' << format_double(std::round(s * 1000.0) / 1000.0) << " s\n";
  }

 private:
  std::ostream& err_;
  std::string name_;
  std::chrono::steady_clock::time_point start_;
};

void check_header(const artifacts::Header& h, const Context& ctx, const std::string& what) {
  if (h.benchmark != ctx.cfg.system.benchmark) {
    throw ConfigError(what + " benchmark: expected '" + ctx.cfg.system.benchmark + "', found '" + h.benchmark + "'");
  }
  if (h.dt != ctx.cfg.system.dt) {
    throw ConfigError(what + " dt: expected " + format_double(ctx.cfg.system.dt) + ", found " + format_double(h.dt));
  }
}

void check_trajectory(const Trajectory& t, const Context& ctx, const std::string& what) {
  const std::size_t n = ctx.cfg.horizon_steps();
  const auto nx = static_cast<Eigen::Index>(ctx.model->state_dim());
  const auto nu = static_cast<Eigen::Index>(ctx.model->control_dim());
  if (t.horizon() != n) {
    throw ConfigError(what + " horizon: expected " + std::to_string(n) + ", found " + std::to_string(t.horizon()));
  }
  if (t.states.front().size() != nx || t.controls.front().size() != nu) {
    throw ConfigError(what + " dimensions: expected n_x = " + std::to_string(nx) + ", n_u = " + std::to_string(nu) +
                      ", found n_x = " + std::to_string(t.states.front().size()) +
                      ", n_u = " + std::to_string(t.controls.front().size()));
  }
}

fs::path input_path(const std::optional<fs::path>& given, const Context& ctx, const char* name) {
  return given ? *given : ctx.out_dir / name;
}

// Stage implementations. Each returns kSuccess or kWarnings and throws on error.

int stage_optimize(const Context& ctx, std::ostream& out, std::ostream& err, artifacts::NominalArtifact& nominal) {
  StageTimer timer(err, "optimize");
  auto opt = ctx.cfg.optimizer;
  opt.threads = ctx.threads;
  const std::size_t n = ctx.cfg.horizon_steps();
  const auto result = openloop::solve(ctx.model, ctx.cfg.cost, ctx.cfg.initial_state(),
                                      openloop::zero_controls(n, ctx.model->control_dim()), opt);
  nominal.header = make_header(ctx, "");
  nominal.cost = ctx.cfg.cost;
  nominal.trajectory = result.nominal;
  nominal.method = openloop::to_string(opt.method);
  nominal.converged = result.converged;
  nominal.iterations = result.iterations;
  nominal.rollouts = result.rollouts;
  nominal.final_cost = ctx.cfg.cost.total(result.nominal);
  artifacts::save(ctx.out_dir / files::kNominal, nominal);
  write_csv(ctx.out_dir / files::kConvergence, [&](std::ostream& s) { openloop::write_convergence_csv(s, result.history); });

  const double terminal_error = (result.nominal.states.back() - ctx.cfg.cost.target).norm();
  out << "optimize.converged " << (result.converged ? 1 : 0) << '\n'
      << "optimize.iterations " << result.iterations << '\n'
      << "optimize.rollouts " << result.rollouts << '\n'
      << "optimize.cost " << format_double(nominal.final_cost) << '\n'
      << "optimize.gradient_norm "
      << format_double(result.history.empty() ? 0.0 : result.history.back().gradient_norm) << '\n'
      << "optimize.terminal_error " << format_double(terminal_error) << '\n';
  if (!result.converged) {
    err << "warning: optimizer stopped after " << result.iterations << " iterations without converging\n";
    return kWarnings;
  }
  return kSuccess;
}

int stage_sysid(const Context& ctx, const artifacts::NominalArtifact& nominal, std::ostream& out, std::ostream& err,
                artifacts::RomArtifact& rom) {
  StageTimer timer(err, "sysid");
  check_header(nominal.header, ctx, "nominal");
  check_trajectory(nominal.trajectory, ctx, "nominal");
  auto collect = ctx.cfg.sysid.collect;
  collect.seed = derive_seed(ctx.cfg.seed, kSysidStream);
  collect.threads = ctx.threads;
  auto identify = ctx.cfg.sysid.identify;
  identify.threads = ctx.threads;
  const auto data = sysid::collect_rollouts(*ctx.model, nominal.trajectory, collect);
  rom.header = make_header(ctx, nominal.header.provenance);
  rom.sigma = data.sigma;
  rom.p = identify.p;
  rom.q = identify.q;
  rom.rollouts = data.rollouts();
  rom.rom = sysid::identify_ltv(data, identify);
  artifacts::save(ctx.out_dir / files::kRom, rom);
  write_csv(ctx.out_dir / files::kSingularValues, [&](std::ostream& s) { sysid::write_singular_values_csv(s, rom.rom); });

  out << "sysid.rollouts " << rom.rollouts << '\n'
      << "sysid.sigma " << format_double(rom.sigma) << '\n'
      << "sysid.order " << rom.rom.order << '\n'
      << "sysid.p " << rom.p << '\n'
      << "sysid.q " << rom.q << '\n'
      << "sysid.warnings " << rom.rom.warnings.size() << '\n';
  if (!rom.rom.warnings.empty()) {
    err << "warning: Hankel rank below the ROM order at " << rom.rom.warnings.size() << " steps (first: "
        << rom.rom.warnings.front() << ")\n";
    return kWarnings;
  }
  return kSuccess;
}

int stage_design(const Context& ctx, const artifacts::NominalArtifact& nominal, const artifacts::RomArtifact& rom,
                 std::ostream& out, std::ostream& err, artifacts::PolicyArtifact& policy) {
  StageTimer timer(err, "design");
  check_header(nominal.header, ctx, "nominal");
  check_header(rom.header, ctx, "rom");
  check_trajectory(nominal.trajectory, ctx, "nominal");
  if (rom.rom.horizon != nominal.trajectory.horizon()) {
    throw ConfigError("rom horizon: expected " + std::to_string(nominal.trajectory.horizon()) + ", found " +
                      std::to_string(rom.rom.horizon));
  }
  if (rom.header.parent != nominal.header.provenance) {
    throw ConfigError("rom parent: identified from nominal " + rom.header.parent + ", but the given nominal is " +
                      nominal.header.provenance);
  }
  policy.header = make_header(ctx, rom.header.provenance);
  policy.policy = feedback::build_policy(nominal.trajectory, rom.rom, ctx.cfg.cost, ctx.cfg.feedback);
  artifacts::save(ctx.out_dir / files::kPolicy, policy);
  write_csv(ctx.out_dir / files::kGains, [&](std::ostream& s) { feedback::write_gains_csv(s, policy.policy); });

  double max_gain = 0.0;
  for (const auto& l : policy.policy.lqr_gains) max_gain = std::max(max_gain, l.norm());
  out << "design.max_lqr_gain " << format_double(max_gain) << '\n';
  return kSuccess;
}

int stage_evaluate(const Context& ctx, const artifacts::PolicyArtifact& policy, std::ostream& out, std::ostream& err) {
  StageTimer timer(err, "evaluate");
  check_header(policy.header, ctx, "policy");
  check_trajectory(policy.policy.nominal, ctx, "policy nominal");
  const auto& ev = ctx.cfg.evaluation;
  evaluation::MonteCarloConfig mc;
  mc.nsr_grid = ev.nsr_grid;
  mc.runs = ev.runs;
  mc.seed = derive_seed(ctx.cfg.seed, kEvaluationStream);
  mc.success_threshold = ev.success_threshold;
  mc.threads = ctx.threads;
  const auto closed = evaluation::monte_carlo(*ctx.model, policy.policy, mc);
  write_csv(ctx.out_dir / files::kReport, [&](std::ostream& s) { evaluation::write_report_csv(s, closed); });
  std::size_t failures = 0;
  for (const auto& s : closed.stats) {
    failures += s.failures;
    out << "evaluate.nsr " << format_double(s.nsr) << " mean_cost " << format_double(s.mean_cost) << " std_cost "
        << format_double(s.std_cost) << " success_rate " << format_double(s.success_rate) << '\n';
  }
  if (ev.open_loop_baseline) {
    mc.feedback = false;
    const auto open = evaluation::monte_carlo(*ctx.model, policy.policy, mc);
    write_csv(ctx.out_dir / files::kOpenLoopReport, [&](std::ostream& s) { evaluation::write_report_csv(s, open); });
    for (const auto& s : open.stats) {
      out << "evaluate.open_loop.nsr " << format_double(s.nsr) << " mean_cost " << format_double(s.mean_cost)
          << " std_cost " << format_double(s.std_cost) << '\n';
    }
  }
  if (ev.tail) {
    const auto tail = evaluation::deviation_tail(*ctx.model, policy.policy, ev.tail->epsilons, ev.tail->threshold,
                                                 ev.tail->runs, derive_seed(ctx.cfg.seed, kTailStream), ctx.threads);
    write_csv(ctx.out_dir / files::kTail, [&](std::ostream& s) { evaluation::write_tail_csv(s, tail); });
    out << "evaluate.tail.beta " << format_double(tail.beta) << '\n'
        << "evaluate.tail.r_squared " << format_double(tail.r_squared) << '\n';
  }
  if (ev.ranking) {
    const auto other = artifacts::load_policy(ev.ranking->policy);
    check_header(other.header, ctx, "ranking policy");
    check_trajectory(other.policy.nominal, ctx, "ranking policy nominal");
    const auto rank = evaluation::ranking_check(*ctx.model, ctx.cfg.cost, policy.policy, other.policy,
                                                ev.ranking->epsilons, ev.ranking->runs,
                                                derive_seed(ctx.cfg.seed, kRankingStream), ctx.threads);
    write_csv(ctx.out_dir / files::kRanking, [&](std::ostream& s) { evaluation::write_ranking_csv(s, rank); });
    for (const auto& p : rank.points) {
      out << "evaluate.ranking.epsilon " << format_double(p.epsilon) << " preserved " << format_double(p.preserved)
          << '\n';
    }
  }
  if (failures > 0) {
    err << "warning: " << failures << " Monte Carlo runs failed numerically\n";
    return kWarnings;
  }
  return kSuccess;
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

int worst(int a, int b) {
  if (a == kFailure || b == kFailure) return kFailure;
  return std::max(a, b);
}

}  // namespace

int cmd_optimize(const Options& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Context ctx = load_context(options);
    if (options.dry_run) return static_cast<int>(kSuccess);
    artifacts::NominalArtifact nominal;
    return stage_optimize(ctx, out, err, nominal);
  });
}

int cmd_sysid(const Options& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Context ctx = load_context(options);
    const auto nominal = artifacts::load_nominal(input_path(options.nominal, ctx, files::kNominal));
    if (options.dry_run) return static_cast<int>(kSuccess);
    artifacts::RomArtifact rom;
    return stage_sysid(ctx, nominal, out, err, rom);
  });
}

int cmd_design(const Options& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Context ctx = load_context(options);
    const auto nominal = artifacts::load_nominal(input_path(options.nominal, ctx, files::kNominal));
    const auto rom = artifacts::load_rom(input_path(options.rom, ctx, files::kRom));
    if (options.dry_run) return static_cast<int>(kSuccess);
    artifacts::PolicyArtifact policy;
    return stage_design(ctx, nominal, rom, out, err, policy);
  });
}

int cmd_evaluate(const Options& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Context ctx = load_context(options);
    const auto policy = artifacts::load_policy(input_path(options.policy, ctx, files::kPolicy));
    if (options.dry_run) return static_cast<int>(kSuccess);
    return stage_evaluate(ctx, policy, out, err);
  });
}

int cmd_pipeline(const Options& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Context ctx = load_context(options);
    if (options.dry_run) return static_cast<int>(kSuccess);
    std::ostringstream summary;
    summary << "# d2c summary v" << artifacts::kFormatVersion << '\n'
            << "provenance " << ctx.provenance << '\n'
            << "benchmark " << ctx.cfg.system.benchmark << '\n'
            << "horizon " << ctx.cfg.horizon_steps() << '\n';

    artifacts::NominalArtifact nominal;
    int code = stage_optimize(ctx, summary, err, nominal);
    artifacts::RomArtifact rom;
    code = worst(code, stage_sysid(ctx, nominal, summary, err, rom));
    artifacts::PolicyArtifact policy;
    code = worst(code, stage_design(ctx, nominal, rom, summary, err, policy));
    code = worst(code, stage_evaluate(ctx, policy, summary, err));
    summary << "total_rollouts " << nominal.rollouts + rom.rollouts << '\n';
    write_text(ctx.out_dir / files::kSummary, summary.str());
    out << summary.str();
    return code;
  });
}

std::vector<std::string> command_names() { return {"optimize", "sysid", "design", "evaluate", "pipeline"}; }

int run_command(const std::string& name, const Options& options, std::ostream& out, std::ostream& err) {
  if (name == "optimize") return cmd_optimize(options, out, err);
  if (name == "sysid") return cmd_sysid(options, out, err);
  if (name == "design") return cmd_design(options, out, err);
  if (name == "evaluate") return cmd_evaluate(options, out, err);
  if (name == "pipeline") return cmd_pipeline(options, out, err);
  err << "error: unknown command '" << name << "'\n";
  return kFailure;
}

}  // namespace d2c::cli
