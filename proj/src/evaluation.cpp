#include "d2c/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "d2c/parallel.hpp"
#include "d2c/random.hpp"
#include "d2c/textio.hpp"

namespace d2c::evaluation {
namespace {

using textio::format_double;

RunResult execute(const dynamics::SimModel& model, const feedback::FeedbackPolicy& policy, double scale,
                  const Matrix& cov, std::uint64_t seed, std::uint64_t run_index, bool use_feedback) {
  const std::size_t n = policy.horizon();
  const Trajectory& nom = policy.nominal;
  const sysid::LtvRom& rom = policy.rom;
  const auto nu = static_cast<Eigen::Index>(model.control_dim());
  if (static_cast<std::size_t>(nom.states.front().size()) != model.state_dim() ||
      nom.controls.front().size() != nu) {
    throw ConfigError("policy dimensions do not match the model");
  }

  Matrix chol;
  if (scale != 0.0) {
    const Matrix w = cov.size() == 0 ? Matrix::Identity(nu, nu) : cov;
    Eigen::LLT<Matrix> llt(w);
    if (llt.info() != Eigen::Success) throw ConfigError("noise covariance must be positive definite");
    chol = llt.matrixL();
  }
  auto rng = make_rng(seed, run_index);
  const auto noisy = model.with_noise(scale, cov);

  RunResult out;
  Trajectory& traj = out.trajectory;
  traj.states.reserve(n + 1);
  traj.controls.reserve(n);
  traj.states.push_back(nom.states.front());
  Vector estimate = Vector::Zero(static_cast<Eigen::Index>(rom.order));  // a-hat, predicted
  for (std::size_t k = 0; k < n; ++k) {
    const Vector& x = traj.states.back();
    Vector u = nom.controls[k];
    if (use_feedback) {
      const Vector dy = x - nom.states[k];
      estimate += policy.kalman_gains[k] * (dy - rom.c[k] * estimate);
      u -= policy.lqr_gains[k] * estimate;
    }
    Vector w;
    if (scale != 0.0) w = chol * gaussian_vector(rng, static_cast<std::size_t>(nu));
    Vector next = noisy->step(k, x, u, w);
    if (use_feedback) estimate = rom.a[k] * estimate + rom.b[k] * (u - nom.controls[k]);
    traj.controls.push_back(std::move(u));
    traj.states.push_back(std::move(next));
  }
  out.cost = policy.cost.total(traj);
  for (std::size_t k = 0; k <= n; ++k) {
    out.max_deviation = std::max(out.max_deviation, (traj.states[k] - nom.states[k]).norm());
  }
  out.terminal_error = (traj.states.back() - policy.cost.target).norm();
  return out;
}

RunRecord record_run(const dynamics::SimModel& model, const feedback::FeedbackPolicy& policy, double scale,
                     const Matrix& cov, std::uint64_t seed, std::uint64_t index, bool use_feedback) {
  RunRecord rec;
  rec.index = index;
  try {
    const RunResult r = execute(model, policy, scale, cov, seed, index, use_feedback);
    rec.cost = r.cost;
    rec.max_deviation = r.max_deviation;
    rec.terminal_error = r.terminal_error;
    rec.failed = !std::isfinite(r.cost);
  } catch (const NumericalError&) {
    rec.failed = true;
  }
  return rec;
}

}  // namespace

double rms(const std::vector<Vector>& seq) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& v : seq) {
    sum += v.squaredNorm();
    count += static_cast<std::size_t>(v.size());
  }
  return count == 0 ? 0.0 : std::sqrt(sum / static_cast<double>(count));
}

NoiseSetting nsr_to_noise(double nsr, const std::vector<Vector>& controls, std::uint64_t seed) {
  if (!(nsr >= 0.0) || !std::isfinite(nsr)) throw ConfigError("nsr must be a finite non-negative number");
  NoiseSetting s;
  s.nsr = nsr;
  s.scale = nsr * rms(controls);
  s.seed = seed;
  return s;
}

RunResult run_closed_loop(const dynamics::SimModel& model, const feedback::FeedbackPolicy& policy,
                          const NoiseSetting& noise, std::uint64_t run_index) {
  return execute(model, policy, noise.scale, noise.cov, noise.seed, run_index, true);
}

RunResult run_open_loop_only(const dynamics::SimModel& model, const feedback::FeedbackPolicy& policy,
                             const NoiseSetting& noise, std::uint64_t run_index) {
  return execute(model, policy, noise.scale, noise.cov, noise.seed, run_index, false);
}

void NsrStats::summarize(double success_threshold) {
  n_runs = runs.size();
  failures = 0;
  // Sums are taken relative to the first valid cost, so identical runs give
  // exactly that cost and zero spread.
  double shift = 0.0;
  bool have_shift = false;
  double sum = 0.0;
  double sum_sq = 0.0;
  double dev = 0.0;
  std::size_t ok = 0;
  std::size_t success = 0;
  for (const auto& r : runs) {
    if (r.failed) {
      ++failures;
      continue;
    }
    if (!have_shift) {
      shift = r.cost;
      have_shift = true;
    }
    ++ok;
    sum += r.cost - shift;
    sum_sq += (r.cost - shift) * (r.cost - shift);
    dev += r.max_deviation;
    if (r.terminal_error < success_threshold) ++success;
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const auto n_ok = static_cast<double>(ok);
  mean_cost = ok > 0 ? shift + sum / n_ok : nan;
  mean_max_deviation = ok > 0 ? dev / n_ok : nan;
  std_cost = ok > 1 ? std::sqrt(std::max(0.0, (sum_sq - sum * sum / n_ok) / (n_ok - 1.0))) : 0.0;
  success_rate = n_runs > 0 ? static_cast<double>(success) / static_cast<double>(n_runs) : 0.0;
}

double NsrStats::standard_error() const {
  const std::size_t ok = n_runs - failures;
  return ok > 0 ? std_cost / std::sqrt(static_cast<double>(ok)) : 0.0;
}

void MonteCarloReport::merge(const MonteCarloReport& other) {
  if (other.stats.size() != stats.size()) throw ConfigError("cannot merge reports over different grids");
  for (std::size_t i = 0; i < stats.size(); ++i) {
    if (stats[i].nsr != other.stats[i].nsr) throw ConfigError("cannot merge reports over different grids");
    stats[i].runs.insert(stats[i].runs.end(), other.stats[i].runs.begin(), other.stats[i].runs.end());
    stats[i].summarize(success_threshold);
  }
}

MonteCarloReport monte_carlo(const dynamics::SimModel& model, const feedback::FeedbackPolicy& policy,
                             const MonteCarloConfig& config) {
  if (config.runs == 0) throw ConfigError("monte_carlo needs at least one run");
  policy.validate();
  MonteCarloReport report;
  report.feedback = config.feedback;
  report.success_threshold = config.success_threshold;
  for (double nsr : config.nsr_grid) {
    const NoiseSetting noise = nsr_to_noise(nsr, policy.nominal.controls, config.seed);
    NsrStats st;
    st.nsr = nsr;
    st.noise_std = noise.scale;
    st.runs.resize(config.runs);
    parallel_for(config.runs, config.threads, [&](std::size_t i) {
      st.runs[i] = record_run(model, policy, noise.scale, noise.cov, noise.seed, config.first_run + i, config.feedback);
    });
    st.summarize(config.success_threshold);
    report.stats.push_back(std::move(st));
  }
  return report;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("fit_line needs at least two points");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw ConfigError("fit_line: x values are all equal");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

TailEstimate deviation_tail(const dynamics::SimModel& model, const feedback::FeedbackPolicy& policy,
                            const std::vector<double>& epsilons, double threshold, std::size_t runs,
                            std::uint64_t seed, std::size_t threads) {
  if (runs == 0) throw ConfigError("deviation_tail needs at least one run");
  if (!(threshold > 0.0)) throw ConfigError("deviation threshold must be positive");
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    if (!(epsilons[i] >= 0.0) || (i > 0 && !(epsilons[i] > epsilons[i - 1]))) {
      throw ConfigError("epsilon grid must be non-negative and strictly increasing");
    }
  }
  policy.validate();
  TailEstimate est;
  est.threshold = threshold;
  std::vector<double> fx, fy;
  for (double eps : epsilons) {
    std::vector<unsigned char> hit(runs, 0);
    parallel_for(runs, threads, [&](std::size_t i) {
      const RunRecord r = record_run(model, policy, eps, Matrix(), seed, i, true);
      hit[i] = (r.failed || r.max_deviation > threshold) ? 1 : 0;
    });
    TailPoint pt;
    pt.epsilon = eps;
    pt.runs = runs;
    pt.exceedances = static_cast<std::size_t>(std::count(hit.begin(), hit.end(), 1));
    pt.probability = static_cast<double>(pt.exceedances) / static_cast<double>(runs);
    pt.censored = pt.exceedances == 0;
    if (!pt.censored && eps > 0.0) {
      fx.push_back(1.0 / (eps * eps));
      fy.push_back(std::log(pt.probability));
    }
    est.points.push_back(pt);
  }
  est.fitted_points = fx.size();
  if (fx.size() >= 2) {
    const LineFit f = fit_line(fx, fy);
    est.beta = -f.slope;
    est.alpha = std::exp(f.intercept);
    est.r_squared = f.r_squared;
  }
  return est;
}

RankingReport ranking_check(const dynamics::SimModel& model, const openloop::CostSpec& cost,
                            const feedback::FeedbackPolicy& policy1, const feedback::FeedbackPolicy& policy2,
                            const std::vector<double>& epsilons, std::size_t runs, std::uint64_t seed,
                            std::size_t threads) {
  if (runs == 0) throw ConfigError("ranking_check needs at least one run");
  feedback::FeedbackPolicy p1 = policy1;
  feedback::FeedbackPolicy p2 = policy2;
  p1.cost = cost;
  p2.cost = cost;
  RankingReport rep;
  rep.nominal_cost1 = cost.total(p1.nominal);
  rep.nominal_cost2 = cost.total(p2.nominal);
  for (double eps : epsilons) {
    std::vector<double> c1(runs), c2(runs);
    parallel_for(runs, threads, [&](std::size_t i) {
      const RunRecord r1 = record_run(model, p1, eps, Matrix(), seed, 2 * i, true);
      const RunRecord r2 = record_run(model, p2, eps, Matrix(), seed, 2 * i + 1, true);
      c1[i] = r1.failed ? std::numeric_limits<double>::infinity() : r1.cost;
      c2[i] = r2.failed ? std::numeric_limits<double>::infinity() : r2.cost;
    });
    RankingPoint pt;
    pt.epsilon = eps;
    pt.runs = runs;
    double score = 0.0;
    for (std::size_t i = 0; i < runs; ++i) {
      if (c1[i] < c2[i]) {
        score += 1.0;
      } else if (c1[i] == c2[i]) {
        score += 0.5;
      }
      pt.mean_cost1 += c1[i];
      pt.mean_cost2 += c2[i];
    }
    pt.preserved = score / static_cast<double>(runs);
    pt.mean_cost1 /= static_cast<double>(runs);
    pt.mean_cost2 /= static_cast<double>(runs);
    rep.points.push_back(pt);
  }
  return rep;
}

void write_report_csv(std::ostream& out, const MonteCarloReport& report) {
  out << "nsr,noise_std,runs,failures,mean_cost,std_cost,success_rate,mean_max_deviation\n";
  for (const auto& s : report.stats) {
    out << format_double(s.nsr) << ',' << format_double(s.noise_std) << ',' << s.n_runs << ',' << s.failures << ','
        << format_double(s.mean_cost) << ',' << format_double(s.std_cost) << ',' << format_double(s.success_rate)
        << ',' << format_double(s.mean_max_deviation) << '\n';
  }
}

void write_tail_csv(std::ostream& out, const TailEstimate& tail) {
  out << "epsilon,runs,exceedances,probability,censored\n";
  for (const auto& p : tail.points) {
    out << format_double(p.epsilon) << ',' << p.runs << ',' << p.exceedances << ',' << format_double(p.probability)
        << ',' << (p.censored ? 1 : 0) << '\n';
  }
}

void write_ranking_csv(std::ostream& out, const RankingReport& report) {
  out << "epsilon,runs,preserved,mean_cost1,mean_cost2\n";
  for (const auto& p : report.points) {
    out << format_double(p.epsilon) << ',' << p.runs << ',' << format_double(p.preserved) << ','
        << format_double(p.mean_cost1) << ',' << format_double(p.mean_cost2) << '\n';
  }
}

}  // namespace d2c::evaluation
