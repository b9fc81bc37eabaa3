#include "d2c/openloop.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "d2c/parallel.hpp"
#include "d2c/textio.hpp"

namespace d2c::openloop {
namespace {

void check_square(const Matrix& m, std::size_t n, const char* what) {
  if (m.rows() != static_cast<Eigen::Index>(n) || m.cols() != static_cast<Eigen::Index>(n)) {
    throw ConfigError(std::string(what) + " must be " + std::to_string(n) + "x" + std::to_string(n));
  }
  if (!m.allFinite()) {
    throw ConfigError(std::string(what) + " has non-finite entries");
  }
  if (!m.isApprox(m.transpose(), 1e-12) && !(m - m.transpose()).isZero(1e-12)) {
    throw ConfigError(std::string(what) + " must be symmetric");
  }
}

// Square root factor F with F' F = M for a PSD matrix M.
Matrix psd_factor(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(numerics::symmetrize(m));
  const Vector roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return roots.asDiagonal() * eig.eigenvectors().transpose();
}

Vector flatten(const std::vector<Vector>& seq) {
  Eigen::Index total = 0;
  for (const auto& v : seq) total += v.size();
  Vector out(total);
  Eigen::Index offset = 0;
  for (const auto& v : seq) {
    out.segment(offset, v.size()) = v;
    offset += v.size();
  }
  return out;
}

std::vector<Vector> unflatten(const Vector& flat, std::size_t horizon, std::size_t control_dim) {
  std::vector<Vector> seq(horizon);
  const auto nu = static_cast<Eigen::Index>(control_dim);
  for (std::size_t k = 0; k < horizon; ++k) {
    seq[k] = flat.segment(static_cast<Eigen::Index>(k) * nu, nu);
  }
  return seq;
}

struct CostAndGradient {
  double cost = 0.0;
  Vector gradient;
};

CostAndGradient cost_and_gradient(const CostEvaluator& evaluator, const std::vector<Vector>& controls, double h,
                                  std::size_t threads) {
  if (!(h > 0.0)) {
    throw ConfigError("finite-difference perturbation must be positive");
  }
  const std::size_t nu = evaluator.model().control_dim();
  const std::size_t n = controls.size() * nu;
  CostAndGradient out;
  out.cost = evaluator.cost(controls);
  out.gradient.resize(static_cast<Eigen::Index>(n));
  parallel_for(n, threads, [&](std::size_t i) {
    std::vector<Vector> perturbed = controls;
    perturbed[i / nu](static_cast<Eigen::Index>(i % nu)) += h;
    out.gradient(static_cast<Eigen::Index>(i)) = (evaluator.cost(perturbed) - out.cost) / h;
  });
  return out;
}

bool finite(double v) { return std::isfinite(v); }

double safe_cost(const CostEvaluator& evaluator, const std::vector<Vector>& controls) {
  try {
    return evaluator.cost(controls);
  } catch (const NumericalError&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

void CostSpec::validate(std::size_t state_dim, std::size_t control_dim) const {
  check_square(state_weight, state_dim, "state weight Q");
  check_square(control_weight, control_dim, "control weight R");
  check_square(terminal_weight, state_dim, "terminal weight Q_N");
  if (target.size() != static_cast<Eigen::Index>(state_dim)) {
    throw ConfigError("target state has dimension " + std::to_string(target.size()) + ", expected " +
                      std::to_string(state_dim));
  }
  if (numerics::min_symmetric_eigenvalue(state_weight) < -1e-12) {
    throw ConfigError("state weight Q must be positive semi-definite");
  }
  if (numerics::min_symmetric_eigenvalue(terminal_weight) < -1e-12) {
    throw ConfigError("terminal weight Q_N must be positive semi-definite");
  }
  if (numerics::min_symmetric_eigenvalue(control_weight) <= 0.0) {
    throw ConfigError("control weight R must be positive definite");
  }
}

double CostSpec::stage(const Vector& x, const Vector& u) const {
  const Vector e = x - target;
  return e.dot(state_weight * e) + 0.5 * u.dot(control_weight * u);
}

double CostSpec::terminal(const Vector& x) const {
  const Vector e = x - target;
  return e.dot(terminal_weight * e);
}

double CostSpec::total(const Trajectory& traj) const {
  double j = 0.0;
  for (std::size_t k = 0; k < traj.controls.size(); ++k) {
    j += stage(traj.states[k], traj.controls[k]);
  }
  return j + terminal(traj.states.back());
}

RowVector CostSpec::stage_gradient(const Vector& x) const {
  return 2.0 * (x - target).transpose() * state_weight;
}

RowVector CostSpec::terminal_gradient(const Vector& x) const {
  return 2.0 * (x - target).transpose() * terminal_weight;
}

CostEvaluator::CostEvaluator(std::shared_ptr<const dynamics::SimModel> model, CostSpec cost, Vector x0)
    : model_(std::move(model)), cost_(std::move(cost)), x0_(std::move(x0)) {
  cost_.validate(model_->state_dim(), model_->control_dim());
}

Trajectory CostEvaluator::rollout(const std::vector<Vector>& controls) const {
  rollouts_.fetch_add(1);
  return dynamics::rollout(*model_, x0_, controls);
}

double CostEvaluator::cost(const std::vector<Vector>& controls) const { return cost_.total(rollout(controls)); }

double evaluate_cost(const dynamics::SimModel& model, const CostSpec& cost, const Vector& x0,
                     const std::vector<Vector>& controls) {
  return cost.total(dynamics::rollout(model, x0, controls));
}

std::vector<Vector> fd_gradient(const CostEvaluator& evaluator, const std::vector<Vector>& controls, double h,
                                std::size_t threads) {
  const auto cg = cost_and_gradient(evaluator, controls, h, threads);
  return unflatten(cg.gradient, controls.size(), evaluator.model().control_dim());
}

std::string to_string(Method m) {
  switch (m) {
    case Method::kGaussNewton:
      return "gauss_newton";
    case Method::kIlqr:
      return "ilqr";
    case Method::kGradientDescent:
      break;
  }
  return "gradient_descent";
}

Method method_from_string(const std::string& s) {
  if (s == "gradient_descent") return Method::kGradientDescent;
  if (s == "gauss_newton") return Method::kGaussNewton;
  if (s == "ilqr") return Method::kIlqr;
  throw ConfigError("unknown optimizer method '" + s + "'");
}

void OptimizerConfig::validate() const {
  if (!(step_size > 0.0)) throw ConfigError("optimizer step size must be positive");
  if (!(perturbation > 0.0)) throw ConfigError("optimizer perturbation h must be positive");
  if (!(tolerance > 0.0)) throw ConfigError("optimizer tolerance must be positive");
  if (!(armijo > 0.0 && armijo < 1.0)) throw ConfigError("Armijo constant must lie in (0, 1)");
  if (terminal_continuation.empty() || terminal_continuation.back() != 1.0) {
    throw ConfigError("terminal continuation must end with 1");
  }
  for (double m : terminal_continuation) {
    if (!(m > 0.0)) throw ConfigError("terminal continuation multipliers must be positive");
  }
}

OpenLoopResult gradient_descent(const CostEvaluator& evaluator, std::vector<Vector> initial,
                                const OptimizerConfig& config) {
  config.validate();
  if (initial.empty()) throw ConfigError("gradient descent: empty initial control sequence");
  const std::size_t horizon = initial.size();
  const std::size_t nu = evaluator.model().control_dim();
  const std::size_t start_rollouts = evaluator.rollouts();

  OpenLoopResult result;
  Vector u = flatten(initial);
  CostAndGradient cg;
  try {
    cg = cost_and_gradient(evaluator, initial, config.perturbation, config.threads);
  } catch (const NumericalError& e) {
    throw DivergenceError(std::string("gradient descent: initial guess: ") + e.what(), initial);
  }
  if (!finite(cg.cost) || !cg.gradient.allFinite()) {
    throw DivergenceError("gradient descent: non-finite cost at the initial guess", initial);
  }

  auto record = [&](std::size_t it) {
    result.history.push_back({it, cg.cost, cg.gradient.norm(), evaluator.rollouts() - start_rollouts});
  };
  record(0);
  Vector best_u = u;
  double best_cost = cg.cost;

  std::size_t n = 0;
  while (cg.gradient.norm() >= config.tolerance && n < config.max_iterations) {
    double alpha = config.step_size;
    Vector candidate = u - alpha * cg.gradient;
    double trial = safe_cost(evaluator, unflatten(candidate, horizon, nu));
    if (config.backtracking) {
      const double slope = cg.gradient.squaredNorm();
      std::size_t tries = 0;
      while (!(trial <= cg.cost - config.armijo * alpha * slope) && tries < config.max_backtracks) {
        alpha *= 0.5;
        candidate = u - alpha * cg.gradient;
        trial = safe_cost(evaluator, unflatten(candidate, horizon, nu));
        ++tries;
      }
      if (!(trial <= cg.cost - config.armijo * alpha * slope)) {
        break;  // no decrease along the negative gradient at any tried step
      }
    } else if (!finite(trial)) {
      throw DivergenceError("gradient descent: cost became non-finite at iteration " + std::to_string(n + 1),
                            unflatten(u, horizon, nu));
    }

    u = candidate;
    ++n;
    try {
      cg = cost_and_gradient(evaluator, unflatten(u, horizon, nu), config.perturbation, config.threads);
    } catch (const NumericalError& e) {
      throw DivergenceError(std::string("gradient descent: ") + e.what(), unflatten(u, horizon, nu));
    }
    record(n);
    if (cg.cost < best_cost) {
      best_cost = cg.cost;
      best_u = u;
    }
  }

  // Without backtracking the cost may rise; hand back the cheapest iterate.
  if (!config.backtracking && best_cost < cg.cost) {
    u = best_u;
  }

  result.controls = unflatten(u, horizon, nu);
  result.converged = cg.gradient.norm() < config.tolerance;
  result.iterations = n;
  result.nominal = evaluator.rollout(result.controls);
  result.rollouts = evaluator.rollouts() - start_rollouts;
  return result;
}

OpenLoopResult gauss_newton(const CostEvaluator& evaluator, std::vector<Vector> initial,
                            const OptimizerConfig& config) {
  config.validate();
  if (initial.empty()) throw ConfigError("gauss-newton: empty initial control sequence");
  const std::size_t horizon = initial.size();
  const std::size_t nu = evaluator.model().control_dim();
  const std::size_t nx = evaluator.model().state_dim();
  const std::size_t start_rollouts = evaluator.rollouts();
  const CostSpec& spec = evaluator.cost_spec();
  const double h = config.perturbation;

  const Matrix fq = psd_factor(spec.state_weight);
  const Matrix fr = psd_factor(0.5 * spec.control_weight);
  const Matrix fn = psd_factor(spec.terminal_weight);
  const auto inx = static_cast<Eigen::Index>(nx);
  const auto inu = static_cast<Eigen::Index>(nu);
  const Eigen::Index rows = static_cast<Eigen::Index>(horizon) * (inx + inu) + inx;

  // J(U) = ||r(U)||^2 with r stacking the weighted state errors and controls.
  auto residual = [&](const Trajectory& traj) {
    Vector r(rows);
    Eigen::Index o = 0;
    for (std::size_t k = 0; k < horizon; ++k) {
      r.segment(o, inx) = fq * (traj.states[k] - spec.target);
      o += inx;
      r.segment(o, inu) = fr * traj.controls[k];
      o += inu;
    }
    r.segment(o, inx) = fn * (traj.states.back() - spec.target);
    return r;
  };

  OpenLoopResult result;
  Vector u = flatten(initial);
  const auto n = static_cast<Eigen::Index>(horizon * nu);
  double mu = 1e-3;

  Vector r0;
  double cost = 0.0;
  Vector grad(n);
  Matrix jac(rows, n);

  auto linearize = [&] {
    const auto controls = unflatten(u, horizon, nu);
    r0 = residual(evaluator.rollout(controls));
    cost = r0.squaredNorm();
    parallel_for(static_cast<std::size_t>(n), config.threads, [&](std::size_t i) {
      std::vector<Vector> perturbed = controls;
      perturbed[i / nu](static_cast<Eigen::Index>(i % nu)) += h;
      const Vector ri = residual(evaluator.rollout(perturbed));
      jac.col(static_cast<Eigen::Index>(i)) = (ri - r0) / h;
      grad(static_cast<Eigen::Index>(i)) = (ri.squaredNorm() - cost) / h;
    });
  };

  try {
    linearize();
  } catch (const NumericalError& e) {
    throw DivergenceError(std::string("gauss-newton: initial guess: ") + e.what(), initial);
  }
  if (!finite(cost) || !grad.allFinite()) {
    throw DivergenceError("gauss-newton: non-finite cost at the initial guess", initial);
  }
  auto record = [&](std::size_t it) {
    result.history.push_back({it, cost, grad.norm(), evaluator.rollouts() - start_rollouts});
  };
  record(0);

  std::size_t iter = 0;
  bool stalled = false;
  while (grad.norm() >= config.tolerance && iter < config.max_iterations && !stalled) {
    const Matrix jtj = jac.transpose() * jac;
    const Vector jtr = jac.transpose() * r0;
    const Vector scale = jtj.diagonal().cwiseMax(1e-12 * std::max(1.0, jtj.diagonal().maxCoeff()));
    bool accepted = false;
    for (std::size_t attempt = 0; attempt < config.max_backtracks; ++attempt) {
      Matrix lhs = jtj;
      lhs.diagonal() += mu * scale;
      const Vector step = -lhs.ldlt().solve(jtr);
      const double predicted = cost - (r0 + jac * step).squaredNorm();
      const Vector candidate = u + step;
      const double trial = safe_cost(evaluator, unflatten(candidate, horizon, nu));
      const double ratio = predicted > 0.0 ? (cost - trial) / predicted : -1.0;
      if (finite(trial) && trial < cost && ratio > 1e-4) {
        u = candidate;
        mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * ratio - 1.0, 3));
        mu = std::max(mu, 1e-12);
        accepted = true;
        break;
      }
      mu *= 4.0;
      if (!(predicted > 1e-15 * std::max(1.0, cost))) break;
    }
    if (!accepted) {
      stalled = true;
      break;
    }
    ++iter;
    try {
      linearize();
    } catch (const NumericalError& e) {
      throw DivergenceError(std::string("gauss-newton: ") + e.what(), unflatten(u, horizon, nu));
    }
    record(iter);
  }

  result.controls = unflatten(u, horizon, nu);
  result.converged = grad.norm() < config.tolerance;
  result.iterations = iter;
  result.nominal = evaluator.rollout(result.controls);
  result.rollouts = evaluator.rollouts() - start_rollouts;
  return result;
}

OpenLoopResult ilqr(const CostEvaluator& evaluator, std::vector<Vector> initial, const OptimizerConfig& config) {
  config.validate();
  if (initial.empty()) throw ConfigError("ilqr: empty initial control sequence");
  const dynamics::SimModel& model = evaluator.model();
  const CostSpec& spec = evaluator.cost_spec();
  const std::size_t horizon = initial.size();
  const auto nx = static_cast<Eigen::Index>(model.state_dim());
  const auto nu = static_cast<Eigen::Index>(model.control_dim());
  const std::size_t start_rollouts = evaluator.rollouts();

  Trajectory traj;
  try {
    traj = evaluator.rollout(initial);
  } catch (const NumericalError& e) {
    throw DivergenceError(std::string("ilqr: initial guess: ") + e.what(), initial);
  }
  double cost = spec.total(traj);
  if (!finite(cost)) throw DivergenceError("ilqr: non-finite cost at the initial guess", initial);

  std::vector<dynamics::StepJacobian> jac(horizon);
  Vector grad(static_cast<Eigen::Index>(horizon) * nu);
  auto linearize = [&] {
    parallel_for(horizon, config.threads, [&](std::size_t k) {
      jac[k] = dynamics::linearize_step(model, k, traj.states[k], traj.controls[k], config.perturbation);
    });
    evaluator.add_rollouts(static_cast<std::size_t>(2 * (nx + nu)));
    RowVector g = spec.terminal_gradient(traj.states.back());
    for (std::size_t k = horizon; k-- > 0;) {
      grad.segment(static_cast<Eigen::Index>(k) * nu, nu) =
          spec.control_weight * traj.controls[k] + jac[k].b.transpose() * g.transpose();
      g = spec.stage_gradient(traj.states[k]) + g * jac[k].a;
    }
  };
  try {
    linearize();
  } catch (const NumericalError& e) {
    throw DivergenceError(std::string("ilqr: ") + e.what(), initial);
  }

  OpenLoopResult result;
  auto record = [&](std::size_t it) {
    result.history.push_back({it, cost, grad.norm(), evaluator.rollouts() - start_rollouts});
  };
  record(0);

  std::vector<Vector> feedforward(horizon);
  std::vector<Matrix> gains(horizon);
  double mu = 0.0;
  std::size_t iter = 0;
  std::size_t failures = 0;
  while (grad.norm() >= config.tolerance && iter < config.max_iterations) {
    // Backward pass; returns false if Q_uu is not positive definite.
    double dv1 = 0.0;
    double dv2 = 0.0;
    auto backward = [&] {
      dv1 = dv2 = 0.0;
      Vector vx = 2.0 * spec.terminal_weight * (traj.states.back() - spec.target);
      Matrix vxx = 2.0 * spec.terminal_weight;
      for (std::size_t k = horizon; k-- > 0;) {
        const Matrix& a = jac[k].a;
        const Matrix& b = jac[k].b;
        const Vector qx = 2.0 * spec.state_weight * (traj.states[k] - spec.target) + a.transpose() * vx;
        const Vector qu = spec.control_weight * traj.controls[k] + b.transpose() * vx;
        const Matrix qxx = 2.0 * spec.state_weight + a.transpose() * vxx * a;
        Matrix quu = numerics::symmetrize(spec.control_weight + b.transpose() * vxx * b);
        const Matrix qux = b.transpose() * vxx * a;
        Matrix quu_reg = quu;
        quu_reg.diagonal().array() += mu;
        Eigen::LLT<Matrix> llt(quu_reg);
        if (llt.info() != Eigen::Success) return false;
        feedforward[k] = -llt.solve(qu);
        gains[k] = -llt.solve(qux);
        const Vector& kf = feedforward[k];
        const Matrix& kk = gains[k];
        dv1 += kf.dot(qu);
        dv2 += 0.5 * kf.dot(quu * kf);
        vx = qx + kk.transpose() * quu * kf + kk.transpose() * qu + qux.transpose() * kf;
        vxx = numerics::symmetrize(qxx + kk.transpose() * quu * kk + kk.transpose() * qux + qux.transpose() * kk);
      }
      return true;
    };
    if (!backward()) {
      mu = std::max(1e-6, mu * 10.0);
      if (mu > 1e10) break;
      continue;
    }

    bool accepted = false;
    double alpha = 1.0;
    for (std::size_t attempt = 0; attempt < config.max_backtracks; ++attempt, alpha *= 0.5) {
      const double expected = -(alpha * dv1 + alpha * alpha * dv2);
      Trajectory trial;
      trial.states.reserve(horizon + 1);
      trial.controls.reserve(horizon);
      trial.states.push_back(traj.states.front());
      double trial_cost = 0.0;
      evaluator.add_rollouts(1);
      try {
        for (std::size_t k = 0; k < horizon; ++k) {
          const Vector& x = trial.states.back();
          trial.controls.push_back(traj.controls[k] + alpha * feedforward[k] +
                                   gains[k] * (x - traj.states[k]));
          trial.states.push_back(model.step(k, x, trial.controls.back()));
        }
        trial_cost = spec.total(trial);
      } catch (const NumericalError&) {
        trial_cost = std::numeric_limits<double>::infinity();
      }
      if (finite(trial_cost) && trial_cost < cost && cost - trial_cost >= config.armijo * expected) {
        traj = std::move(trial);
        cost = trial_cost;
        accepted = true;
        break;
      }
      if (!(expected > 1e-15 * std::max(1.0, std::abs(cost)))) break;
    }
    if (!accepted) {
      mu = std::max(1e-6, mu * 10.0);
      if (mu > 1e10 || ++failures > config.max_backtracks) break;
      continue;
    }
    mu = mu * 0.1 < 1e-9 ? 0.0 : mu * 0.1;
    ++iter;
    try {
      linearize();
    } catch (const NumericalError& e) {
      throw DivergenceError(std::string("ilqr: ") + e.what(), traj.controls);
    }
    record(iter);
  }

  result.controls = traj.controls;
  result.converged = grad.norm() < config.tolerance;
  result.iterations = iter;
  result.nominal = evaluator.rollout(result.controls);
  result.rollouts = evaluator.rollouts() - start_rollouts;
  return result;
}

OpenLoopResult optimize(const CostEvaluator& evaluator, std::vector<Vector> initial, const OptimizerConfig& config) {
  switch (config.method) {
    case Method::kGaussNewton:
      return gauss_newton(evaluator, std::move(initial), config);
    case Method::kIlqr:
      return ilqr(evaluator, std::move(initial), config);
    case Method::kGradientDescent:
      break;
  }
  return gradient_descent(evaluator, std::move(initial), config);
}

OpenLoopResult solve(std::shared_ptr<const dynamics::SimModel> model, const CostSpec& cost, const Vector& x0,
                     std::vector<Vector> initial, const OptimizerConfig& config) {
  config.validate();
  OpenLoopResult total;
  std::size_t iterations = 0;
  std::size_t rollouts = 0;
  for (double multiplier : config.terminal_continuation) {
    CostSpec stage_cost = cost;
    stage_cost.terminal_weight *= multiplier;
    const CostEvaluator evaluator(model, stage_cost, x0);
    OpenLoopResult stage = optimize(evaluator, std::move(initial), config);
    for (auto rec : stage.history) {
      if (!total.history.empty() && rec.iteration == 0) continue;  // stage start repeats the previous end
      rec.iteration += iterations;
      rec.rollouts += rollouts;
      total.history.push_back(rec);
    }
    iterations += stage.iterations;
    rollouts += stage.rollouts;
    initial = stage.controls;
    total.controls = std::move(stage.controls);
    total.nominal = std::move(stage.nominal);
    total.converged = stage.converged;
  }
  total.iterations = iterations;
  total.rollouts = rollouts;
  return total;
}

void write_convergence_csv(std::ostream& out, const std::vector<IterationRecord>& history) {
  out << "iteration,cost,gradient_norm,rollouts\n";
  for (const auto& r : history) {
    out << r.iteration << ',' << textio::format_double(r.cost) << ',' << textio::format_double(r.gradient_norm)
        << ',' << r.rollouts << '\n';
  }
}

double sequence_norm(const std::vector<Vector>& seq) {
  double s = 0.0;
  for (const auto& v : seq) s += v.squaredNorm();
  return std::sqrt(s);
}

std::vector<Vector> zero_controls(std::size_t horizon, std::size_t control_dim) {
  return std::vector<Vector>(horizon, Vector::Zero(static_cast<Eigen::Index>(control_dim)));
}

}  // namespace d2c::openloop
