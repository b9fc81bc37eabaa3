#pragma once

#include <atomic>
#include <cstddef>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "d2c/dynamics.hpp"
#include "d2c/errors.hpp"

namespace d2c::openloop {

/// c(x, u) = (x - target)' Q (x - target) + 1/2 u' R u,  phi(x) = (x - target)' Q_N (x - target).
struct CostSpec {
  Matrix state_weight;     // Q, PSD
  Matrix control_weight;   // R, PD
  Matrix terminal_weight;  // Q_N, PSD
  Vector target;

  /// Throws ConfigError on dimension mismatch, asymmetry or indefiniteness.
  void validate(std::size_t state_dim, std::size_t control_dim) const;

  double stage(const Vector& x, const Vector& u) const;
  double terminal(const Vector& x) const;
  double total(const Trajectory& traj) const;

  /// dl/dx = 2 (x - target)' Q
  RowVector stage_gradient(const Vector& x) const;
  /// dphi/dx = 2 (x - target)' Q_N
  RowVector terminal_gradient(const Vector& x) const;
};

/// Evaluates J(U) through noise-free rollouts of a black-box model and counts
/// every rollout it performs. Thread-safe.
class CostEvaluator {
 public:
  CostEvaluator(std::shared_ptr<const dynamics::SimModel> model, CostSpec cost, Vector x0);

  double cost(const std::vector<Vector>& controls) const;
  Trajectory rollout(const std::vector<Vector>& controls) const;

  std::size_t rollouts() const { return rollouts_.load(); }
  /// Charges simulation work done outside cost()/rollout(), in rollout units.
  void add_rollouts(std::size_t n) const { rollouts_.fetch_add(n); }
  const dynamics::SimModel& model() const { return *model_; }
  const CostSpec& cost_spec() const { return cost_; }
  const Vector& initial_state() const { return x0_; }

 private:
  std::shared_ptr<const dynamics::SimModel> model_;
  CostSpec cost_;
  Vector x0_;
  mutable std::atomic<std::size_t> rollouts_{0};
};

double evaluate_cost(const dynamics::SimModel& model, const CostSpec& cost, const Vector& x0,
                     const std::vector<Vector>& controls);

/// Forward-difference gradient, one perturbed rollout per control coordinate
/// plus one baseline: N * n_u + 1 cost evaluations.
std::vector<Vector> fd_gradient(const CostEvaluator& evaluator, const std::vector<Vector>& controls, double h,
                                std::size_t threads = 1);

enum class Method { kGradientDescent, kGaussNewton, kIlqr };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct OptimizerConfig {
  Method method = Method::kGradientDescent;
  double step_size = 1e-2;       // alpha
  double perturbation = 1e-4;    // h
  double tolerance = 1e-3;       // epsilon_tol on ||grad J||
  std::size_t max_iterations = 1000;  // per continuation stage
  bool backtracking = true;
  double armijo = 1e-4;
  std::size_t max_backtracks = 40;
  std::size_t threads = 1;
  /// Multipliers on Q_N for successive warm-started solves; the last must be 1
  /// so the final stage solves the configured problem.
  std::vector<double> terminal_continuation{1.0};

  void validate() const;
};

struct IterationRecord {
  std::size_t iteration = 0;
  double cost = 0.0;
  double gradient_norm = 0.0;
  std::size_t rollouts = 0;
};

struct OpenLoopResult {
  std::vector<Vector> controls;
  Trajectory nominal;
  std::vector<IterationRecord> history;
  bool converged = false;
  std::size_t iterations = 0;
  std::size_t rollouts = 0;

  double final_cost() const { return history.empty() ? 0.0 : history.back().cost; }
};

/// Raised when the cost becomes non-finite; carries the last finite iterate.
class DivergenceError : public OptimizationError {
 public:
  DivergenceError(const std::string& what, std::vector<Vector> last_iterate)
      : OptimizationError(what), last_iterate_(std::move(last_iterate)) {}
  const std::vector<Vector>& last_iterate() const { return last_iterate_; }

 private:
  std::vector<Vector> last_iterate_;
};

/// Gradient descent on finite-difference gradients, optionally with Armijo
/// backtracking. Stops when ||grad|| < tolerance or after max_iterations.
OpenLoopResult gradient_descent(const CostEvaluator& evaluator, std::vector<Vector> initial,
                                const OptimizerConfig& config);

/// Levenberg-Marquardt on the trajectory residuals. The residual Jacobian is
/// built from the same N * n_u + 1 perturbed rollouts that produce the
/// forward-difference gradient, so the convergence test and the rollout
/// accounting match gradient_descent.
OpenLoopResult gauss_newton(const CostEvaluator& evaluator, std::vector<Vector> initial,
                            const OptimizerConfig& config);

/// Iterative LQR on black-box step queries: one-step Jacobians by central
/// differences (2 (n_x + n_u) steps per time index, charged as that many
/// rollouts), a Riccati backward pass and a line-searched forward pass that
/// applies the feedback gains. gradient_norm in the history is the adjoint
/// gradient R u_k + B_k' G_{k+1}'. The returned controls are the ones applied
/// in the accepted forward pass, so an open-loop rollout reproduces the
/// nominal exactly.
OpenLoopResult ilqr(const CostEvaluator& evaluator, std::vector<Vector> initial, const OptimizerConfig& config);

/// Dispatches on config.method.
OpenLoopResult optimize(const CostEvaluator& evaluator, std::vector<Vector> initial, const OptimizerConfig& config);

/// Runs one optimize() per continuation stage, each warm-started from the
/// previous stage. History iterations and rollouts are cumulative; converged
/// refers to the final stage.
OpenLoopResult solve(std::shared_ptr<const dynamics::SimModel> model, const CostSpec& cost, const Vector& x0,
                     std::vector<Vector> initial, const OptimizerConfig& config);

/// iteration,cost,gradient_norm,rollouts
void write_convergence_csv(std::ostream& out, const std::vector<IterationRecord>& history);

double sequence_norm(const std::vector<Vector>& seq);
std::vector<Vector> zero_controls(std::size_t horizon, std::size_t control_dim);

}  // namespace d2c::openloop
