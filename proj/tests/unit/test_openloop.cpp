#include "d2c/openloop.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"

namespace d2c::openloop {
namespace {

std::shared_ptr<const dynamics::SimModel> scalar_model(double a, double b = 1.0) {
  return std::make_shared<dynamics::LinearModel>("scalar", std::vector<Matrix>{Matrix::Constant(1, 1, a)},
                                                 std::vector<Matrix>{Matrix::Constant(1, 1, b)});
}

CostSpec scalar_cost(double q, double r, double qn, double target = 0.0) {
  return {Matrix::Constant(1, 1, q), Matrix::Constant(1, 1, r), Matrix::Constant(1, 1, qn),
          Vector::Constant(1, target)};
}

std::vector<Vector> scalars(std::initializer_list<double> v) {
  std::vector<Vector> out;
  for (double x : v) out.push_back(Vector::Constant(1, x));
  return out;
}

// J(U) = ||U||^2: no state cost and R = 2.
CostEvaluator squared_norm_problem() {
  return CostEvaluator(scalar_model(1.0), scalar_cost(0.0, 2.0, 0.0), Vector::Zero(1));
}

TEST(CostSpec, StageAndTerminal) {
  CostSpec c = scalar_cost(2.0, 4.0, 3.0, 1.0);
  EXPECT_DOUBLE_EQ(c.stage(Vector::Constant(1, 3.0), Vector::Constant(1, 0.5)), 2.0 * 4.0 + 0.5 * 4.0 * 0.25);
  EXPECT_DOUBLE_EQ(c.terminal(Vector::Constant(1, -1.0)), 12.0);
  EXPECT_DOUBLE_EQ(c.stage_gradient(Vector::Constant(1, 3.0))(0), 8.0);
}

TEST(CostSpec, ValidationRejectsBadWeights) {
  CostSpec c = scalar_cost(1.0, 0.0, 1.0);
  EXPECT_THROW(c.validate(1, 1), ConfigError);  // R not PD
  c = scalar_cost(-1.0, 1.0, 1.0);
  EXPECT_THROW(c.validate(1, 1), ConfigError);
  CostSpec m{Matrix::Identity(2, 2), Matrix::Identity(1, 1), Matrix::Identity(2, 2), Vector::Zero(2)};
  m.state_weight(0, 1) = 0.5;
  EXPECT_THROW(m.validate(2, 1), ConfigError);  // asymmetric
  EXPECT_THROW(scalar_cost(1, 1, 1).validate(2, 1), ConfigError);
}

TEST(EvaluateCost, ZeroAtEquilibriumTarget) {
  const auto model = dynamics::make_model("cartpole", 0.01);
  const CostSpec cost{Matrix::Identity(4, 4), Matrix::Identity(1, 1), Matrix::Identity(4, 4), Vector::Zero(4)};
  EXPECT_EQ(evaluate_cost(*model, cost, Vector::Zero(4), std::vector<Vector>(20, Vector::Zero(1))), 0.0);
}

TEST(EvaluateCost, HandEvaluatedScalar) {
  // x+ = x + u, x0 = 1, U = [-1]: J = 1/2 * 1 + terminal(0) = 0.5
  EXPECT_DOUBLE_EQ(evaluate_cost(*scalar_model(1.0), scalar_cost(0.0, 1.0, 1.0), Vector::Constant(1, 1.0), scalars({-1})),
                   0.5);
}

TEST(CostEvaluator, CountsRollouts) {
  const CostEvaluator ev = squared_norm_problem();
  ev.cost(scalars({1, 2}));
  ev.rollout(scalars({1, 2}));
  EXPECT_EQ(ev.rollouts(), 2u);
}

TEST(FdGradient, QuadraticForwardDifference) {
  const CostEvaluator ev = squared_norm_problem();
  const auto u = scalars({0.3, -1.2, 2.0, 0.0, 0.7});
  const double h = 1e-4;
  const auto g = fd_gradient(ev, u, h);
  ASSERT_EQ(g.size(), u.size());
  for (std::size_t i = 0; i < u.size(); ++i) EXPECT_NEAR(g[i](0), 2.0 * u[i](0) + h, 1e-9);
  EXPECT_EQ(ev.rollouts(), u.size() + 1);
}

TEST(FdGradient, UnreachableTerminalCostGivesZeroComponent) {
  // Control drives state 0 only; the terminal cost sees state 1 only.
  Matrix a = Matrix::Identity(2, 2), b(2, 1);
  b << 1, 0;
  const auto model = std::make_shared<dynamics::LinearModel>("decoupled", std::vector<Matrix>{a}, std::vector<Matrix>{b});
  Matrix qn = Matrix::Zero(2, 2);
  qn(1, 1) = 1.0;
  const CostEvaluator ev(model, CostSpec{Matrix::Zero(2, 2), Matrix::Constant(1, 1, 1e-6), qn, Vector::Ones(2)},
                         Vector::Zero(2));
  const double h = 1e-4;
  for (const auto& g : fd_gradient(ev, std::vector<Vector>(4, Vector::Zero(1)), h)) EXPECT_LE(std::abs(g(0)), h);
}

TEST(FdGradient, ThreadCountDoesNotChangeResult) {
  const auto model = dynamics::make_model("cartpole", 0.01);
  const CostSpec cost{Matrix::Identity(4, 4), Matrix::Identity(1, 1), Matrix::Identity(4, 4), Vector::Zero(4)};
  const CostEvaluator ev(model, cost, dynamics::benchmark_task("cartpole").initial_state);
  std::mt19937_64 rng(1);
  std::vector<Vector> u;
  for (int k = 0; k < 40; ++k) u.push_back(oracle::random_matrix(rng, 1, 1));
  const auto g1 = fd_gradient(ev, u, 1e-5, 1);
  const auto g4 = fd_gradient(ev, u, 1e-5, 4);
  for (std::size_t k = 0; k < u.size(); ++k) EXPECT_EQ(g1[k], g4[k]);
}

TEST(GradientDescent, AlreadyConvergedReturnsInitialGuess) {
  const CostEvaluator ev = squared_norm_problem();
  OptimizerConfig cfg;
  cfg.tolerance = 1.0;
  const auto u0 = scalars({1e-3, -2e-3});
  const auto res = gradient_descent(ev, u0, cfg);
  EXPECT_EQ(res.iterations, 0u);
  EXPECT_TRUE(res.converged);
  for (std::size_t k = 0; k < u0.size(); ++k) EXPECT_EQ(res.controls[k], u0[k]);
}

TEST(GradientDescent, HalvingContraction) {
  // U <- U - 0.25 (2 U + h) = U / 2 - h / 4 per step.
  const CostEvaluator ev = squared_norm_problem();
  OptimizerConfig cfg;
  cfg.step_size = 0.25;
  cfg.perturbation = 1e-6;
  cfg.tolerance = 1e-12;
  cfg.max_iterations = 6;
  cfg.backtracking = false;
  const auto u0 = scalars({4.0, -8.0, 1.0});
  const auto res = gradient_descent(ev, u0, cfg);
  EXPECT_EQ(res.iterations, 6u);
  const double bias = -0.25 * cfg.perturbation * (1.0 - std::pow(0.5, 6)) / 0.5;
  for (std::size_t k = 0; k < u0.size(); ++k) {
    EXPECT_NEAR(res.controls[k](0), std::pow(0.5, 6) * u0[k](0) + bias, 1e-9);
  }
}

TEST(GradientDescent, ConvergesToZeroOnSquaredNorm) {
  const CostEvaluator ev = squared_norm_problem();
  OptimizerConfig cfg;
  cfg.step_size = 0.25;
  cfg.perturbation = 1e-8;
  cfg.tolerance = 1e-6;
  const auto res = gradient_descent(ev, scalars({4.0, -8.0, 1.0}), cfg);
  EXPECT_TRUE(res.converged);
  EXPECT_LT(sequence_norm(res.controls), 1e-6);
}

struct ScalarLq {
  double a = 0.9, b = 0.5, q = 1.0, r = 0.4, qn = 5.0, x0 = 2.0;
  std::size_t n = 20;

  // Optimal cost x0' P0 x0 with the 1/2 on R folded into the oracle's R.
  double optimum() const {
    const std::vector<Matrix> as(n, Matrix::Constant(1, 1, a)), bs(n, Matrix::Constant(1, 1, b));
    const auto sol = oracle::lqr(as, bs, Matrix::Constant(1, 1, q), Matrix::Constant(1, 1, 0.5 * r),
                                 Matrix::Constant(1, 1, qn));
    return x0 * x0 * sol.p[0](0, 0);
  }
  CostEvaluator evaluator() const { return CostEvaluator(scalar_model(a, b), scalar_cost(q, r, qn), Vector::Constant(1, x0)); }
};

class ScalarLqMethods : public ::testing::TestWithParam<Method> {};

TEST_P(ScalarLqMethods, ReachesRiccatiOptimum) {
  const ScalarLq lq;
  const CostEvaluator ev = lq.evaluator();
  OptimizerConfig cfg;
  cfg.method = GetParam();
  cfg.step_size = 0.1;
  cfg.perturbation = 1e-6;
  cfg.tolerance = 1e-5;
  cfg.max_iterations = 5000;
  const auto res = optimize(ev, zero_controls(lq.n, 1), cfg);
  EXPECT_TRUE(res.converged);
  const double best = lq.optimum();
  EXPECT_LE(std::abs(ev.cost(res.controls) - best), 0.01 * best);
}

INSTANTIATE_TEST_SUITE_P(All, ScalarLqMethods,
                         ::testing::Values(Method::kGradientDescent, Method::kGaussNewton, Method::kIlqr),
                         [](const auto& info) { return to_string(info.param); });

TEST(GradientDescent, BacktrackingHistoryNonIncreasing) {
  const auto model = dynamics::make_model("cartpole", 0.01);
  const CostSpec cost{0.1 * Matrix::Identity(4, 4), 0.1 * Matrix::Identity(1, 1), 100.0 * Matrix::Identity(4, 4),
                      Vector::Zero(4)};
  const CostEvaluator ev(model, cost, dynamics::benchmark_task("cartpole").initial_state);
  OptimizerConfig cfg;
  cfg.step_size = 1.0;
  cfg.max_iterations = 30;
  const auto res = gradient_descent(ev, zero_controls(100, 1), cfg);
  for (std::size_t i = 1; i < res.history.size(); ++i) EXPECT_LE(res.history[i].cost, res.history[i - 1].cost);
  EXPECT_LT(res.history.back().cost, res.history.front().cost);
}

TEST(GradientDescent, RolloutAccounting) {
  const ScalarLq lq;
  const CostEvaluator ev = lq.evaluator();
  OptimizerConfig cfg;
  cfg.step_size = 0.05;
  cfg.max_iterations = 10;
  cfg.tolerance = 1e-12;
  const auto res = gradient_descent(ev, zero_controls(lq.n, 1), cfg);
  EXPECT_EQ(res.history.front().rollouts, lq.n + 1);
  for (std::size_t i = 1; i < res.history.size(); ++i) {
    const std::size_t step = res.history[i].rollouts - res.history[i - 1].rollouts;
    EXPECT_GE(step, lq.n + 2);  // gradient plus at least one trial
    EXPECT_LE(step, lq.n + 2 + cfg.max_backtracks);
  }
  EXPECT_EQ(res.rollouts, ev.rollouts());
}

TEST(GradientDescent, DivergenceCarriesLastFiniteIterate) {
  const CostEvaluator ev(scalar_model(1.0), scalar_cost(0.0, 1.0, 1.0), Vector::Constant(1, 1.0));
  OptimizerConfig cfg;
  cfg.step_size = 1e200;
  cfg.backtracking = false;
  try {
    gradient_descent(ev, scalars({0.0, 0.0}), cfg);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    ASSERT_EQ(e.last_iterate().size(), 2u);
    for (const auto& u : e.last_iterate()) EXPECT_TRUE(u.allFinite());
  }
}

TEST(OptimizerConfig, Validation) {
  OptimizerConfig cfg;
  cfg.step_size = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.perturbation = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.tolerance = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(method_from_string("newton"), ConfigError);
  EXPECT_EQ(method_from_string(to_string(Method::kIlqr)), Method::kIlqr);
}

TEST(Ilqr, NominalReproducedByOpenLoopRollout) {
  const ScalarLq lq;
  const CostEvaluator ev = lq.evaluator();
  OptimizerConfig cfg;
  cfg.method = Method::kIlqr;
  cfg.perturbation = 1e-6;
  const auto res = optimize(ev, zero_controls(lq.n, 1), cfg);
  const Trajectory t = ev.rollout(res.controls);
  for (std::size_t k = 0; k < t.states.size(); ++k) EXPECT_EQ(t.states[k], res.nominal.states[k]);
}

TEST(Solve, ContinuationCountsEveryStage) {
  const ScalarLq lq;
  OptimizerConfig cfg;
  cfg.method = Method::kIlqr;
  cfg.perturbation = 1e-6;
  cfg.terminal_continuation = {0.1, 1.0};
  const auto res = solve(scalar_model(lq.a, lq.b), scalar_cost(lq.q, lq.r, lq.qn), Vector::Constant(1, lq.x0),
                         zero_controls(lq.n, 1), cfg);
  EXPECT_TRUE(res.converged);
  for (std::size_t i = 1; i < res.history.size(); ++i) {
    EXPECT_GT(res.history[i].iteration, res.history[i - 1].iteration);
    EXPECT_GE(res.history[i].rollouts, res.history[i - 1].rollouts);
  }
  EXPECT_NEAR(res.final_cost(), lq.optimum(), 1e-6 * lq.optimum());
}

TEST(ConvergenceCsv, HeaderAndRows) {
  std::ostringstream out;
  write_convergence_csv(out, {{0, 2.5, 1.0, 3}, {1, 1.5, 0.5, 7}});
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "iteration,cost,gradient_norm,rollouts");
  EXPECT_NE(out.str().find("1,1.5,0.5,7"), std::string::npos);
}

}  // namespace
}  // namespace d2c::openloop
