#include "d2c/sysid.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "d2c/openloop.hpp"
#include "oracles.hpp"

namespace d2c::sysid {
namespace {

// Known LTV plant with full-state output, linear about any nominal.
struct Plant {
  std::vector<Matrix> a, b, c;
  std::shared_ptr<const dynamics::LinearModel> model;
  Trajectory nominal;
};

Plant random_plant(std::uint64_t seed, long nx, long nu, std::size_t n) {
  std::mt19937_64 rng(seed);
  Plant p;
  const Matrix a0 = oracle::random_with_radius(rng, nx, 0.9);
  const Matrix b0 = oracle::random_matrix(rng, nx, nu);
  for (std::size_t k = 0; k < n; ++k) {
    p.a.push_back(a0 + 0.1 * oracle::random_matrix(rng, nx, nx));
    p.b.push_back(b0 + 0.1 * oracle::random_matrix(rng, nx, nu));
  }
  p.c.assign(n + 1, Matrix::Identity(nx, nx));
  p.model = std::make_shared<dynamics::LinearModel>("ltv", p.a, p.b);
  std::vector<Vector> u;
  for (std::size_t k = 0; k < n; ++k) u.push_back(oracle::random_matrix(rng, nu, 1));
  p.nominal = dynamics::rollout(*p.model, oracle::random_matrix(rng, nx, 1), u);
  return p;
}

MarkovParamSet scalar_lti(std::size_t n) {
  return markov_from_system(std::vector<Matrix>(n, Matrix::Constant(1, 1, 0.5)),
                            std::vector<Matrix>(n, Matrix::Constant(1, 1, 1.0)),
                            std::vector<Matrix>(n + 1, Matrix::Constant(1, 1, 1.0)));
}

CollectConfig full_collect(std::uint64_t seed = 3) {
  CollectConfig cfg;
  cfg.sigma = 0.1;
  cfg.seed = seed;
  return cfg;
}

TEST(MarkovFromSystem, ScalarLti) {
  const auto h = scalar_lti(6);
  EXPECT_DOUBLE_EQ(h.get(4, 3)(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(h.get(4, 2)(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(h.get(4, 1)(0, 0), 0.25);
  EXPECT_EQ(h.get(4, 4).norm(), 0.0);  // causal
  EXPECT_EQ(h.get(4, -1).norm(), 0.0);
}

TEST(BuildHankel, ScalarLtiTwoByTwo) {
  Matrix expected(2, 2);
  expected << 1, 0.5, 0.5, 0.25;
  EXPECT_LE((build_hankel(scalar_lti(6), 2, 2, 2) - expected).norm(), 1e-15);
}

TEST(BuildHankel, SingleBlock) {
  const auto h = scalar_lti(6);
  EXPECT_EQ(build_hankel(h, 3, 1, 1), h.get(3, 2));
}

TEST(BuildHankel, PreHorizonColumnsZero) {
  const Matrix hk = build_hankel(scalar_lti(6), 1, 2, 2);
  EXPECT_EQ(hk.col(1).norm(), 0.0);
  EXPECT_EQ(hk(0, 0), 1.0);
}

TEST(BuildHankel, WindowPastHorizonThrows) {
  EXPECT_ANY_THROW(build_hankel(scalar_lti(6), 5, 3, 2));
}

TEST(EstimateMarkov, ScalarLtiFromRollouts) {
  const auto model = std::make_shared<dynamics::LinearModel>("lti", std::vector<Matrix>{Matrix::Constant(1, 1, 0.5)},
                                                             std::vector<Matrix>{Matrix::Constant(1, 1, 1.0)});
  const Trajectory nominal = dynamics::rollout(*model, Vector::Zero(1), std::vector<Vector>(8, Vector::Zero(1)));
  const auto h = estimate_markov(collect_rollouts(*model, nominal, full_collect()));
  EXPECT_NEAR(h.get(5, 4)(0, 0), 1.0, 1e-8);
  EXPECT_NEAR(h.get(5, 3)(0, 0), 0.5, 1e-8);
  EXPECT_NEAR(h.get(5, 2)(0, 0), 0.25, 1e-8);
}

TEST(EstimateMarkov, ExactOnLinearTimeVarying) {
  const Plant p = random_plant(1, 3, 2, 25);
  const auto data = collect_rollouts(*p.model, p.nominal, full_collect());
  const auto h = estimate_markov(data);
  double worst = 0.0, causal = 0.0;
  for (std::size_t k = 1; k <= 25; ++k) {
    for (std::size_t j = 0; j < k; ++j) worst = std::max(worst, (h.get(k, j) - oracle::markov(p.a, p.b, p.c, k, j)).cwiseAbs().maxCoeff());
    causal = std::max(causal, h.causal_residual(k));
  }
  EXPECT_LT(worst, 1e-8);
  EXPECT_LT(causal, 1e-6 * h.max_norm());
}

TEST(EstimateMarkov, ZeroOutputsGiveZeroParameters) {
  const auto model = std::make_shared<dynamics::LinearModel>("dead", std::vector<Matrix>{Matrix::Identity(2, 2)},
                                                             std::vector<Matrix>{Matrix::Zero(2, 1)});
  const Trajectory nominal = dynamics::rollout(*model, Vector::Ones(2), std::vector<Vector>(6, Vector::Zero(1)));
  const auto h = estimate_markov(collect_rollouts(*model, nominal, full_collect()));
  EXPECT_EQ(h.max_norm(), 0.0);
}

TEST(CollectRollouts, TooFewExperimentsRejected) {
  const Plant p = random_plant(2, 2, 1, 10);
  CollectConfig cfg = full_collect();
  cfg.experiments = 4;  // fewer than N n_u
  EXPECT_THROW(collect_rollouts(*p.model, p.nominal, cfg), ConfigError);
}

TEST(EstimateMarkov, DeficientInputsNameStep) {
  const Plant p = random_plant(2, 2, 1, 10);
  auto data = collect_rollouts(*p.model, p.nominal, full_collect());
  data.blocks.front().inputs[3].setZero();  // u_3 never excited
  try {
    estimate_markov(data);
    FAIL() << "expected rank-deficiency error";
  } catch (const IdentificationError& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos) << e.what();
  }
}

TEST(EstimateMarkov, MoreExperimentsNeverHurt) {
  const Plant p = random_plant(3, 2, 1, 15);
  auto error = [&](std::size_t m) {
    CollectConfig cfg = full_collect();
    cfg.experiments = m;
    const auto h = estimate_markov(collect_rollouts(*p.model, p.nominal, cfg));
    double e = 0.0;
    for (std::size_t k = 1; k <= 15; ++k)
      for (std::size_t j = 0; j < k; ++j) e = std::max(e, (h.get(k, j) - oracle::markov(p.a, p.b, p.c, k, j)).norm());
    return e;
  };
  const double e20 = error(20), e80 = error(80);
  EXPECT_LE(e80, e20 + 1e-12);
}

TEST(CollectRollouts, SeededAndThreadIndependent) {
  const Plant p = random_plant(4, 3, 1, 20);
  CollectConfig cfg = full_collect(9);
  const auto d1 = collect_rollouts(*p.model, p.nominal, cfg);
  cfg.threads = 3;
  const auto d2 = collect_rollouts(*p.model, p.nominal, cfg);
  ASSERT_EQ(d1.blocks.size(), d2.blocks.size());
  for (std::size_t b = 0; b < d1.blocks.size(); ++b) {
    for (std::size_t k = 0; k < d1.blocks[b].outputs.size(); ++k) EXPECT_EQ(d1.blocks[b].outputs[k], d2.blocks[b].outputs[k]);
  }
  EXPECT_EQ(d1.rollouts(), 20u + 50u);
}

TEST(CollectRollouts, OutputsAreConvolutionOfInputs) {
  const Plant p = random_plant(5, 3, 2, 12);
  const auto data = collect_rollouts(*p.model, p.nominal, full_collect());
  const auto& blk = data.blocks.front();
  for (long m = 0; m < 3; ++m) {
    std::vector<Vector> du;
    for (const auto& in : blk.inputs) du.push_back(in.col(m));
    const auto y = oracle::convolve(p.a, p.b, p.c, du);
    for (std::size_t k = 0; k <= 12; ++k) EXPECT_LE((blk.outputs[k].col(m) - y[k]).norm(), 1e-12);
  }
}

TEST(CollectRollouts, VanishingPerturbationVanishingOutputs) {
  const Plant p = random_plant(6, 2, 1, 8);
  CollectConfig cfg = full_collect();
  cfg.sigma = 1e-200;
  const auto data = collect_rollouts(*p.model, p.nominal, cfg);
  for (const auto& y : data.blocks.front().outputs) EXPECT_LE(y.norm(), 1e-190);
}

TEST(CollectRollouts, WindowedBlocksCoverHorizon) {
  const Plant p = random_plant(7, 3, 1, 40);
  CollectConfig cfg = full_collect();
  cfg.excitation = Excitation::kWindowed;
  cfg.band = 8;
  const auto data = collect_rollouts(*p.model, p.nominal, cfg);
  ASSERT_FALSE(data.blocks.empty());
  EXPECT_EQ(data.blocks.front().start, 0u);
  EXPECT_GE(data.blocks.back().start + data.blocks.back().length, 40u);
  const auto h = estimate_markov(data);
  for (std::size_t k = 8; k <= 40; ++k) {
    for (std::size_t j = k - 8; j < k; ++j) {
      ASSERT_TRUE(h.known(k, static_cast<long>(j)));
      EXPECT_LE((h.get(k, j) - oracle::markov(p.a, p.b, p.c, k, j)).norm(), 1e-8);
    }
  }
}

TEST(EraStep, ScalarRankOneReproducesFirstMarkov) {
  IdentifyConfig cfg;
  cfg.p = 2;
  cfg.q = 2;
  cfg.order = 1;
  const LtvRom rom = identify_ltv(scalar_lti(8), cfg);
  for (std::size_t k = rom.window_lo; k <= rom.window_hi; ++k) EXPECT_NEAR(rom.markov(k, k - 1)(0, 0), 1.0, 1e-10);
}

TEST(EraStep, ZeroHankelThrows) {
  EXPECT_THROW(era_step(Matrix::Zero(4, 4), Matrix::Zero(4, 4), 2, 2, 1), IdentificationError);
}

TEST(EraStep, FlagsRankDeficiency) {
  const auto h = scalar_lti(8);
  const EraStep s = era_step(build_hankel(h, 3, 3, 3), build_hankel(h, 4, 3, 3), 1, 1, 2);
  EXPECT_TRUE(s.rank_deficient);
}

TEST(IdentifyLtv, WindowEndpoints) {
  IdentifyConfig cfg;
  cfg.p = 3;
  cfg.q = 3;
  cfg.order = 1;
  const LtvRom rom = identify_ltv(scalar_lti(12), cfg);
  EXPECT_EQ(rom.window_lo, 1u);
  EXPECT_EQ(rom.window_hi, 12u - 3u);
  EXPECT_EQ(rom.a.size(), 12u);
  EXPECT_EQ(rom.c.size(), 13u);
}

TEST(IdentifyLtv, PartialRealizationIsExactAtTrueOrder) {
  const Plant p = random_plant(8, 3, 2, 30);
  IdentifyConfig cfg;
  cfg.order = 3;
  const LtvRom rom = identify_ltv(markov_from_system(p.a, p.b, p.c), cfg);
  double worst = 0.0;
  for (std::size_t k = 1; k <= rom.window_hi + 1; ++k)
    for (std::size_t j = 0; j < k && j <= rom.window_hi; ++j)
      worst = std::max(worst, (rom.markov(k, j) - oracle::markov(p.a, p.b, p.c, k, j)).norm());
  EXPECT_LT(worst, 1e-8);
  EXPECT_TRUE(rom.warnings.empty());
}

TEST(IdentifyLtv, AutoOrderFindsThreeStates) {
  const Plant p = random_plant(9, 3, 1, 30);
  IdentifyConfig cfg;
  cfg.p = 3;
  cfg.q = 6;
  const LtvRom rom = identify_ltv(collect_rollouts(*p.model, p.nominal, full_collect()), cfg);
  EXPECT_EQ(rom.order, 3u);
  double worst = 0.0;
  for (std::size_t k = 1; k <= rom.window_hi + 1; ++k)
    for (std::size_t j = 0; j < k && j <= rom.window_hi; ++j)
      worst = std::max(worst, (rom.markov(k, j) - oracle::markov(p.a, p.b, p.c, k, j)).norm());
  EXPECT_LT(worst, 1e-6);
}

TEST(IdentifyLtv, OutputCoordinatesPredictWholeHorizon) {
  const Plant p = random_plant(10, 4, 1, 30);
  IdentifyConfig cfg;
  cfg.p = 3;
  cfg.q = 8;
  cfg.order = 4;
  cfg.output_coordinates = true;
  const LtvRom rom = identify_ltv(collect_rollouts(*p.model, p.nominal, full_collect()), cfg);
  for (const auto& c : rom.c) EXPECT_EQ(c, Matrix::Identity(4, 4));
  std::mt19937_64 rng(99);
  std::vector<Vector> u;
  for (int k = 0; k < 30; ++k) u.push_back(oracle::random_matrix(rng, 1, 1));
  const auto predicted = rom.simulate(u);
  const auto truth = oracle::convolve(p.a, p.b, p.c, u);
  for (std::size_t k = 0; k <= 30; ++k) EXPECT_LE((predicted[k] - truth[k]).norm(), 1e-8) << "k=" << k;
}

TEST(IdentifyLtv, DifferentDataSameMarkovParameters) {
  const Plant p = random_plant(11, 3, 2, 20);
  IdentifyConfig cfg;
  cfg.order = 3;
  const LtvRom r1 = identify_ltv(collect_rollouts(*p.model, p.nominal, full_collect(1)), cfg);
  const LtvRom r2 = identify_ltv(collect_rollouts(*p.model, p.nominal, full_collect(2)), cfg);
  for (std::size_t k = 2; k <= r1.window_hi; ++k)
    for (std::size_t j = 0; j < k; ++j) EXPECT_LE((r1.markov(k, j) - r2.markov(k, j)).norm(), 1e-8);
}

TEST(IdentifyLtv, SimulateAgreesWithMarkovProducts) {
  const Plant p = random_plant(12, 2, 1, 16);
  IdentifyConfig cfg;
  cfg.order = 2;
  const LtvRom rom = identify_ltv(markov_from_system(p.a, p.b, p.c), cfg);
  std::vector<Vector> u;
  std::mt19937_64 rng(5);
  for (int k = 0; k < 16; ++k) u.push_back(oracle::random_matrix(rng, 1, 1));
  const auto y = rom.simulate(u);
  for (std::size_t k = 1; k <= 16; ++k) {
    Vector sum = Vector::Zero(2);
    for (std::size_t j = 0; j < k; ++j) sum += rom.markov(k, j) * u[j];
    EXPECT_LE((y[k] - sum).norm(), 1e-10);
  }
}

TEST(IdentifyLtv, OrderAboveHankelRankRejected) {
  IdentifyConfig cfg;
  cfg.p = 2;
  cfg.q = 2;
  cfg.order = 5;
  EXPECT_THROW(identify_ltv(scalar_lti(8), cfg), ConfigError);
}

TEST(Defaults, DepthsAndEnergyOrder) {
  EXPECT_EQ(default_depths(4, 4, 1), std::make_pair(std::size_t{2}, std::size_t{8}));
  EXPECT_EQ(order_for_energy((Vector(3) << 3.0, 1e-3, 1e-4).finished(), 0.9999), 1u);
  EXPECT_EQ(order_for_energy((Vector(3) << 1.0, 1.0, 1.0).finished(), 0.9999), 3u);
  EXPECT_DOUBLE_EQ(default_sigma({Vector::Constant(1, 300.0)}), 3.0);
  EXPECT_DOUBLE_EQ(default_sigma({Vector::Zero(1)}), 1e-3);
}

TEST(LinearizeFd, RecoversLinearModel) {
  const Plant p = random_plant(13, 3, 2, 10);
  const auto lin = linearize_fd(*p.model, p.nominal, 1e-3);
  for (std::size_t k = 0; k < 10; ++k) {
    EXPECT_LE((lin.a[k] - p.a[k]).norm(), 1e-9);
    EXPECT_LE((lin.b[k] - p.b[k]).norm(), 1e-9);
  }
}

TEST(LinearizeFd, SecondOrderInStep) {
  const auto model = dynamics::make_model("cartpole", 0.01);
  const Vector x0 = dynamics::benchmark_task("cartpole").initial_state;
  const Trajectory nominal = dynamics::rollout(*model, x0, std::vector<Vector>(5, Vector::Constant(1, 3.0)));
  const auto j1 = linearize_fd(*model, nominal, 0.04).a[4];
  const auto j2 = linearize_fd(*model, nominal, 0.02).a[4];
  const auto j3 = linearize_fd(*model, nominal, 0.01).a[4];
  const double ratio = (j1 - j2).norm() / (j2 - j3).norm();
  EXPECT_GT(ratio, 3.0);
  EXPECT_LT(ratio, 5.0);
}

// Falling cart-pole about a fixed open-loop input, identified the way the
// pipeline does it.
struct CartPoleId {
  std::shared_ptr<const dynamics::SimModel> model = dynamics::make_model("cartpole", 0.01);
  Trajectory nominal;
  LtvRom rom;
  double sigma = 1e-5;

  CartPoleId() {
    std::vector<Vector> u;
    for (int k = 0; k < 120; ++k) u.push_back(Vector::Constant(1, 2.0 * std::sin(0.05 * k)));
    nominal = dynamics::rollout(*model, dynamics::benchmark_task("cartpole").initial_state, u);
    CollectConfig collect;
    collect.excitation = Excitation::kWindowed;
    collect.sigma = sigma;
    collect.band = 8 + 30 - 1;
    collect.seed = 17;
    IdentifyConfig id;
    id.p = 8;
    id.q = 30;
    id.order = 4;
    id.output_coordinates = true;
    rom = identify_ltv(collect_rollouts(*model, nominal, collect), id);
  }
};

TEST(CartPoleIdentification, HeldOutResponseWithinFivePercent) {
  const CartPoleId id;
  std::mt19937_64 rng(1234);
  std::normal_distribution<double> g(0.0, id.sigma);
  std::vector<Vector> du, u = id.nominal.controls;
  for (auto& uk : u) {
    du.push_back(Vector::Constant(1, g(rng)));
    uk += du.back();
  }
  const Trajectory perturbed = dynamics::rollout(*id.model, id.nominal.states[0], u);
  const auto predicted = id.rom.simulate(du);
  double err = 0.0, ref = 0.0;
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    const Vector truth = perturbed.states[k] - id.nominal.states[k];
    err += (predicted[k] - truth).squaredNorm();
    ref += truth.squaredNorm();
  }
  EXPECT_LT(std::sqrt(err / ref), 0.05);
}

TEST(CartPoleIdentification, MarkovMatchesLinearization) {
  const CartPoleId id;
  const auto lin = linearize_fd(*id.model, id.nominal, 1e-6);
  const std::vector<Matrix> eye(121, Matrix::Identity(4, 4));
  double worst = 0.0;
  for (std::size_t k = 10; k <= id.rom.window_hi; ++k) {
    double err = 0.0, ref = 0.0;
    for (std::size_t j = k - 10; j < k; ++j) {
      const Matrix truth = oracle::markov(lin.a, lin.b, eye, k, j);
      err += (id.rom.markov(k, j) - truth).squaredNorm();
      ref += truth.squaredNorm();
    }
    worst = std::max(worst, std::sqrt(err / ref));
  }
  EXPECT_LT(worst, 0.01);
}

TEST(SingularValuesCsv, Header) {
  IdentifyConfig cfg;
  cfg.p = 2;
  cfg.q = 2;
  cfg.order = 1;
  std::ostringstream out;
  write_singular_values_csv(out, identify_ltv(scalar_lti(6), cfg));
  EXPECT_EQ(out.str().rfind("k,sigma_1,sigma_2\n", 0), 0u) << out.str();
}

}  // namespace
}  // namespace d2c::sysid
