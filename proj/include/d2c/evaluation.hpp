#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "d2c/feedback.hpp"

namespace d2c::evaluation {

/// Process noise w ~ N(0, cov) applied as u + scale * w.
struct NoiseSetting {
  double nsr = 0.0;
  double scale = 0.0;
  Matrix cov;  // empty = identity
  std::uint64_t seed = 0;
};

/// scale = nsr * RMS(nominal controls), cov = I.
NoiseSetting nsr_to_noise(double nsr, const std::vector<Vector>& controls, std::uint64_t seed = 0);

double rms(const std::vector<Vector>& seq);

struct RunResult {
  Trajectory trajectory;
  double cost = 0.0;
  double max_deviation = 0.0;   // max_k ||x_k - xbar_k||
  double terminal_error = 0.0;  // ||x_N - target||
};

/// One execution of the closed loop: measure, Kalman update, apply
/// u = ubar - L a-hat, step with noise, predict. The noise stream is
/// make_rng(noise.seed, run_index).
RunResult run_closed_loop(const dynamics::SimModel& model, const feedback::FeedbackPolicy& policy,
                          const NoiseSetting& noise, std::uint64_t run_index = 0);

/// Same loop with every feedback gain forced to zero.
RunResult run_open_loop_only(const dynamics::SimModel& model, const feedback::FeedbackPolicy& policy,
                             const NoiseSetting& noise, std::uint64_t run_index = 0);

struct RunRecord {
  std::uint64_t index = 0;
  bool failed = false;
  double cost = 0.0;
  double max_deviation = 0.0;
  double terminal_error = 0.0;
};

struct NsrStats {
  double nsr = 0.0;
  double noise_std = 0.0;
  std::vector<RunRecord> runs;

  // Recomputed from runs by summarize().
  std::size_t n_runs = 0;
  std::size_t failures = 0;
  double mean_cost = 0.0;
  double std_cost = 0.0;
  double success_rate = 0.0;
  double mean_max_deviation = 0.0;

  /// Statistics over the non-failed runs; success means terminal error below
  /// the threshold.
  void summarize(double success_threshold);
  double standard_error() const;
};

struct MonteCarloConfig {
  std::vector<double> nsr_grid{0.0};
  std::size_t runs = 100;
  std::uint64_t seed = 0;
  std::uint64_t first_run = 0;  // lets independent batches be pooled
  double success_threshold = 0.1;
  bool feedback = true;
  std::size_t threads = 1;
};

struct MonteCarloReport {
  bool feedback = true;
  double success_threshold = 0.1;
  std::vector<NsrStats> stats;

  /// Appends another batch's runs grid point by grid point and recomputes
  /// the statistics.
  void merge(const MonteCarloReport& other);
};

/// Run i at every grid point uses stream (seed, first_run + i), so grid
/// points share noise shapes and batches are schedule independent.
/// Individual numerical failures are recorded, not thrown.
MonteCarloReport monte_carlo(const dynamics::SimModel& model, const feedback::FeedbackPolicy& policy,
                             const MonteCarloConfig& config);

struct TailPoint {
  double epsilon = 0.0;
  std::size_t exceedances = 0;
  std::size_t runs = 0;
  double probability = 0.0;
  bool censored = false;  // no exceedances; probability < 1 / runs
};

struct TailEstimate {
  double threshold = 0.0;
  std::vector<TailPoint> points;
  // log p = log(alpha) - beta / eps^2 over uncensored points
  double alpha = 0.0;
  double beta = 0.0;
  double r_squared = 0.0;
  std::size_t fitted_points = 0;
};

/// Exceedance frequencies of max_k ||x_k - xbar_k|| > threshold under noise
/// scale epsilon (cov I), with the policy's feedback, and the log-linear fit
/// in 1 / eps^2.
TailEstimate deviation_tail(const dynamics::SimModel& model, const feedback::FeedbackPolicy& policy,
                            const std::vector<double>& epsilons, double threshold, std::size_t runs,
                            std::uint64_t seed, std::size_t threads = 1);

struct RankingPoint {
  double epsilon = 0.0;
  std::size_t runs = 0;
  double preserved = 0.0;  // fraction with cost1 < cost2, ties count 1/2
  double mean_cost1 = 0.0;
  double mean_cost2 = 0.0;
};

struct RankingReport {
  double nominal_cost1 = 0.0;
  double nominal_cost2 = 0.0;
  std::vector<RankingPoint> points;
};

/// Paired closed-loop runs of two policies under the same cost. Run i uses
/// streams (seed, 2i) and (seed, 2i + 1) for the two policies.
RankingReport ranking_check(const dynamics::SimModel& model, const openloop::CostSpec& cost,
                            const feedback::FeedbackPolicy& policy1, const feedback::FeedbackPolicy& policy2,
                            const std::vector<double>& epsilons, std::size_t runs, std::uint64_t seed,
                            std::size_t threads = 1);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares y = intercept + slope x.
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

/// nsr,noise_std,runs,failures,mean_cost,std_cost,success_rate,mean_max_deviation
void write_report_csv(std::ostream& out, const MonteCarloReport& report);
/// epsilon,runs,exceedances,probability,censored
void write_tail_csv(std::ostream& out, const TailEstimate& tail);
/// epsilon,runs,preserved,mean_cost1,mean_cost2
void write_ranking_csv(std::ostream& out, const RankingReport& report);

}  // namespace d2c::evaluation
