#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "d2c/dynamics.hpp"
#include "d2c/errors.hpp"

namespace d2c::sysid {

/// How input perturbations are spread over the horizon.
enum class Excitation {
  kFull,      // one shared batch, inputs excited at every step
  kWindowed,  // short batches, each exciting a window of steps
};

std::string to_string(Excitation e);
Excitation excitation_from_string(const std::string& s);

/// One batch of perturbed rollouts. Inputs are excited on
/// [start, start + length) and zero elsewhere; outputs are recorded for
/// k in [start, start + length].
struct ExcitationBlock {
  std::size_t start = 0;
  std::size_t length = 0;
  std::vector<Matrix> inputs;   // length entries, n_u x M
  std::vector<Matrix> outputs;  // length + 1 entries, n_y x M

  std::size_t experiments() const { return inputs.empty() ? 0 : static_cast<std::size_t>(inputs.front().cols()); }
};

struct RolloutDataset {
  std::size_t horizon = 0;
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  double sigma = 0.0;
  std::size_t band = 0;  // lags guaranteed identifiable at every step (0 = all)
  std::vector<ExcitationBlock> blocks;

  /// Total perturbed rollouts, one per experiment in every block.
  std::size_t rollouts() const;
};

struct CollectConfig {
  Excitation excitation = Excitation::kFull;
  std::size_t experiments = 0;  // full mode: M; 0 = N n_u + margin
  std::size_t margin = 50;
  double sigma = 0.0;          // 0 = 0.01 RMS(u), floored at 1e-3
  std::size_t band = 0;        // windowed mode: lags per output (p + q - 1)
  std::size_t stride = 0;      // windowed mode: block spacing, 0 = band
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

/// Default perturbation scale: 0.01 RMS of the nominal controls, at least 1e-3.
double default_sigma(const std::vector<Vector>& controls);

/// Noise-free rollouts about the nominal with i.i.d. Gaussian input
/// perturbations. Outputs are full-state deviations from the nominal.
RolloutDataset collect_rollouts(const dynamics::SimModel& model, const Trajectory& nominal,
                                const CollectConfig& config);

/// Generalised Markov parameters h_{k,j} (input time j, output time k).
/// Blocks that the data did not determine are flagged unknown.
class MarkovParamSet {
 public:
  MarkovParamSet() = default;
  MarkovParamSet(std::size_t horizon, std::size_t output_dim, std::size_t input_dim);

  std::size_t horizon() const { return horizon_; }
  std::size_t output_dim() const { return output_dim_; }
  std::size_t input_dim() const { return input_dim_; }

  /// Zero for j >= k (causality) and for j < 0; throws IdentificationError
  /// when the block is unknown.
  Matrix get(std::size_t k, long j) const;
  bool known(std::size_t k, long j) const;
  void set(std::size_t k, std::size_t j, const Matrix& value);
  /// Marks h_{k,j} for j < first as unknown and resets the rest to zero.
  void set_first_known(std::size_t k, std::size_t first);
  /// Earliest input index determined for output k.
  std::size_t first_known(std::size_t k) const { return first_known_[k]; }

  /// Norm of the estimated coefficient of delta u_k in the regression for
  /// output k; ideally zero.
  double causal_residual(std::size_t k) const { return causal_residual_[k]; }
  void set_causal_residual(std::size_t k, double v) { causal_residual_[k] = v; }
  double max_norm() const;

 private:
  std::size_t horizon_ = 0;
  std::size_t output_dim_ = 0;
  std::size_t input_dim_ = 0;
  std::vector<std::vector<Matrix>> h_;  // h_[k][j - first_known_[k]]
  std::vector<std::size_t> first_known_;
  std::vector<double> causal_residual_;
};

/// Markov parameters of a known LTV system, h_{k,j} = C_k A_{k-1} ... A_{j+1} B_j.
/// a and b have N entries, c has N + 1.
MarkovParamSet markov_from_system(const std::vector<Matrix>& a, const std::vector<Matrix>& b,
                                  const std::vector<Matrix>& c);

/// Solves one least-squares problem per output step. Throws
/// IdentificationError naming the step when the stacked inputs are rank
/// deficient.
MarkovParamSet estimate_markov(const RolloutDataset& data, double tol = 1e-10);

/// (p n_y) x (q n_u) block matrix with block (i, l) = h_{k+i, k-1-l}.
Matrix build_hankel(const MarkovParamSet& h, std::size_t k, std::size_t p, std::size_t q);

struct EraStep {
  Matrix a;  // n_r x n_r
  Matrix b;  // n_r x n_u
  Matrix c;  // n_y x n_r
  Vector singular_values;  // of H_k, retained part
  bool rank_deficient = false;
};

/// Time-varying ERA from H_k and H_{k+1}. Singular values below
/// rank_tol * sigma_1 are treated as zero; if sigma_{n_r} falls below that
/// level rank_deficient is set. Zero Hankels throw IdentificationError.
EraStep era_step(const Matrix& hk, const Matrix& hk1, std::size_t output_dim, std::size_t input_dim,
                 std::size_t order, double rank_tol = 1e-8);

/// Reduced-order LTV model. a, b have N entries and c has N + 1; entries
/// outside the identified range repeat the nearest identified one.
struct LtvRom {
  std::size_t horizon = 0;
  std::size_t order = 0;
  std::size_t output_dim = 0;
  std::size_t input_dim = 0;
  std::size_t window_lo = 0;
  std::size_t window_hi = 0;
  std::vector<Matrix> a;
  std::vector<Matrix> b;
  std::vector<Matrix> c;
  std::vector<Vector> singular_values;  // full spectrum of H_k for k in the window
  std::vector<std::size_t> warnings;    // steps (k n_u >= n_r) where sigma_{n_r} fell below tolerance

  /// C_k A_{k-1} ... A_{j+1} B_j.
  Matrix markov(std::size_t k, std::size_t j) const;
  /// Output deviations for an input deviation sequence, delta a_0 = 0.
  std::vector<Vector> simulate(const std::vector<Vector>& inputs) const;
  void validate() const;
};

struct IdentifyConfig {
  std::size_t p = 0;                 // 0 = default
  std::size_t q = 0;                 // 0 = default
  std::optional<std::size_t> order;  // empty = auto
  double energy = 0.9999;            // auto order: captured singular-value energy
  double rank_tol = 1e-8;
  double lstsq_tol = 1e-10;
  /// When n_r equals n_y, re-express each step in output coordinates
  /// (delta a_k = C_k-hat delta a_k-hat), so C becomes the identity and the
  /// nearest-neighbour extension outside the window joins matching bases.
  /// Steps after the window are then fitted from single Markov block rows.
  bool output_coordinates = false;
  std::size_t threads = 1;
};

/// Default Hankel depths: max(ceil(2 n_x / n_y), 2) block rows and
/// max(ceil(2 n_x / n_u), 2) block columns, widened so that (p - 1) n_y and
/// q n_u both reach the expected order n_x.
std::pair<std::size_t, std::size_t> default_depths(std::size_t state_dim, std::size_t output_dim,
                                                   std::size_t input_dim);

/// Smallest order whose leading singular values carry `energy` of the total
/// squared energy.
std::size_t order_for_energy(const Vector& singular_values, double energy);

/// Markov estimation followed by one ERA step per k in [1, N - p].
LtvRom identify_ltv(const MarkovParamSet& markov, const IdentifyConfig& config);
LtvRom identify_ltv(const RolloutDataset& data, const IdentifyConfig& config);

/// Central-difference Jacobians of the step map along a trajectory.
struct Linearization {
  std::vector<Matrix> a;
  std::vector<Matrix> b;
};
Linearization linearize_fd(const dynamics::SimModel& model, const Trajectory& nominal, double h,
                           std::size_t threads = 1);

/// Hessian in x of w_k' step(k, x, u_k) at each nominal point, by second
/// differences. w has N entries (one per step).
std::vector<Matrix> weighted_hessian_fd(const dynamics::SimModel& model, const Trajectory& nominal,
                                        const std::vector<Vector>& w, double h, std::size_t threads = 1);

/// k,sigma_1,...  one row per identified step.
void write_singular_values_csv(std::ostream& out, const LtvRom& rom);

}  // namespace d2c::sysid
