#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "d2c/dynamics.hpp"
#include "d2c/openloop.hpp"
#include "d2c/sysid.hpp"

namespace d2c::feedback {

/// G_k = L_k + G_{k+1} A_k for k = N-1 .. 0, starting from G_N. Returns
/// N + 1 row vectors.
std::vector<RowVector> costate_recursion(const std::vector<RowVector>& cost_gradients,
                                         const std::vector<Matrix>& a, const RowVector& terminal);

struct StationarityReport {
  std::vector<double> residuals;  // ||R u_k + (G_{k+1} B_k)'|| per step
  double max_residual = 0.0;
  double max_control_term = 0.0;  // max_k ||R u_k||
  std::vector<RowVector> costates;
};

/// First-order optimality residuals of a nominal under the given Jacobians.
StationarityReport check_stationarity(const Trajectory& nominal, const openloop::CostSpec& cost,
                                      const std::vector<Matrix>& a, const std::vector<Matrix>& b);

enum class GainConvention {
  kDerived,   // K = -S^-1 B' P A
  kVerbatim,  // K = -S^-1 (2 B' P A)
};

struct RiccatiSolution {
  std::vector<Matrix> p;  // N + 1
  std::vector<Matrix> k;  // N, delta u = K delta x
  std::vector<Matrix> s;  // N
};

/// Backward recursion with S_k = R_k / 2 + B_k' P_{k+1} B_k and
/// P_k = L_kk + K' R K / 2 + (A + B K)' P_{k+1} (A + B K) + curvature_k.
/// curvature_k is sum_i G_{k+1,i} Hess f_i (empty = zero). Throws
/// DesignError when S_k is not positive definite.
RiccatiSolution riccati_theorem1(const std::vector<Matrix>& a, const std::vector<Matrix>& b,
                                 const std::vector<Matrix>& l_xx, const std::vector<Matrix>& r,
                                 const std::vector<Matrix>& curvature, const Matrix& p_terminal,
                                 GainConvention convention = GainConvention::kDerived);

struct LqrSolution {
  std::vector<Matrix> gains;  // N, delta u = -L delta x
  std::vector<Matrix> p;      // N + 1
};

/// Standard time-varying LQR: L_k = (R + B'PB)^-1 B'PA, P_k = Q + A'P(A - B L).
/// q and r hold one matrix per step. Throws DesignError on a non-PD inner
/// matrix or an indefinite value matrix.
LqrSolution lqr_tv(const std::vector<Matrix>& a, const std::vector<Matrix>& b, const std::vector<Matrix>& q,
                   const std::vector<Matrix>& r, const Matrix& q_terminal);

struct KalmanSolution {
  std::vector<Matrix> gains;      // N + 1, n x n_y
  std::vector<Matrix> predicted;  // N + 1, P_{k|k-1}
  std::vector<Matrix> filtered;   // N + 1, P_{k|k}
};

/// Forward Kalman recursion for a_{k+1} = A a + B (u + w), y = C a + v with
/// w ~ N(0, W), v ~ N(0, V), and P_{0|-1} = P0. Joseph-form update. c has
/// N + 1 entries. Throws FilterError when C P C' + V is singular.
KalmanSolution kalman_gains(const std::vector<Matrix>& a, const std::vector<Matrix>& b, const std::vector<Matrix>& c,
                            const Matrix& w, const Matrix& v, const Matrix& p0);

struct FeedbackConfig {
  double measurement_std = 1e-4;     // V = std^2 I
  double initial_covariance = 1e-2;  // P0 = value I
  double process_noise_std = 0.1;    // design W = std^2 I on the control channel
};

struct FeedbackPolicy {
  Trajectory nominal;
  openloop::CostSpec cost;
  sysid::LtvRom rom;
  std::vector<Matrix> lqr_gains;     // N, n_u x n_r
  std::vector<Matrix> kalman_gains;  // N + 1, n_r x n_y
  std::vector<Matrix> covariances;   // N + 1, predicted
  FeedbackConfig config;

  std::size_t horizon() const { return nominal.horizon(); }
  void validate() const;
};

/// LQR on the ROM with Q_k = C_k' Q C_k, R_fb = R / 2 and terminal C_N' Q_N C_N,
/// plus the Kalman gains of the ROM.
FeedbackPolicy build_policy(const Trajectory& nominal, const sysid::LtvRom& rom, const openloop::CostSpec& cost,
                            const FeedbackConfig& config);

/// k,L_k entries...,K_k entries... (row-major).
void write_gains_csv(std::ostream& out, const FeedbackPolicy& policy);

}  // namespace d2c::feedback
