#include "d2c/feedback.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "d2c/textio.hpp"

namespace d2c::feedback {
namespace {

void check_psd(const Matrix& p, std::size_t k, const char* what) {
  const double floor = -1e-10 * std::max(1.0, p.cwiseAbs().maxCoeff());
  if (numerics::min_symmetric_eigenvalue(p) < floor) {
    throw DesignError(std::string(what) + " at step " + std::to_string(k) + " is not positive semi-definite");
  }
}

const Matrix& at_or_last(const std::vector<Matrix>& seq, std::size_t k) { return seq[std::min(k, seq.size() - 1)]; }

}  // namespace

std::vector<RowVector> costate_recursion(const std::vector<RowVector>& cost_gradients,
                                         const std::vector<Matrix>& a, const RowVector& terminal) {
  const std::size_t n = a.size();
  if (cost_gradients.size() != n) throw ConfigError("costate_recursion: need one cost gradient per step");
  std::vector<RowVector> g(n + 1);
  g[n] = terminal;
  for (std::size_t k = n; k-- > 0;) {
    if (a[k].rows() != terminal.size() || a[k].cols() != terminal.size() || cost_gradients[k].size() != terminal.size()) {
      throw ConfigError("costate_recursion: dimension mismatch at step " + std::to_string(k));
    }
    g[k] = cost_gradients[k] + g[k + 1] * a[k];
  }
  return g;
}

StationarityReport check_stationarity(const Trajectory& nominal, const openloop::CostSpec& cost,
                                      const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
  nominal.validate();
  const std::size_t n = nominal.horizon();
  if (a.size() != n || b.size() != n) throw ConfigError("check_stationarity: need one Jacobian pair per step");
  std::vector<RowVector> grads(n);
  for (std::size_t k = 0; k < n; ++k) grads[k] = cost.stage_gradient(nominal.states[k]);
  StationarityReport rep;
  rep.costates = costate_recursion(grads, a, cost.terminal_gradient(nominal.states.back()));
  rep.residuals.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Vector ru = cost.control_weight * nominal.controls[k];
    rep.residuals[k] = (ru + (rep.costates[k + 1] * b[k]).transpose()).norm();
    rep.max_residual = std::max(rep.max_residual, rep.residuals[k]);
    rep.max_control_term = std::max(rep.max_control_term, ru.norm());
  }
  return rep;
}

RiccatiSolution riccati_theorem1(const std::vector<Matrix>& a, const std::vector<Matrix>& b,
                                 const std::vector<Matrix>& l_xx, const std::vector<Matrix>& r,
                                 const std::vector<Matrix>& curvature, const Matrix& p_terminal,
                                 GainConvention convention) {
  const std::size_t n = a.size();
  if (b.size() != n || l_xx.empty() || r.empty()) throw ConfigError("riccati_theorem1: inconsistent sequences");
  if (!curvature.empty() && curvature.size() != n) throw ConfigError("riccati_theorem1: need one curvature per step");
  RiccatiSolution sol;
  sol.p.resize(n + 1);
  sol.k.resize(n);
  sol.s.resize(n);
  sol.p[n] = numerics::symmetrize(p_terminal);
  check_psd(sol.p[n], n, "terminal weight");
  const double gain_scale = convention == GainConvention::kVerbatim ? 2.0 : 1.0;
  for (std::size_t k = n; k-- > 0;) {
    const Matrix& pk1 = sol.p[k + 1];
    const Matrix& rk = at_or_last(r, k);
    Matrix s = numerics::symmetrize(0.5 * rk + b[k].transpose() * pk1 * b[k]);
    Eigen::LLT<Matrix> llt(s);
    if (llt.info() != Eigen::Success) {
      throw DesignError("S_k is not positive definite at step " + std::to_string(k));
    }
    Matrix gain = -gain_scale * llt.solve(b[k].transpose() * pk1 * a[k]);
    const Matrix closed = a[k] + b[k] * gain;
    Matrix p = at_or_last(l_xx, k) + 0.5 * gain.transpose() * rk * gain + closed.transpose() * pk1 * closed;
    if (!curvature.empty()) p += curvature[k];
    sol.p[k] = numerics::symmetrize(p);
    sol.k[k] = std::move(gain);
    sol.s[k] = std::move(s);
  }
  return sol;
}

LqrSolution lqr_tv(const std::vector<Matrix>& a, const std::vector<Matrix>& b, const std::vector<Matrix>& q,
                   const std::vector<Matrix>& r, const Matrix& q_terminal) {
  const std::size_t n = a.size();
  if (b.size() != n || q.empty() || r.empty()) throw ConfigError("lqr_tv: inconsistent sequences");
  LqrSolution sol;
  sol.gains.resize(n);
  sol.p.resize(n + 1);
  sol.p[n] = numerics::symmetrize(q_terminal);
  check_psd(sol.p[n], n, "terminal weight");
  for (std::size_t k = n; k-- > 0;) {
    const Matrix& pk1 = sol.p[k + 1];
    const Matrix inner = numerics::symmetrize(at_or_last(r, k) + b[k].transpose() * pk1 * b[k]);
    Eigen::LLT<Matrix> llt(inner);
    if (llt.info() != Eigen::Success) {
      throw DesignError("R + B'PB is not positive definite at step " + std::to_string(k));
    }
    sol.gains[k] = llt.solve(b[k].transpose() * pk1 * a[k]);
    sol.p[k] = numerics::symmetrize(at_or_last(q, k) + a[k].transpose() * pk1 * (a[k] - b[k] * sol.gains[k]));
    check_psd(sol.p[k], k, "value matrix");
  }
  return sol;
}

KalmanSolution kalman_gains(const std::vector<Matrix>& a, const std::vector<Matrix>& b, const std::vector<Matrix>& c,
                            const Matrix& w, const Matrix& v, const Matrix& p0) {
  const std::size_t n = a.size();
  if (b.size() != n || c.size() != n + 1) throw ConfigError("kalman_gains: expected N A/B and N + 1 C matrices");
  KalmanSolution sol;
  sol.gains.resize(n + 1);
  sol.predicted.resize(n + 1);
  sol.filtered.resize(n + 1);
  Matrix p = numerics::symmetrize(p0);
  for (std::size_t k = 0; k <= n; ++k) {
    sol.predicted[k] = p;
    const Matrix innov = numerics::symmetrize(c[k] * p * c[k].transpose() + v);
    Eigen::LDLT<Matrix> ldlt(innov);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        (ldlt.vectorD().array().abs() <= 1e-300).any()) {
      throw FilterError("innovation covariance is singular at step " + std::to_string(k));
    }
    const Matrix gain = ldlt.solve(c[k] * p).transpose();
    const Matrix ikc = Matrix::Identity(p.rows(), p.cols()) - gain * c[k];
    const Matrix filtered = numerics::symmetrize(ikc * p * ikc.transpose() + gain * v * gain.transpose());
    sol.gains[k] = gain;
    sol.filtered[k] = filtered;
    if (k < n) p = numerics::symmetrize(a[k] * filtered * a[k].transpose() + b[k] * w * b[k].transpose());
  }
  return sol;
}

void FeedbackPolicy::validate() const {
  nominal.validate();
  rom.validate();
  const std::size_t n = horizon();
  if (rom.horizon != n) throw DesignError("policy ROM horizon does not match the nominal");
  if (lqr_gains.size() != n || kalman_gains.size() != n + 1 || covariances.size() != n + 1) {
    throw DesignError("policy gain sequences do not match the horizon");
  }
  const auto nr = static_cast<Eigen::Index>(rom.order);
  const auto ny = static_cast<Eigen::Index>(rom.output_dim);
  const auto nu = static_cast<Eigen::Index>(rom.input_dim);
  if (nominal.states.front().size() != ny || nominal.controls.front().size() != nu) {
    throw DesignError("policy ROM dimensions do not match the nominal");
  }
  cost.validate(rom.output_dim, rom.input_dim);
  for (std::size_t k = 0; k <= n; ++k) {
    if (k < n && (lqr_gains[k].rows() != nu || lqr_gains[k].cols() != nr || !lqr_gains[k].allFinite())) {
      throw DesignError("LQR gain at step " + std::to_string(k) + " is invalid");
    }
    if (kalman_gains[k].rows() != nr || kalman_gains[k].cols() != ny || !kalman_gains[k].allFinite()) {
      throw DesignError("Kalman gain at step " + std::to_string(k) + " is invalid");
    }
    if (covariances[k].rows() != nr || covariances[k].cols() != nr) {
      throw DesignError("covariance at step " + std::to_string(k) + " has the wrong shape");
    }
  }
}

FeedbackPolicy build_policy(const Trajectory& nominal, const sysid::LtvRom& rom, const openloop::CostSpec& cost,
                            const FeedbackConfig& config) {
  nominal.validate();
  rom.validate();
  const std::size_t n = nominal.horizon();
  if (rom.horizon != n) {
    throw DesignError("ROM horizon " + std::to_string(rom.horizon) + " does not match nominal horizon " +
                      std::to_string(n));
  }
  if (static_cast<std::size_t>(nominal.states.front().size()) != rom.output_dim ||
      static_cast<std::size_t>(nominal.controls.front().size()) != rom.input_dim) {
    throw DesignError("ROM dimensions do not match the nominal");
  }
  if (!(config.measurement_std > 0.0)) throw ConfigError("measurement noise std must be positive");
  if (!(config.initial_covariance >= 0.0)) throw ConfigError("initial covariance must be non-negative");
  if (!(config.process_noise_std >= 0.0)) throw ConfigError("process noise std must be non-negative");
  cost.validate(rom.output_dim, rom.input_dim);

  std::vector<Matrix> q(n);
  for (std::size_t k = 0; k < n; ++k) q[k] = rom.c[k].transpose() * cost.state_weight * rom.c[k];
  const Matrix q_terminal = rom.c[n].transpose() * cost.terminal_weight * rom.c[n];
  const LqrSolution lqr = lqr_tv(rom.a, rom.b, q, {0.5 * cost.control_weight}, q_terminal);

  const auto nr = static_cast<Eigen::Index>(rom.order);
  const auto ny = static_cast<Eigen::Index>(rom.output_dim);
  const auto nu = static_cast<Eigen::Index>(rom.input_dim);
  const Matrix w = config.process_noise_std * config.process_noise_std * Matrix::Identity(nu, nu);
  const Matrix v = config.measurement_std * config.measurement_std * Matrix::Identity(ny, ny);
  const Matrix p0 = config.initial_covariance * Matrix::Identity(nr, nr);
  const KalmanSolution kf = kalman_gains(rom.a, rom.b, rom.c, w, v, p0);

  FeedbackPolicy policy;
  policy.nominal = nominal;
  policy.cost = cost;
  policy.rom = rom;
  policy.lqr_gains = lqr.gains;
  policy.kalman_gains = kf.gains;
  policy.covariances = kf.predicted;
  policy.config = config;
  return policy;
}

void write_gains_csv(std::ostream& out, const FeedbackPolicy& policy) {
  const std::size_t n = policy.horizon();
  const auto& l0 = policy.lqr_gains.front();
  const auto& k0 = policy.kalman_gains.front();
  out << "k";
  for (Eigen::Index i = 0; i < l0.rows(); ++i) {
    for (Eigen::Index j = 0; j < l0.cols(); ++j) out << ",L_" << i << '_' << j;
  }
  for (Eigen::Index i = 0; i < k0.rows(); ++i) {
    for (Eigen::Index j = 0; j < k0.cols(); ++j) out << ",K_" << i << '_' << j;
  }
  out << '\n';
  for (std::size_t k = 0; k <= n; ++k) {
    out << k;
    for (Eigen::Index i = 0; i < l0.rows(); ++i) {
      for (Eigen::Index j = 0; j < l0.cols(); ++j) {
        out << ',' << (k < n ? textio::format_double(policy.lqr_gains[k](i, j)) : "");
      }
    }
    const Matrix& kk = policy.kalman_gains[k];
    for (Eigen::Index i = 0; i < kk.rows(); ++i) {
      for (Eigen::Index j = 0; j < kk.cols(); ++j) out << ',' << textio::format_double(kk(i, j));
    }
    out << '\n';
  }
}

}  // namespace d2c::feedback
