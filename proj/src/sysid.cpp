#include "d2c/sysid.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "d2c/parallel.hpp"
#include "d2c/random.hpp"
#include "d2c/textio.hpp"

namespace d2c::sysid {
namespace {

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

// Block covering output step t: the latest block that still excites the
// `band` inputs preceding t, or the first block that reaches t.
const ExcitationBlock& block_for(const RolloutDataset& data, std::size_t t) {
  const ExcitationBlock* best = nullptr;
  const std::size_t limit = (data.band == 0 || t < data.band) ? 0 : t - data.band;
  for (const auto& b : data.blocks) {
    if (b.start > limit || t > b.start + b.length) continue;
    if (best == nullptr || b.start > best->start) best = &b;
  }
  if (best == nullptr) {
    throw IdentificationError("no excitation block covers step " + std::to_string(t));
  }
  return *best;
}

// Observability and controllability factors of one Hankel matrix.
struct HankelFactors {
  Matrix obs;   // (p n_y) x n_r
  Matrix ctrl;  // n_r x (q n_u)
  Vector spectrum;
  bool rank_deficient = false;
};

HankelFactors factor_hankel(const Matrix& h, std::size_t order, double rank_tol) {
  const auto sv = numerics::svd(h);
  if (order == 0 || order > static_cast<std::size_t>(sv.singular_values.size())) {
    throw ConfigError("ERA order " + std::to_string(order) + " exceeds Hankel rank bound " +
                      std::to_string(sv.singular_values.size()));
  }
  const double top = sv.singular_values(0);
  if (!(top > 0.0)) throw IdentificationError("Hankel matrix is zero");
  const double floor = rank_tol * top;
  Vector roots = sv.singular_values.head(idx(order));
  HankelFactors f;
  f.rank_deficient = roots(idx(order) - 1) < floor;
  for (Eigen::Index i = 0; i < roots.size(); ++i) roots(i) = roots(i) < floor ? 0.0 : std::sqrt(roots(i));
  f.obs = sv.left.leftCols(idx(order)) * roots.asDiagonal();
  f.ctrl = roots.asDiagonal() * sv.right.leftCols(idx(order)).transpose();
  f.spectrum = sv.singular_values;
  return f;
}

// A_k = pinv(first (p-1) n_y rows of O_{k+1}) * (last (p-1) n_y rows of O_k).
Matrix shift_matrix(const Matrix& obs_k, const Matrix& obs_k1, std::size_t output_dim) {
  const Eigen::Index rows = obs_k.rows() - idx(output_dim);
  return numerics::pinv(obs_k1.topRows(rows)) * obs_k.bottomRows(rows);
}

}  // namespace

std::string to_string(Excitation e) { return e == Excitation::kWindowed ? "windowed" : "full"; }

Excitation excitation_from_string(const std::string& s) {
  if (s == "full") return Excitation::kFull;
  if (s == "windowed") return Excitation::kWindowed;
  throw ConfigError("unknown excitation mode '" + s + "'");
}

std::size_t RolloutDataset::rollouts() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.experiments();
  return n;
}

double default_sigma(const std::vector<Vector>& controls) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& u : controls) {
    sum += u.squaredNorm();
    count += static_cast<std::size_t>(u.size());
  }
  const double rms = count == 0 ? 0.0 : std::sqrt(sum / static_cast<double>(count));
  return std::max(0.01 * rms, 1e-3);
}

RolloutDataset collect_rollouts(const dynamics::SimModel& model, const Trajectory& nominal,
                                const CollectConfig& config) {
  nominal.validate();
  const std::size_t n = nominal.horizon();
  const std::size_t nu = model.control_dim();
  const std::size_t ny = model.state_dim();
  if (n == 0) throw ConfigError("collect_rollouts: empty nominal");
  if (nominal.states.front().size() != idx(ny) || nominal.controls.front().size() != idx(nu)) {
    throw ConfigError("collect_rollouts: nominal dimensions do not match the model");
  }
  const double sigma = config.sigma > 0.0 ? config.sigma : default_sigma(nominal.controls);
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("perturbation scale must be positive");

  RolloutDataset data;
  data.horizon = n;
  data.input_dim = nu;
  data.output_dim = ny;
  data.sigma = sigma;

  struct Plan {
    std::size_t start, length, experiments;
  };
  std::vector<Plan> plans;
  if (config.excitation == Excitation::kFull) {
    const std::size_t m = config.experiments > 0 ? config.experiments : n * nu + config.margin;
    if (m < n * nu) {
      throw ConfigError("collect_rollouts: need at least N n_u = " + std::to_string(n * nu) + " experiments, got " +
                        std::to_string(m));
    }
    plans.push_back({0, n, m});
  } else {
    if (config.band == 0) throw ConfigError("windowed excitation needs a positive band");
    data.band = config.band;
    const std::size_t stride = config.stride > 0 ? config.stride : config.band;
    const std::size_t span = config.band + stride;
    const std::size_t last = n > config.band ? (n - config.band) / stride * stride : 0;
    for (std::size_t s = 0; s <= last; s += stride) {
      const std::size_t length = std::min(span, n - s);
      plans.push_back({s, length, length * nu + config.margin});
    }
  }

  data.blocks.resize(plans.size());
  for (std::size_t bi = 0; bi < plans.size(); ++bi) {
    const Plan& plan = plans[bi];
    ExcitationBlock& block = data.blocks[bi];
    block.start = plan.start;
    block.length = plan.length;
    block.inputs.assign(plan.length, Matrix(idx(nu), idx(plan.experiments)));
    block.outputs.assign(plan.length + 1, Matrix(idx(ny), idx(plan.experiments)));
    const std::size_t end = plan.start + plan.length;
    parallel_for(plan.experiments, config.threads, [&](std::size_t i) {
      auto rng = make_rng(config.seed, (static_cast<std::uint64_t>(bi) << 32) | i);
      std::vector<Vector> controls(nominal.controls.begin(), nominal.controls.begin() + static_cast<long>(end));
      for (std::size_t k = plan.start; k < end; ++k) {
        const Vector du = gaussian_vector(rng, nu, sigma);
        block.inputs[k - plan.start].col(idx(i)) = du;
        controls[k] += du;
      }
      const Trajectory traj = dynamics::rollout(model, nominal.states.front(), controls);
      for (std::size_t k = plan.start; k <= end; ++k) {
        block.outputs[k - plan.start].col(idx(i)) = traj.states[k] - nominal.states[k];
      }
    });
  }
  return data;
}

MarkovParamSet::MarkovParamSet(std::size_t horizon, std::size_t output_dim, std::size_t input_dim)
    : horizon_(horizon),
      output_dim_(output_dim),
      input_dim_(input_dim),
      h_(horizon + 1),
      first_known_(horizon + 1, 0),
      causal_residual_(horizon + 1, 0.0) {
  for (std::size_t k = 0; k <= horizon; ++k) {
    h_[k].assign(k, Matrix::Zero(idx(output_dim), idx(input_dim)));
  }
}

bool MarkovParamSet::known(std::size_t k, long j) const {
  if (k > horizon_) return false;
  if (j < 0 || j >= static_cast<long>(k)) return true;
  return static_cast<std::size_t>(j) >= first_known_[k];
}

Matrix MarkovParamSet::get(std::size_t k, long j) const {
  if (k > horizon_) {
    throw IdentificationError("Markov parameter h(" + std::to_string(k) + ", " + std::to_string(j) +
                              ") beyond horizon " + std::to_string(horizon_));
  }
  if (j < 0 || j >= static_cast<long>(k)) return Matrix::Zero(idx(output_dim_), idx(input_dim_));
  if (!known(k, j)) {
    throw IdentificationError("Markov parameter h(" + std::to_string(k) + ", " + std::to_string(j) +
                              ") was not excited by the data");
  }
  return h_[k][static_cast<std::size_t>(j) - first_known_[k]];
}

void MarkovParamSet::set(std::size_t k, std::size_t j, const Matrix& value) {
  if (k > horizon_ || j >= k) throw IdentificationError("Markov index out of range");
  if (value.rows() != idx(output_dim_) || value.cols() != idx(input_dim_)) {
    throw IdentificationError("Markov parameter has wrong shape");
  }
  if (j < first_known_[k]) throw IdentificationError("Markov parameter set below the known range");
  h_[k][j - first_known_[k]] = value;
}

void MarkovParamSet::set_first_known(std::size_t k, std::size_t first) {
  if (k > horizon_ || (k > 0 && first >= k)) throw IdentificationError("Markov index out of range");
  first_known_[k] = first;
  h_[k].assign(k - first, Matrix::Zero(idx(output_dim_), idx(input_dim_)));
}

double MarkovParamSet::max_norm() const {
  double m = 0.0;
  for (const auto& row : h_) {
    for (const auto& blk : row) m = std::max(m, blk.norm());
  }
  return m;
}

MarkovParamSet markov_from_system(const std::vector<Matrix>& a, const std::vector<Matrix>& b,
                                  const std::vector<Matrix>& c) {
  const std::size_t n = a.size();
  if (b.size() != n || c.size() != n + 1 || n == 0) {
    throw ConfigError("markov_from_system: expected N A/B matrices and N + 1 C matrices");
  }
  MarkovParamSet h(n, static_cast<std::size_t>(c.front().rows()), static_cast<std::size_t>(b.front().cols()));
  for (std::size_t j = 0; j < n; ++j) {
    Matrix prop = b[j];  // Phi(k, j + 1) B_j
    for (std::size_t k = j + 1; k <= n; ++k) {
      h.set(k, j, c[k] * prop);
      if (k < n) prop = a[k] * prop;
    }
  }
  return h;
}

MarkovParamSet estimate_markov(const RolloutDataset& data, double tol) {
  if (data.blocks.empty()) throw IdentificationError("rollout dataset has no blocks");
  const std::size_t nu = data.input_dim;
  const std::size_t ny = data.output_dim;
  MarkovParamSet h(data.horizon, ny, nu);
  for (std::size_t t = 1; t <= data.horizon; ++t) {
    const ExcitationBlock& blk = block_for(data, t);
    const std::size_t s = blk.start;
    const std::size_t m = blk.experiments();
    const std::size_t newest = std::min(t, s + blk.length - 1);  // latest excited input that may enter
    const std::size_t terms = newest - s + 1;
    // Stack [du_newest; du_newest-1; ...; du_s]; the du_t block (if present)
    // should receive a zero coefficient.
    Matrix stack(idx(terms * nu), idx(m));
    for (std::size_t r = 0; r < terms; ++r) {
      stack.middleRows(idx(r * nu), idx(nu)) = blk.inputs[newest - r - s];
    }
    const auto sv = numerics::svd(stack);
    const Vector& sig = sv.singular_values;
    if (sig.size() < idx(terms * nu) || !(sig(sig.size() - 1) > tol * sig(0))) {
      throw IdentificationError("step " + std::to_string(t) + ": stacked inputs are rank deficient (" +
                                std::to_string(terms * nu) + " unknowns, " + std::to_string(m) + " experiments)");
    }
    const Matrix coeffs =
        blk.outputs[t - s] * sv.right * sig.cwiseInverse().asDiagonal() * sv.left.transpose();
    h.set_first_known(t, s);
    std::size_t col = 0;
    if (newest == t) {
      h.set_causal_residual(t, coeffs.leftCols(idx(nu)).norm());
      col = nu;
    }
    for (std::size_t j = std::min(t - 1, newest); ; --j) {
      h.set(t, j, coeffs.middleCols(idx(col), idx(nu)));
      col += nu;
      if (j == s) break;
    }
  }
  return h;
}

Matrix build_hankel(const MarkovParamSet& h, std::size_t k, std::size_t p, std::size_t q) {
  if (k < 1) throw IdentificationError("Hankel index k must be at least 1");
  if (p == 0 || q == 0) throw ConfigError("Hankel depths p and q must be positive");
  if (k + p - 1 > h.horizon()) {
    throw IdentificationError("Hankel window k + p - 1 = " + std::to_string(k + p - 1) + " exceeds horizon " +
                              std::to_string(h.horizon()));
  }
  const auto ny = idx(h.output_dim());
  const auto nu = idx(h.input_dim());
  Matrix out(idx(p) * ny, idx(q) * nu);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t l = 0; l < q; ++l) {
      out.block(idx(i) * ny, idx(l) * nu, ny, nu) = h.get(k + i, static_cast<long>(k) - 1 - static_cast<long>(l));
    }
  }
  return out;
}

EraStep era_step(const Matrix& hk, const Matrix& hk1, std::size_t output_dim, std::size_t input_dim,
                 std::size_t order, double rank_tol) {
  if (hk.rows() != hk1.rows() || hk.cols() != hk1.cols()) throw ConfigError("era_step: Hankel shapes differ");
  if (hk.rows() < 2 * idx(output_dim)) throw ConfigError("era_step: need at least two block rows");
  const auto fk = factor_hankel(hk, order, rank_tol);
  const auto fk1 = factor_hankel(hk1, order, rank_tol);
  EraStep out;
  out.a = shift_matrix(fk.obs, fk1.obs, output_dim);
  out.b = fk1.ctrl.leftCols(idx(input_dim));
  out.c = fk.obs.topRows(idx(output_dim));
  out.singular_values = fk.spectrum.head(idx(order));
  out.rank_deficient = fk.rank_deficient || fk1.rank_deficient;
  return out;
}

std::pair<std::size_t, std::size_t> default_depths(std::size_t state_dim, std::size_t output_dim,
                                                   std::size_t input_dim) {
  auto ceil_div = [](std::size_t a, std::size_t b) { return (a + b - 1) / b; };
  std::size_t p = std::max<std::size_t>(ceil_div(2 * state_dim, output_dim), 2);
  std::size_t q = std::max<std::size_t>(ceil_div(2 * state_dim, input_dim), 2);
  p = std::max(p, ceil_div(state_dim, output_dim) + 1);
  q = std::max(q, ceil_div(state_dim, input_dim));
  return {p, q};
}

std::size_t order_for_energy(const Vector& singular_values, double energy) {
  const double total = singular_values.squaredNorm();
  if (!(total > 0.0)) return 0;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < singular_values.size(); ++i) {
    acc += singular_values(i) * singular_values(i);
    if (acc >= energy * total) return static_cast<std::size_t>(i) + 1;
  }
  return static_cast<std::size_t>(singular_values.size());
}

LtvRom identify_ltv(const MarkovParamSet& markov, const IdentifyConfig& config) {
  const std::size_t n = markov.horizon();
  const std::size_t ny = markov.output_dim();
  const std::size_t nu = markov.input_dim();
  std::size_t p = config.p;
  std::size_t q = config.q;
  if (p == 0 || q == 0) {
    // Without a state dimension, size the default for the fully observed case.
    const auto d = default_depths(ny, ny, nu);
    if (p == 0) p = d.first;
    if (q == 0) q = d.second;
  }
  if (p < 2) throw ConfigError("ERA needs p >= 2 block rows");
  if (n < p + 1) {
    throw ConfigError("identification window [1, N - p] is empty for N = " + std::to_string(n) +
                      ", p = " + std::to_string(p));
  }
  const std::size_t lo = 1;
  const std::size_t hi = n - p;
  const std::size_t max_order = std::min((p - 1) * ny, q * nu);

  // One factorisation per Hankel H_k, k = 1 .. N - p + 1.
  std::vector<Matrix> hankels(hi + 2);
  parallel_for(hi + 1, config.threads, [&](std::size_t i) { hankels[i + 1] = build_hankel(markov, i + 1, p, q); });

  std::size_t order = 0;
  if (config.order.has_value()) {
    order = *config.order;
    if (order == 0 || order > max_order) {
      throw ConfigError("ROM order " + std::to_string(order) + " must lie in [1, " + std::to_string(max_order) +
                        "] for p = " + std::to_string(p) + ", q = " + std::to_string(q));
    }
  } else {
    // First step whose Hankel has no zero-padded columns.
    const std::size_t k_auto = std::min(std::max(lo, q), hi);
    const auto sv = numerics::svd(hankels[k_auto]);
    order = std::clamp<std::size_t>(order_for_energy(sv.singular_values, config.energy), 1, max_order);
  }

  std::vector<HankelFactors> factors(hi + 2);
  std::vector<std::string> failures(hi + 2);
  parallel_for(hi + 1, config.threads, [&](std::size_t i) {
    try {
      factors[i + 1] = factor_hankel(hankels[i + 1], order, config.rank_tol);
    } catch (const Error& e) {
      failures[i + 1] = e.what();
    }
  });
  for (std::size_t k = lo; k <= hi + 1; ++k) {
    if (!failures[k].empty()) throw IdentificationError("step " + std::to_string(k) + ": " + failures[k]);
  }

  LtvRom rom;
  rom.horizon = n;
  rom.order = order;
  rom.output_dim = ny;
  rom.input_dim = nu;
  rom.window_lo = lo;
  rom.window_hi = hi;
  rom.a.resize(n);
  rom.b.resize(n);
  rom.c.resize(n + 1);
  for (std::size_t k = lo; k <= hi; ++k) {
    rom.a[k] = shift_matrix(factors[k].obs, factors[k + 1].obs, ny);
    rom.singular_values.push_back(factors[k].spectrum);
    // Before order / n_u inputs have been applied the Hankel cannot reach full
    // rank; only later deficiencies are worth a warning.
    if (factors[k].rank_deficient && k * nu >= order) rom.warnings.push_back(k);
  }
  for (std::size_t k = lo; k <= hi + 1; ++k) {
    rom.b[k - 1] = factors[k].ctrl.leftCols(idx(nu));
    rom.c[k] = factors[k].obs.topRows(idx(ny));
  }
  if (config.output_coordinates && order == ny) {
    // A_k <- C_{k+1} A_k pinv(C_k), B_k <- C_{k+1} B_k. The pseudo-inverse is
    // exact on the reachable subspace, which is all an early rank-deficient
    // step can describe.
    std::vector<Matrix> c_pinv(hi + 2);
    for (std::size_t k = lo; k <= hi + 1; ++k) c_pinv[k] = numerics::pinv(rom.c[k], config.rank_tol);
    for (std::size_t k = lo; k <= hi; ++k) rom.a[k] = rom.c[k + 1] * rom.a[k] * c_pinv[k];
    for (std::size_t k = lo; k <= hi + 1; ++k) {
      rom.b[k - 1] = rom.c[k] * rom.b[k - 1];
      rom.c[k] = Matrix::Identity(idx(ny), idx(ny));
    }
  }
  std::size_t fitted_hi = hi;
  if (config.output_coordinates && order == ny) {
    // The state is the output itself, so the steps after the window follow
    // from one block row: h_{k+1,j} = A_k h_{k,j}, h_{k+1,k} = B_k.
    for (std::size_t k = hi + 1; k < n; ++k) {
      const std::size_t lags = std::min(q, k);
      if (!markov.known(k, static_cast<long>(k - lags)) || !markov.known(k + 1, static_cast<long>(k - lags))) break;
      Matrix now(idx(ny), idx(lags * nu));
      Matrix next(idx(ny), idx(lags * nu));
      for (std::size_t l = 0; l < lags; ++l) {
        const long j = static_cast<long>(k - 1 - l);
        now.middleCols(idx(l * nu), idx(nu)) = markov.get(k, j);
        next.middleCols(idx(l * nu), idx(nu)) = markov.get(k + 1, j);
      }
      const auto sv = numerics::svd(now);
      const double smax = sv.singular_values.size() > 0 ? sv.singular_values(0) : 0.0;
      if (!(smax > 0.0) || sv.singular_values(idx(ny) - 1) < config.rank_tol * smax) rom.warnings.push_back(k);
      rom.a[k] = next * numerics::pinv(now, config.rank_tol);
      rom.b[k] = markov.get(k + 1, static_cast<long>(k));
      rom.c[k + 1] = Matrix::Identity(idx(ny), idx(ny));
      fitted_hi = k;
    }
  }
  // Nearest identified model outside the fitted range.
  rom.a[0] = rom.a[lo];
  for (std::size_t k = fitted_hi + 1; k < n; ++k) rom.a[k] = rom.a[fitted_hi];
  for (std::size_t k = std::max(hi, fitted_hi) + 1; k < n; ++k) rom.b[k] = rom.b[std::max(hi, fitted_hi)];
  rom.c[0] = rom.c[lo];
  for (std::size_t k = fitted_hi + 2; k <= n; ++k) rom.c[k] = rom.c[fitted_hi + 1];
  return rom;
}

LtvRom identify_ltv(const RolloutDataset& data, const IdentifyConfig& config) {
  IdentifyConfig cfg = config;
  if (cfg.p == 0 || cfg.q == 0) {
    const auto d = default_depths(data.output_dim, data.output_dim, data.input_dim);
    if (cfg.p == 0) cfg.p = d.first;
    if (cfg.q == 0) cfg.q = d.second;
  }
  if (data.band > 0 && data.band < cfg.p + cfg.q - 1) {
    throw ConfigError("excitation band " + std::to_string(data.band) + " is shorter than p + q - 1 = " +
                      std::to_string(cfg.p + cfg.q - 1));
  }
  return identify_ltv(estimate_markov(data, cfg.lstsq_tol), cfg);
}

Matrix LtvRom::markov(std::size_t k, std::size_t j) const {
  if (j >= k) return Matrix::Zero(idx(output_dim), idx(input_dim));
  Matrix prop = b.at(j);
  for (std::size_t i = j + 1; i < k; ++i) prop = a.at(i) * prop;
  return c.at(k) * prop;
}

std::vector<Vector> LtvRom::simulate(const std::vector<Vector>& inputs) const {
  if (inputs.size() > horizon) throw ConfigError("ROM simulation longer than its horizon");
  std::vector<Vector> out;
  out.reserve(inputs.size() + 1);
  Vector state = Vector::Zero(idx(order));
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    out.push_back(c[k] * state);
    state = a[k] * state + b[k] * inputs[k];
  }
  out.push_back(c[inputs.size()] * state);
  return out;
}

void LtvRom::validate() const {
  if (horizon == 0 || order == 0) throw IdentificationError("ROM has zero horizon or order");
  if (a.size() != horizon || b.size() != horizon || c.size() != horizon + 1) {
    throw IdentificationError("ROM sequence lengths do not match its horizon");
  }
  for (std::size_t k = 0; k < horizon; ++k) {
    if (a[k].rows() != idx(order) || a[k].cols() != idx(order) || b[k].rows() != idx(order) ||
        b[k].cols() != idx(input_dim)) {
      throw IdentificationError("ROM matrices at step " + std::to_string(k) + " have wrong shape");
    }
    if (!a[k].allFinite() || !b[k].allFinite()) {
      throw IdentificationError("ROM matrices at step " + std::to_string(k) + " are not finite");
    }
  }
  for (std::size_t k = 0; k <= horizon; ++k) {
    if (c[k].rows() != idx(output_dim) || c[k].cols() != idx(order) || !c[k].allFinite()) {
      throw IdentificationError("ROM output matrix at step " + std::to_string(k) + " is invalid");
    }
  }
}

Linearization linearize_fd(const dynamics::SimModel& model, const Trajectory& nominal, double h,
                           std::size_t threads) {
  nominal.validate();
  Linearization lin;
  lin.a.resize(nominal.horizon());
  lin.b.resize(nominal.horizon());
  parallel_for(nominal.horizon(), threads, [&](std::size_t k) {
    auto j = dynamics::linearize_step(model, k, nominal.states[k], nominal.controls[k], h);
    lin.a[k] = std::move(j.a);
    lin.b[k] = std::move(j.b);
  });
  return lin;
}

std::vector<Matrix> weighted_hessian_fd(const dynamics::SimModel& model, const Trajectory& nominal,
                                        const std::vector<Vector>& w, double h, std::size_t threads) {
  nominal.validate();
  if (w.size() != nominal.horizon()) throw ConfigError("weighted_hessian_fd: need one weight per step");
  if (!(h > 0.0)) throw ConfigError("weighted_hessian_fd: h must be positive");
  const auto nx = idx(model.state_dim());
  std::vector<Matrix> out(nominal.horizon());
  parallel_for(nominal.horizon(), threads, [&](std::size_t k) {
    const Vector& x = nominal.states[k];
    const Vector& u = nominal.controls[k];
    auto phi = [&](Eigen::Index i, double si, Eigen::Index j, double sj) {
      Vector xs = x;
      xs(i) += si * h;
      xs(j) += sj * h;
      return w[k].dot(model.step(k, xs, u));
    };
    Matrix hess(nx, nx);
    for (Eigen::Index i = 0; i < nx; ++i) {
      for (Eigen::Index j = i; j < nx; ++j) {
        const double v = (phi(i, 1, j, 1) - phi(i, 1, j, -1) - phi(i, -1, j, 1) + phi(i, -1, j, -1)) / (4.0 * h * h);
        hess(i, j) = v;
        hess(j, i) = v;
      }
    }
    out[k] = std::move(hess);
  });
  return out;
}

void write_singular_values_csv(std::ostream& out, const LtvRom& rom) {
  Eigen::Index width = 0;
  for (const auto& s : rom.singular_values) width = std::max(width, s.size());
  out << "k";
  for (Eigen::Index i = 0; i < width; ++i) out << ",sigma_" << (i + 1);
  out << '\n';
  for (std::size_t r = 0; r < rom.singular_values.size(); ++r) {
    out << (rom.window_lo + r);
    const Vector& s = rom.singular_values[r];
    for (Eigen::Index i = 0; i < width; ++i) out << ',' << (i < s.size() ? textio::format_double(s(i)) : "");
    out << '\n';
  }
}

}  // namespace d2c::sysid
