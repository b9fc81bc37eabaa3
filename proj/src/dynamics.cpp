#include "d2c/dynamics.hpp"

#include <cmath>
#include <numbers>

#include "d2c/errors.hpp"

namespace d2c {

void Trajectory::validate() const {
  if (states.size() != controls.size() + 1) {
    throw ConfigError("trajectory has " + std::to_string(states.size()) + " states for " +
                      std::to_string(controls.size()) + " controls");
  }
}

namespace dynamics {
namespace {

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ConfigError(std::string(what) + " must be positive");
  }
}

void require_dims(const Vector& x, const Vector& u, Eigen::Index nx, Eigen::Index nu, const char* who) {
  if (x.size() != nx || u.size() != nu) {
    throw NumericalError(std::string(who) + ": expected state " + std::to_string(nx) + " / control " +
                         std::to_string(nu) + ", got " + std::to_string(x.size()) + " / " +
                         std::to_string(u.size()));
  }
}

Vector checked(Vector dx, const char* who) {
  if (!dx.allFinite()) {
    throw NumericalError(std::string(who) + ": non-finite derivative");
  }
  return dx;
}

}  // namespace

void CartPoleParams::validate() const {
  require_positive(cart_mass, "cart mass");
  require_positive(pole_mass, "pole mass");
  require_positive(pole_length, "pole length");
  require_positive(gravity, "gravity");
}

void CartTwoPoleParams::validate() const {
  require_positive(cart_mass, "cart mass");
  require_positive(mass1, "link 1 mass");
  require_positive(mass2, "link 2 mass");
  require_positive(length1, "link 1 length");
  require_positive(length2, "link 2 length");
  require_positive(gravity, "gravity");
}

void AcrobotParams::validate() const {
  require_positive(mass1, "link 1 mass");
  require_positive(mass2, "link 2 mass");
  require_positive(length1, "link 1 length");
  require_positive(length2, "link 2 length");
  require_positive(gravity, "gravity");
  if (friction1 < 0.0 || friction2 < 0.0) {
    throw ConfigError("joint friction must be non-negative");
  }
}

Vector cartpole_derivative(const CartPoleParams& p, const Vector& x, const Vector& u) {
  require_dims(x, u, 4, 1, "cartpole");
  const double s = std::sin(x(1));
  const double c = std::cos(x(1));
  const double rate = x(3);
  const double m = p.pole_mass;
  const double l = p.pole_length;

  const double cart_acc = (u(0) + m * s * (l * rate * rate - p.gravity * c)) / (p.cart_mass + m * s * s);
  const double pole_acc = (p.gravity * s - c * cart_acc) / l;

  Vector dx(4);
  dx << x(2), x(3), cart_acc, pole_acc;
  return checked(std::move(dx), "cartpole");
}

Vector cart2pole_derivative(const CartTwoPoleParams& p, const Vector& x, const Vector& u) {
  require_dims(x, u, 6, 1, "cart2pole");
  const double s1 = std::sin(x(1)), c1 = std::cos(x(1));
  const double s2 = std::sin(x(2)), c2 = std::cos(x(2));
  const double s12 = std::sin(x(1) - x(2)), c12 = std::cos(x(1) - x(2));
  const double w1 = x(4), w2 = x(5);
  const double m1 = p.mass1, m2 = p.mass2, l1 = p.length1, l2 = p.length2, g = p.gravity;

  Eigen::Matrix3d mass;
  mass << p.cart_mass + m1 + m2, (m1 + m2) * l1 * c1, m2 * l2 * c2,
          (m1 + m2) * l1 * c1, (m1 + m2) * l1 * l1, m2 * l1 * l2 * c12,
          m2 * l2 * c2, m2 * l1 * l2 * c12, m2 * l2 * l2;

  // Right-hand side: generalised force minus velocity and gravity terms.
  Eigen::Vector3d rhs;
  rhs << u(0) + (m1 + m2) * l1 * s1 * w1 * w1 + m2 * l2 * s2 * w2 * w2,
         -m2 * l1 * l2 * s12 * w2 * w2 + (m1 + m2) * g * l1 * s1,
         m2 * l1 * l2 * s12 * w1 * w1 + m2 * g * l2 * s2;

  const Eigen::Vector3d acc = mass.ldlt().solve(rhs);
  Vector dx(6);
  dx << x(3), x(4), x(5), acc(0), acc(1), acc(2);
  return checked(std::move(dx), "cart2pole");
}

Vector acrobot_derivative(const AcrobotParams& p, const Vector& x, const Vector& u) {
  require_dims(x, u, 4, 1, "acrobot");
  const double m1 = p.mass1, m2 = p.mass2, l1 = p.length1, l2 = p.length2, g = p.gravity;
  const double lc1 = 0.5 * l1, lc2 = 0.5 * l2;
  const double i1 = m1 * l1 * l1 / 12.0, i2 = m2 * l2 * l2 / 12.0;
  const double s1 = std::sin(x(0));
  const double s2 = std::sin(x(1)), c2 = std::cos(x(1));
  const double s12 = std::sin(x(0) + x(1));
  const double w1 = x(2), w2 = x(3);

  const double m11 = i1 + i2 + m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * c2);
  const double m12 = i2 + m2 * (lc2 * lc2 + l1 * lc2 * c2);
  const double m22 = i2 + m2 * lc2 * lc2;

  const double h = m2 * l1 * lc2 * s2;
  const double bias1 = -2.0 * h * w1 * w2 - h * w2 * w2 - (m1 * lc1 + m2 * l1) * g * s1 - m2 * g * lc2 * s12;
  const double bias2 = h * w1 * w1 - m2 * g * lc2 * s12;

  const double tau1 = -p.friction1 * w1 - bias1;
  const double tau2 = u(0) - p.friction2 * w2 - bias2;

  const double det = m11 * m22 - m12 * m12;
  const double acc1 = (m22 * tau1 - m12 * tau2) / det;
  const double acc2 = (m11 * tau2 - m12 * tau1) / det;

  Vector dx(4);
  dx << w1, w2, acc1, acc2;
  return checked(std::move(dx), "acrobot");
}

SimModel::SimModel(std::string name, std::size_t state_dim, std::size_t control_dim, double dt)
    : name_(std::move(name)), state_dim_(state_dim), control_dim_(control_dim), dt_(dt),
      noise_cov_(Matrix::Identity(static_cast<Eigen::Index>(control_dim),
                                  static_cast<Eigen::Index>(control_dim))) {
  if (!(dt > 0.0)) {
    throw ConfigError("model dt must be positive");
  }
  if (state_dim == 0 || control_dim == 0) {
    throw ConfigError("model dimensions must be positive");
  }
}

Vector SimModel::step(std::size_t k, const Vector& x, const Vector& u, const Vector& w) const {
  if (w.size() == 0 || noise_scale_ == 0.0) {
    return advance(k, x, u);
  }
  return advance(k, x, u + noise_scale_ * w);
}

std::shared_ptr<const SimModel> SimModel::with_noise(double noise_scale, const Matrix& noise_cov) const {
  if (noise_scale < 0.0 || !std::isfinite(noise_scale)) {
    throw ConfigError("noise scale must be a non-negative finite number");
  }
  auto copy = clone();
  copy->noise_scale_ = noise_scale;
  if (noise_cov.size() != 0) {
    if (noise_cov.rows() != static_cast<Eigen::Index>(control_dim_) || noise_cov.cols() != noise_cov.rows()) {
      throw ConfigError("noise covariance must be control_dim x control_dim");
    }
    copy->noise_cov_ = noise_cov;
  }
  return copy;
}

ContinuousModel::ContinuousModel(std::string name, std::size_t state_dim, std::size_t control_dim, double dt,
                                 numerics::Derivative derivative)
    : SimModel(std::move(name), state_dim, control_dim, dt), derivative_(std::move(derivative)) {}

Vector ContinuousModel::advance(std::size_t /*k*/, const Vector& x, const Vector& u) const {
  return numerics::rk4_step(derivative_, x, u, dt());
}

std::shared_ptr<SimModel> ContinuousModel::clone() const { return std::make_shared<ContinuousModel>(*this); }

LinearModel::LinearModel(std::string name, std::vector<Matrix> a, std::vector<Matrix> b, double dt)
    : SimModel(std::move(name), a.empty() ? 0 : static_cast<std::size_t>(a.front().rows()),
               b.empty() ? 0 : static_cast<std::size_t>(b.front().cols()), dt),
      a_(std::move(a)), b_(std::move(b)) {
  for (const auto& m : a_) {
    if (m.rows() != m.cols() || m.rows() != static_cast<Eigen::Index>(state_dim())) {
      throw ConfigError("linear model: inconsistent A dimensions");
    }
  }
  for (const auto& m : b_) {
    if (m.rows() != static_cast<Eigen::Index>(state_dim()) ||
        m.cols() != static_cast<Eigen::Index>(control_dim())) {
      throw ConfigError("linear model: inconsistent B dimensions");
    }
  }
}

const Matrix& LinearModel::a(std::size_t k) const { return a_[std::min(k, a_.size() - 1)]; }
const Matrix& LinearModel::b(std::size_t k) const { return b_[std::min(k, b_.size() - 1)]; }

Vector LinearModel::advance(std::size_t k, const Vector& x, const Vector& u) const {
  Vector next = a(k) * x + b(k) * u;
  if (!next.allFinite()) {
    throw NumericalError("linear model: non-finite state");
  }
  return next;
}

std::shared_ptr<SimModel> LinearModel::clone() const { return std::make_shared<LinearModel>(*this); }

std::vector<std::string> benchmark_names() { return {"cartpole", "cart2pole", "acrobot", "linear_toy", "scalar_linear"}; }

BenchmarkTask benchmark_task(std::string_view name) {
  constexpr double kQuarter = std::numbers::pi / 4.0;
  constexpr double kHalf = std::numbers::pi / 2.0;
  BenchmarkTask task;
  task.name = std::string(name);
  if (name == "cartpole") {
    task.initial_state = (Vector(4) << 0.0, kQuarter, 0.0, 0.0).finished();
    task.target_state = Vector::Zero(4);
    task.horizon_seconds = 3.5;
  } else if (name == "cart2pole") {
    task.initial_state = (Vector(6) << 0.0, kQuarter, kQuarter, 0.0, 0.0, 0.0).finished();
    task.target_state = Vector::Zero(6);
    task.horizon_seconds = 3.0;
  } else if (name == "acrobot") {
    task.initial_state = (Vector(4) << kHalf, kHalf, 0.0, 0.0).finished();
    task.target_state = Vector::Zero(4);
    task.horizon_seconds = 5.0;
  } else if (name == "linear_toy") {
    task.initial_state = (Vector(2) << 1.0, 0.0).finished();
    task.target_state = Vector::Zero(2);
    task.horizon_seconds = 2.0;
  } else if (name == "scalar_linear") {
    task.initial_state = Vector::Constant(1, 1.0);
    task.target_state = Vector::Zero(1);
    task.horizon_seconds = 0.5;
  } else {
    throw ConfigError("unknown benchmark '" + std::string(name) + "'");
  }
  return task;
}

std::shared_ptr<const SimModel> make_model(std::string_view name, double dt, double noise_scale,
                                           const Matrix& noise_cov) {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw ConfigError("dt must be positive");
  }
  std::shared_ptr<const SimModel> model;
  if (name == "cartpole") {
    const CartPoleParams params;
    params.validate();
    model = std::make_shared<ContinuousModel>(
        "cartpole", 4, 1, dt, [params](const Vector& x, const Vector& u) { return cartpole_derivative(params, x, u); });
  } else if (name == "cart2pole") {
    const CartTwoPoleParams params;
    params.validate();
    model = std::make_shared<ContinuousModel>(
        "cart2pole", 6, 1, dt,
        [params](const Vector& x, const Vector& u) { return cart2pole_derivative(params, x, u); });
  } else if (name == "acrobot") {
    const AcrobotParams params;
    params.validate();
    model = std::make_shared<ContinuousModel>(
        "acrobot", 4, 1, dt, [params](const Vector& x, const Vector& u) { return acrobot_derivative(params, x, u); });
  } else if (name == "linear_toy") {
    Matrix a(2, 2), b(2, 1);
    a << 1.0, dt, 0.0, 1.0;
    b << 0.5 * dt * dt, dt;
    model = std::make_shared<LinearModel>("linear_toy", std::vector<Matrix>{a}, std::vector<Matrix>{b}, dt);
  } else if (name == "scalar_linear") {
    model = std::make_shared<LinearModel>("scalar_linear", std::vector<Matrix>{Matrix::Constant(1, 1, 0.9)},
                                          std::vector<Matrix>{Matrix::Constant(1, 1, 1.0)}, dt);
  } else {
    throw ConfigError("unknown benchmark '" + std::string(name) + "'");
  }
  if (noise_scale != 0.0 || noise_cov.size() != 0) {
    return model->with_noise(noise_scale, noise_cov);
  }
  return model;
}

std::size_t horizon_steps(double seconds, double dt) {
  if (!(dt > 0.0) || !(seconds > 0.0)) {
    throw ConfigError("horizon and dt must be positive");
  }
  return static_cast<std::size_t>(std::llround(seconds / dt));
}

Trajectory rollout(const SimModel& model, const Vector& x0, std::span<const Vector> controls,
                   std::span<const Vector> noise) {
  if (controls.empty()) {
    throw ConfigError("rollout: empty control sequence");
  }
  if (x0.size() != static_cast<Eigen::Index>(model.state_dim())) {
    throw ConfigError("rollout: initial state has dimension " + std::to_string(x0.size()) + ", model expects " +
                      std::to_string(model.state_dim()));
  }
  if (!noise.empty() && noise.size() < controls.size()) {
    throw ConfigError("rollout: fewer noise samples than control steps");
  }
  Trajectory traj;
  traj.controls.assign(controls.begin(), controls.end());
  traj.states.reserve(controls.size() + 1);
  traj.states.push_back(x0);
  for (std::size_t k = 0; k < controls.size(); ++k) {
    try {
      traj.states.push_back(model.step(k, traj.states.back(), controls[k], noise.empty() ? Vector() : noise[k]));
    } catch (const NumericalError& e) {
      throw NumericalError("rollout step " + std::to_string(k) + ": " + e.what());
    }
  }
  return traj;
}

StepJacobian linearize_step(const SimModel& model, std::size_t k, const Vector& x, const Vector& u, double h) {
  if (!(h > 0.0)) throw ConfigError("linearization step h must be positive");
  const auto nx = static_cast<Eigen::Index>(model.state_dim());
  const auto nu = static_cast<Eigen::Index>(model.control_dim());
  StepJacobian jac{Matrix(nx, nx), Matrix(nx, nu)};
  for (Eigen::Index i = 0; i < nx; ++i) {
    Vector xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    jac.a.col(i) = (model.step(k, xp, u) - model.step(k, xm, u)) / (2.0 * h);
  }
  for (Eigen::Index i = 0; i < nu; ++i) {
    Vector up = u, um = u;
    up(i) += h;
    um(i) -= h;
    jac.b.col(i) = (model.step(k, x, up) - model.step(k, x, um)) / (2.0 * h);
  }
  return jac;
}

}  // namespace dynamics
}  // namespace d2c
