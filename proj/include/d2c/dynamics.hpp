#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "d2c/numerics.hpp"

namespace d2c {

/// States x_0..x_N and controls u_0..u_{N-1}.
struct Trajectory {
  std::vector<Vector> states;
  std::vector<Vector> controls;

  std::size_t horizon() const { return controls.size(); }
  /// Throws ConfigError unless states.size() == controls.size() + 1.
  void validate() const;
};

namespace dynamics {

struct CartPoleParams {
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double pole_length = 0.5;
  double gravity = 9.81;
  void validate() const;
};

struct CartTwoPoleParams {
  double cart_mass = 0.15;
  double mass1 = 0.6;
  double mass2 = 0.5;
  double length1 = 0.6;
  double length2 = 0.5;
  double gravity = 9.81;
  void validate() const;
};

struct AcrobotParams {
  double mass1 = 1.0;
  double mass2 = 1.0;
  double length1 = 0.5;
  double length2 = 0.5;
  double friction1 = 0.05;
  double friction2 = 0.05;
  double gravity = 9.81;
  void validate() const;
};

// Continuous-time equations of motion. All angles are measured from the
// upright position, so the zero state is the inverted equilibrium.

/// x = [cart position, pole angle, cart velocity, pole rate], u = [force].
/// Point mass at the pole tip.
Vector cartpole_derivative(const CartPoleParams& p, const Vector& x, const Vector& u);

/// x = [cart, theta1, theta2, cart velocity, rate1, rate2], u = [force].
/// Absolute link angles, point masses at the link tips.
Vector cart2pole_derivative(const CartTwoPoleParams& p, const Vector& x, const Vector& u);

/// x = [theta1, theta2, rate1, rate2], u = [elbow torque]. theta2 is relative
/// to link 1; links are uniform rods; viscous friction at both joints.
Vector acrobot_derivative(const AcrobotParams& p, const Vector& x, const Vector& u);

/// Discrete-time black-box model: next = f(x, u + noise_scale * w).
/// Noise is sampled once per step and enters through the control channel.
/// Instances are immutable; copies with different noise settings are made
/// with with_noise().
class SimModel {
 public:
  virtual ~SimModel() = default;

  const std::string& name() const { return name_; }
  std::size_t state_dim() const { return state_dim_; }
  std::size_t control_dim() const { return control_dim_; }
  double dt() const { return dt_; }
  double noise_scale() const { return noise_scale_; }
  const Matrix& noise_cov() const { return noise_cov_; }

  /// Step k of the discrete map. An empty w means zero noise.
  Vector step(std::size_t k, const Vector& x, const Vector& u, const Vector& w = Vector()) const;

  std::shared_ptr<const SimModel> with_noise(double noise_scale, const Matrix& noise_cov) const;

 protected:
  SimModel(std::string name, std::size_t state_dim, std::size_t control_dim, double dt);

  virtual Vector advance(std::size_t k, const Vector& x, const Vector& u) const = 0;
  virtual std::shared_ptr<SimModel> clone() const = 0;

 private:
  std::string name_;
  std::size_t state_dim_;
  std::size_t control_dim_;
  double dt_;
  double noise_scale_ = 0.0;
  Matrix noise_cov_;
};

/// Continuous dynamics discretised by one RK4 step per sample.
class ContinuousModel final : public SimModel {
 public:
  ContinuousModel(std::string name, std::size_t state_dim, std::size_t control_dim, double dt,
                  numerics::Derivative derivative);

 protected:
  Vector advance(std::size_t k, const Vector& x, const Vector& u) const override;
  std::shared_ptr<SimModel> clone() const override;

 private:
  numerics::Derivative derivative_;
};

/// x_{k+1} = A_k x_k + B_k u_k. Sequences shorter than the requested step
/// index repeat their last element, so a single pair gives an LTI model.
class LinearModel final : public SimModel {
 public:
  LinearModel(std::string name, std::vector<Matrix> a, std::vector<Matrix> b, double dt = 1.0);

  const Matrix& a(std::size_t k) const;
  const Matrix& b(std::size_t k) const;

 protected:
  Vector advance(std::size_t k, const Vector& x, const Vector& u) const override;
  std::shared_ptr<SimModel> clone() const override;

 private:
  std::vector<Matrix> a_;
  std::vector<Matrix> b_;
};

/// Initial state, target state and horizon for a named benchmark.
struct BenchmarkTask {
  std::string name;
  Vector initial_state;
  Vector target_state;
  double horizon_seconds = 0.0;
};

/// Known benchmark ids: cartpole, cart2pole, acrobot, plus linear_toy (a
/// discretised double integrator used for smoke tests) and scalar_linear
/// (x' = 0.9 x + u per step, whatever dt; 0.5 s at dt = 0.01 is 50 steps).
std::vector<std::string> benchmark_names();
BenchmarkTask benchmark_task(std::string_view name);

/// Throws ConfigError for an unknown id or dt <= 0.
std::shared_ptr<const SimModel> make_model(std::string_view name, double dt, double noise_scale = 0.0,
                                           const Matrix& noise_cov = Matrix());

/// Number of samples covering `seconds` at step dt.
std::size_t horizon_steps(double seconds, double dt);

/// states[0] = x0, states[k+1] = model.step(k, states[k], controls[k], noise[k]).
/// An empty noise span means noise-free. Numerical failures are rethrown
/// with the step index.
Trajectory rollout(const SimModel& model, const Vector& x0, std::span<const Vector> controls,
                   std::span<const Vector> noise = {});

/// Central-difference Jacobians of one step of the discrete map.
struct StepJacobian {
  Matrix a;  // d step / dx
  Matrix b;  // d step / du
};

/// Costs 2 (n_x + n_u) noise-free step evaluations.
StepJacobian linearize_step(const SimModel& model, std::size_t k, const Vector& x, const Vector& u, double h);

}  // namespace dynamics
}  // namespace d2c
