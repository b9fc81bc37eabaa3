#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace d2c {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

namespace numerics {

/// Thin SVD, A = left * diag(singular_values) * right'.
struct SvdResult {
  Matrix left;
  Vector singular_values;  // non-increasing
  Matrix right;
};

constexpr double kDefaultPinvTol = 1e-10;

bool all_finite(const Matrix& a);

/// Thin singular value decomposition (two-sided Jacobi, deterministic).
/// Throws NumericalError on non-finite input or failed convergence.
SvdResult svd(const Matrix& a);

/// Moore-Penrose pseudo-inverse. Singular values below tol * sigma_max are
/// treated as zero; the zero matrix maps to the zero matrix.
Matrix pinv(const Matrix& a, double tol = kDefaultPinvTol);

/// H minimising ||Y - H U||_F, i.e. Y * pinv(U).
Matrix lstsq_right(const Matrix& y, const Matrix& u, double tol = kDefaultPinvTol);

/// dx/dt = deriv(x, u)
using Derivative = std::function<Vector(const Vector& x, const Vector& u)>;

/// One classical fourth-order Runge-Kutta step with u held constant.
Vector rk4_step(const Derivative& deriv, const Vector& x, const Vector& u, double dt);

/// Symmetric part, (A + A') / 2.
inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

/// Smallest eigenvalue of the symmetric part of a square matrix.
double min_symmetric_eigenvalue(const Matrix& a);

}  // namespace numerics
}  // namespace d2c
