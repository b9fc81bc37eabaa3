#include "d2c/numerics.hpp"

#include <cmath>
#include <string>

#include "d2c/errors.hpp"

namespace d2c::numerics {

bool all_finite(const Matrix& a) { return a.allFinite(); }

SvdResult svd(const Matrix& a) {
  if (a.rows() == 0 || a.cols() == 0) {
    throw NumericalError("svd: empty matrix");
  }
  if (!a.allFinite()) {
    throw NumericalError("svd: non-finite input");
  }
  Eigen::JacobiSVD<Matrix> solver(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("svd: Jacobi sweeps did not converge");
  }
  return {solver.matrixU(), solver.singularValues(), solver.matrixV()};
}

Matrix pinv(const Matrix& a, double tol) {
  if (tol < 0.0) {
    throw NumericalError("pinv: negative tolerance");
  }
  Matrix result = Matrix::Zero(a.cols(), a.rows());
  if (a.size() == 0 || a.isZero(0.0)) {
    return result;
  }
  const SvdResult s = svd(a);
  const double cutoff = tol * s.singular_values(0);
  for (Eigen::Index i = 0; i < s.singular_values.size(); ++i) {
    const double sigma = s.singular_values(i);
    if (sigma <= cutoff || sigma == 0.0) break;
    result.noalias() += (s.right.col(i) / sigma) * s.left.col(i).transpose();
  }
  return result;
}

Matrix lstsq_right(const Matrix& y, const Matrix& u, double tol) {
  if (y.cols() != u.cols()) {
    throw NumericalError("lstsq_right: Y has " + std::to_string(y.cols()) +
                         " experiments but U has " + std::to_string(u.cols()));
  }
  return y * pinv(u, tol);
}

Vector rk4_step(const Derivative& deriv, const Vector& x, const Vector& u, double dt) {
  if (!(dt > 0.0)) {
    throw NumericalError("rk4_step: dt must be positive");
  }
  const Vector k1 = deriv(x, u);
  const Vector k2 = deriv(x + 0.5 * dt * k1, u);
  const Vector k3 = deriv(x + 0.5 * dt * k2, u);
  const Vector k4 = deriv(x + dt * k3, u);
  Vector next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!k1.allFinite() || !k4.allFinite() || !next.allFinite()) {
    throw NumericalError("rk4_step: non-finite derivative");
  }
  return next;
}

double min_symmetric_eigenvalue(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(a), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

}  // namespace d2c::numerics
