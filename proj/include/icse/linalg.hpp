#pragma once

#include <Eigen/Dense>

#include <vector>

namespace icse {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Throws ShapeError unless `m` is square.
void require_square(const Matrix& m, const char* what);

/// Throws `Err` unless `m` is symmetric (relative tolerance) and positive definite.
/// Returns the Cholesky factor.
Eigen::LLT<Matrix> require_spd(const Matrix& m, const char* what, bool loss_error = false);

bool is_symmetric(const Matrix& m, double rel_tol = 1e-10);

/// Symmetric square root of an SPD matrix via its eigen-decomposition.
Matrix symmetric_sqrt(const Matrix& m);

/// Rows of `m` selected by `rows`, in order.
Matrix select_rows(const Matrix& m, const std::vector<Index>& rows);
Vector select(const Vector& v, const std::vector<Index>& idx);

/// Numerical rank from singular values: count of sigma_i > rel_tol * sigma_max.
Index numerical_rank(const Matrix& m, double rel_tol = 1e-10);

}  // namespace icse
