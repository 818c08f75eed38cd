#include "icse/linalg.hpp"

#include "icse/errors.hpp"

#include <string>

namespace icse {

void require_square(const Matrix& m, const char* what)
{
    if (m.rows() != m.cols() || m.rows() == 0) {
        throw ShapeError(std::string(what) + ": expected a non-empty square matrix, got " +
                         std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
}

bool is_symmetric(const Matrix& m, double rel_tol)
{
    if (m.rows() != m.cols()) return false;
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

Eigen::LLT<Matrix> require_spd(const Matrix& m, const char* what, bool loss_error)
{
    require_square(m, what);
    auto fail = [&](const std::string& why) -> Eigen::LLT<Matrix> {
        const std::string msg = std::string(what) + ": " + why;
        if (loss_error) throw LossSpecError(msg);
        throw NumericalError(msg);
    };
    if (!m.allFinite()) return fail("non-finite entries");
    if (!is_symmetric(m)) return fail("not symmetric");
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success) return fail("not positive definite");
    const double dmin = llt.matrixL().toDenseMatrix().diagonal().minCoeff();
    const double dmax = llt.matrixL().toDenseMatrix().diagonal().maxCoeff();
    if (!(dmin > 1e-12 * dmax)) return fail("numerically singular");
    return llt;
}

Matrix symmetric_sqrt(const Matrix& m)
{
    Eigen::SelfAdjointEigenSolver<Matrix> es(m);
    const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

Matrix select_rows(const Matrix& m, const std::vector<Index>& rows)
{
    Matrix out(static_cast<Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
    return out;
}

Vector select(const Vector& v, const std::vector<Index>& idx)
{
    Vector out(static_cast<Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Index>(i)) = v(idx[i]);
    return out;
}

Index numerical_rank(const Matrix& m, double rel_tol)
{
    if (m.size() == 0) return 0;
    Eigen::JacobiSVD<Matrix> svd(m);
    const Vector& s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0) return 0;
    Index r = 0;
    for (Index i = 0; i < s.size(); ++i) {
        if (s(i) > rel_tol * s(0)) ++r;
    }
    return r;
}

}  // namespace icse
