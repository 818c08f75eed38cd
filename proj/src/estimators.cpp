#include "icse/estimators.hpp"

#include "icse/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace icse {

std::vector<Index> ConstraintFunction::equality_rows() const
{
    std::vector<Index> out;
    for (Index j = 0; j < rows(); ++j) {
        if (equality_mask[static_cast<std::size_t>(j)]) out.push_back(j);
    }
    return out;
}

std::vector<Index> ConstraintFunction::inequality_rows() const
{
    std::vector<Index> out;
    for (Index j = 0; j < rows(); ++j) {
        if (!equality_mask[static_cast<std::size_t>(j)]) out.push_back(j);
    }
    return out;
}

ConstraintFunction ConstraintFunction::linear(Matrix R, Vector r0, std::vector<bool> equality_mask)
{
    if (R.rows() != r0.size() || static_cast<std::size_t>(R.rows()) != equality_mask.size()) {
        throw ShapeError("ConstraintFunction::linear: R, r0 and mask disagree on the row count");
    }
    ConstraintFunction out;
    const Index m = R.cols();
    out.evaluate = [R, r0, m](const Vector& theta) -> Vector {
        if (theta.size() != m) throw ShapeError("constraint: theta has wrong size");
        return R * theta + r0;
    };
    out.jacobian = [R](const Vector&) -> Matrix { return R; };
    out.equality_mask = std::move(equality_mask);
    return out;
}

ConstraintFunction ConstraintFunction::sign_restrictions(Index m, const std::vector<Index>& inequality,
                                                         const std::vector<Index>& equality)
{
    const Index p = static_cast<Index>(inequality.size() + equality.size());
    Matrix R = Matrix::Zero(p, m);
    std::vector<bool> mask;
    Index row = 0;
    for (Index j : inequality) {
        if (j < 0 || j >= m) throw ShapeError("sign_restrictions: index out of range");
        R(row++, j) = 1.0;
        mask.push_back(false);
    }
    for (Index j : equality) {
        if (j < 0 || j >= m) throw ShapeError("sign_restrictions: index out of range");
        R(row++, j) = 1.0;
        mask.push_back(true);
    }
    return linear(std::move(R), Vector::Zero(p), std::move(mask));
}

void validate_constraints(const ConstraintFunction& cons, const Vector& theta)
{
    const Vector r = cons.evaluate(theta);
    const Matrix R = cons.jacobian(theta);
    if (r.size() != cons.rows() || R.rows() != cons.rows() || R.cols() != theta.size()) {
        throw ShapeError("constraints: r(theta) or R(theta) has the wrong shape");
    }
    if (cons.rows() == 0) throw ShapeError("constraints: need at least one row");
    const double scale = std::max(1.0, R.cwiseAbs().maxCoeff());
    for (Index j = 0; j < theta.size(); ++j) {
        const double h = 1e-6 * (1.0 + std::abs(theta(j)));
        Vector up = theta, down = theta;
        up(j) += h;
        down(j) -= h;
        const Vector fd = (cons.evaluate(up) - cons.evaluate(down)) / (2.0 * h);
        const double err = (fd - R.col(j)).cwiseAbs().maxCoeff();
        if (err > 1e-5 * scale) {
            throw NumericalError("constraints: jacobian column " + std::to_string(j) +
                                 " disagrees with finite differences (error " + std::to_string(err) + ")");
        }
    }
    if (numerical_rank(R, 1e-10) < R.rows()) {
        throw RankError("constraints: jacobian does not have full row rank");
    }
}

FitResult fit_unrestricted(const EstimationProblem& problem, const FitOptions& options)
{
    const Matrix& X = problem.design();
    const Vector& y = problem.response();
    const double n = static_cast<double>(problem.n());
    const Matrix xtx = X.transpose() * X;
    Eigen::SelfAdjointEigenSolver<Matrix> es(xtx, Eigen::EigenvaluesOnly);
    const double emin = es.eigenvalues().minCoeff();
    const double emax = es.eigenvalues().maxCoeff();
    if (!(emin > 0.0) || emax / emin > 1e12) {
        throw NumericalError("fit_unrestricted: X'X is ill-conditioned (condition number " +
                             std::to_string(emin > 0.0 ? emax / emin : INFINITY) + ")");
    }
    const Eigen::LDLT<Matrix> ldlt(xtx);
    Vector theta = ldlt.solve(X.transpose() * y);
    const Vector resid = y - X * theta;

    Matrix jhat = xtx / n;
    Matrix vhat;
    if (options.variance == VarianceKind::Robust) {
        vhat = X.transpose() * resid.array().square().matrix().asDiagonal() * X / n;
    } else {
        const double sigma2 = resid.squaredNorm() / (n - static_cast<double>(problem.m()));
        vhat = sigma2 * jhat;
    }
    vhat = 0.5 * (vhat + vhat.transpose());
    return make_fit(std::move(theta), std::move(jhat), std::move(vhat), problem.n());
}

RestrictedFit fit_restricted(const FitResult& unrestricted, const ConstraintFunction& cons)
{
    const Vector& theta_hat = unrestricted.theta;
    validate_constraints(cons, theta_hat);

    RestrictedFit out;
    out.linearized.jacobian = cons.jacobian(theta_hat);
    out.linearized.intercept = cons.evaluate(theta_hat);
    out.linearized.equality_mask = cons.equality_mask;

    // Displacement form: delta = theta - theta_hat minimizes 1/2 delta' J delta,
    // which is ||y - X theta||^2 / (2n) up to a constant.
    const QuadraticProblem qp{unrestricted.jhat, Vector::Zero(theta_hat.size())};
    out.kt = solve_qp(qp, out.linearized);
    out.fit = unrestricted;
    out.fit.theta = theta_hat + out.kt.lambda;
    return out;
}

RestrictedFit fit_restricted(const EstimationProblem& problem, const ConstraintFunction& cons,
                             const FitOptions& options)
{
    return fit_restricted(fit_unrestricted(problem, options), cons);
}

FitResult fit_equality_pattern(const FitResult& unrestricted, const ConstraintFunction& cons,
                               const std::vector<Index>& binding_rows)
{
    std::vector<Index> rows = cons.equality_rows();
    for (Index j : binding_rows) {
        if (j < 0 || j >= cons.rows()) throw ShapeError("fit_equality_pattern: row index out of range");
        if (!cons.equality_mask[static_cast<std::size_t>(j)]) rows.push_back(j);
    }
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());

    FitResult out = unrestricted;
    if (rows.empty()) return out;
    const Vector& theta_hat = unrestricted.theta;
    const Matrix R = select_rows(cons.jacobian(theta_hat), rows);
    const Vector r = select(cons.evaluate(theta_hat), rows);
    const Eigen::LLT<Matrix> llt(unrestricted.jhat);
    const EqualityQpSolution s = solve_equality_qp(llt, Vector::Zero(theta_hat.size()), R, r);
    out.theta = theta_hat + s.lambda;
    return out;
}

Vector localizing_estimate(const FitResult& fit, const ConstraintFunction& cons)
{
    return std::sqrt(static_cast<double>(fit.n)) * cons.evaluate(fit.theta);
}

}  // namespace icse
