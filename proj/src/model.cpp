#include "icse/model.hpp"

#include "icse/errors.hpp"

#include <algorithm>
#include <string>

namespace icse {

EstimationProblem build_linear_problem(Matrix design, Vector response)
{
    if (design.rows() != response.size()) {
        throw ShapeError("build_linear_problem: design has " + std::to_string(design.rows()) +
                         " rows but response has " + std::to_string(response.size()) + " entries");
    }
    if (design.cols() < 1 || design.rows() <= design.cols()) {
        throw ShapeError("build_linear_problem: need n > m >= 1, got n=" + std::to_string(design.rows()) +
                         ", m=" + std::to_string(design.cols()));
    }
    if (!design.allFinite() || !response.allFinite()) {
        throw ShapeError("build_linear_problem: non-finite data");
    }
    const Index rank = numerical_rank(design, 1e-10);
    if (rank < design.cols()) {
        throw RankError("build_linear_problem: design has rank " + std::to_string(rank) + " < " +
                        std::to_string(design.cols()) + " columns");
    }
    return EstimationProblem(std::move(design), std::move(response));
}

FitResult make_fit(Vector theta, Matrix jhat, Matrix vhat, Index n)
{
    FitResult fit;
    const Eigen::LDLT<Matrix> ldlt(jhat);
    const Matrix jinv = ldlt.solve(Matrix::Identity(jhat.rows(), jhat.cols()));
    Matrix omega = jinv * vhat * jinv;
    fit.omega = 0.5 * (omega + omega.transpose());
    fit.theta = std::move(theta);
    fit.jhat = std::move(jhat);
    fit.vhat = std::move(vhat);
    fit.n = n;
    return fit;
}

Matrix loss_matrix(const LossSpec& spec, const FitResult& fit)
{
    const Index m = fit.theta.size();
    switch (spec.rule) {
    case LossRule::Identity:
        return Matrix::Identity(m, m);
    case LossRule::InverseOmega: {
        const auto llt = require_spd(fit.omega, "loss_matrix(InverseOmega): Omega", true);
        Matrix w = llt.solve(Matrix::Identity(m, m));
        return 0.5 * (w + w.transpose());
    }
    case LossRule::Custom:
        if (spec.custom.rows() != m || spec.custom.cols() != m) {
            throw LossSpecError("loss_matrix: custom matrix must be " + std::to_string(m) + "x" +
                                std::to_string(m));
        }
        require_spd(spec.custom, "loss_matrix(Custom)", true);
        return spec.custom;
    }
    throw LossSpecError("loss_matrix: unknown rule");
}

double evaluate_loss(const Matrix& W, const Vector& a, const Vector& b)
{
    if (W.rows() != W.cols() || a.size() != b.size() || W.rows() != a.size()) {
        throw ShapeError("evaluate_loss: non-conformable arguments");
    }
    const Vector d = a - b;
    return std::max(0.0, d.dot(W * d));
}

}  // namespace icse
