#pragma once

#include "icse/linalg.hpp"

#include <optional>

namespace icse {

/// Linear regression data for the least-squares criterion
/// Q_n(theta) = -(1/2n) ||y - X theta||^2.
class EstimationProblem {
public:
    const Matrix& design() const noexcept { return design_; }
    const Vector& response() const noexcept { return response_; }
    Index n() const noexcept { return design_.rows(); }
    Index m() const noexcept { return design_.cols(); }

private:
    friend EstimationProblem build_linear_problem(Matrix design, Vector response);
    EstimationProblem(Matrix design, Vector response)
        : design_(std::move(design)), response_(std::move(response)) {}

    Matrix design_;
    Vector response_;
};

/// Validates shapes and column rank (singular values below 1e-10 * max are
/// treated as zero). Throws ShapeError / RankError.
EstimationProblem build_linear_problem(Matrix design, Vector response);

enum class LossRule { Identity, InverseOmega, Custom };

struct LossSpec {
    LossRule rule = LossRule::InverseOmega;
    Matrix custom;  // used only when rule == Custom

    static LossSpec identity() { return {LossRule::Identity, {}}; }
    static LossSpec inverse_omega() { return {LossRule::InverseOmega, {}}; }
    static LossSpec custom_matrix(Matrix w) { return {LossRule::Custom, std::move(w)}; }
};

enum class VarianceKind { Robust, Homoskedastic };

/// Everything downstream needs from an extremum fit: the estimate, the
/// curvature of the criterion, the score variance and the sandwich.
struct FitResult {
    Vector theta;
    Matrix jhat;   // negative Hessian of the criterion, X'X/n
    Matrix vhat;   // score variance
    Matrix omega;  // jhat^-1 vhat jhat^-1
    Index n = 0;
};

/// Builds a FitResult from its ingredients; omega is formed as the symmetrized sandwich.
FitResult make_fit(Vector theta, Matrix jhat, Matrix vhat, Index n);

/// Weight matrix W of the quadratic loss. Throws LossSpecError when the
/// custom matrix (or Omega for InverseOmega) is not SPD.
Matrix loss_matrix(const LossSpec& spec, const FitResult& fit);

/// (a - b)' W (a - b).
double evaluate_loss(const Matrix& W, const Vector& a, const Vector& b);

}  // namespace icse
