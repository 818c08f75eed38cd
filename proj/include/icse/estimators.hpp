#pragma once

#include "icse/model.hpp"
#include "icse/qp.hpp"

#include <functional>
#include <vector>

namespace icse {

/// r(theta) >= 0 on inequality rows, r(theta) = 0 on equality rows.
struct ConstraintFunction {
    std::function<Vector(const Vector&)> evaluate;
    std::function<Matrix(const Vector&)> jacobian;
    std::vector<bool> equality_mask;

    Index rows() const noexcept { return static_cast<Index>(equality_mask.size()); }
    std::vector<Index> equality_rows() const;
    std::vector<Index> inequality_rows() const;

    /// r(theta) = R theta + r0.
    static ConstraintFunction linear(Matrix R, Vector r0, std::vector<bool> equality_mask);
    /// theta_j >= 0 for j in `inequality`, theta_j = 0 for j in `equality` (0-based).
    static ConstraintFunction sign_restrictions(Index m, const std::vector<Index>& inequality,
                                                const std::vector<Index>& equality = {});
};

/// Central finite-difference check of the Jacobian (step 1e-6 (1 + |theta_j|),
/// tolerance 1e-5 relative) plus a full-row-rank check. Throws NumericalError
/// or RankError.
void validate_constraints(const ConstraintFunction& cons, const Vector& theta);

struct FitOptions {
    VarianceKind variance = VarianceKind::Robust;
};

/// OLS with robust (default) or homoskedastic score variance. Throws
/// NumericalError when cond(X'X) > 1e12.
FitResult fit_unrestricted(const EstimationProblem& problem, const FitOptions& options = {});

struct RestrictedFit {
    FitResult fit;  // theta is the restricted estimate; curvature and variances are the unrestricted ones
    KTSolution kt;  // QP in the displacement delta = theta - theta_hat
    LinearConstraints linearized;
};

/// Minimizes ||y - X theta||^2 over the constraint set linearized at theta_hat
/// (exact for linear constraints).
RestrictedFit fit_restricted(const FitResult& unrestricted, const ConstraintFunction& cons);
RestrictedFit fit_restricted(const EstimationProblem& problem, const ConstraintFunction& cons,
                             const FitOptions& options = {});

/// Least squares with the given inequality rows (indices into the constraint
/// rows) and every equality row holding with equality.
FitResult fit_equality_pattern(const FitResult& unrestricted, const ConstraintFunction& cons,
                               const std::vector<Index>& binding_rows);

/// sqrt(n) r(theta_hat).
Vector localizing_estimate(const FitResult& fit, const ConstraintFunction& cons);

}  // namespace icse
