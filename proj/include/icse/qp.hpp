#pragma once

#include "icse/linalg.hpp"

#include <optional>
#include <vector>

namespace icse {

/// q(lambda) = 1/2 (lambda - Z)' J (lambda - Z) with J SPD.
struct QuadraticProblem {
    Matrix curvature;  // J
    Vector center;     // Z

    double objective(const Vector& lambda) const;
};

/// Rows j with equality_mask[j] require c_j + R_j lambda = 0, the others
/// c_j + R_j lambda >= 0.
struct LinearConstraints {
    Matrix jacobian;   // R, p x m
    Vector intercept;  // c, p
    std::vector<bool> equality_mask;

    Index rows() const noexcept { return jacobian.rows(); }
    bool is_equality(Index j) const { return equality_mask[static_cast<std::size_t>(j)]; }
    std::vector<Index> equality_rows() const;
    std::vector<Index> inequality_rows() const;

    /// All-inequality constraints c + R lambda >= 0.
    static LinearConstraints inequalities(Matrix R, Vector c);
};

struct KTSolution {
    Vector lambda;
    Vector mu;                  // one multiplier per constraint row, zero when inactive
    std::vector<Index> active;  // working set at termination, ascending (includes equality rows)
    double objective = 0.0;
    int iterations = 0;

    /// Inequality rows in the active set, ascending.
    std::vector<Index> binding_inequalities(const LinearConstraints& cons) const;
};

struct QpOptions {
    /// Initial working set of inequality rows, used when its equality-constrained
    /// minimizer is feasible.
    std::optional<std::vector<Index>> warm_start;
};

/// Primal active-set solver. Throws ShapeError, InfeasibleError, NumericalError.
KTSolution solve_qp(const QuadraticProblem& problem, const LinearConstraints& cons,
                    const QpOptions& options = {});

/// Enumerates every subset of inequality rows (at most 20) and solves each
/// equality-constrained problem in closed form. Test oracle for solve_qp.
KTSolution brute_force_qp(const QuadraticProblem& problem, const LinearConstraints& cons);

struct KTResiduals {
    double stationarity = 0.0;
    double feasibility = 0.0;
    double slackness = 0.0;
    double dual_feasibility = 0.0;

    double max() const;
};

KTResiduals kt_residuals(const KTSolution& sol, const QuadraticProblem& problem,
                         const LinearConstraints& cons);

/// Minimizer of q over {c_S + R_S lambda = 0} and its multipliers (closed form).
struct EqualityQpSolution {
    Vector lambda;
    Vector mu;  // one per row of S
};
EqualityQpSolution solve_equality_qp(const Eigen::LLT<Matrix>& jfactor, const Vector& center,
                                     const Matrix& R_S, const Vector& c_S);

}  // namespace icse
