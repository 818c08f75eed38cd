#include "icse/qp.hpp"

#include "icse/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace icse {

namespace {

void check_shapes(const QuadraticProblem& problem, const LinearConstraints& cons)
{
    const Index m = problem.curvature.rows();
    if (problem.curvature.cols() != m || m == 0) throw ShapeError("qp: curvature must be square");
    if (problem.center.size() != m) throw ShapeError("qp: center size must match curvature");
    if (cons.jacobian.cols() != m) throw ShapeError("qp: jacobian must have m columns");
    if (cons.intercept.size() != cons.jacobian.rows()) throw ShapeError("qp: intercept size must match jacobian rows");
    if (static_cast<Index>(cons.equality_mask.size()) != cons.jacobian.rows()) {
        throw ShapeError("qp: equality mask size must match jacobian rows");
    }
}

Eigen::LLT<Matrix> factor_curvature(const Matrix& J)
{
    if (!is_symmetric(J, 1e-10)) throw NumericalError("qp: curvature is not symmetric");
    Eigen::LLT<Matrix> llt(J);
    if (llt.info() != Eigen::Success) throw NumericalError("qp: curvature is not positive definite");
    return llt;
}

// Feasibility check used for candidate starting points and brute-force
// candidates, with a relative tolerance that absorbs rounding.
bool is_feasible(const LinearConstraints& cons, const Vector& lambda, double rel)
{
    const Vector slack = cons.intercept + cons.jacobian * lambda;
    for (Index j = 0; j < cons.rows(); ++j) {
        const double tol = rel * (1.0 + std::abs(cons.intercept(j)) +
                                  cons.jacobian.row(j).cwiseAbs().dot(lambda.cwiseAbs()));
        if (cons.is_equality(j) ? std::abs(slack(j)) > tol : slack(j) < -tol) return false;
    }
    return true;
}

struct EqualityStep {
    Vector step;
    Vector mu;
    double magnitude = 0.0;  // size of the terms that cancel in `step`
};

// min 1/2 d'Jd + g'd  s.t.  R_W d = 0.
EqualityStep equality_step(const Eigen::LLT<Matrix>& llt, const Matrix& RW, const Vector& g)
{
    EqualityStep out;
    const Vector jinv_g = llt.solve(g);
    if (RW.rows() == 0) {
        out.step = -jinv_g;
        out.mu = Vector(0);
        out.magnitude = jinv_g.cwiseAbs().maxCoeff();
        return out;
    }
    const Matrix jinv_rt = llt.solve(RW.transpose());
    const Matrix M = RW * jinv_rt;
    Eigen::LDLT<Matrix> ldlt(M);
    const Vector d = ldlt.vectorD().cwiseAbs();
    if (ldlt.info() != Eigen::Success || !(d.minCoeff() > 1e-13 * std::max(1.0, d.maxCoeff()))) {
        throw NumericalError("solve_qp: working-set constraints are linearly dependent");
    }
    out.mu = ldlt.solve(RW * jinv_g);
    if (RW.rows() == RW.cols()) {
        out.step = Vector::Zero(RW.cols());
    } else {
        out.step = jinv_rt * out.mu - jinv_g;
    }
    out.magnitude = std::max(jinv_g.cwiseAbs().maxCoeff(), (jinv_rt * out.mu).cwiseAbs().maxCoeff());
    return out;
}

}  // namespace

double QuadraticProblem::objective(const Vector& lambda) const
{
    const Vector d = lambda - center;
    return 0.5 * d.dot(curvature * d);
}

std::vector<Index> LinearConstraints::equality_rows() const
{
    std::vector<Index> out;
    for (Index j = 0; j < rows(); ++j) {
        if (is_equality(j)) out.push_back(j);
    }
    return out;
}

std::vector<Index> LinearConstraints::inequality_rows() const
{
    std::vector<Index> out;
    for (Index j = 0; j < rows(); ++j) {
        if (!is_equality(j)) out.push_back(j);
    }
    return out;
}

LinearConstraints LinearConstraints::inequalities(Matrix R, Vector c)
{
    LinearConstraints out{std::move(R), std::move(c), {}};
    out.equality_mask.assign(static_cast<std::size_t>(out.jacobian.rows()), false);
    return out;
}

std::vector<Index> KTSolution::binding_inequalities(const LinearConstraints& cons) const
{
    std::vector<Index> out;
    for (Index j : active) {
        if (!cons.is_equality(j)) out.push_back(j);
    }
    return out;
}

double KTResiduals::max() const
{
    return std::max({stationarity, feasibility, slackness, dual_feasibility});
}

EqualityQpSolution solve_equality_qp(const Eigen::LLT<Matrix>& jfactor, const Vector& center,
                                     const Matrix& R_S, const Vector& c_S)
{
    EqualityQpSolution out;
    if (R_S.rows() == 0) {
        out.lambda = center;
        out.mu = Vector(0);
        return out;
    }
    const Matrix jinv_rt = jfactor.solve(R_S.transpose());
    const Matrix M = R_S * jinv_rt;
    Eigen::LDLT<Matrix> ldlt(M);
    const Vector d = ldlt.vectorD().cwiseAbs();
    if (ldlt.info() != Eigen::Success || !(d.minCoeff() > 1e-13 * std::max(1.0, d.maxCoeff()))) {
        throw RankError("solve_equality_qp: constraint rows are linearly dependent");
    }
    out.mu = ldlt.solve(-c_S - R_S * center);
    out.lambda = center + jinv_rt * out.mu;
    // one step of iterative refinement on the constraint residual
    const Vector delta = ldlt.solve(c_S + R_S * out.lambda);
    out.lambda -= jinv_rt * delta;
    out.mu -= delta;
    return out;
}

KTSolution solve_qp(const QuadraticProblem& problem, const LinearConstraints& cons, const QpOptions& options)
{
    check_shapes(problem, cons);
    const auto llt = factor_curvature(problem.curvature);
    const Matrix& R = cons.jacobian;
    const Vector& c = cons.intercept;
    const Vector& Z = problem.center;
    const Index m = Z.size();
    const Index p = cons.rows();
    const std::vector<Index> eq = cons.equality_rows();

    // Starting point and working set.
    Vector lambda;
    std::vector<Index> working;
    auto try_start = [&](std::vector<Index> rows) {
        std::sort(rows.begin(), rows.end());
        rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
        EqualityQpSolution s;
        try {
            s = solve_equality_qp(llt, Z, select_rows(R, rows), select(c, rows));
        } catch (const RankError&) {
            return false;
        }
        if (!is_feasible(cons, s.lambda, 1e-9)) return false;
        lambda = rows.empty() ? Z : s.lambda;
        working = std::move(rows);
        return true;
    };

    bool started = false;
    if (options.warm_start) {
        std::vector<Index> rows = eq;
        for (Index j : *options.warm_start) {
            if (j < 0 || j >= p) throw ShapeError("solve_qp: warm-start index out of range");
            if (!cons.is_equality(j)) rows.push_back(j);
        }
        started = try_start(rows);
    }
    if (!started) started = try_start(eq);
    if (!started) {
        // Closest point to Z that keeps satisfied inequalities satisfied and
        // puts violated ones (and all equalities) exactly on their boundary.
        const Vector slack_z = c + R * Z;
        Vector target(p);
        std::vector<Index> rows;
        for (Index j = 0; j < p; ++j) {
            if (cons.is_equality(j)) {
                target(j) = 0.0;
                rows.push_back(j);
            } else if (slack_z(j) > 0.0) {
                target(j) = slack_z(j);
            } else {
                target(j) = 0.0;
                rows.push_back(j);
            }
        }
        const Vector rhs = target - slack_z;
        const Matrix Rt = R.transpose();
        const Vector y = (R * Rt).completeOrthogonalDecomposition().solve(rhs);
        lambda = Z + Rt * y;
        const Vector slack = c + R * lambda;
        for (Index j : eq) {
            if (std::abs(slack(j)) > 1e-8 * (1.0 + std::abs(c(j)))) {
                throw NumericalError("solve_qp: constraint rows are too ill-conditioned to satisfy the equalities");
            }
        }
        if (!is_feasible(cons, lambda, 1e-9)) {
            throw NumericalError("solve_qp: could not construct a feasible start (rank-deficient constraints)");
        }
        working = rows;
    }

    std::vector<bool> in_working(static_cast<std::size_t>(p), false);
    for (Index j : working) in_working[static_cast<std::size_t>(j)] = true;

    const int cap = static_cast<int>(100 * (p + m));
    KTSolution sol;
    Index just_dropped = -1;
    bool full_step = false;  // last iteration reached the working-set minimizer
    for (int iter = 0; iter <= cap; ++iter) {
        if (iter == cap) throw NumericalError("solve_qp: iteration cap reached (cycling?)");
        const Matrix RW = select_rows(R, working);
        const Vector g = problem.curvature * (lambda - Z);
        const EqualityStep st = equality_step(llt, RW, g);
        const double scale = 1.0 + lambda.cwiseAbs().maxCoeff() + Z.cwiseAbs().maxCoeff() + st.magnitude;

        if (full_step || st.step.cwiseAbs().maxCoeff() <= 1e-12 * scale) {
            full_step = false;
            // Stationary on the working set: check inequality multipliers.
            const double mu_tol = 1e-12 * (1.0 + (st.mu.size() ? st.mu.cwiseAbs().maxCoeff() : 0.0));
            Index drop = -1;
            double most_negative = -mu_tol;
            for (std::size_t k = 0; k < working.size(); ++k) {
                const Index j = working[k];
                if (cons.is_equality(j)) continue;
                if (st.mu(static_cast<Index>(k)) < most_negative) {
                    most_negative = st.mu(static_cast<Index>(k));
                    drop = static_cast<Index>(k);
                }
            }
            if (drop < 0) {
                sol.mu = Vector::Zero(p);
                for (std::size_t k = 0; k < working.size(); ++k) sol.mu(working[k]) = st.mu(static_cast<Index>(k));
                sol.iterations = iter;
                break;
            }
            just_dropped = working[static_cast<std::size_t>(drop)];
            in_working[static_cast<std::size_t>(just_dropped)] = false;
            working.erase(working.begin() + drop);
            continue;
        }

        double alpha = 1.0;
        Index blocking = -1;
        const Vector slack = c + R * lambda;
        const double step_norm = st.step.norm();
        for (Index j = 0; j < p; ++j) {
            // The row released last moves away from its bound in exact arithmetic.
            if (cons.is_equality(j) || in_working[static_cast<std::size_t>(j)] || j == just_dropped) continue;
            const double rd = R.row(j).dot(st.step);
            if (rd >= -1e-14 * R.row(j).norm() * step_norm) continue;
            const double ratio = std::max(0.0, slack(j)) / -rd;
            if (ratio < alpha) {
                alpha = ratio;
                blocking = j;
            }
        }
        if (blocking < 0 && working.empty()) {
            lambda = Z;
        } else {
            lambda += alpha * st.step;
        }
        just_dropped = -1;
        full_step = blocking < 0;
        if (blocking >= 0) {
            working.insert(std::upper_bound(working.begin(), working.end(), blocking), blocking);
            in_working[static_cast<std::size_t>(blocking)] = true;
        }
    }

    if (!lambda.allFinite()) throw NumericalError("solve_qp: non-finite iterate");
    if (!working.empty()) {
        // Re-solve on the final working set to remove drift accumulated over the steps.
        const EqualityQpSolution polished =
            solve_equality_qp(llt, Z, select_rows(R, working), select(c, working));
        Vector mu = Vector::Zero(p);
        for (std::size_t k = 0; k < working.size(); ++k) mu(working[k]) = polished.mu(static_cast<Index>(k));
        bool accept = is_feasible(cons, polished.lambda, 1e-9);
        for (Index j : working) accept = accept && (cons.is_equality(j) || mu(j) >= -1e-9);
        if (accept) {
            lambda = polished.lambda;
            sol.mu = mu;
        }
    }
    sol.lambda = lambda;
    sol.active = working;
    sol.objective = problem.objective(lambda);
    return sol;
}

KTSolution brute_force_qp(const QuadraticProblem& problem, const LinearConstraints& cons)
{
    check_shapes(problem, cons);
    const auto llt = factor_curvature(problem.curvature);
    const std::vector<Index> eq = cons.equality_rows();
    const std::vector<Index> ineq = cons.inequality_rows();
    if (ineq.size() > 20) throw CapacityError("brute_force_qp: more than 20 inequality rows");

    struct Candidate {
        KTSolution sol;
        bool dual_feasible = false;
    };
    std::vector<Candidate> feasible;
    const std::uint64_t subsets = std::uint64_t{1} << ineq.size();
    for (std::uint64_t mask = 0; mask < subsets; ++mask) {
        std::vector<Index> rows = eq;
        for (std::size_t i = 0; i < ineq.size(); ++i) {
            if (mask & (std::uint64_t{1} << i)) rows.push_back(ineq[i]);
        }
        std::sort(rows.begin(), rows.end());
        EqualityQpSolution s;
        try {
            s = solve_equality_qp(llt, problem.center, select_rows(cons.jacobian, rows), select(cons.intercept, rows));
        } catch (const RankError&) {
            continue;
        }
        if (!is_feasible(cons, s.lambda, 1e-9)) continue;
        Candidate cand;
        cand.sol.lambda = s.lambda;
        cand.sol.mu = Vector::Zero(cons.rows());
        cand.dual_feasible = true;
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const double mu = s.mu(static_cast<Index>(k));
            cand.sol.mu(rows[k]) = mu;
            if (!cons.is_equality(rows[k]) && mu < -1e-9) cand.dual_feasible = false;
        }
        cand.sol.active = rows;
        cand.sol.objective = problem.objective(s.lambda);
        feasible.push_back(std::move(cand));
    }
    if (feasible.empty()) {
        if (!eq.empty()) throw InfeasibleError("brute_force_qp: no feasible active set");
        throw NumericalError("brute_force_qp: no feasible active set");
    }
    double best = std::numeric_limits<double>::infinity();
    for (const auto& cand : feasible) best = std::min(best, cand.sol.objective);
    const double tie = best + 1e-10 * (1.0 + std::abs(best));
    const Candidate* chosen = nullptr;
    for (const auto& cand : feasible) {
        if (cand.sol.objective > tie) continue;
        if (cand.dual_feasible) {
            chosen = &cand;
            break;
        }
        if (!chosen) chosen = &cand;
    }
    return chosen->sol;
}

KTResiduals kt_residuals(const KTSolution& sol, const QuadraticProblem& problem, const LinearConstraints& cons)
{
    KTResiduals r;
    const Vector stat = problem.curvature * (sol.lambda - problem.center) - cons.jacobian.transpose() * sol.mu;
    r.stationarity = stat.size() ? stat.cwiseAbs().maxCoeff() : 0.0;
    const Vector slack = cons.intercept + cons.jacobian * sol.lambda;
    for (Index j = 0; j < cons.rows(); ++j) {
        if (cons.is_equality(j)) {
            r.feasibility = std::max(r.feasibility, std::abs(slack(j)));
        } else {
            r.feasibility = std::max(r.feasibility, std::max(0.0, -slack(j)));
            r.slackness = std::max(r.slackness, std::abs(sol.mu(j) * slack(j)));
            r.dual_feasibility = std::max(r.dual_feasibility, std::max(0.0, -sol.mu(j)));
        }
    }
    return r;
}

}  // namespace icse
