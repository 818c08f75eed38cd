#include "icse/shrinkage.hpp"

#include "icse/errors.hpp"
#include "icse/orthant.hpp"
#include "icse/parallel.hpp"

#include <algorithm>
#include <string>

namespace icse {

std::vector<BindingPattern> enumerate_patterns(Index p, Index equality_rows)
{
    if (p < 0 || equality_rows < 0) throw ShapeError("enumerate_patterns: negative row count");
    if (p + equality_rows > 20) {
        throw CapacityError("enumerate_patterns: " + std::to_string(p + equality_rows) +
                            " constraint rows exceed the limit of 20");
    }
    const std::uint32_t total = std::uint32_t{1} << p;
    std::vector<BindingPattern> out;
    out.reserve(total);
    for (std::uint32_t mask = 0; mask < total; ++mask) {
        BindingPattern pat;
        pat.mask = mask;
        for (Index k = 0; k < p; ++k) {
            if (mask & (std::uint32_t{1} << k)) pat.indices.push_back(k);
        }
        pat.count = static_cast<Index>(pat.indices.size()) + equality_rows;
        out.push_back(std::move(pat));
    }
    return out;
}

bool pattern_included(const BindingPattern& pattern)
{
    return pattern.count > 0;
}

Matrix projection_matrix(const Matrix& J, const Matrix& R_iota)
{
    require_square(J, "projection_matrix: J");
    if (R_iota.cols() != J.rows()) throw ShapeError("projection_matrix: R has the wrong column count");
    if (R_iota.rows() == 0) return Matrix::Zero(J.rows(), J.cols());
    if (numerical_rank(R_iota) < R_iota.rows()) throw RankError("projection_matrix: R is not full row rank");
    const Eigen::LLT<Matrix> jl = require_spd(J, "projection_matrix: J");
    const Matrix JinvRt = jl.solve(R_iota.transpose());
    const Matrix M = R_iota * JinvRt;
    const Eigen::LDLT<Matrix> ml(M);
    return JinvRt * ml.solve(R_iota);
}

AStats pattern_A_stats(const Matrix& W, const Matrix& Omega, const Matrix& J, const Matrix& R_iota)
{
    require_spd(W, "loss matrix W", true);
    require_spd(Omega, "Omega", true);
    if (W.rows() != Omega.rows() || W.rows() != J.rows()) throw ShapeError("pattern_A_stats: size mismatch");
    const Matrix P = projection_matrix(J, R_iota);
    const Matrix Wh = symmetric_sqrt(W);
    const Matrix A = Wh * Omega * P.transpose() * Wh;
    AStats out;
    out.trace = A.trace();
    Eigen::EigenSolver<Matrix> es(A, false);
    out.phimax = es.eigenvalues().real().maxCoeff();
    return out;
}

KtLaw kt_distribution(const Matrix& J, const Matrix& Omega, const Matrix& R, const Vector& c_hat)
{
    require_square(J, "kt_distribution: J");
    if (R.cols() != J.rows() || c_hat.size() != R.rows() || Omega.rows() != J.rows()) {
        throw ShapeError("kt_distribution: non-conformable inputs");
    }
    if (numerical_rank(R) < R.rows()) throw RankError("kt_distribution: R is not full row rank");
    const Eigen::LLT<Matrix> jl = require_spd(J, "kt_distribution: J");
    const Matrix M = R * jl.solve(R.transpose());
    const Eigen::LDLT<Matrix> ml(M);
    const Matrix Minv = ml.solve(Matrix::Identity(M.rows(), M.cols()));
    KtLaw out;
    out.psi = -(Minv * c_hat);
    const Matrix xi = Minv * R * Omega * R.transpose() * Minv;
    out.xi = 0.5 * (xi + xi.transpose());
    return out;
}

std::vector<double> gamma_weights(const std::vector<bool>& included, const std::vector<double>& probabilities,
                                  const std::vector<double>& expected_losses, double loss_floor)
{
    if (included.size() != probabilities.size() || included.size() != expected_losses.size()) {
        throw ShapeError("gamma_weights: lists are not aligned");
    }
    std::vector<double> out(included.size(), 0.0);
    double total = 0.0;
    for (std::size_t k = 0; k < included.size(); ++k) {
        if (!included[k]) continue;
        if (probabilities[k] < 0.0 || probabilities[k] > 1.0 || expected_losses[k] < 0.0) {
            throw ShapeError("gamma_weights: probability outside [0,1] or negative loss");
        }
        out[k] = probabilities[k] / std::max(expected_losses[k], loss_floor);
        total += out[k];
    }
    if (!(total > 0.0)) throw DegenerateWeightsError("gamma_weights: every numerator is zero");
    for (double& g : out) g /= total;
    return out;
}

double feasible_tau(const std::vector<PatternStats>& stats)
{
    double tau = 0.0;
    for (const auto& s : stats) {
        if (s.included) tau += (s.a_trace - 2.0 * s.a_phimax) * s.gamma;
    }
    return std::max(0.0, tau);
}

double shrinkage_weight(double tau, double scaled_loss)
{
    if (scaled_loss <= 0.0) return 0.0;
    return std::max(0.0, 1.0 - tau / scaled_loss);
}

ShrinkageResult fit_icse(const FitResult& unrestricted, const ConstraintFunction& cons,
                         const IcseOptions& options)
{
    const Vector& theta_hat = unrestricted.theta;
    validate_constraints(cons, theta_hat);
    const double n = static_cast<double>(unrestricted.n);

    ShrinkageResult out;
    out.theta_hat = theta_hat;
    out.weight_matrix = loss_matrix(options.loss, unrestricted);
    out.c_hat = localizing_estimate(unrestricted, cons);
    out.theta_tilde = fit_restricted(unrestricted, cons).fit.theta;
    out.scaled_loss = n * evaluate_loss(out.weight_matrix, theta_hat, out.theta_tilde);

    const Matrix R = cons.jacobian(theta_hat);
    const Matrix& J = unrestricted.jhat;
    const Matrix& Omega = unrestricted.omega;
    const Matrix& W = out.weight_matrix;
    const std::vector<Index> eq = cons.equality_rows();
    const std::vector<Index> ineq = cons.inequality_rows();
    const Index p = static_cast<Index>(ineq.size());

    const auto patterns = enumerate_patterns(p, static_cast<Index>(eq.size()));

    std::vector<ProbabilityEstimate> probs;
    if (p == 0) {
        probs.push_back({1.0, 0.0});
    } else {
        const KtLaw law = kt_distribution(J, Omega, R, out.c_hat);
        const Vector psi = select(law.psi, ineq);
        const Matrix xi = select_rows(select_rows(law.xi, ineq).transpose(), ineq);
        probs = all_pattern_probabilities(psi, xi, options.orthant_draws, options.seed, options.threads);
    }

    const Matrix Wh = symmetric_sqrt(W);
    require_spd(Omega, "Omega", true);

    std::vector<PatternStats> table(patterns.size());
    parallel_for(patterns.size(), options.threads, [&](std::size_t k) {
        PatternStats& s = table[k];
        s.pattern = patterns[k];
        s.probability = probs[k].estimate;
        s.probability_se = probs[k].std_error;
        std::vector<Index> rows = eq;
        for (Index j : s.pattern.indices) rows.push_back(ineq[static_cast<std::size_t>(j)]);
        std::sort(rows.begin(), rows.end());
        const Index m = theta_hat.size();
        if (rows.empty()) {
            s.projection = Matrix::Zero(m, m);
            s.h_offset = Vector::Zero(m);
            return;
        }
        const Matrix R_iota = select_rows(R, rows);
        s.projection = projection_matrix(J, R_iota);
        const Matrix A = Wh * Omega * s.projection.transpose() * Wh;
        s.a_trace = A.trace();
        Eigen::EigenSolver<Matrix> es(A, false);
        s.a_phimax = es.eigenvalues().real().maxCoeff();
        const Vector c_iota = select(out.c_hat, rows);
        const Vector h = R_iota.transpose() * (R_iota * R_iota.transpose()).ldlt().solve(c_iota);
        s.h_offset = s.projection * h;
        std::vector<Index> binding;
        for (Index j : s.pattern.indices) binding.push_back(ineq[static_cast<std::size_t>(j)]);
        const Vector theta_iota = fit_equality_pattern(unrestricted, cons, binding).theta;
        s.expected_loss = n * evaluate_loss(W, theta_hat, theta_iota);
    });

    const double loss_floor = 1e-8 * (W * Omega).trace();
    std::vector<double> probabilities, losses;
    std::vector<bool> included, unpruned;
    for (const auto& s : table) {
        probabilities.push_back(s.probability);
        losses.push_back(s.expected_loss);
        unpruned.push_back(pattern_included(s.pattern));
        included.push_back(unpruned.back() && s.probability >= options.prune_below);
    }
    std::vector<double> gammas;
    try {
        gammas = gamma_weights(included, probabilities, losses, loss_floor);
    } catch (const DegenerateWeightsError&) {
        included = unpruned;
        try {
            gammas = gamma_weights(included, probabilities, losses, loss_floor);
        } catch (const DegenerateWeightsError&) {
            gammas.assign(table.size(), 0.0);
        }
    }
    for (std::size_t k = 0; k < table.size(); ++k) {
        table[k].included = included[k];
        table[k].gamma = gammas[k];
    }

    out.tau_star = feasible_tau(table);
    out.weight = shrinkage_weight(out.tau_star, out.scaled_loss);
    out.combined = out.weight * theta_hat + (1.0 - out.weight) * out.theta_tilde;
    out.pattern_table = std::move(table);
    return out;
}

ShrinkageResult fit_icse(const EstimationProblem& problem, const ConstraintFunction& cons,
                         const IcseOptions& options)
{
    return fit_icse(fit_unrestricted(problem, options.fit), cons, options);
}

}  // namespace icse
