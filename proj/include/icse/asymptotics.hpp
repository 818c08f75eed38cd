#pragma once

#include "icse/linalg.hpp"
#include "icse/shrinkage.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace icse {

/// Limit experiment: G ~ N(0, V), Z = J^-1 G, constraints c + R lambda >= 0.
struct LimitConfig {
    Matrix J;
    Matrix V;
    Matrix R;
    Vector localizer;  // c
    Matrix W;
    double tau = 0.0;
    std::uint64_t draws = 100000;
    std::uint64_t seed = 0;
    double zeta = 1e6;
    unsigned threads = 1;

    Matrix omega() const;
    void validate() const;
};

struct LimitDraws {
    Matrix z;             // draws x m
    Matrix lambda_tilde;  // draws x m
    Vector xi;
    Vector weight;
    Matrix psi_star;      // draws x m
    std::vector<std::uint32_t> pattern_id;  // bit j set iff constraint j binds
    double tau = 0.0;

    Index size() const noexcept { return z.rows(); }
};

LimitDraws draw_limit(const LimitConfig& cfg);

/// Recomputes weight and psi_star for another tau from the same draws.
LimitDraws with_tau(LimitDraws draws, double tau);

struct RiskEstimate {
    double risk = 0.0;
    double se = 0.0;
    double trimmed_risk = 0.0;
};

/// Mean of psi*' W psi* with its MC standard error; the trimmed version caps
/// each draw's loss at zeta.
RiskEstimate estimate_risk(const LimitDraws& draws, const Matrix& W, double zeta);

/// Per-pattern simulation truth: frequencies, E[1/xi] over draws on the
/// pattern (xi floored at 1e-12), A statistics and gamma. Patterns are
/// indexed by mask; the empty pattern is never included.
std::vector<PatternStats> simulation_truth_stats(const LimitDraws& draws, const LimitConfig& cfg);

/// sum (tr A - 2 phimax A) gamma over included patterns (not clamped).
double optimal_tau(const std::vector<PatternStats>& stats);
/// sum 2 (tr A - 2 phimax A) gamma: upper end of the dominance interval.
double tau_upper_bound(const std::vector<PatternStats>& stats);
/// sum p_iota gamma over included patterns.
double expected_binding_count(const std::vector<PatternStats>& stats);

/// tr(W Omega) - tau sum E[(2 (tr A - 2 phimax A) - tau) / xi] P over included patterns.
double risk_bound(double tau, double trace_w_omega, const std::vector<PatternStats>& stats);

struct PatternMoments {
    std::uint32_t mask = 0;
    double probability = 0.0;
    Eigen::Vector2d lambda_mean = Eigen::Vector2d::Zero();  // E[lambda_tilde | pattern]; NaN if probability is 0
};

/// Sign restrictions in two dimensions (R = I2): the four-branch law of
/// lambda_tilde, with pattern probabilities and conditional means computed by
/// adaptive quadrature over the multiplier law N(-J c, V).
std::array<PatternMoments, 4> closed_form_2d(const Matrix& J, const Matrix& V, const Vector& c);

/// Bivariate normal upper-orthant style probability P(s1 X1 > 0, s2 X2 > 0)
/// for X ~ N(mean, cov), signs s in {+1, -1}.
double bivariate_quadrant_probability(const Eigen::Vector2d& mean, const Eigen::Matrix2d& cov, int s1, int s2);

struct SteinCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    double lhs_se = 0.0;
    double rhs_se = 0.0;
    double diff_se = 0.0;
    double discrepancy = 0.0;  // |lhs - rhs| in units of diff_se
};

/// E[eta(Z + h)' K Z] versus E tr(D eta(Z + h) V K') for Z ~ N(0, V),
/// eta(x) = x / (x' B x), by defensive importance sampling. Needs m >= 3.
SteinCheck steins_identity_check(const Matrix& K, const Vector& h, const Matrix& V, const Matrix& B,
                                 std::uint64_t draws, std::uint64_t seed);

}  // namespace icse
