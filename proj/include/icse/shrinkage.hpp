#pragma once

#include "icse/estimators.hpp"
#include "icse/model.hpp"

#include <cstdint>
#include <vector>

namespace icse {

/// A set of binding inequality rows. `indices` are positions among the
/// inequality rows (0-based, ascending); always-equality rows are implied.
struct BindingPattern {
    std::uint32_t mask = 0;  // bit k set iff inequality position k binds
    std::vector<Index> indices;
    Index count = 0;         // |indices| + number of equality rows
};

/// All 2^p subsets of p inequality rows ordered by mask value, so p = 2 gives
/// [{}, {0}, {1}, {0,1}]. Throws CapacityError when p + equality_rows > 20.
std::vector<BindingPattern> enumerate_patterns(Index p, Index equality_rows);

/// Whether the pattern enters the tau sum: the empty pattern only does when
/// equality rows are present.
bool pattern_included(const BindingPattern& pattern);

struct PatternStats {
    BindingPattern pattern;
    Matrix projection;        // J^-1 R' (R J^-1 R')^-1 R
    double a_trace = 0.0;     // tr(A)
    double a_phimax = 0.0;    // largest real eigenvalue of A
    double probability = 0.0;
    double probability_se = 0.0;
    double expected_loss = 0.0;  // n (theta_hat - theta_pattern)' W (...)
    double inverse_loss = 0.0;   // E[1/xi] when known (simulation truth); 0 otherwise
    Vector h_offset;             // P h with h = R^+ c
    double gamma = 0.0;
    bool included = false;       // participates in gamma / tau
};

struct ShrinkageResult {
    Vector theta_hat;
    Vector theta_tilde;
    Vector c_hat;
    Matrix weight_matrix;
    double tau_star = 0.0;
    double scaled_loss = 0.0;
    double weight = 0.0;
    Vector combined;
    std::vector<PatternStats> pattern_table;
};

/// P = J^-1 R' (R J^-1 R')^-1 R. Throws RankError.
Matrix projection_matrix(const Matrix& J, const Matrix& R_iota);

struct AStats {
    double trace = 0.0;
    double phimax = 0.0;
};
/// Trace and largest real eigenvalue of A = W^1/2 Omega P' W^1/2.
AStats pattern_A_stats(const Matrix& W, const Matrix& Omega, const Matrix& J, const Matrix& R_iota);

struct KtLaw {
    Vector psi;   // mean of the multipliers
    Matrix xi;    // covariance of the multipliers
};
/// Normal law of the all-binding multipliers -(R J^-1 R')^-1 (R Z + c).
KtLaw kt_distribution(const Matrix& J, const Matrix& Omega, const Matrix& R, const Vector& c_hat);

/// gamma_k proportional to probability_k / max(loss_k, loss_floor) over the
/// included entries; excluded entries get zero. Throws DegenerateWeightsError.
std::vector<double> gamma_weights(const std::vector<bool>& included, const std::vector<double>& probabilities,
                                  const std::vector<double>& expected_losses, double loss_floor);

/// max(0, sum_k (tr A_k - 2 phimax A_k) gamma_k) over included patterns.
double feasible_tau(const std::vector<PatternStats>& stats);

/// (1 - tau / scaled_loss)_+, defined as 0 when scaled_loss == 0.
double shrinkage_weight(double tau, double scaled_loss);

struct IcseOptions {
    LossSpec loss = LossSpec::inverse_omega();
    FitOptions fit;
    std::uint64_t orthant_draws = 100000;
    std::uint64_t seed = 0;
    double prune_below = 1e-4;
    unsigned threads = 1;
};

ShrinkageResult fit_icse(const FitResult& unrestricted, const ConstraintFunction& cons,
                         const IcseOptions& options);
ShrinkageResult fit_icse(const EstimationProblem& problem, const ConstraintFunction& cons,
                         const IcseOptions& options);

}  // namespace icse
