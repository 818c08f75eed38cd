#pragma once

#include "icse/model.hpp"

#include <cstdint>
#include <vector>

namespace icse {

/// Positive-part James-Stein weight (1 - (dim - 2)/stat)_+ clipped to [0, 1],
/// where stat = n theta' Omega^-1 theta.
double james_stein_weight(Index dim, double stat);

/// Shrinks theta_hat toward the origin.
Vector james_stein(const FitResult& fit);

enum class DMethod { Ghk, MonteCarlo };

struct EBConfig {
    std::vector<double> nu_grid = default_nu_grid();
    std::uint64_t gibbs_burn = 1000;
    std::uint64_t gibbs_draws = 10000;
    std::uint64_t d_draws = 1000;       // draws for the posterior normalizing constant
    DMethod d_method = DMethod::Ghk;
    double golden_rel_tol = 1e-4;
    std::uint64_t seed = 0;
    /// Coordinates truncated at zero in prior and posterior; empty means all.
    std::vector<Index> truncated;

    /// 41 log-spaced points on [1e-4, 1e4].
    static std::vector<double> default_nu_grid();
    void validate() const;
};

struct EBPosterior {
    Vector theta_bar;
    Matrix v_bar;
    double d_const = 0.0;
    double d_std_error = 0.0;
    Vector posterior_mean;
    Vector posterior_mean_se;
};

struct EBFit {
    Vector theta;
    double chosen_nu = 0.0;
    double log_marginal = 0.0;
    EBPosterior posterior;
};

struct LogMarginal {
    double value = 0.0;
    double log_d = 0.0;
    double d_const = 0.0;
    double d_std_error = 0.0;
};

/// log p(Y | nu) with unit error variance, the truncated prior N(0, 1/nu) on
/// the truncated coordinates, and D estimated by the configured method.
LogMarginal eb_log_marginal(const EstimationProblem& problem, double nu, const EBConfig& cfg);

/// Grid search then golden section in log nu, then the Gibbs posterior mean.
EBFit eb_fit(const EstimationProblem& problem, const EBConfig& cfg);

struct TruncatedMean {
    Vector mean;
    Vector std_error;  // batch-means standard errors
};

/// Gibbs estimate of E[theta | theta_T >= 0] under N(mean, cov). Throws NumericalError.
TruncatedMean truncated_mvn_mean(const Vector& mean, const Matrix& cov, const EBConfig& cfg);

}  // namespace icse
