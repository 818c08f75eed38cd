#pragma once

#include "icse/linalg.hpp"

#include <cstdint>
#include <vector>

namespace icse {

/// Probability that x ~ N(mean, covariance) has x_j > 0 exactly for j in
/// positive_set and x_j <= 0 elsewhere.
struct OrthantQuery {
    Vector mean;
    Matrix covariance;
    std::vector<Index> positive_set;
    std::uint64_t draws = 100000;
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

struct ProbabilityEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
};

/// Lower factor L with L L' = covariance. Cholesky when possible, otherwise an
/// eigen factor with tiny negative eigenvalues clamped. Throws CovarianceError.
Matrix sampling_factor(const Matrix& covariance);

ProbabilityEstimate region_probability(const OrthantQuery& q);

/// One classification pass: entry k is the probability of the sign pattern
/// whose bit j is set iff x_j > 0. Estimates sum to exactly one.
std::vector<ProbabilityEstimate> all_pattern_probabilities(const Vector& mean, const Matrix& covariance,
                                                           std::uint64_t draws, std::uint64_t seed,
                                                           unsigned threads = 1);

/// GHK importance sampler for P(x >= 0 componentwise). Stays accurate for
/// probabilities far below 1/draws; used for normalizing constants.
struct GhkEstimate {
    double log_probability = 0.0;
    double probability = 0.0;
    double std_error = 0.0;
};
GhkEstimate positive_orthant_ghk(const Vector& mean, const Matrix& covariance,
                                 std::uint64_t draws, std::uint64_t seed);

}  // namespace icse
