#pragma once

#include "icse/comparators.hpp"
#include "icse/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace icse {

enum class EstimatorKind { Unrestricted, Restricted, JamesStein, EB, ICSE };

const char* to_string(EstimatorKind k);
EstimatorKind estimator_from_string(const std::string& s);
std::vector<EstimatorKind> all_estimators();

struct MCConfig {
    Index n = 200;
    Index k1 = 5;
    Index k2 = 3;
    std::vector<double> b_grid = default_b_grid(21);
    double c_equal = 0.0;
    std::uint64_t replications = 500;
    std::uint64_t seed = 0;
    std::vector<EstimatorKind> estimators = all_estimators();
    std::uint64_t orthant_draws = 100000;
    double prune_below = 1e-4;
    bool eb_truncate_all = false;
    EBConfig eb;
    unsigned threads = 1;

    /// `points` equispaced values on [-0.5, 0.5].
    static std::vector<double> default_b_grid(int points);
    void validate() const;
};

struct MCCell {
    double b = 0.0;
    EstimatorKind estimator = EstimatorKind::Unrestricted;
    double raw_mse = 0.0;
    double normalized_mse = 0.0;
    double mc_se = 0.0;
};

struct MCResult {
    MCConfig config;
    std::vector<MCCell> cells;  // b-major, estimator order of config.estimators
    std::uint64_t failures = 0;

    const MCCell& at(double b, EstimatorKind k) const;
};

struct DgpDraw {
    Matrix design;
    Vector response;
    Vector theta0;
};

/// x_i ~ N(0, Sigma) with unit variances and 0.5 correlations, eps ~ N(0, 1).
/// Deterministic in (seed, b index, replication).
DgpDraw generate_dgp(const MCConfig& cfg, std::size_t b_index, std::uint64_t rep);
Vector dgp_theta(const MCConfig& cfg, double b);

MCResult run_study(const MCConfig& cfg);

/// CSV with header b,estimator,raw_mse,normalized_mse,mc_se,n,k1,k2,c,replications,seed.
void emit_tables(const MCResult& res, std::ostream& out);
void emit_tables(const MCResult& res, const std::string& path);

/// %.10g formatting used in every emitted table.
std::string format_number(double x);

}  // namespace icse
