#include "icse/orthant.hpp"

#include "icse/errors.hpp"
#include "icse/normal.hpp"
#include "icse/parallel.hpp"
#include "icse/random.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace icse {

namespace {

void check_query(const Vector& mean, const Matrix& cov, std::uint64_t draws)
{
    if (mean.size() == 0) throw ShapeError("orthant: empty mean");
    if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
        throw ShapeError("orthant: covariance must be " + std::to_string(mean.size()) + "x" +
                         std::to_string(mean.size()));
    }
    if (mean.size() > 20) throw CapacityError("orthant: dimension above 20");
    if (draws < 1000) throw ShapeError("orthant: need at least 1000 draws");
    if (!mean.allFinite()) throw ShapeError("orthant: non-finite mean");
}

// Sign pattern of each draw; slot i depends only on (seed, i).
std::vector<std::uint32_t> classify(const Vector& mean, const Matrix& L, std::uint64_t draws,
                                    std::uint64_t seed, unsigned threads)
{
    const Index p = mean.size();
    std::vector<std::uint32_t> masks(draws);
    constexpr std::uint64_t kBlock = 4096;
    const std::uint64_t blocks = (draws + kBlock - 1) / kBlock;
    parallel_for(blocks, threads, [&](std::size_t b) {
        Vector e(p), x(p);
        const std::uint64_t lo = b * kBlock;
        const std::uint64_t hi = std::min(draws, lo + kBlock);
        for (std::uint64_t i = lo; i < hi; ++i) {
            CounterRng rng(derive_key(seed, {i}));
            for (Index k = 0; k < p; ++k) e(k) = rng.normal();
            x.noalias() = L * e;
            std::uint32_t mask = 0;
            for (Index k = 0; k < p; ++k) {
                if (mean(k) + x(k) > 0.0) mask |= (std::uint32_t{1} << k);
            }
            masks[i] = mask;
        }
    });
    return masks;
}

ProbabilityEstimate binomial(std::uint64_t hits, std::uint64_t draws)
{
    ProbabilityEstimate out;
    out.estimate = static_cast<double>(hits) / static_cast<double>(draws);
    out.std_error = std::sqrt(out.estimate * (1.0 - out.estimate) / static_cast<double>(draws));
    return out;
}

}  // namespace

Matrix sampling_factor(const Matrix& covariance)
{
    if (covariance.rows() != covariance.cols()) throw CovarianceError("covariance is not square");
    if (!covariance.allFinite()) throw CovarianceError("covariance has non-finite entries");
    if (!is_symmetric(covariance, 1e-10)) throw CovarianceError("covariance is not symmetric");
    Eigen::LLT<Matrix> llt(covariance);
    if (llt.info() == Eigen::Success) {
        Matrix L = llt.matrixL();
        if (L.diagonal().minCoeff() > 1e-10 * std::max(1.0, L.diagonal().maxCoeff())) return L;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(covariance);
    const Vector& ev = es.eigenvalues();
    const double top = std::max(1.0, ev.cwiseAbs().maxCoeff());
    if (ev.minCoeff() < -1e-10 * top) {
        throw CovarianceError("covariance is not positive semidefinite (eigenvalue " +
                              std::to_string(ev.minCoeff()) + ")");
    }
    return es.eigenvectors() * ev.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

ProbabilityEstimate region_probability(const OrthantQuery& q)
{
    check_query(q.mean, q.covariance, q.draws);
    std::uint32_t target = 0;
    for (Index j : q.positive_set) {
        if (j < 0 || j >= q.mean.size()) throw ShapeError("orthant: positive_set index out of range");
        target |= (std::uint32_t{1} << j);
    }
    const Matrix L = sampling_factor(q.covariance);
    const auto masks = classify(q.mean, L, q.draws, q.seed, q.threads);
    std::uint64_t hits = 0;
    for (auto m : masks) hits += (m == target);
    return binomial(hits, q.draws);
}

std::vector<ProbabilityEstimate> all_pattern_probabilities(const Vector& mean, const Matrix& covariance,
                                                           std::uint64_t draws, std::uint64_t seed,
                                                           unsigned threads)
{
    check_query(mean, covariance, draws);
    const Matrix L = sampling_factor(covariance);
    const auto masks = classify(mean, L, draws, seed, threads);
    std::vector<std::uint64_t> counts(std::size_t{1} << mean.size(), 0);
    for (auto m : masks) ++counts[m];
    std::vector<ProbabilityEstimate> out;
    out.reserve(counts.size());
    for (auto c : counts) out.push_back(binomial(c, draws));
    return out;
}

GhkEstimate positive_orthant_ghk(const Vector& mean, const Matrix& covariance, std::uint64_t draws,
                                 std::uint64_t seed)
{
    if (mean.size() == 0 || covariance.rows() != mean.size() || covariance.cols() != mean.size()) {
        throw ShapeError("ghk: non-conformable mean and covariance");
    }
    if (draws < 1) throw ShapeError("ghk: need at least one draw");
    Eigen::LLT<Matrix> llt(covariance);
    if (llt.info() != Eigen::Success) throw CovarianceError("ghk: covariance is not positive definite");
    const Matrix L = llt.matrixL();
    const Index m = mean.size();

    auto log_sf = [](double a) {
        const double s = normal_sf(a);
        if (s > 1e-300) return std::log(s);
        return -0.5 * a * a - std::log(a) - 0.5 * std::log(2.0 * std::numbers::pi);
    };

    std::vector<double> logw(draws);
    Vector e(m);
    for (std::uint64_t i = 0; i < draws; ++i) {
        CounterRng rng(derive_key(seed, {i}));
        double lw = 0.0;
        for (Index j = 0; j < m; ++j) {
            double partial = mean(j);
            for (Index k = 0; k < j; ++k) partial += L(j, k) * e(k);
            const double a = -partial / L(j, j);
            lw += log_sf(a);
            e(j) = truncated_normal_lower(0.0, 1.0, a, rng.uniform());
        }
        logw[i] = lw;
    }
    double top = logw[0];
    for (double v : logw) top = std::max(top, v);
    double sum = 0.0, sumsq = 0.0;
    for (double v : logw) {
        const double w = std::exp(v - top);
        sum += w;
        sumsq += w * w;
    }
    const double nd = static_cast<double>(draws);
    const double mean_w = sum / nd;
    const double var_w = draws > 1 ? std::max(0.0, (sumsq - nd * mean_w * mean_w) / (nd - 1.0)) : 0.0;
    GhkEstimate out;
    out.log_probability = top + std::log(mean_w);
    out.probability = std::exp(out.log_probability);
    out.std_error = std::exp(top) * std::sqrt(var_w / nd);
    return out;
}

}  // namespace icse
