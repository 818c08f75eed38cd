#include "icse/asymptotics.hpp"
#include "icse/errors.hpp"
#include "support/generators.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace icse;

namespace {

LimitConfig sign_config(const Matrix& J, const Matrix& V, const Vector& c, std::uint64_t draws, std::uint64_t seed)
{
    LimitConfig cfg;
    cfg.J = J;
    cfg.V = V;
    cfg.R = Matrix::Identity(J.rows(), J.rows());
    cfg.localizer = c;
    cfg.draws = draws;
    cfg.seed = seed;
    cfg.W = cfg.omega().inverse();
    return cfg;
}

}  // namespace

TEST_CASE("bivariate quadrant probabilities")
{
    Eigen::Matrix2d cov;
    cov << 1.0, 0.5, 0.5, 1.0;
    const Eigen::Vector2d zero = Eigen::Vector2d::Zero();
    CHECK(bivariate_quadrant_probability(zero, cov, 1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
    CHECK(bivariate_quadrant_probability(zero, cov, 1, -1) == doctest::Approx(1.0 / 6.0).epsilon(1e-9));
    CHECK(bivariate_quadrant_probability(zero, Eigen::Matrix2d::Identity(), -1, -1) ==
          doctest::Approx(0.25).epsilon(1e-9));

    const Eigen::Vector2d mean(0.7, -1.2);
    const Eigen::Matrix2d diag = Eigen::Vector2d(4.0, 0.25).asDiagonal();
    CHECK(bivariate_quadrant_probability(mean, diag, 1, -1) ==
          doctest::Approx(testing::phi_cdf(0.35) * testing::phi_cdf(2.4)).epsilon(1e-9));

    std::mt19937_64 rng(1);
    for (int rep = 0; rep < 20; ++rep) {
        const Eigen::Matrix2d s = testing::random_spd(rng, 2);
        const Eigen::Vector2d mu = testing::random_vector(rng, 2);
        double total = 0.0;
        for (int a : {1, -1}) {
            for (int b : {1, -1}) total += bivariate_quadrant_probability(mu, s, a, b);
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("closed form in two dimensions agrees with simulation")
{
    std::mt19937_64 rng(2);
    for (int rep = 0; rep < 6; ++rep) {
        const Matrix J = rep == 0 ? Matrix(Matrix::Identity(2, 2)) : testing::random_spd(rng, 2);
        const Matrix V = rep == 0 ? Matrix(Matrix::Identity(2, 2)) : testing::random_spd(rng, 2);
        const Vector c = testing::random_vector(rng, 2);
        const auto exact = closed_form_2d(J, V, c);
        const LimitDraws d = draw_limit(sign_config(J, V, c, 40000, 10 + rep));
        double total = 0.0;
        for (std::uint32_t mask = 0; mask < 4; ++mask) {
            const PatternMoments& pm = exact[mask];
            total += pm.probability;
            Index hits = 0;
            Eigen::Vector2d sum = Eigen::Vector2d::Zero(), sumsq = Eigen::Vector2d::Zero();
            for (Index i = 0; i < d.size(); ++i) {
                if (d.pattern_id[static_cast<std::size_t>(i)] != mask) continue;
                ++hits;
                const Eigen::Vector2d l = d.lambda_tilde.row(i).transpose();
                sum += l;
                sumsq += l.cwiseProduct(l);
            }
            const double n = static_cast<double>(d.size());
            const double p_se = std::sqrt(pm.probability * (1.0 - pm.probability) / n);
            INFO("rep " << rep << " mask " << mask);
            CHECK(std::abs(hits / n - pm.probability) <= 4.0 * p_se + 1e-12);
            if (hits > 50) {
                const double h = static_cast<double>(hits);
                const Eigen::Vector2d mean = sum / h;
                const Eigen::Vector2d var = (sumsq / h - mean.cwiseProduct(mean)).cwiseMax(0.0);
                for (Index j = 0; j < 2; ++j) {
                    CHECK(std::abs(mean(j) - pm.lambda_mean(j)) <= 4.0 * std::sqrt(var(j) / h) + 1e-10);
                }
            }
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-8));
    }
}

TEST_CASE("closed form binding coordinates are exactly on the boundary")
{
    Matrix J(2, 2);
    J << 2.0, 0.5, 0.5, 1.0;
    const auto cf = closed_form_2d(J, Matrix::Identity(2, 2), Eigen::Vector2d(0.3, -0.4));
    CHECK(cf[1].lambda_mean(0) == doctest::Approx(-0.3));
    CHECK(cf[2].lambda_mean(1) == doctest::Approx(0.4));
    CHECK(cf[3].lambda_mean(0) == doctest::Approx(-0.3));
    CHECK(cf[3].lambda_mean(1) == doctest::Approx(0.4));
}

TEST_CASE("limit draws solve the constrained problem")
{
    std::mt19937_64 rng(3);
    LimitConfig cfg;
    cfg.J = testing::random_spd(rng, 4);
    cfg.V = testing::random_spd(rng, 4);
    cfg.R = testing::random_matrix(rng, 3, 4);
    cfg.localizer = testing::random_vector(rng, 3);
    cfg.W = Matrix::Identity(4, 4);
    cfg.draws = 10000;
    cfg.seed = 4;
    const LimitDraws d = draw_limit(cfg);
    for (Index i = 0; i < d.size(); ++i) {
        const Vector z = d.z.row(i).transpose();
        const Vector l = d.lambda_tilde.row(i).transpose();
        const Vector slack = cfg.localizer + cfg.R * l;
        REQUIRE(slack.minCoeff() >= -1e-9);
        const std::uint32_t mask = d.pattern_id[static_cast<std::size_t>(i)];
        for (Index j = 0; j < 3; ++j) {
            if (mask & (1u << j)) REQUIRE(std::abs(slack(j)) <= 1e-9);
        }
        REQUIRE(d.xi(i) == doctest::Approx((z - l).squaredNorm()).epsilon(1e-12));
        if (mask == 0) REQUIRE((z - l).norm() <= 1e-12);
    }

    LimitConfig threaded = cfg;
    threaded.threads = 4;
    const LimitDraws t = draw_limit(threaded);
    CHECK(t.lambda_tilde == d.lambda_tilde);
    CHECK(t.pattern_id == d.pattern_id);

    Matrix dependent = cfg.R;
    dependent.row(2) = 2.0 * dependent.row(0);
    cfg.R = dependent;
    CHECK_THROWS_AS(draw_limit(cfg), RankError);
}

TEST_CASE("unrestricted limit risk equals the weighted trace")
{
    std::mt19937_64 rng(5);
    const Matrix J = testing::random_spd(rng, 3);
    const Matrix V = testing::random_spd(rng, 3);
    LimitConfig cfg = sign_config(J, V, Eigen::Vector3d(0.5, -0.5, 1.0), 100000, 6);
    const LimitDraws d = draw_limit(cfg);
    CHECK(d.tau == 0.0);
    CHECK(d.psi_star == d.z);
    const RiskEstimate r = estimate_risk(d, cfg.W, 1e6);
    CHECK(std::abs(r.risk - 3.0) <= 3.0 * r.se);
    CHECK(r.trimmed_risk == r.risk);

    const LimitDraws shrunk = with_tau(d, 1.0);
    CHECK(shrunk.tau == 1.0);
    for (Index i = 0; i < d.size(); ++i) {
        const double w = shrunk.weight(i);
        REQUIRE(w >= 0.0);
        REQUIRE(w <= 1.0);
        const double xi = d.xi(i);
        REQUIRE(w == (xi > 0.0 ? std::max(0.0, 1.0 - 1.0 / xi) : 0.0));
    }
    const RiskEstimate capped = estimate_risk(shrunk, cfg.W, 0.5);
    CHECK(capped.trimmed_risk <= capped.risk);
}

TEST_CASE("simulation truth statistics")
{
    LimitConfig cfg = sign_config(Matrix::Identity(3, 3), Matrix::Identity(3, 3), Vector::Zero(3), 20000, 7);
    const LimitDraws d = draw_limit(cfg);
    const auto stats = simulation_truth_stats(d, cfg);
    REQUIRE(stats.size() == 8);
    CHECK_FALSE(stats[0].included);
    double prob = 0.0, gamma = 0.0;
    for (std::uint32_t mask = 0; mask < 8; ++mask) {
        const auto& s = stats[mask];
        prob += s.probability;
        gamma += s.gamma;
        CHECK(std::abs(s.probability - 0.125) <= 4.0 * std::sqrt(0.125 * 0.875 / 20000.0));
        if (mask != 0) {
            CHECK(s.a_trace == doctest::Approx(std::popcount(mask)).epsilon(1e-10));
            CHECK(s.a_phimax == doctest::Approx(1.0).epsilon(1e-10));
        }
    }
    CHECK(prob == doctest::Approx(1.0));
    CHECK(gamma == doctest::Approx(1.0));
    const double tau = optimal_tau(stats);
    CHECK(tau_upper_bound(stats) == doctest::Approx(2.0 * tau));
    CHECK(risk_bound(0.0, 3.0, stats) == 3.0);
    double binding = 0.0;
    for (const auto& s : stats) {
        if (s.included) binding += static_cast<double>(s.pattern.count) * s.gamma;
    }
    CHECK(expected_binding_count(stats) >= 0.0);
    CHECK(tau == doctest::Approx(binding - 2.0 * gamma).epsilon(1e-9));
}

TEST_CASE("shrinkage at the optimal tau lowers risk with many binding constraints")
{
    // five sign restrictions all far inside the boundary region
    LimitConfig cfg = sign_config(Matrix::Identity(5, 5), Matrix::Identity(5, 5), Vector::Constant(5, -2.0), 40000, 8);
    const LimitDraws base = draw_limit(cfg);
    const auto stats = simulation_truth_stats(base, cfg);
    const double tau = std::max(0.0, optimal_tau(stats));
    REQUIRE(tau > 0.0);
    const LimitDraws d = with_tau(base, tau);
    const RiskEstimate r = estimate_risk(d, cfg.W, 1e6);
    CHECK(r.risk < 5.0 - 3.0 * r.se);
}

TEST_CASE("Stein identity on random instances")
{
    std::mt19937_64 rng(9);
    for (int rep = 0; rep < 5; ++rep) {
        const Matrix V = testing::random_spd(rng, 3);
        const Matrix B = testing::random_spd(rng, 3);
        const Matrix K = testing::random_matrix(rng, 3, 3);
        const Vector h = testing::random_vector(rng, 3);
        const SteinCheck s = steins_identity_check(K, h, V, B, 20000, 20 + rep);
        INFO("lhs " << s.lhs << " rhs " << s.rhs << " se " << s.diff_se);
        CHECK(s.discrepancy <= 4.0);
        CHECK(s.discrepancy == doctest::Approx(std::abs(s.lhs - s.rhs) / s.diff_se));
    }
}

TEST_CASE("limit configuration validation")
{
    LimitConfig cfg = sign_config(Matrix::Identity(2, 2), Matrix::Identity(2, 2), Vector::Zero(2), 20000, 1);
    CHECK_NOTHROW(cfg.validate());
    LimitConfig few = cfg;
    few.draws = 100;
    CHECK_THROWS_AS(few.validate(), ShapeError);
    LimitConfig bad_w = cfg;
    bad_w.W(0, 0) = -1.0;
    CHECK_THROWS_AS(bad_w.validate(), LossSpecError);
    LimitConfig shape = cfg;
    shape.localizer = Vector::Zero(3);
    CHECK_THROWS_AS(shape.validate(), ShapeError);
}

TEST_CASE("loss equals the projected form for the realized pattern")
{
    std::mt19937_64 rng(10);
    LimitConfig cfg;
    cfg.J = testing::random_spd(rng, 4);
    cfg.V = testing::random_spd(rng, 4);
    cfg.R = testing::random_matrix(rng, 3, 4);
    cfg.localizer = testing::random_vector(rng, 3);
    cfg.W = testing::random_spd(rng, 4);
    cfg.draws = 10000;
    cfg.seed = 11;
    const LimitDraws d = draw_limit(cfg);
    for (Index i = 0; i < d.size(); ++i) {
        const std::uint32_t mask = d.pattern_id[static_cast<std::size_t>(i)];
        if (mask == 0) continue;
        std::vector<Index> rows;
        for (Index j = 0; j < 3; ++j) {
            if (mask & (1u << j)) rows.push_back(j);
        }
        Matrix Ri(static_cast<Index>(rows.size()), 4);
        Vector ci(static_cast<Index>(rows.size()));
        for (std::size_t k = 0; k < rows.size(); ++k) {
            Ri.row(static_cast<Index>(k)) = cfg.R.row(rows[k]);
            ci(static_cast<Index>(k)) = cfg.localizer(rows[k]);
        }
        const Vector h = Ri.transpose() * (Ri * Ri.transpose()).ldlt().solve(ci);
        const Vector u = projection_matrix(cfg.J, Ri) * (d.z.row(i).transpose() + h);
        REQUIRE(std::abs(d.xi(i) - u.dot(cfg.W * u)) <= 1e-8 * (1.0 + d.xi(i)));
    }
}

TEST_CASE("risk bound is minimized at the optimal tau")
{
    LimitConfig cfg = sign_config(Matrix::Identity(4, 4), Matrix::Identity(4, 4), Vector::Constant(4, -1.5), 20000, 12);
    const auto stats = simulation_truth_stats(draw_limit(cfg), cfg);
    const double tau = optimal_tau(stats);
    const double at_opt = risk_bound(tau, 4.0, stats);
    for (double delta : {-1.0, -0.1, -1e-3, 1e-3, 0.1, 1.0}) CHECK(at_opt <= risk_bound(tau + delta, 4.0, stats));
    if (tau > 0.0) {
        CHECK(at_opt < 4.0);
        CHECK(risk_bound(tau_upper_bound(stats), 4.0, stats) == doctest::Approx(4.0));
    }
}
