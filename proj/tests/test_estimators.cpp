#include "icse/errors.hpp"
#include "icse/estimators.hpp"
#include "support/generators.hpp"

#include <doctest.h>

#include <cmath>

using namespace icse;

namespace {

// OLS on the columns outside `zeroed`, with zeros written back in place.
Vector ols_with_zeros(const Matrix& x, const Vector& y, const std::vector<Index>& zeroed)
{
    std::vector<Index> keep;
    for (Index j = 0; j < x.cols(); ++j) {
        if (std::find(zeroed.begin(), zeroed.end(), j) == zeroed.end()) keep.push_back(j);
    }
    Vector out = Vector::Zero(x.cols());
    if (keep.empty()) return out;
    Matrix xs(x.rows(), static_cast<Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) xs.col(static_cast<Index>(k)) = x.col(keep[k]);
    const Vector b = xs.colPivHouseholderQr().solve(y);
    for (std::size_t k = 0; k < keep.size(); ++k) out(keep[k]) = b(static_cast<Index>(k));
    return out;
}

Matrix equicorrelated(std::mt19937_64& rng, Index n, Index m)
{
    std::normal_distribution<double> z;
    Matrix x(n, m);
    for (Index i = 0; i < n; ++i) {
        const double common = z(rng);
        for (Index j = 0; j < m; ++j) x(i, j) = std::sqrt(0.5) * (common + z(rng));
    }
    return x;
}

}  // namespace

TEST_CASE("noise-free stacked identity recovers theta exactly")
{
    Matrix x(8, 4);
    x << Matrix::Identity(4, 4), Matrix::Identity(4, 4);
    const Vector theta0 = Eigen::Vector4d(1.0, -2.0, 0.5, 3.0);
    const FitResult fit = fit_unrestricted(build_linear_problem(x, x * theta0));
    CHECK((fit.theta - theta0).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("unrestricted fit matches explicit least-squares formulas")
{
    std::mt19937_64 rng(21);
    for (int rep = 0; rep < 30; ++rep) {
        const Index n = 60, m = testing::uniform_index(rng, 1, 6);
        const Matrix x = testing::random_matrix(rng, n, m);
        const Vector y = testing::random_vector(rng, n);
        const auto problem = build_linear_problem(x, y);

        const Vector beta = x.colPivHouseholderQr().solve(y);
        const Vector e = y - x * beta;
        Matrix v = Matrix::Zero(m, m);
        for (Index i = 0; i < n; ++i) v += e(i) * e(i) * x.row(i).transpose() * x.row(i);
        v /= static_cast<double>(n);

        const FitResult robust = fit_unrestricted(problem);
        CHECK((robust.theta - beta).norm() <= 1e-10 * (1.0 + beta.norm()));
        CHECK((robust.jhat - x.transpose() * x / n).norm() <= 1e-12 * robust.jhat.norm());
        CHECK((robust.vhat - v).norm() <= 1e-10 * v.norm());
        CHECK(robust.n == n);

        FitOptions homo;
        homo.variance = VarianceKind::Homoskedastic;
        const FitResult h = fit_unrestricted(problem, homo);
        const double s2 = e.squaredNorm() / static_cast<double>(n - m);
        CHECK((h.vhat - s2 * x.transpose() * x / n).norm() <= 1e-10 * h.vhat.norm());
    }
}

TEST_CASE("estimation error shrinks at the root-n rate")
{
    std::mt19937_64 rng(2024);
    const Vector theta0 = (Vector(8) << 1, 1, 1, 0.3, 0.3, 0, 0, 0).finished();
    std::vector<double> lx, ly;
    for (int seed = 0; seed < 200; ++seed) {
        for (Index n : {200, 800, 3200}) {
            const Matrix x = equicorrelated(rng, n, 8);
            const Vector y = x * theta0 + testing::random_vector(rng, n);
            const FitResult f = fit_unrestricted(build_linear_problem(x, y));
            lx.push_back(std::log(static_cast<double>(n)));
            ly.push_back(std::log((f.theta - theta0).norm()));
        }
    }
    const Eigen::Map<const Vector> ex(lx.data(), static_cast<Index>(lx.size()));
    const Eigen::Map<const Vector> ey(ly.data(), static_cast<Index>(ly.size()));
    const double mx = ex.mean(), my = ey.mean();
    const double slope = ((ex.array() - mx) * (ey.array() - my)).sum() / (ex.array() - mx).square().sum();
    CHECK(slope == doctest::Approx(-0.5).epsilon(0.3));
    CHECK(std::abs(slope + 0.5) <= 0.15);
}

TEST_CASE("curvature converges to the regressor second moment")
{
    std::mt19937_64 rng(5);
    const Index n = 100000;
    const Matrix x = testing::random_matrix(rng, n, 2);
    const Vector y = x * Eigen::Vector2d(0.5, -0.5) + testing::random_vector(rng, n);
    const FitResult f = fit_unrestricted(build_linear_problem(x, y));
    const double se_diag = std::sqrt(2.0 / n), se_off = std::sqrt(1.0 / n);
    CHECK(std::abs(f.jhat(0, 0) - 1.0) <= 3.0 * se_diag);
    CHECK(std::abs(f.jhat(1, 1) - 1.0) <= 3.0 * se_diag);
    CHECK(std::abs(f.jhat(0, 1)) <= 3.0 * se_off);
}

TEST_CASE("ill-conditioned designs are refused")
{
    std::mt19937_64 rng(6);
    Matrix x = testing::random_matrix(rng, 50, 2);
    x.col(1) = x.col(0) + 1e-7 * testing::random_vector(rng, 50);
    const auto problem = build_linear_problem(x, testing::random_vector(rng, 50));
    CHECK_THROWS_AS(fit_unrestricted(problem), NumericalError);
}

TEST_CASE("restricted estimator equals the best column-dropping least squares fit")
{
    std::mt19937_64 rng(31);
    for (int rep = 0; rep < 60; ++rep) {
        const Index m = testing::uniform_index(rng, 2, 6);
        const Index k = testing::uniform_index(rng, 1, m);
        const Matrix x = equicorrelated(rng, 120, m);
        const Vector theta0 = testing::random_vector(rng, m, 0.3);
        const Vector y = x * theta0 + testing::random_vector(rng, 120);
        std::vector<Index> ineq;
        for (Index j = 0; j < k; ++j) ineq.push_back(j);
        const auto cons = ConstraintFunction::sign_restrictions(m, ineq);
        const auto problem = build_linear_problem(x, y);
        const RestrictedFit r = fit_restricted(problem, cons);

        double best = std::numeric_limits<double>::infinity();
        Vector best_theta;
        for (std::uint32_t mask = 0; mask < (1u << k); ++mask) {
            std::vector<Index> zeroed;
            for (Index j = 0; j < k; ++j) {
                if (mask & (1u << j)) zeroed.push_back(j);
            }
            const Vector t = ols_with_zeros(x, y, zeroed);
            if (t.head(k).minCoeff() < -1e-12) continue;
            const double ssr = (y - x * t).squaredNorm();
            if (ssr < best) {
                best = ssr;
                best_theta = t;
            }
        }
        INFO("replicate " << rep);
        REQUIRE((r.fit.theta - best_theta).cwiseAbs().maxCoeff() <= 1e-8);
        REQUIRE(kt_residuals(r.kt, {r.fit.jhat, Vector::Zero(m)}, r.linearized).max() <= 1e-8);
    }
}

TEST_CASE("feasible unrestricted estimate is returned unchanged")
{
    std::mt19937_64 rng(41);
    const Matrix x = equicorrelated(rng, 200, 4);
    const Vector y = x * Eigen::Vector4d(2.0, 2.0, 2.0, 2.0) + 0.1 * testing::random_vector(rng, 200);
    const auto problem = build_linear_problem(x, y);
    const FitResult f = fit_unrestricted(problem);
    const RestrictedFit r = fit_restricted(f, ConstraintFunction::sign_restrictions(4, {0, 1, 2, 3}));
    CHECK(r.fit.theta == f.theta);
    CHECK(r.kt.mu.maxCoeff() <= 1e-8);
}

TEST_CASE("equality patterns reproduce least squares with the named columns removed")
{
    std::mt19937_64 rng(51);
    const Matrix x = equicorrelated(rng, 150, 6);
    const Vector y = x * (Vector(6) << 1, -1, 0.5, 0.2, 0, 0).finished() + testing::random_vector(rng, 150);
    const auto cons = ConstraintFunction::sign_restrictions(6, {0, 1, 2, 3}, {4, 5});
    const FitResult f = fit_unrestricted(build_linear_problem(x, y));
    const FitResult e = fit_equality_pattern(f, cons, {1, 3});
    CHECK((e.theta - ols_with_zeros(x, y, {1, 3, 4, 5})).cwiseAbs().maxCoeff() <= 1e-10);
    const FitResult none = fit_equality_pattern(f, cons, {});
    CHECK((none.theta - ols_with_zeros(x, y, {4, 5})).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK_THROWS_AS(fit_equality_pattern(f, cons, {9}), ShapeError);
}

TEST_CASE("localizing estimate scales the constraint value by root n")
{
    const FitResult f = make_fit(Eigen::Vector2d(-0.1, 0.4), Matrix::Identity(2, 2), Matrix::Identity(2, 2), 400);
    const Vector c = localizing_estimate(f, ConstraintFunction::sign_restrictions(2, {0, 1}));
    CHECK(c(0) == doctest::Approx(-2.0));
    CHECK(c(1) == doctest::Approx(8.0));
}

TEST_CASE("constraint validation")
{
    ConstraintFunction wrong;
    wrong.evaluate = [](const Vector& t) { return Vector::Constant(1, t(0) * t(0) - t(1)); };
    wrong.jacobian = [](const Vector&) { return Matrix(Eigen::RowVector2d(1.0, -1.0)); };
    wrong.equality_mask = {false};
    CHECK_THROWS_AS(validate_constraints(wrong, Eigen::Vector2d(3.0, 1.0)), NumericalError);

    ConstraintFunction right = wrong;
    right.jacobian = [](const Vector& t) { return Matrix(Eigen::RowVector2d(2.0 * t(0), -1.0)); };
    CHECK_NOTHROW(validate_constraints(right, Eigen::Vector2d(3.0, 1.0)));

    Matrix dup(2, 2);
    dup << 1.0, 0.0, 2.0, 0.0;
    const auto dependent = ConstraintFunction::linear(dup, Vector::Zero(2), {false, false});
    CHECK_THROWS_AS(validate_constraints(dependent, Vector::Zero(2)), RankError);
}

TEST_CASE("nonlinear constraints are solved on their linearization")
{
    std::mt19937_64 rng(61);
    const Matrix x = testing::random_matrix(rng, 300, 2);
    const Vector y = x * Eigen::Vector2d(1.0, 2.0) + 0.2 * testing::random_vector(rng, 300);
    ConstraintFunction cons;
    cons.evaluate = [](const Vector& t) { return Vector::Constant(1, 1.0 - t(0) * t(1)); };
    cons.jacobian = [](const Vector& t) { return Matrix(Eigen::RowVector2d(-t(1), -t(0))); };
    cons.equality_mask = {false};
    const auto problem = build_linear_problem(x, y);
    const FitResult f = fit_unrestricted(problem);
    const RestrictedFit r = fit_restricted(f, cons);
    const Vector lin = cons.evaluate(f.theta) + cons.jacobian(f.theta) * (r.fit.theta - f.theta);
    CHECK(std::abs(lin(0)) <= 1e-10);
    CHECK(r.kt.mu(0) > 0.0);
}
