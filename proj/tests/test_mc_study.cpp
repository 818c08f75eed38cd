#include "icse/errors.hpp"
#include "icse/estimators.hpp"
#include "icse/mc_study.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace icse;

namespace {

MCConfig small_config()
{
    MCConfig cfg;
    cfg.n = 60;
    cfg.k1 = 5;
    cfg.k2 = 1;
    cfg.b_grid = {-0.5, 0.5};
    cfg.replications = 100;
    cfg.seed = 42;
    cfg.orthant_draws = 2000;
    cfg.estimators = {EstimatorKind::Unrestricted, EstimatorKind::Restricted, EstimatorKind::JamesStein,
                      EstimatorKind::ICSE};
    return cfg;
}

}  // namespace

TEST_CASE("estimator names round trip")
{
    for (EstimatorKind k : all_estimators()) CHECK(estimator_from_string(to_string(k)) == k);
    CHECK(std::string(to_string(EstimatorKind::JamesStein)) == "james_stein");
    CHECK_THROWS_AS(estimator_from_string("ridge"), ShapeError);
}

TEST_CASE("b grid and design parameters")
{
    const auto grid = MCConfig::default_b_grid(11);
    REQUIRE(grid.size() == 11);
    CHECK(grid.front() == -0.5);
    CHECK(grid.back() == 0.5);
    CHECK(grid[5] == doctest::Approx(0.0));
    CHECK(grid[9] == doctest::Approx(0.4));

    MCConfig cfg;
    cfg.k1 = 5;
    cfg.k2 = 3;
    cfg.c_equal = 0.25;
    const Vector theta = dgp_theta(cfg, -0.3);
    CHECK(theta.size() == 8);
    CHECK(theta.head(3) == Vector::Ones(3));
    CHECK(theta.segment(3, 2) == Vector::Constant(2, -0.3));
    CHECK(theta.tail(3) == Vector::Constant(3, 0.25));
}

TEST_CASE("generated designs are equicorrelated and reproducible")
{
    MCConfig cfg;
    cfg.n = 50000;
    cfg.k1 = 3;
    cfg.k2 = 1;
    cfg.b_grid = {0.2};
    cfg.seed = 7;
    const DgpDraw d = generate_dgp(cfg, 0, 3);
    const Matrix s = d.design.transpose() * d.design / static_cast<double>(cfg.n);
    for (Index i = 0; i < 4; ++i) {
        CHECK(std::abs(s(i, i) - 1.0) <= 4.0 * std::sqrt(2.0 / cfg.n));
        for (Index j = 0; j < i; ++j) CHECK(std::abs(s(i, j) - 0.5) <= 4.0 * std::sqrt(1.25 / cfg.n));
    }
    const Vector e = d.response - d.design * d.theta0;
    CHECK(std::abs(e.squaredNorm() / cfg.n - 1.0) <= 4.0 * std::sqrt(2.0 / cfg.n));

    const DgpDraw again = generate_dgp(cfg, 0, 3);
    CHECK(again.design == d.design);
    CHECK(again.response == d.response);
    CHECK(generate_dgp(cfg, 0, 4).response != d.response);
}

TEST_CASE("study aggregates per-replication losses")
{
    const MCConfig cfg = small_config();
    const MCResult res = run_study(cfg);
    CHECK(res.failures == 0);
    REQUIRE(res.cells.size() == 8);
    const auto cons = ConstraintFunction::sign_restrictions(6, {0, 1, 2, 3, 4}, {5});
    for (std::size_t bi = 0; bi < cfg.b_grid.size(); ++bi) {
        double unres = 0.0, restr = 0.0;
        for (std::uint64_t r = 0; r < cfg.replications; ++r) {
            const DgpDraw d = generate_dgp(cfg, bi, r);
            const FitResult f = fit_unrestricted(build_linear_problem(d.design, d.response));
            unres += (f.theta - d.theta0).squaredNorm();
            restr += (fit_restricted(f, cons).fit.theta - d.theta0).squaredNorm();
        }
        unres /= static_cast<double>(cfg.replications);
        restr /= static_cast<double>(cfg.replications);
        const double b = cfg.b_grid[bi];
        CHECK(res.at(b, EstimatorKind::Unrestricted).raw_mse == doctest::Approx(unres).epsilon(1e-12));
        CHECK(res.at(b, EstimatorKind::Unrestricted).normalized_mse == 1.0);
        CHECK(res.at(b, EstimatorKind::Unrestricted).mc_se == 0.0);
        CHECK(res.at(b, EstimatorKind::Restricted).raw_mse == doctest::Approx(restr).epsilon(1e-12));
        CHECK(res.at(b, EstimatorKind::Restricted).normalized_mse == doctest::Approx(restr / unres).epsilon(1e-12));
        CHECK(res.at(b, EstimatorKind::Restricted).mc_se > 0.0);
    }
    // the restrictions hurt when the truth violates them and help when it does not
    CHECK(res.at(-0.5, EstimatorKind::Restricted).normalized_mse > 1.0);
    CHECK(res.at(0.5, EstimatorKind::Restricted).normalized_mse < 1.0);
    CHECK_THROWS_AS(res.at(0.1, EstimatorKind::ICSE), StudyError);
}

TEST_CASE("study output does not depend on the thread count")
{
    MCConfig cfg = small_config();
    cfg.estimators.push_back(EstimatorKind::EB);
    cfg.eb.gibbs_burn = 200;
    cfg.eb.gibbs_draws = 1000;
    cfg.eb.d_draws = 200;
    std::ostringstream one, many;
    emit_tables(run_study(cfg), one);
    cfg.threads = 3;
    emit_tables(run_study(cfg), many);
    CHECK(one.str() == many.str());
}

TEST_CASE("table format")
{
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(1.0 / 3.0) == "0.3333333333");
    CHECK(format_number(-2.5e-12) == "-2.5e-12");

    MCResult res;
    res.config = small_config();
    res.cells.push_back({-0.5, EstimatorKind::ICSE, 0.125, 0.95, 0.01});
    std::ostringstream out;
    emit_tables(res, out);
    CHECK(out.str() == "b,estimator,raw_mse,normalized_mse,mc_se,n,k1,k2,c,replications,seed\n"
                       "-0.5,icse,0.125,0.95,0.01,60,5,1,0,100,42\n");
}

TEST_CASE("configuration validation")
{
    auto bad = [](auto edit) {
        MCConfig cfg = small_config();
        edit(cfg);
        return cfg;
    };
    CHECK_NOTHROW(small_config().validate());
    CHECK_THROWS_AS(bad([](MCConfig& c) { c.k1 = 2; }).validate(), StudyError);
    CHECK_THROWS_AS(bad([](MCConfig& c) { c.k2 = 18; }).validate(), StudyError);
    CHECK_THROWS_AS(bad([](MCConfig& c) { c.n = 4; }).validate(), StudyError);
    CHECK_THROWS_AS(bad([](MCConfig& c) { c.replications = 99; }).validate(), StudyError);
    CHECK_THROWS_AS(bad([](MCConfig& c) { c.b_grid.clear(); }).validate(), StudyError);
    CHECK_THROWS_AS(bad([](MCConfig& c) { c.orthant_draws = 10; }).validate(), StudyError);
    CHECK_THROWS_AS(MCConfig::default_b_grid(1), ShapeError);
}
