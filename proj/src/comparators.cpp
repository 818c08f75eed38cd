#include "icse/comparators.hpp"

#include "icse/errors.hpp"
#include "icse/normal.hpp"
#include "icse/orthant.hpp"
#include "icse/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace icse {

double james_stein_weight(Index dim, double stat)
{
    const double num = static_cast<double>(dim) - 2.0;
    if (num <= 0.0) return 1.0;
    if (!(stat > 0.0)) return 0.0;
    return std::clamp(1.0 - num / stat, 0.0, 1.0);
}

Vector james_stein(const FitResult& fit)
{
    const Eigen::LLT<Matrix> ol = require_spd(fit.omega, "Omega");
    const double stat = static_cast<double>(fit.n) * fit.theta.dot(ol.solve(fit.theta));
    return james_stein_weight(fit.theta.size(), stat) * fit.theta;
}

std::vector<double> EBConfig::default_nu_grid()
{
    std::vector<double> grid(41);
    for (int i = 0; i < 41; ++i) grid[static_cast<std::size_t>(i)] = std::pow(10.0, -4.0 + 0.2 * i);
    return grid;
}

void EBConfig::validate() const
{
    if (nu_grid.size() < 3) throw ShapeError("eb: nu grid needs at least three points");
    for (std::size_t i = 0; i < nu_grid.size(); ++i) {
        if (!(nu_grid[i] > 0.0) || !std::isfinite(nu_grid[i])) throw ShapeError("eb: nu grid must be positive");
        if (i > 0 && !(nu_grid[i] > nu_grid[i - 1])) throw ShapeError("eb: nu grid must be increasing");
    }
    if (nu_grid.front() > 1e-4 * (1 + 1e-9) || nu_grid.back() < 1e4 * (1 - 1e-9)) {
        throw ShapeError("eb: nu grid must cover [1e-4, 1e4]");
    }
    if (gibbs_draws < 1000) throw ShapeError("eb: need at least 1000 Gibbs draws");
    if (d_draws < 1 || (d_method == DMethod::MonteCarlo && d_draws < 1000)) {
        throw ShapeError("eb: too few draws for the normalizing constant");
    }
    if (!(golden_rel_tol > 0.0)) throw ShapeError("eb: golden-section tolerance must be positive");
}

namespace {

std::vector<Index> truncated_set(const EBConfig& cfg, Index m)
{
    std::vector<Index> t = cfg.truncated;
    if (t.empty()) {
        for (Index j = 0; j < m; ++j) t.push_back(j);
    }
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    if (t.front() < 0 || t.back() >= m) throw ShapeError("eb: truncated coordinate out of range");
    return t;
}

struct Sufficient {
    Matrix xtx;
    Vector xty;
    double yty = 0.0;
    Index n = 0;
};

Sufficient sufficient(const EstimationProblem& problem)
{
    const Matrix& X = problem.design();
    const Vector& y = problem.response();
    return {X.transpose() * X, X.transpose() * y, y.squaredNorm(), problem.n()};
}

struct Conditional {
    Vector theta_bar;
    Matrix v_bar;
    double log_det_v = 0.0;
    double fit_term = 0.0;  // Y'Y - Y'X (X'X + nu I)^-1 X'Y
};

Conditional conditional(const Sufficient& s, double nu)
{
    const Index m = s.xtx.rows();
    const Matrix prec = s.xtx + nu * Matrix::Identity(m, m);
    const Eigen::LLT<Matrix> llt(prec);
    if (llt.info() != Eigen::Success) throw NumericalError("eb: X'X + nu I is not positive definite");
    Conditional c;
    c.theta_bar = llt.solve(s.xty);
    c.v_bar = llt.solve(Matrix::Identity(m, m));
    c.v_bar = 0.5 * (c.v_bar + c.v_bar.transpose());
    const Matrix L = llt.matrixL();
    c.log_det_v = -2.0 * L.diagonal().array().log().sum();
    c.fit_term = s.yty - s.xty.dot(c.theta_bar);
    return c;
}

LogMarginal log_marginal(const Sufficient& s, double nu, const EBConfig& cfg)
{
    if (!(nu > 0.0) || !std::isfinite(nu)) throw ShapeError("eb: nu must be positive");
    const Index m = s.xtx.rows();
    const auto t = truncated_set(cfg, m);
    const Conditional c = conditional(s, nu);
    const Vector mean_t = select(c.theta_bar, t);
    const Matrix cov_t = select_rows(select_rows(c.v_bar, t).transpose(), t);

    LogMarginal out;
    if (cfg.d_method == DMethod::Ghk) {
        const GhkEstimate g = positive_orthant_ghk(mean_t, cov_t, cfg.d_draws, cfg.seed);
        out.log_d = g.log_probability;
        out.d_const = g.probability;
        out.d_std_error = g.std_error;
    } else {
        OrthantQuery q;
        q.mean = mean_t;
        q.covariance = cov_t;
        q.positive_set.resize(t.size());
        for (std::size_t k = 0; k < t.size(); ++k) q.positive_set[k] = static_cast<Index>(k);
        q.draws = cfg.d_draws;
        q.seed = cfg.seed;
        const ProbabilityEstimate p = region_probability(q);
        out.d_const = p.estimate;
        out.d_std_error = p.std_error;
        out.log_d = std::log(p.estimate);
    }
    const double n = static_cast<double>(s.n);
    out.value = -0.5 * n * std::log(2.0 * std::numbers::pi) + 0.5 * static_cast<double>(m) * std::log(nu) -
                static_cast<double>(t.size()) * std::log(0.5) + 0.5 * c.log_det_v + out.log_d -
                0.5 * c.fit_term;
    return out;
}

}  // namespace

LogMarginal eb_log_marginal(const EstimationProblem& problem, double nu, const EBConfig& cfg)
{
    return log_marginal(sufficient(problem), nu, cfg);
}

TruncatedMean truncated_mvn_mean(const Vector& mean, const Matrix& cov, const EBConfig& cfg)
{
    const Index m = mean.size();
    if (m == 0 || cov.rows() != m || cov.cols() != m) throw ShapeError("truncated_mvn_mean: non-conformable inputs");
    if (cfg.gibbs_draws < 1000) throw ShapeError("truncated_mvn_mean: need at least 1000 draws");
    const Eigen::LLT<Matrix> llt = require_spd(cov, "truncated_mvn_mean: covariance");
    const Matrix Q = llt.solve(Matrix::Identity(m, m));
    std::vector<bool> trunc(static_cast<std::size_t>(m), false);
    for (Index j : truncated_set(cfg, m)) trunc[static_cast<std::size_t>(j)] = true;

    CounterRng rng(derive_key(cfg.seed, {0x67696262ULL}));
    Vector theta = mean;
    for (Index j = 0; j < m; ++j) {
        if (trunc[static_cast<std::size_t>(j)]) theta(j) = std::max(theta(j), 0.0);
    }

    const std::uint64_t batches = 50;
    const std::uint64_t per_batch = cfg.gibbs_draws / batches;
    const std::uint64_t kept = per_batch * batches;
    Matrix batch_sums = Matrix::Zero(m, static_cast<Index>(batches));
    const std::uint64_t total = cfg.gibbs_burn + kept;
    for (std::uint64_t it = 0; it < total; ++it) {
        for (Index j = 0; j < m; ++j) {
            const double qjj = Q(j, j);
            const double shift = Q.row(j).dot(theta - mean) - qjj * (theta(j) - mean(j));
            const double cmean = mean(j) - shift / qjj;
            const double csd = 1.0 / std::sqrt(qjj);
            theta(j) = trunc[static_cast<std::size_t>(j)] ? truncated_normal_lower(cmean, csd, 0.0, rng.uniform())
                                                           : cmean + csd * rng.normal();
        }
        if (!theta.allFinite()) throw NumericalError("truncated_mvn_mean: Gibbs state became non-finite");
        if (it >= cfg.gibbs_burn) {
            batch_sums.col(static_cast<Index>((it - cfg.gibbs_burn) / per_batch)) += theta;
        }
    }
    const Matrix batch_means = batch_sums / static_cast<double>(per_batch);
    TruncatedMean out;
    out.mean = batch_means.rowwise().mean();
    const Matrix centered = batch_means.colwise() - out.mean;
    const double b = static_cast<double>(batches);
    out.std_error = (centered.rowwise().squaredNorm() / (b - 1.0) / b).cwiseSqrt();
    return out;
}

EBFit eb_fit(const EstimationProblem& problem, const EBConfig& cfg)
{
    cfg.validate();
    const Sufficient s = sufficient(problem);
    const auto& grid = cfg.nu_grid;

    std::size_t best = 0;
    double best_value = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double v = log_marginal(s, grid[i], cfg).value;
        if (v > best_value) {
            best_value = v;
            best = i;
        }
    }
    double best_nu = grid[best];

    double lo = std::log(grid[best == 0 ? 0 : best - 1]);
    double hi = std::log(grid[std::min(best + 1, grid.size() - 1)]);
    auto f = [&](double x) { return log_marginal(s, std::exp(x), cfg).value; };
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    const double stop = std::log1p(cfg.golden_rel_tol);
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    while (hi - lo > stop) {
        if (f1 >= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    const double x_mid = 0.5 * (lo + hi);
    const double f_mid = f(x_mid);
    if (f_mid > best_value) {
        best_value = f_mid;
        best_nu = std::exp(x_mid);
    }

    EBFit out;
    out.chosen_nu = best_nu;
    const LogMarginal lm = log_marginal(s, best_nu, cfg);
    out.log_marginal = lm.value;
    const Conditional c = conditional(s, best_nu);
    out.posterior.theta_bar = c.theta_bar;
    out.posterior.v_bar = c.v_bar;
    out.posterior.d_const = lm.d_const;
    out.posterior.d_std_error = lm.d_std_error;
    const TruncatedMean tm = truncated_mvn_mean(c.theta_bar, c.v_bar, cfg);
    out.posterior.posterior_mean = tm.mean;
    out.posterior.posterior_mean_se = tm.std_error;
    out.theta = tm.mean;
    return out;
}

}  // namespace icse
