#include "icse/asymptotics.hpp"

#include "icse/errors.hpp"
#include "icse/normal.hpp"
#include "icse/parallel.hpp"
#include "icse/qp.hpp"
#include "icse/random.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace icse {

Matrix LimitConfig::omega() const
{
    const Eigen::LLT<Matrix> jl = require_spd(J, "limit: J");
    const Matrix jinv = jl.solve(Matrix::Identity(J.rows(), J.cols()));
    const Matrix om = jinv * V * jinv;
    return 0.5 * (om + om.transpose());
}

void LimitConfig::validate() const
{
    require_spd(J, "limit: J");
    require_spd(V, "limit: V");
    const Index m = J.rows();
    if (V.rows() != m || R.cols() != m || W.rows() != m || W.cols() != m || localizer.size() != R.rows()) {
        throw ShapeError("limit: non-conformable J, V, R, c, W");
    }
    if (R.rows() == 0 || R.rows() > 20) throw CapacityError("limit: need between 1 and 20 constraints");
    if (numerical_rank(R) < R.rows()) throw RankError("limit: R is not full row rank");
    require_spd(W, "limit: W", true);
    if (!(tau >= 0.0)) throw ShapeError("limit: tau must be non-negative");
    if (draws < 10000) throw ShapeError("limit: need at least 10000 draws");
    if (!(zeta > 0.0)) throw ShapeError("limit: zeta must be positive");
}

namespace {

void apply_tau(LimitDraws& d)
{
    const Index n = d.size();
    d.weight.resize(n);
    d.psi_star.resize(n, d.z.cols());
    for (Index i = 0; i < n; ++i) {
        const double w = d.xi(i) > 0.0 ? std::max(0.0, 1.0 - d.tau / d.xi(i)) : 0.0;
        d.weight(i) = w;
        d.psi_star.row(i) = w * d.z.row(i) + (1.0 - w) * d.lambda_tilde.row(i);
    }
}

}  // namespace

LimitDraws draw_limit(const LimitConfig& cfg)
{
    cfg.validate();
    const Index m = cfg.J.rows();
    const Eigen::LLT<Matrix> jl(cfg.J);
    const Matrix Lv = Eigen::LLT<Matrix>(cfg.V).matrixL();
    const LinearConstraints cons = LinearConstraints::inequalities(cfg.R, cfg.localizer);

    LimitDraws d;
    d.tau = cfg.tau;
    d.z.resize(static_cast<Index>(cfg.draws), m);
    d.lambda_tilde.resize(static_cast<Index>(cfg.draws), m);
    d.xi.resize(static_cast<Index>(cfg.draws));
    d.pattern_id.assign(cfg.draws, 0);

    constexpr std::uint64_t kBlock = 2048;
    const std::uint64_t blocks = (cfg.draws + kBlock - 1) / kBlock;
    parallel_for(blocks, cfg.threads, [&](std::size_t b) {
        Vector e(m);
        QuadraticProblem qp{cfg.J, Vector::Zero(m)};
        const std::uint64_t lo = b * kBlock;
        const std::uint64_t hi = std::min(cfg.draws, lo + kBlock);
        for (std::uint64_t i = lo; i < hi; ++i) {
            CounterRng rng(derive_key(cfg.seed, {i}));
            for (Index k = 0; k < m; ++k) e(k) = rng.normal();
            qp.center = jl.solve(Lv * e);
            const KTSolution sol = solve_qp(qp, cons);
            const Index r = static_cast<Index>(i);
            d.z.row(r) = qp.center.transpose();
            d.lambda_tilde.row(r) = sol.lambda.transpose();
            const Vector diff = qp.center - sol.lambda;
            d.xi(r) = std::max(0.0, diff.dot(cfg.W * diff));
            std::uint32_t mask = 0;
            for (Index j : sol.active) mask |= (std::uint32_t{1} << j);
            d.pattern_id[i] = mask;
        }
    });
    apply_tau(d);
    return d;
}

LimitDraws with_tau(LimitDraws draws, double tau)
{
    if (!(tau >= 0.0)) throw ShapeError("with_tau: tau must be non-negative");
    draws.tau = tau;
    apply_tau(draws);
    return draws;
}

RiskEstimate estimate_risk(const LimitDraws& draws, const Matrix& W, double zeta)
{
    const Index n = draws.size();
    if (n < 2) throw ShapeError("estimate_risk: need at least two draws");
    double sum = 0.0, sumsq = 0.0, trimmed = 0.0;
    for (Index i = 0; i < n; ++i) {
        const Vector p = draws.psi_star.row(i).transpose();
        const double loss = p.dot(W * p);
        sum += loss;
        sumsq += loss * loss;
        trimmed += std::min(loss, zeta);
    }
    const double nd = static_cast<double>(n);
    RiskEstimate out;
    out.risk = sum / nd;
    out.se = std::sqrt(std::max(0.0, (sumsq - nd * out.risk * out.risk) / (nd - 1.0)) / nd);
    out.trimmed_risk = trimmed / nd;
    return out;
}

std::vector<PatternStats> simulation_truth_stats(const LimitDraws& draws, const LimitConfig& cfg)
{
    const Index p = cfg.R.rows();
    const Matrix omega = cfg.omega();
    const auto patterns = enumerate_patterns(p, 0);
    std::vector<double> count(patterns.size(), 0.0), inv(patterns.size(), 0.0), loss(patterns.size(), 0.0);
    for (Index i = 0; i < draws.size(); ++i) {
        const std::uint32_t k = draws.pattern_id[static_cast<std::size_t>(i)];
        count[k] += 1.0;
        inv[k] += 1.0 / std::max(draws.xi(i), 1e-12);
        loss[k] += draws.xi(i);
    }
    const double nd = static_cast<double>(draws.size());
    std::vector<PatternStats> out(patterns.size());
    double total = 0.0;
    for (std::size_t k = 0; k < patterns.size(); ++k) {
        PatternStats& s = out[k];
        s.pattern = patterns[k];
        s.probability = count[k] / nd;
        s.probability_se = std::sqrt(s.probability * (1.0 - s.probability) / nd);
        const Index m = cfg.J.rows();
        if (s.pattern.indices.empty()) {
            s.projection = Matrix::Zero(m, m);
            s.h_offset = Vector::Zero(m);
            continue;
        }
        const Matrix R_iota = select_rows(cfg.R, s.pattern.indices);
        s.projection = projection_matrix(cfg.J, R_iota);
        const AStats a = pattern_A_stats(cfg.W, omega, cfg.J, R_iota);
        s.a_trace = a.trace;
        s.a_phimax = a.phimax;
        const Vector c_iota = select(cfg.localizer, s.pattern.indices);
        const Vector h = R_iota.transpose() * (R_iota * R_iota.transpose()).ldlt().solve(c_iota);
        s.h_offset = s.projection * h;
        if (count[k] > 0.0) {
            s.inverse_loss = inv[k] / count[k];
            s.expected_loss = loss[k] / count[k];
            s.included = true;
            total += s.inverse_loss * s.probability;
        }
    }
    if (total > 0.0) {
        for (auto& s : out) {
            if (s.included) s.gamma = s.inverse_loss * s.probability / total;
        }
    }
    return out;
}

double optimal_tau(const std::vector<PatternStats>& stats)
{
    double t = 0.0;
    for (const auto& s : stats) {
        if (s.included) t += (s.a_trace - 2.0 * s.a_phimax) * s.gamma;
    }
    return t;
}

double tau_upper_bound(const std::vector<PatternStats>& stats)
{
    return 2.0 * optimal_tau(stats);
}

double expected_binding_count(const std::vector<PatternStats>& stats)
{
    double t = 0.0;
    for (const auto& s : stats) {
        if (s.included) t += static_cast<double>(s.pattern.count) * s.gamma;
    }
    return t;
}

double risk_bound(double tau, double trace_w_omega, const std::vector<PatternStats>& stats)
{
    double sum = 0.0;
    for (const auto& s : stats) {
        if (s.included) sum += (2.0 * (s.a_trace - 2.0 * s.a_phimax) - tau) * s.inverse_loss * s.probability;
    }
    return trace_w_omega - tau * sum;
}

namespace {

struct QuadrantMoments {
    double probability = 0.0;
    Eigen::Vector2d first = Eigen::Vector2d::Zero();  // E[Y 1{Y1 > 0, Y2 > 0}]
};

// E[Y_b 1{Y_a > 0, Y_b > 0}] and P(Y_a > 0, Y_b > 0), integrating Y_a in one dimension.
std::pair<double, double> quadrant_pass(double ma, double sa, double mb, double sb, double rho)
{
    using boost::math::quadrature::gauss_kronrod;
    const double csd = sb * std::sqrt(std::max(0.0, 1.0 - rho * rho));
    auto cond_mean = [&](double t) { return mb + rho * sb * t; };
    const double lower = -ma / sa;
    const double inf = std::numeric_limits<double>::infinity();
    auto prob = [&](double t) {
        const double cm = cond_mean(t);
        const double pb = csd > 0.0 ? normal_cdf(cm / csd) : (cm > 0.0 ? 1.0 : 0.0);
        return normal_pdf(t) * pb;
    };
    auto mom = [&](double t) {
        const double cm = cond_mean(t);
        if (csd <= 0.0) return normal_pdf(t) * (cm > 0.0 ? cm : 0.0);
        return normal_pdf(t) * (cm * normal_cdf(cm / csd) + csd * normal_pdf(cm / csd));
    };
    const double p = gauss_kronrod<double, 61>::integrate(prob, lower, inf, 15, 1e-13);
    const double e = gauss_kronrod<double, 61>::integrate(mom, lower, inf, 15, 1e-13);
    return {p, e};
}

QuadrantMoments quadrant_moments(const Eigen::Vector2d& mean, const Eigen::Matrix2d& cov)
{
    const double s1 = std::sqrt(cov(0, 0));
    const double s2 = std::sqrt(cov(1, 1));
    if (!(s1 > 0.0) || !(s2 > 0.0)) throw CovarianceError("quadrant: variances must be positive");
    const double rho = std::clamp(cov(0, 1) / (s1 * s2), -1.0, 1.0);
    QuadrantMoments q;
    const auto [p12, e2] = quadrant_pass(mean(0), s1, mean(1), s2, rho);
    const auto [p21, e1] = quadrant_pass(mean(1), s2, mean(0), s1, rho);
    q.probability = 0.5 * (p12 + p21);
    q.first = {e1, e2};
    return q;
}

Eigen::Matrix2d affine_cov(const Eigen::Matrix2d& T, const Eigen::Matrix2d& cov)
{
    const Eigen::Matrix2d c = T * cov * T.transpose();
    return 0.5 * (c + c.transpose());
}

}  // namespace

double bivariate_quadrant_probability(const Eigen::Vector2d& mean, const Eigen::Matrix2d& cov, int s1, int s2)
{
    if ((s1 != 1 && s1 != -1) || (s2 != 1 && s2 != -1)) throw ShapeError("quadrant: signs must be +1 or -1");
    const Eigen::Matrix2d S = Eigen::Vector2d(s1, s2).asDiagonal();
    return quadrant_moments(S * mean, affine_cov(S, cov)).probability;
}

std::array<PatternMoments, 4> closed_form_2d(const Matrix& J, const Matrix& V, const Vector& c)
{
    if (J.rows() != 2 || J.cols() != 2 || V.rows() != 2 || V.cols() != 2 || c.size() != 2) {
        throw ShapeError("closed_form_2d: expects 2x2 J, V and a 2-vector c");
    }
    const Eigen::LLT<Matrix> jl = require_spd(J, "closed_form_2d: J");
    require_spd(V, "closed_form_2d: V");
    const Matrix jinv = jl.solve(Matrix::Identity(2, 2));
    // x = Z + c ~ N(c, Omega); the solution in y = lambda + c minimizes 1/2 (y - x)' J (y - x) over y >= 0.
    const Eigen::Matrix2d omega = jinv * V * jinv;
    const Eigen::Vector2d cc = c;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::array<PatternMoments, 4> out;
    for (std::uint32_t k = 0; k < 4; ++k) out[k].mask = k;

    // Nothing binds: x1 > 0, x2 > 0, lambda = Z = x - c.
    {
        const QuadrantMoments q = quadrant_moments(cc, affine_cov(Eigen::Matrix2d::Identity(), omega));
        out[0].probability = q.probability;
        out[0].lambda_mean = q.probability > 0.0 ? Eigen::Vector2d(q.first / q.probability - cc)
                                                 : Eigen::Vector2d(nan, nan);
    }
    // Only row j binds: x_j < 0 and u = x_o + (J_oj / J_oo) x_j > 0, lambda_j = -c_j, lambda_o = u - c_o.
    for (int j = 0; j < 2; ++j) {
        const int o = 1 - j;
        Eigen::Matrix2d T = Eigen::Matrix2d::Zero();
        T(0, j) = -1.0;
        T(1, o) = 1.0;
        T(1, j) = J(o, j) / J(o, o);
        const QuadrantMoments q = quadrant_moments(T * cc, affine_cov(T, omega));
        PatternMoments& pm = out[std::uint32_t{1} << j];
        pm.probability = q.probability;
        if (q.probability > 0.0) {
            pm.lambda_mean(j) = -cc(j);
            pm.lambda_mean(o) = q.first(1) / q.probability - cc(o);
        } else {
            pm.lambda_mean = Eigen::Vector2d(nan, nan);
        }
    }
    // Both bind: multipliers -J x > 0, lambda = -c.
    {
        const Eigen::Matrix2d T = -Eigen::Matrix2d(J);
        const QuadrantMoments q = quadrant_moments(T * cc, affine_cov(T, omega));
        out[3].probability = q.probability;
        out[3].lambda_mean = q.probability > 0.0 ? Eigen::Vector2d(-cc) : Eigen::Vector2d(nan, nan);
    }
    return out;
}

SteinCheck steins_identity_check(const Matrix& K, const Vector& h, const Matrix& V, const Matrix& B,
                                 std::uint64_t draws, std::uint64_t seed)
{
    const Index m = h.size();
    if (K.rows() != m || K.cols() != m || V.rows() != m || V.cols() != m || B.rows() != m || B.cols() != m) {
        throw ShapeError("steins_identity_check: non-conformable inputs");
    }
    if (m < 3) throw ShapeError("steins_identity_check: the identity needs at least three dimensions");
    if (draws < 2) throw ShapeError("steins_identity_check: need at least two draws");
    const Eigen::LLT<Matrix> llt = require_spd(V, "steins_identity_check: V");
    const Matrix Lv = llt.matrixL();
    const Matrix Bs = 0.5 * (B + B.transpose());
    const double tr_vk = (V * K.transpose()).trace();
    const Matrix KVB = K * V * Bs;

    // Draws come from a mixture of N(h, V) and a radial law around the origin
    // with density proportional to |x|^(1-m) on a ball, so the 1/q^2 terms keep
    // finite variance after reweighting.
    const double md = static_cast<double>(m);
    const double alpha = 0.7;
    const double radius = std::sqrt(V.trace() / md);
    const double log_sphere = std::log(2.0) + 0.5 * md * std::log(std::numbers::pi) - std::lgamma(0.5 * md);
    const double log_norm = -0.5 * md * std::log(2.0 * std::numbers::pi) - Lv.diagonal().array().log().sum();

    double sl = 0.0, sll = 0.0, sr = 0.0, srr = 0.0, sd = 0.0, sdd = 0.0;
    Vector e(m), x(m);
    for (std::uint64_t i = 0; i < draws; ++i) {
        CounterRng rng(derive_key(seed, {i}));
        const bool from_normal = rng.uniform() < alpha;
        for (Index k = 0; k < m; ++k) e(k) = rng.normal();
        const double radial_u = rng.uniform();
        if (from_normal) {
            x = Lv * e + h;
        } else {
            x = (radius * radial_u / e.norm()) * e;
        }
        const double r = x.norm();
        const double log_p = log_norm - 0.5 * Lv.triangularView<Eigen::Lower>().solve(x - h).squaredNorm();
        const double g_ball = r < radius ? std::exp(-log_sphere - (md - 1.0) * std::log(r)) / radius : 0.0;
        const double p = std::exp(log_p);
        const double w = p / (alpha * p + (1.0 - alpha) * g_ball);

        const Vector z = x - h;
        const double q = x.dot(Bs * x);
        const double lhs = w * x.dot(K * z) / q;
        const double rhs = w * (tr_vk / q - 2.0 * x.dot(KVB * x) / (q * q));
        sl += lhs;
        sll += lhs * lhs;
        sr += rhs;
        srr += rhs * rhs;
        sd += lhs - rhs;
        sdd += (lhs - rhs) * (lhs - rhs);
    }
    const double nd = static_cast<double>(draws);
    auto se = [nd](double s, double ss) {
        const double mean = s / nd;
        return std::sqrt(std::max(0.0, (ss - nd * mean * mean) / (nd - 1.0)) / nd);
    };
    SteinCheck out;
    out.lhs = sl / nd;
    out.rhs = sr / nd;
    out.lhs_se = se(sl, sll);
    out.rhs_se = se(sr, srr);
    out.diff_se = se(sd, sdd);
    out.discrepancy = out.diff_se > 0.0 ? std::abs(out.lhs - out.rhs) / out.diff_se : 0.0;
    return out;
}

}  // namespace icse
