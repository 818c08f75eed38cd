#include "icse/mc_study.hpp"

#include "icse/errors.hpp"
#include "icse/estimators.hpp"
#include "icse/parallel.hpp"
#include "icse/random.hpp"
#include "icse/shrinkage.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

namespace icse {

const char* to_string(EstimatorKind k)
{
    switch (k) {
    case EstimatorKind::Unrestricted: return "unrestricted";
    case EstimatorKind::Restricted: return "restricted";
    case EstimatorKind::JamesStein: return "james_stein";
    case EstimatorKind::EB: return "eb";
    case EstimatorKind::ICSE: return "icse";
    }
    return "unknown";
}

EstimatorKind estimator_from_string(const std::string& s)
{
    for (EstimatorKind k : all_estimators()) {
        if (s == to_string(k)) return k;
    }
    throw ShapeError("unknown estimator '" + s + "'");
}

std::vector<EstimatorKind> all_estimators()
{
    return {EstimatorKind::Unrestricted, EstimatorKind::Restricted, EstimatorKind::JamesStein, EstimatorKind::EB,
            EstimatorKind::ICSE};
}

std::vector<double> MCConfig::default_b_grid(int points)
{
    if (points < 2) throw ShapeError("b grid needs at least two points");
    std::vector<double> grid(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i) {
        grid[static_cast<std::size_t>(i)] = -0.5 + static_cast<double>(i) / static_cast<double>(points - 1);
    }
    return grid;
}

void MCConfig::validate() const
{
    if (k1 < 3) throw StudyError("mc-study: k1 must be at least 3");
    if (k2 < 0) throw StudyError("mc-study: k2 must be non-negative");
    if (k1 + k2 > 20) throw StudyError("mc-study: k1 + k2 must not exceed 20");
    if (n <= k1 + k2) throw StudyError("mc-study: n must exceed k1 + k2");
    if (replications < 100) throw StudyError("mc-study: need at least 100 replications");
    if (b_grid.empty()) throw StudyError("mc-study: empty b grid");
    for (double b : b_grid) {
        if (!std::isfinite(b)) throw StudyError("mc-study: non-finite b value");
    }
    if (!std::isfinite(c_equal)) throw StudyError("mc-study: non-finite c");
    if (orthant_draws < 1000) throw StudyError("mc-study: need at least 1000 orthant draws");
    for (EstimatorKind k : estimators) {
        if (k == EstimatorKind::EB) eb.validate();
    }
}

const MCCell& MCResult::at(double b, EstimatorKind k) const
{
    for (const auto& c : cells) {
        if (c.estimator == k && std::abs(c.b - b) < 1e-9) return c;
    }
    throw StudyError("mc-study: no cell for b=" + format_number(b) + " estimator=" + to_string(k));
}

Vector dgp_theta(const MCConfig& cfg, double b)
{
    Vector theta(cfg.k1 + cfg.k2);
    for (Index j = 0; j < cfg.k1; ++j) theta(j) = j < 3 ? 1.0 : b;
    for (Index j = 0; j < cfg.k2; ++j) theta(cfg.k1 + j) = cfg.c_equal;
    return theta;
}

DgpDraw generate_dgp(const MCConfig& cfg, std::size_t b_index, std::uint64_t rep)
{
    const Index m = cfg.k1 + cfg.k2;
    CounterRng rng(derive_key(cfg.seed, {0x646770ULL, b_index, rep}));
    DgpDraw d;
    d.theta0 = dgp_theta(cfg, cfg.b_grid.at(b_index));
    d.design.resize(cfg.n, m);
    d.response.resize(cfg.n);
    const double s = std::sqrt(0.5);
    for (Index i = 0; i < cfg.n; ++i) {
        const double common = rng.normal();
        for (Index j = 0; j < m; ++j) d.design(i, j) = s * (common + rng.normal());
        d.response(i) = d.design.row(i).dot(d.theta0) + rng.normal();
    }
    return d;
}

namespace {

struct RepOutcome {
    bool ok = false;
    std::vector<double> loss;  // one per estimator in all_estimators() order
};

RepOutcome run_replication(const MCConfig& cfg, const ConstraintFunction& cons, const std::vector<bool>& want,
                           std::size_t b_index, std::uint64_t rep)
{
    RepOutcome out;
    out.loss.assign(5, 0.0);
    try {
        const DgpDraw d = generate_dgp(cfg, b_index, rep);
        const EstimationProblem problem = build_linear_problem(d.design, d.response);
        const FitResult fit = fit_unrestricted(problem);
        auto record = [&](EstimatorKind k, const Vector& est) {
            out.loss[static_cast<std::size_t>(k)] = (est - d.theta0).squaredNorm();
        };
        record(EstimatorKind::Unrestricted, fit.theta);
        if (want[static_cast<std::size_t>(EstimatorKind::Restricted)]) {
            record(EstimatorKind::Restricted, fit_restricted(fit, cons).fit.theta);
        }
        if (want[static_cast<std::size_t>(EstimatorKind::JamesStein)]) {
            record(EstimatorKind::JamesStein, james_stein(fit));
        }
        if (want[static_cast<std::size_t>(EstimatorKind::EB)]) {
            EBConfig eb = cfg.eb;
            eb.seed = derive_key(cfg.seed, {0x6562ULL, b_index, rep});
            eb.truncated.clear();
            if (!cfg.eb_truncate_all) {
                for (Index j = 0; j < cfg.k1; ++j) eb.truncated.push_back(j);
            }
            record(EstimatorKind::EB, eb_fit(problem, eb).theta);
        }
        if (want[static_cast<std::size_t>(EstimatorKind::ICSE)]) {
            IcseOptions opt;
            opt.orthant_draws = cfg.orthant_draws;
            opt.seed = derive_key(cfg.seed, {0x69637365ULL, b_index, rep});
            opt.prune_below = cfg.prune_below;
            opt.threads = 1;
            record(EstimatorKind::ICSE, fit_icse(fit, cons, opt).combined);
        }
        out.ok = true;
    } catch (const Error&) {
        out.ok = false;
    }
    return out;
}

}  // namespace

MCResult run_study(const MCConfig& cfg)
{
    cfg.validate();
    const Index m = cfg.k1 + cfg.k2;
    std::vector<Index> ineq, eq;
    for (Index j = 0; j < cfg.k1; ++j) ineq.push_back(j);
    for (Index j = cfg.k1; j < m; ++j) eq.push_back(j);
    const ConstraintFunction cons = ConstraintFunction::sign_restrictions(m, ineq, eq);

    std::vector<bool> want(5, false);
    for (EstimatorKind k : cfg.estimators) want[static_cast<std::size_t>(k)] = true;

    const std::size_t nb = cfg.b_grid.size();
    const std::uint64_t reps = cfg.replications;
    std::vector<RepOutcome> outcomes(nb * reps);
    parallel_for(outcomes.size(), cfg.threads, [&](std::size_t idx) {
        outcomes[idx] = run_replication(cfg, cons, want, idx / reps, idx % reps);
    });

    MCResult res;
    res.config = cfg;
    for (const auto& o : outcomes) res.failures += o.ok ? 0 : 1;
    if (static_cast<double>(res.failures) >= 1e-3 * static_cast<double>(outcomes.size())) {
        throw StudyError("mc-study: " + std::to_string(res.failures) + " of " + std::to_string(outcomes.size()) +
                         " replications failed");
    }

    const std::size_t unres = static_cast<std::size_t>(EstimatorKind::Unrestricted);
    for (std::size_t bi = 0; bi < nb; ++bi) {
        std::vector<double> base;
        for (std::uint64_t r = 0; r < reps; ++r) {
            const auto& o = outcomes[bi * reps + r];
            if (o.ok) base.push_back(o.loss[unres]);
        }
        const double nd = static_cast<double>(base.size());
        double base_mean = 0.0;
        for (double v : base) base_mean += v;
        base_mean /= nd;

        for (EstimatorKind k : cfg.estimators) {
            const std::size_t ki = static_cast<std::size_t>(k);
            std::vector<double> loss;
            for (std::uint64_t r = 0; r < reps; ++r) {
                const auto& o = outcomes[bi * reps + r];
                if (o.ok) loss.push_back(o.loss[ki]);
            }
            double mean = 0.0;
            for (double v : loss) mean += v;
            mean /= nd;
            MCCell cell;
            cell.b = cfg.b_grid[bi];
            cell.estimator = k;
            cell.raw_mse = mean;
            cell.normalized_mse = k == EstimatorKind::Unrestricted ? 1.0 : mean / base_mean;
            if (k != EstimatorKind::Unrestricted) {
                double ss = 0.0;
                for (std::size_t r = 0; r < loss.size(); ++r) {
                    const double e = loss[r] - cell.normalized_mse * base[r];
                    ss += e * e;
                }
                cell.mc_se = std::sqrt(ss / (nd - 1.0) / nd) / base_mean;
            }
            res.cells.push_back(cell);
        }
    }
    return res;
}

std::string format_number(double x)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

void emit_tables(const MCResult& res, std::ostream& out)
{
    const MCConfig& c = res.config;
    out << "b,estimator,raw_mse,normalized_mse,mc_se,n,k1,k2,c,replications,seed\n";
    for (const auto& cell : res.cells) {
        out << format_number(cell.b) << ',' << to_string(cell.estimator) << ',' << format_number(cell.raw_mse)
            << ',' << format_number(cell.normalized_mse) << ',' << format_number(cell.mc_se) << ',' << c.n << ','
            << c.k1 << ',' << c.k2 << ',' << format_number(c.c_equal) << ',' << c.replications << ',' << c.seed
            << '\n';
    }
}

void emit_tables(const MCResult& res, const std::string& path)
{
    std::ofstream f(path);
    if (!f) throw Error("cannot open '" + path + "' for writing");
    emit_tables(res, f);
    if (!f) throw Error("write to '" + path + "' failed");
}

}  // namespace icse
