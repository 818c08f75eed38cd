#include "cli/commands.hpp"

#include "icse/asymptotics.hpp"
#include "icse/comparators.hpp"
#include "icse/errors.hpp"
#include "icse/estimators.hpp"
#include "icse/mc_study.hpp"
#include "icse/orthant.hpp"
#include "icse/shrinkage.hpp"

#include <CLI11.hpp>

#include <array>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>

namespace icse::cli {

namespace {

std::string exact(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string pattern_label(std::uint32_t mask, const std::vector<Index>& rows)
{
    std::string s = "{";
    bool first = true;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (!(mask & (std::uint32_t{1} << k))) continue;
        if (!first) s += ';';
        s += std::to_string(rows[k] + 1);
        first = false;
    }
    return s + "}";
}

std::vector<Index> iota_rows(Index p)
{
    std::vector<Index> r(static_cast<std::size_t>(p));
    for (Index j = 0; j < p; ++j) r[static_cast<std::size_t>(j)] = j;
    return r;
}

void emit(const Section& s, std::ostream& out, const std::function<void(std::ostream&)>& write)
{
    if (!s.has("output")) {
        write(out);
        out.flush();
        return;
    }
    const auto path = s.path("output");
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot open output file '" + path.string() + "'");
    write(f);
    f.flush();
    if (!f) throw ConfigError("failed writing output file '" + path.string() + "'");
}

template <class F>
auto as_config(F&& f) -> decltype(f())
{
    try {
        return f();
    } catch (const icse::Error& e) {
        throw ConfigError(e.what());
    }
}

EstimationProblem load_problem(const DataSet& data)
{
    try {
        return build_linear_problem(data.design, data.response);
    } catch (const ShapeError& e) {
        throw DataError(e.what());
    }
}

ConstraintFunction constraints_from(const Section& s, Index m)
{
    const bool shorthand = s.has("sign_restrictions");
    const bool table = s.has("constraints");
    if (shorthand == table) {
        throw ConfigError("[" + s.name() + "] give exactly one of 'sign_restrictions' or 'constraints'");
    }
    if (shorthand) {
        const auto ineq = s.indices("sign_restrictions", m);
        std::vector<Index> eq;
        if (s.has("equality")) eq = s.indices("equality", m);
        for (Index j : eq) {
            if (std::binary_search(ineq.begin(), ineq.end(), j)) {
                throw ConfigError("coefficient " + std::to_string(j + 1) +
                                  " appears in both 'sign_restrictions' and 'equality'");
            }
        }
        return ConstraintFunction::sign_restrictions(m, ineq, eq);
    }
    if (s.has("equality")) throw ConfigError("'equality' only applies with 'sign_restrictions'");
    ConstraintTable t = read_constraints_csv(s.path("constraints"), m);
    return ConstraintFunction::linear(std::move(t.jacobian), std::move(t.intercept), std::move(t.equality_mask));
}

LossSpec loss_from(const Section& s)
{
    const std::string v = s.text_or("loss", "inverse_omega");
    if (v == "inverse_omega") return LossSpec::inverse_omega();
    if (v == "identity") return LossSpec::identity();
    throw ConfigError("key 'loss' expects inverse_omega or identity, got '" + v + "'");
}

FitOptions fit_options_from(const Section& s)
{
    const std::string v = s.text_or("variance", "robust");
    FitOptions o;
    if (v == "robust") {
        o.variance = VarianceKind::Robust;
    } else if (v == "homoskedastic") {
        o.variance = VarianceKind::Homoskedastic;
    } else {
        throw ConfigError("key 'variance' expects robust or homoskedastic, got '" + v + "'");
    }
    return o;
}

void cmd_fit(const Section& s, unsigned threads, std::ostream& out)
{
    s.reject_unknown({"data", "sign_restrictions", "equality", "constraints", "loss", "variance", "orthant_draws",
                      "prune_below", "seed", "output"});
    const std::uint64_t seed = s.seed();
    const DataSet data = read_data_csv(s.path("data"));
    const Index m = data.design.cols();
    const ConstraintFunction cons = constraints_from(s, m);

    IcseOptions opt;
    opt.loss = loss_from(s);
    opt.fit = fit_options_from(s);
    opt.orthant_draws = s.count_or("orthant_draws", opt.orthant_draws);
    opt.prune_below = s.number_or("prune_below", opt.prune_below);
    opt.seed = seed;
    opt.threads = threads;
    if (opt.orthant_draws < 1000) throw ConfigError("'orthant_draws' must be at least 1000");
    if (opt.prune_below < 0.0 || opt.prune_below >= 1.0) throw ConfigError("'prune_below' must lie in [0, 1)");

    const EstimationProblem problem = load_problem(data);
    const ShrinkageResult r = fit_icse(problem, cons, opt);
    const std::vector<Index> ineq = cons.inequality_rows();

    emit(s, out, [&](std::ostream& o) {
        o << output_banner(seed) << '\n';
        o << "quantity,index,value\n";
        auto vec = [&](const char* name, const Vector& v) {
            for (Index j = 0; j < v.size(); ++j) o << name << ',' << j + 1 << ',' << exact(v(j)) << '\n';
        };
        vec("theta_hat", r.theta_hat);
        vec("theta_tilde", r.theta_tilde);
        vec("theta_star", r.combined);
        vec("c_hat", r.c_hat);
        o << "weight,," << exact(r.weight) << '\n';
        o << "tau_star,," << exact(r.tau_star) << '\n';
        o << "scaled_loss,," << exact(r.scaled_loss) << '\n';
        o << "n,," << problem.n() << '\n';
        o << "# binding patterns: constraint rows are 1-based; equality rows always bind\n";
        o << "pattern,binding,count,included,probability,probability_se,expected_loss,a_trace,a_phimax,gamma\n";
        for (std::size_t k = 0; k < r.pattern_table.size(); ++k) {
            const PatternStats& p = r.pattern_table[k];
            o << k << ',' << pattern_label(p.pattern.mask, ineq) << ',' << p.pattern.count << ','
              << (p.included ? 1 : 0) << ',' << exact(p.probability) << ',' << exact(p.probability_se) << ','
              << exact(p.expected_loss) << ',' << exact(p.a_trace) << ',' << exact(p.a_phimax) << ','
              << exact(p.gamma) << '\n';
        }
    });
}

void cmd_mc_study(const Section& s, unsigned threads, std::ostream& out)
{
    s.reject_unknown({"n", "k1", "k2", "b_grid", "b_points", "c", "replications", "seed", "estimators",
                      "orthant_draws", "prune_below", "eb_truncate_all", "eb_gibbs_burn", "eb_gibbs_draws",
                      "eb_d_draws", "output"});
    MCConfig cfg;
    cfg.seed = s.seed();
    cfg.n = static_cast<Index>(s.count_or("n", static_cast<std::uint64_t>(cfg.n)));
    cfg.k1 = static_cast<Index>(s.count_or("k1", static_cast<std::uint64_t>(cfg.k1)));
    cfg.k2 = static_cast<Index>(s.count_or("k2", static_cast<std::uint64_t>(cfg.k2)));
    if (s.has("b_grid") && s.has("b_points")) throw ConfigError("give at most one of 'b_grid' and 'b_points'");
    if (s.has("b_grid")) cfg.b_grid = parse_list("b_grid", s.text("b_grid"));
    if (s.has("b_points")) {
        const auto pts = s.count("b_points");
        if (pts < 2 || pts > 10000) throw ConfigError("'b_points' must lie in 2..10000");
        cfg.b_grid = MCConfig::default_b_grid(static_cast<int>(pts));
    }
    cfg.c_equal = s.number_or("c", cfg.c_equal);
    cfg.replications = s.count_or("replications", cfg.replications);
    if (s.has("estimators")) {
        cfg.estimators.clear();
        const std::string list = s.text("estimators");
        std::size_t start = 0;
        while (start <= list.size()) {
            const auto comma = list.find(',', start);
            std::string name = list.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            name.erase(0, name.find_first_not_of(" \t"));
            name.erase(name.find_last_not_of(" \t") + 1);
            if (!name.empty()) cfg.estimators.push_back(as_config([&] { return estimator_from_string(name); }));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
    }
    cfg.orthant_draws = s.count_or("orthant_draws", cfg.orthant_draws);
    cfg.prune_below = s.number_or("prune_below", cfg.prune_below);
    cfg.eb_truncate_all = s.flag_or("eb_truncate_all", cfg.eb_truncate_all);
    cfg.eb.gibbs_burn = s.count_or("eb_gibbs_burn", cfg.eb.gibbs_burn);
    cfg.eb.gibbs_draws = s.count_or("eb_gibbs_draws", cfg.eb.gibbs_draws);
    cfg.eb.d_draws = s.count_or("eb_d_draws", cfg.eb.d_draws);
    cfg.threads = threads;
    as_config([&] { cfg.validate(); return 0; });

    const MCResult res = run_study(cfg);
    emit(s, out, [&](std::ostream& o) {
        o << output_banner(cfg.seed) << '\n';
        emit_tables(res, o);
    });
}

void cmd_limit_sim(const Section& s, unsigned threads, std::ostream& out)
{
    s.reject_unknown({"m", "J", "V", "W", "R", "sign_restrictions", "c", "tau", "tau_grid", "draws", "seed", "zeta",
                      "output"});
    LimitConfig cfg;
    cfg.seed = s.seed();
    Index m = 0;
    if (s.has("J")) {
        cfg.J = s.matrix("J");
        m = cfg.J.rows();
        if (s.has("m") && static_cast<Index>(s.count("m")) != m) throw ConfigError("'m' disagrees with 'J'");
    } else {
        m = static_cast<Index>(s.count("m"));
        if (m < 1 || m > 20) throw ConfigError("'m' must lie in 1..20");
        cfg.J = Matrix::Identity(m, m);
    }
    cfg.V = s.has("V") ? s.matrix("V") : Matrix::Identity(m, m);
    if (s.has("R") == s.has("sign_restrictions")) {
        throw ConfigError("[limit-sim] give exactly one of 'R' or 'sign_restrictions'");
    }
    if (s.has("R")) {
        cfg.R = s.matrix("R");
    } else {
        const auto rows = s.indices("sign_restrictions", m);
        cfg.R = Matrix::Zero(static_cast<Index>(rows.size()), m);
        for (std::size_t k = 0; k < rows.size(); ++k) cfg.R(static_cast<Index>(k), rows[k]) = 1.0;
    }
    const Index p = cfg.R.rows();
    cfg.localizer = s.has("c") ? s.vector("c") : Vector::Zero(p);
    cfg.draws = s.count_or("draws", cfg.draws);
    cfg.zeta = s.number_or("zeta", cfg.zeta);
    cfg.threads = threads;

    const std::string w = s.text_or("W", "inverse_omega");
    cfg.W = Matrix::Identity(m, m);
    as_config([&] { cfg.validate(); return 0; });
    const Matrix omega = cfg.omega();
    if (w == "inverse_omega") {
        cfg.W = omega.ldlt().solve(Matrix::Identity(m, m));
        cfg.W = 0.5 * (cfg.W + cfg.W.transpose());
    } else if (w != "identity") {
        cfg.W = s.matrix("W");
    }
    as_config([&] { cfg.validate(); return 0; });

    const LimitDraws base = draw_limit(cfg);
    const auto stats = simulation_truth_stats(base, cfg);
    const double tau_opt = optimal_tau(stats);
    const std::string tau_text = s.text_or("tau", "optimal");
    const double tau = tau_text == "optimal" ? std::max(0.0, tau_opt) : parse_number("tau", tau_text);
    if (tau < 0.0) throw ConfigError("'tau' must be non-negative");
    std::vector<double> grid;
    if (s.has("tau_grid")) grid = parse_list("tau_grid", s.text("tau_grid"));
    for (double t : grid) {
        if (t < 0.0) throw ConfigError("'tau_grid' values must be non-negative");
    }

    const double trace = (cfg.W * omega).trace();
    const LimitDraws used = with_tau(base, tau);
    const RiskEstimate risk = estimate_risk(used, cfg.W, cfg.zeta);

    bool two_d = m == 2 && p == 2 && cfg.R.isApprox(Matrix::Identity(2, 2), 0.0);
    std::array<PatternMoments, 4> cf{};
    if (two_d) cf = closed_form_2d(cfg.J, cfg.V, cfg.localizer);

    const std::size_t patterns = std::size_t{1} << p;
    std::vector<double> count(patterns, 0.0);
    std::vector<Eigen::Vector2d> lsum(two_d ? 4 : 0, Eigen::Vector2d::Zero()), lsq(two_d ? 4 : 0, Eigen::Vector2d::Zero());
    for (Index i = 0; i < base.size(); ++i) {
        const std::uint32_t k = base.pattern_id[static_cast<std::size_t>(i)];
        count[k] += 1.0;
        if (two_d) {
            const Eigen::Vector2d l = base.lambda_tilde.row(i).transpose();
            lsum[k] += l;
            lsq[k] += l.cwiseProduct(l);
        }
    }
    const double nd = static_cast<double>(base.size());
    const auto rows = iota_rows(p);

    emit(s, out, [&](std::ostream& o) {
        o << output_banner(cfg.seed) << '\n';
        o << "kind,label,value,std_error,reference\n";
        for (std::size_t k = 0; k < patterns; ++k) {
            if (count[k] == 0.0 && !two_d) continue;
            const double f = count[k] / nd;
            const auto label = pattern_label(static_cast<std::uint32_t>(k), rows);
            o << "pattern," << label << ',' << format_number(f) << ','
              << format_number(std::sqrt(f * (1.0 - f) / nd)) << ','
              << (two_d ? format_number(cf[k].probability) : std::string()) << '\n';
            if (two_d && count[k] > 1.0) {
                for (int j = 0; j < 2; ++j) {
                    const double mean = lsum[k](j) / count[k];
                    const double var = std::max(0.0, (lsq[k](j) - count[k] * mean * mean) / (count[k] - 1.0));
                    o << "lambda_mean_" << j + 1 << ',' << label << ',' << format_number(mean) << ','
                      << format_number(std::sqrt(var / count[k])) << ',' << format_number(cf[k].lambda_mean(j))
                      << '\n';
                }
            }
        }
        o << "tau,optimal," << format_number(tau_opt) << ",,\n";
        o << "tau,upper_bound," << format_number(tau_upper_bound(stats)) << ",,\n";
        o << "tau,used," << format_number(tau) << ",,\n";
        o << "expected_binding_count,," << format_number(expected_binding_count(stats)) << ",,\n";
        o << "risk," << format_number(tau) << ',' << format_number(risk.risk) << ',' << format_number(risk.se)
          << ',' << format_number(trace) << '\n';
        o << "trimmed_risk," << format_number(tau) << ',' << format_number(risk.trimmed_risk) << ",,"
          << format_number(trace) << '\n';
        for (double t : grid) {
            const RiskEstimate r = estimate_risk(with_tau(base, t), cfg.W, cfg.zeta);
            o << "bound," << format_number(t) << ',' << format_number(r.risk) << ',' << format_number(r.se) << ','
              << format_number(risk_bound(t, trace, stats)) << '\n';
        }
        const double margin = risk.se > 0.0 ? (trace - risk.risk) / risk.se : 0.0;
        o << "verdict," << (margin > 3.0 ? "dominates" : "not_established") << ',' << format_number(margin)
          << ",," << format_number(trace) << '\n';
    });
}

void cmd_orthant(const Section& s, unsigned threads, std::ostream& out)
{
    s.reject_unknown({"mean", "covariance", "positive_set", "draws", "seed", "output"});
    const std::uint64_t seed = s.seed();
    const Vector mean = s.vector("mean");
    const Matrix cov = s.matrix("covariance");
    const std::uint64_t draws = s.count_or("draws", 100000);
    if (draws < 1000) throw ConfigError("'draws' must be at least 1000");
    if (cov.rows() != mean.size() || cov.cols() != mean.size()) {
        throw ConfigError("'covariance' must be square with the length of 'mean'");
    }
    if (mean.size() > 20) throw ConfigError("dimension above 20 is not supported");
    const auto rows = iota_rows(mean.size());

    std::vector<std::pair<std::uint32_t, ProbabilityEstimate>> results;
    if (s.has("positive_set")) {
        OrthantQuery q;
        q.mean = mean;
        q.covariance = cov;
        if (s.text("positive_set") != "none") q.positive_set = s.indices("positive_set", mean.size());
        q.draws = draws;
        q.seed = seed;
        q.threads = threads;
        std::uint32_t mask = 0;
        for (Index j : q.positive_set) mask |= (std::uint32_t{1} << j);
        results.emplace_back(mask, region_probability(q));
    } else {
        const auto all = all_pattern_probabilities(mean, cov, draws, seed, threads);
        for (std::size_t k = 0; k < all.size(); ++k) results.emplace_back(static_cast<std::uint32_t>(k), all[k]);
    }
    emit(s, out, [&](std::ostream& o) {
        o << output_banner(seed) << '\n';
        o << "pattern,positive_set,probability,std_error\n";
        for (const auto& [mask, est] : results) {
            o << mask << ',' << pattern_label(mask, rows) << ',' << format_number(est.estimate) << ','
              << format_number(est.std_error) << '\n';
        }
    });
}

void cmd_eb(const Section& s, unsigned, std::ostream& out)
{
    s.reject_unknown({"data", "truncated", "gibbs_burn", "gibbs_draws", "d_draws", "d_method", "seed", "output"});
    EBConfig cfg;
    cfg.seed = s.seed();
    const DataSet data = read_data_csv(s.path("data"));
    const Index m = data.design.cols();
    const std::string trunc = s.text_or("truncated", "all");
    if (trunc != "all") cfg.truncated = s.indices("truncated", m);
    cfg.gibbs_burn = s.count_or("gibbs_burn", cfg.gibbs_burn);
    cfg.gibbs_draws = s.count_or("gibbs_draws", cfg.gibbs_draws);
    cfg.d_draws = s.count_or("d_draws", cfg.d_draws);
    const std::string method = s.text_or("d_method", "ghk");
    if (method == "ghk") {
        cfg.d_method = DMethod::Ghk;
    } else if (method == "mc") {
        cfg.d_method = DMethod::MonteCarlo;
    } else {
        throw ConfigError("key 'd_method' expects ghk or mc, got '" + method + "'");
    }
    as_config([&] { cfg.validate(); return 0; });

    const EstimationProblem problem = load_problem(data);
    const EBFit fit = eb_fit(problem, cfg);
    emit(s, out, [&](std::ostream& o) {
        o << output_banner(cfg.seed) << '\n';
        o << "quantity,index,value,std_error\n";
        o << "chosen_nu,," << format_number(fit.chosen_nu) << ",\n";
        o << "log_marginal,," << format_number(fit.log_marginal) << ",\n";
        o << "d_const,," << format_number(fit.posterior.d_const) << ',' << format_number(fit.posterior.d_std_error)
          << '\n';
        for (Index j = 0; j < m; ++j) {
            o << "theta_bar," << j + 1 << ',' << format_number(fit.posterior.theta_bar(j)) << ",\n";
        }
        for (Index j = 0; j < m; ++j) {
            o << "posterior_mean," << j + 1 << ',' << format_number(fit.posterior.posterior_mean(j)) << ','
              << format_number(fit.posterior.posterior_mean_se(j)) << '\n';
        }
    });
}

}  // namespace

std::string output_banner(std::uint64_t seed)
{
    return std::string("# icse-kit ") + ICSE_VERSION + " seed=" + std::to_string(seed);
}

int run(const Invocation& inv, std::ostream& out, std::ostream& err)
{
    try {
        Section s = inv.config ? load_section(*inv.config, inv.command) : Section(inv.command);
        apply_overrides(s, inv.overrides);
        const unsigned threads = std::max(1u, inv.threads);
        if (inv.command == "fit") {
            cmd_fit(s, threads, out);
        } else if (inv.command == "mc-study") {
            cmd_mc_study(s, threads, out);
        } else if (inv.command == "limit-sim") {
            cmd_limit_sim(s, threads, out);
        } else if (inv.command == "orthant") {
            cmd_orthant(s, threads, out);
        } else if (inv.command == "eb") {
            cmd_eb(s, threads, out);
        } else {
            throw ConfigError("unknown command '" + inv.command + "'");
        }
        return kOk;
    } catch (const ConfigError& e) {
        err << "icse: config error: " << e.what() << '\n';
        return kConfig;
    } catch (const DataError& e) {
        err << "icse: data error: " << e.what() << '\n';
        return kData;
    } catch (const CapacityError& e) {
        err << "icse: config error: " << e.what() << '\n';
        return kConfig;
    } catch (const LossSpecError& e) {
        err << "icse: config error: " << e.what() << '\n';
        return kConfig;
    } catch (const ShapeError& e) {
        err << "icse: data error: " << e.what() << '\n';
        return kData;
    } catch (const std::exception& e) {
        err << "icse: numerical error: " << e.what() << '\n';
        return kNumerical;
    }
}

int icse_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Inequality constrained shrinkage estimation", "icse"};
    app.set_version_flag("--version", std::string(ICSE_VERSION));
    app.require_subcommand(1);

    struct Flags {
        std::string config;
        std::vector<std::string> set;
        unsigned threads = 1;
        std::string seed, output, data;
    };
    const std::array<std::pair<const char*, const char*>, 5> commands{{
        {"fit", "Fit the unrestricted, restricted and shrinkage estimators to a data CSV"},
        {"mc-study", "Run the Monte Carlo comparison of the five estimators"},
        {"limit-sim", "Simulate the limit experiment and its asymptotic risk"},
        {"orthant", "Estimate sign-pattern probabilities of a multivariate normal"},
        {"eb", "Fit the empirical Bayes estimator with a truncated normal prior"},
    }};
    std::array<Flags, 5> flags;
    std::array<CLI::App*, 5> subs{};
    for (std::size_t i = 0; i < commands.size(); ++i) {
        auto* sub = app.add_subcommand(commands[i].first, commands[i].second);
        Flags& f = flags[i];
        sub->add_option("-c,--config", f.config, "Config file with a [" + std::string(commands[i].first) + "] section");
        sub->add_option("--set", f.set, "Override a config key (key=value), repeatable");
        sub->add_option("--threads", f.threads, "Worker threads; results do not depend on it")
            ->check(CLI::Range(1u, 1024u));
        sub->add_option("--seed", f.seed, "Overrides the seed key");
        sub->add_option("-o,--output", f.output, "Overrides the output key");
        if (i == 0 || i == 4) sub->add_option("--data", f.data, "Overrides the data key");
        subs[i] = sub;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfig;
    }

    for (std::size_t i = 0; i < commands.size(); ++i) {
        if (!subs[i]->parsed()) continue;
        const Flags& f = flags[i];
        Invocation inv;
        inv.command = commands[i].first;
        if (!f.config.empty()) inv.config = f.config;
        inv.overrides = f.set;
        if (!f.seed.empty()) inv.overrides.push_back("seed=" + f.seed);
        if (!f.output.empty()) inv.overrides.push_back("output=" + f.output);
        if (!f.data.empty()) inv.overrides.push_back("data=" + f.data);
        inv.threads = f.threads;
        return run(inv, out, err);
    }
    return kConfig;
}

}  // namespace icse::cli
