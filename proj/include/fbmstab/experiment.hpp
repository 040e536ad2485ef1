#pragma once

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "fbmstab/config.hpp"
#include "fbmstab/io.hpp"
#include "fbmstab/parallel.hpp"
#include "fbmstab/stability.hpp"

#ifndef FBMSTAB_VERSION
#define FBMSTAB_VERSION "unknown"
#endif

namespace fbmstab {

inline constexpr const char* kVersion = FBMSTAB_VERSION;

/// The rate condition does not hold, or the requested rate is not below the estimated one.
class StabilityRefused : public Error {
public:
    explicit StabilityRefused(const std::string& what) : Error(what) {}
};

struct RunOptions {
    std::filesystem::path out;           // output directory, already resolved
    unsigned threads = 0;                // 0 selects hardware concurrency
    std::optional<std::uint64_t> seed;   // restricts per-seed commands to one seed
    std::optional<double> rho;           // stability: overrides rho_fraction * rho_hat
    bool summary_only = false;           // generate: skip per-seed path files
    std::ostream* log = &std::cerr;
};

/// Output directory precedence: explicit flag, then output_dir (relative paths resolve against
/// $FBMSTAB_OUT when set, else the working directory).
inline std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg, const std::optional<std::string>& flag) {
    if (flag) return *flag;
    std::filesystem::path p = cfg.output_dir;
    if (p.is_absolute()) return p;
    if (const char* root = std::getenv("FBMSTAB_OUT"); root && *root) return std::filesystem::path(root) / p;
    return p;
}

/// Everything that determines rho_hat*.
struct RateSummary {
    double c_S = 0.0;
    double c_DF = 0.0;
    double mu = 0.0;
    bool mu_auto = false;
    bool exact = false;  // stopping times are deterministic (no effective noise): d = 1, dbar = 0
    Estimate d{1.0, 0.0};
    Estimate dbar{0.0, 0.0};
    double D = 0.0;
    double rho_star = 0.0;
    Estimate C1{0.0, 0.0};
    Estimate C2{0.0, 0.0};
    PCoefficients p{0.0, 0.0};
    double q = 0.0;
    SufficientCondition sufficient{};
    bool satisfied = false;  // c_S c_DF mu < 1 and rho_hat* > 0
    std::string reason;
};

namespace detail {

inline std::vector<std::uint64_t> seed_list(const SeedRange& r, const RunOptions& opt) {
    if (opt.seed) return {*opt.seed};
    std::vector<std::uint64_t> s(r.count);
    for (std::size_t i = 0; i < r.count; ++i) s[i] = r.first + i;
    return s;
}

inline Json header(const ExperimentConfig& cfg, const char* command) {
    return Json{{"command", command}, {"version", kVersion}, {"config", to_json(cfg)}};
}

inline Json estimate_json(const Estimate& e) { return Json{{"value", e.value}, {"se", e.se}}; }

/// nlohmann writes non-finite numbers as null; keep that explicit.
inline Json number(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

/// Smallest admissible mu: stopping windows must span several grid cells.
inline double min_mu(const ExperimentConfig& cfg) { return 8.0 * cfg.grid.h; }

inline bool deterministic_stopping(const ExperimentConfig& cfg) {
    return cfg.covariance_spec().trace() == 0.0 || cfg.nonlinearity_spec().c_DG == 0.0;
}

}  // namespace detail

inline Json to_json(const RateSummary& r) {
    using detail::number;
    return Json{{"c_S", r.c_S},
                {"c_DF", r.c_DF},
                {"mu", r.mu},
                {"mu_auto", r.mu_auto},
                {"exact", r.exact},
                {"d_hat", detail::estimate_json(r.d)},
                {"dbar_hat", detail::estimate_json(r.dbar)},
                {"D_hat", r.D},
                {"rho_star_hat", number(r.rho_star)},
                {"moment_constants", {{"C1", detail::estimate_json(r.C1)}, {"C2", detail::estimate_json(r.C2)}}},
                {"p", {{"p1", r.p.p1}, {"p2", r.p.p2}, {"q", r.q}}},
                {"sufficient_condition",
                 {{"mu_opt", r.sufficient.mu_opt},
                  {"K_min", number(r.sufficient.K_min)},
                  {"satisfied", r.sufficient.satisfied},
                  {"stationarity_residual", r.sufficient.stationarity_residual}}},
                {"satisfied", r.satisfied},
                {"reason", r.reason}};
}

/// Resolves mu and estimates c_S, the moment constants, d, dbar, D and rho_hat*.
inline RateSummary resolve_rate(const ExperimentConfig& cfg, unsigned threads) {
    RateSummary r;
    auto op = cfg.spectral_operator();
    auto nl = cfg.nonlinearity_spec();
    auto Q = cfg.covariance_spec();
    r.c_S = damped_semigroup_constant(op, cfg.chain.beta);
    r.c_DF = nl.c_DF;
    r.q = 2.0 * (1.0 - cfg.hurst);
    r.exact = detail::deterministic_stopping(cfg);
    double c = r.c_S * r.c_DF;

    if (c == 0.0) {
        // No drift: every rate below lambda is admissible.
        r.mu = cfg.mu.value_or(detail::min_mu(cfg));
        r.mu_auto = !cfg.mu;
        r.exact = true;
        r.D = r.mu;
        r.rho_star = cfg.lambda;
        r.sufficient = {r.mu, 0.0, true, 0.0};
        r.satisfied = true;
        return r;
    }

    if (!r.exact) {
        const double mu_ref = 0.01;  // the normalised moments do not depend on mu
        auto first = cfg.seeds.first + 500000;
        r.C1 = estimate_moment_constant(cfg.hurst, cfg.chain.beta_dprime, 1, mu_ref, Q, cfg.stats.moment_samples, first,
                                        128, threads);
        r.C2 = estimate_moment_constant(cfg.hurst, cfg.chain.beta_dprime, 2, mu_ref, Q, cfg.stats.moment_samples, first,
                                        128, threads);
        r.p = compute_p_coefficients(Q.trace(), cfg.chain.beta_dprime, cfg.c_alpha_beta, nl.c_DG, nl.c_DF, r.C1.value,
                                     r.C2.value);
    }
    r.sufficient = sufficient_condition_K(cfg.lambda, r.c_S, r.c_DF, r.p.p(), r.q);

    r.mu_auto = !cfg.mu;
    r.mu = cfg.mu ? *cfg.mu : std::max(r.sufficient.mu_opt, detail::min_mu(cfg));
    if (c * r.mu >= 1.0) {
        r.D = r.mu;
        r.rho_star = -std::numeric_limits<double>::infinity();
        r.reason = "c_S c_DF mu >= 1";
        return r;
    }

    if (r.exact) {
        r.D = r.mu;
    } else {
        auto scfg = cfg.stopping_config(r.mu);
        auto mc = cfg.monte_carlo(threads);
        r.d = estimate_d(mc, scfg);
        r.dbar = estimate_dbar(mc, scfg, cfg.stats.windows);
        r.D = compute_D(std::min(r.d.value, 1.0), r.dbar.value, r.mu);
    }
    r.rho_star = rho_star({cfg.lambda, r.c_S, r.c_DF, r.mu, r.D});
    r.satisfied = r.rho_star > 0.0;
    if (!r.satisfied) r.reason = "rho_hat* <= 0";
    return r;
}

/// fBm paths per seed and an empirical covariance check pooled over seeds and modes.
inline Json cmd_generate(const ExperimentConfig& cfg, const RunOptions& opt) {
    auto seeds = detail::seed_list(cfg.seeds, opt);
    TimeGrid grid = TimeGrid::covering(0.0, cfg.grid.horizon, cfg.grid.h);
    FbmGenerator gen(grid, HurstParameter(cfg.hurst));
    auto Q = cfg.covariance_spec();

    // Ten distinct (s, t) node pairs, in tenths of the horizon.
    static constexpr std::pair<std::size_t, std::size_t> kTenths[] = {{1, 2}, {1, 10}, {2, 5}, {3, 3}, {3, 8},
                                                                      {4, 6}, {5, 10}, {6, 7}, {7, 9}, {10, 10}};
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::size_t last = grid.size() - 1;
    for (auto [a, b] : kTenths) pairs.emplace_back(last * a / 10, last * b / 10);
    std::vector<std::size_t> active;
    for (std::size_t m = 0; m < Q.dim(); ++m)
        if (Q.eigenvalues()[m] > 0.0) active.push_back(m);

    // products[s][pair * |active| + m]: normalised mode products for the covariance summary.
    std::vector<std::vector<double>> products(seeds.size());
    parallel_for(seeds.size(), opt.threads, [&](std::size_t i) {
        VectorPath w = gen.hilbert(Q, seeds[i]);
        if (!opt.summary_only) path_table(w).save(opt.out / "fbm" / ("seed_" + std::to_string(seeds[i]) + ".csv"));
        auto& prod = products[i];
        for (auto [a, b] : pairs)
            for (std::size_t m : active) {
                double q = Q.eigenvalues()[m];
                auto col = static_cast<Eigen::Index>(m);
                prod.push_back(w.values()(static_cast<Eigen::Index>(a), col) * w.values()(static_cast<Eigen::Index>(b), col) / q);
            }
    });

    Json out = detail::header(cfg, "generate");
    out["seeds"] = seeds;
    out["nodes"] = grid.size();
    Json rows = Json::array();
    double worst_z = 0.0;
    std::size_t n = seeds.size() * active.size();
    if (n >= 2) {
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            std::vector<double> x;
            x.reserve(n);
            for (const auto& prod : products)
                for (std::size_t m = 0; m < active.size(); ++m) x.push_back(prod[p * active.size() + m]);
            auto e = detail::mean_and_se(x);
            double s = grid.time(pairs[p].first), t = grid.time(pairs[p].second);
            double theory = fbm_covariance(s, t, cfg.hurst);
            double z = e.se > 0.0 ? (e.value - theory) / e.se : 0.0;
            worst_z = std::max(worst_z, std::abs(z));
            rows.push_back({{"s", s}, {"t", t}, {"theory", theory}, {"empirical", e.value}, {"se", e.se}, {"z", z}});
        }
    }
    out["covariance_check"] = {{"samples", n},
                               {"pairs", rows},
                               {"max_abs_z", worst_z},
                               {"within_3se", worst_z <= 3.0},
                               {"note", active.empty() ? "tr(Q) = 0: every path is identically zero"
                                        : n < 2        ? "fewer than two samples: no covariance estimate"
                                                       : "modes normalised by sqrt(q_i) and pooled"}};
    write_json(opt.out / "generate_summary.json", out);
    return out;
}

/// Stopping sequences, per-window N / M_j tables and the d, dbar, D estimates.
inline Json cmd_stoptimes(const ExperimentConfig& cfg, const RunOptions& opt) {
    if (cfg.nonlinearity_spec().c_DF == 0.0) throw ConfigError("stoptimes: the stopping equation needs c_DF > 0");
    auto rate = resolve_rate(cfg, opt.threads);
    auto scfg = cfg.stopping_config(rate.mu);
    auto seeds = detail::seed_list(cfg.seeds, opt);
    double mu = rate.mu;
    double horizon = cfg.grid.horizon;
    auto whole = static_cast<std::size_t>(std::floor(horizon / mu + 1e-9));
    if (whole < 2) throw ConfigError("stoptimes: grid.horizon must cover at least two windows of length mu");
    std::size_t n_windows = whole - 1;
    FbmGenerator gen(detail::anchored_grid(-mu, horizon + 3.0 * mu, cfg.grid.h), HurstParameter(cfg.hurst));
    auto Q = cfg.covariance_spec();

    std::vector<Json> per_seed(seeds.size());
    parallel_for(seeds.size(), opt.threads, [&](std::size_t i) {
        VectorPath w = gen.hilbert(Q, seeds[i]);
        auto seq = build_stopping_sequence(w, scfg, horizon);
        CsvTable times({"i", "T_i", "gap", "f_residual"});
        double max_gap = 0.0, min_gap = std::numeric_limits<double>::infinity(), max_res = 0.0;
        for (std::size_t k = 1; k < seq.times.size(); ++k) {
            double gap = seq.times[k] - seq.times[k - 1];
            times.row({static_cast<double>(k), seq.times[k], gap, seq.residuals[k - 1]});
            max_gap = std::max(max_gap, gap);
            min_gap = std::min(min_gap, gap);
            max_res = std::max(max_res, std::abs(seq.residuals[k - 1]));
        }
        auto st = count_window_stats(seq, w, scfg, n_windows, false);
        CsvTable windows({"j", "N_j", "M_j", "M_minus_N", "flagged", "mu_K"});
        for (std::size_t j = 0; j < n_windows; ++j)
            windows.row({static_cast<double>(j), static_cast<double>(st.N[j]), static_cast<double>(st.M[j]),
                         static_cast<double>(st.M[j] - st.N[j]), st.flagged[j] ? 1.0 : 0.0, st.mu_K[j]});
        std::string tag = "seed_" + std::to_string(seeds[i]) + ".csv";
        times.save(opt.out / "stoptimes" / tag);
        windows.save(opt.out / "windows" / tag);
        Json s = {{"seed", seeds[i]},
                  {"count", seq.times.size() - 1},
                  {"min_gap", min_gap},
                  {"max_gap", max_gap},
                  {"max_abs_residual", max_res},
                  {"unflagged_violations", st.unflagged_violations}};
        if (seq.size() >= 50) {
            auto g = check_linear_growth(seq, rate.D);
            s["growth"] = {{"min_ratio", g.min_ratio}, {"argmin", g.argmin}, {"k_max", g.k_max}, {"ok", g.ok}};
        }
        per_seed[i] = s;
    });

    Json out = detail::header(cfg, "stoptimes");
    out["rate"] = to_json(rate);
    out["windows"] = n_windows;
    out["seeds"] = per_seed;
    write_json(opt.out / "stoptimes_summary.json", out);
    return out;
}

/// Solution paths from the ball sample of initial conditions, with mild residuals.
inline Json cmd_solve(const ExperimentConfig& cfg, const RunOptions& opt) {
    auto seeds = detail::seed_list(cfg.seeds, opt);
    auto op = cfg.spectral_operator();
    auto nl = cfg.nonlinearity_spec();
    auto scfg = cfg.solve_config();
    TimeGrid grid = TimeGrid::covering(0.0, cfg.grid.horizon, cfg.grid.h);
    FbmGenerator gen(grid, HurstParameter(cfg.hurst));
    auto Q = cfg.covariance_spec();
    auto ics = detail::initial_conditions(op.dim(), cfg.initial_conditions.radius, cfg.initial_conditions.count,
                                          cfg.validation_seeds.first);
    std::vector<Json> runs(seeds.size() * ics.size());
    parallel_for(seeds.size(), opt.threads, [&](std::size_t i) {
        VectorPath w = gen.hilbert(Q, seeds[i]);
        for (std::size_t k = 0; k < ics.size(); ++k) {
            VectorPath u = solve_mild(ics[k], op, nl, w, scfg);
            path_table(u, "norm_u").save(opt.out / "solve" /
                                         ("seed_" + std::to_string(seeds[i]) + "_ic_" + std::to_string(k) + ".csv"));
            double res = mild_residual(u, ics[k], op, nl, w, scfg.cell_exact);
            Json r = {{"seed", seeds[i]}, {"ic", k}, {"residual", res}, {"final_norm", u.node(u.size() - 1).norm()}};
            r["residual_bound"] = scfg.scheme == Scheme::exp_euler ? Json(exp_euler_residual_bound(u, nl)) : Json(nullptr);
            runs[i * ics.size() + k] = r;
        }
    });
    double worst = 0.0;
    for (const auto& r : runs) worst = std::max(worst, r["residual"].get<double>());
    Json out = detail::header(cfg, "solve");
    out["runs"] = runs;
    out["max_residual"] = worst;
    write_json(opt.out / "solve_summary.json", out);
    return out;
}

/// Full pipeline: rate estimate, refusal checks, ensemble verification, failure logging.
/// Writes stability_report.json in every outcome; throws StabilityRefused after writing when
/// the condition fails or the requested rate is not admissible.
inline Json cmd_stability(const ExperimentConfig& cfg, const RunOptions& opt) {
    auto rate = resolve_rate(cfg, opt.threads);
    Json out = detail::header(cfg, "stability");
    out["rate"] = to_json(rate);
    auto report_path = opt.out / "stability_report.json";
    if (!rate.satisfied) {
        out["outcome"] = "condition_not_satisfied";
        write_json(report_path, out);
        throw StabilityRefused("stability condition not satisfied: " + rate.reason);
    }
    double rho = opt.rho.value_or(cfg.rho_fraction * rate.rho_star);
    out["rho"] = rho;
    if (!(rho > 0.0) || rho >= rate.rho_star) {
        out["outcome"] = "rho_refused";
        write_json(report_path, out);
        throw StabilityRefused("requested rho = " + format_double(rho) + " must lie in (0, rho_hat* = " +
                               format_double(rate.rho_star) + ")");
    }

    auto op = cfg.spectral_operator();
    auto nl = cfg.nonlinearity_spec();
    StabilityEnsemble ens;
    ens.hurst = cfg.hurst;
    ens.Q = cfg.covariance_spec();
    ens.h = cfg.grid.h;
    ens.horizon = cfg.grid.horizon;
    ens.first_seed = opt.seed.value_or(cfg.validation_seeds.first);
    ens.n_seeds = opt.seed ? 1 : cfg.validation_seeds.count;
    ens.radius = cfg.initial_conditions.radius;
    ens.n_initial = cfg.initial_conditions.count;
    ens.solver = cfg.solve_config();
    ens.threads = opt.threads;
    auto rep = verify_exponential_stability(op, nl, ens, rho);

    // Proof-chain bound on the first initial condition of every seed.
    TimeGrid grid = TimeGrid::covering(0.0, ens.horizon, ens.h);
    FbmGenerator gen(grid, HurstParameter(cfg.hurst));
    auto ics = detail::initial_conditions(op.dim(), ens.radius, ens.n_initial, ens.first_seed);
    auto scfg = cfg.stopping_config(rate.mu);
    std::vector<std::size_t> n0(ens.n_seeds), pieces(ens.n_seeds);
    bool chain_ok = ens.horizon > 4.0 * rate.mu;
    if (chain_ok)
        parallel_for(ens.n_seeds, opt.threads, [&](std::size_t s) {
            VectorPath w = gen.hilbert(ens.Q, ens.first_seed + s);
            VectorPath u = solve_mild(ics[0], op, nl, w, ens.solver);
            auto seq = build_stopping_sequence(w, scfg, ens.horizon - 2.0 * rate.mu);
            auto g = gronwall_chain_check(u, seq.times, cfg.lambda, rate.c_S, rate.c_DF, rate.mu, rho, cfg.chain.beta);
            n0[s] = g.n0;
            pieces[s] = g.pieces;
        });

    Json seeds = Json::array();
    std::size_t e1_hits = 0;
    for (std::size_t s = 0; s < ens.n_seeds; ++s) {
        Json runs = Json::array();
        for (std::size_t i = 0; i < ens.n_initial; ++i) {
            const auto& r = rep.runs[s * ens.n_initial + i];
            runs.push_back({{"ic", r.ic},
                            {"pass", r.pass},
                            {"fitted_rate", detail::number(r.fitted_rate)},
                            {"fit_r2", detail::number(r.fit_r2)},
                            {"tail_slope", detail::number(r.tail_slope)},
                            {"head_max", r.head_max},
                            {"tail_max", r.tail_max},
                            {"C_omega", r.C_omega}});
        }
        Json entry = {{"seed", rep.seeds[s]}, {"pass", static_cast<bool>(rep.seed_pass[s])}, {"runs", runs}};
        if (chain_ok) {
            entry["e1_n0"] = n0[s];
            entry["e1_pieces"] = pieces[s];
            e1_hits += n0[s] < pieces[s] ? 1 : 0;
        }
        seeds.push_back(entry);
    }

    // Failures are kept with their paths for inspection.
    Json failures = Json::array();
    for (const auto& r : rep.runs) {
        if (r.pass) continue;
        VectorPath w = gen.hilbert(ens.Q, r.seed);
        VectorPath u = solve_mild(ics[r.ic], op, nl, w, ens.solver);
        auto file = std::filesystem::path("failures") / ("seed_" + std::to_string(r.seed) + "_ic_" + std::to_string(r.ic) + ".csv");
        path_table(u, "norm_u").save(opt.out / file);
        failures.push_back({{"seed", r.seed}, {"ic", r.ic}, {"path", file.generic_string()}});
        *opt.log << "stability: seed " << r.seed << " ic " << r.ic << " failed; path written to " << (opt.out / file).string()
                 << "\n";
    }

    double min_rate_ratio = std::numeric_limits<double>::infinity();
    for (const auto& r : rep.runs)
        if (std::isfinite(r.fitted_rate)) min_rate_ratio = std::min(min_rate_ratio, r.fitted_rate / rate.rho_star);

    out["outcome"] = rep.seed_pass_fraction >= cfg.stats.pass_threshold ? "verified" : "not_verified";
    out["seed_pass_fraction"] = rep.seed_pass_fraction;
    out["run_pass_fraction"] = rep.run_pass_fraction;
    out["min_fitted_rate_over_rho_star"] = detail::number(min_rate_ratio);
    out["e1_seed_fraction"] = chain_ok ? Json(static_cast<double>(e1_hits) / static_cast<double>(ens.n_seeds)) : Json(nullptr);
    out["seeds"] = seeds;
    out["failures"] = failures;
    write_json(report_path, out);
    return out;
}

/// Aggregates the summaries found in the output directory and tabulates K(mu) for plotting.
inline Json cmd_report(const ExperimentConfig& cfg, const RunOptions& opt) {
    Json out = detail::header(cfg, "report");
    Json rate;
    for (const char* name : {"generate_summary", "stoptimes_summary", "solve_summary", "stability_report"}) {
        auto path = opt.out / (std::string(name) + ".json");
        Json j = std::filesystem::exists(path) ? read_json(path) : Json(nullptr);
        if (j.is_object() && j.contains("rate")) rate = j["rate"];
        if (j.is_object()) j.erase("config");
        out[name] = j;
    }
    if (rate.is_null()) rate = to_json(resolve_rate(cfg, opt.threads));
    out["rate"] = rate;

    double c = rate["c_S"].get<double>() * rate["c_DF"].get<double>();
    if (c > 0.0) {
        double p = rate["p"]["p1"].get<double>() + rate["p"]["p2"].get<double>();
        double q = rate["p"]["q"].get<double>();
        CsvTable k({"mu", "K"});
        const int n = 200;
        for (int i = 1; i < n; ++i) {
            double mu = static_cast<double>(i) / n / c;
            k.row({mu, sufficient_K(mu, cfg.lambda, c, p, q)});
        }
        k.save(opt.out / "k_curve.csv");
        out["k_curve"] = "k_curve.csv";
    } else {
        out["k_curve"] = nullptr;
    }
    write_json(opt.out / "report.json", out);
    return out;
}

}  // namespace fbmstab
