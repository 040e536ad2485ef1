#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fbmstab/dynamics.hpp"
#include "fbmstab/stopping.hpp"

namespace fbmstab {

using Json = nlohmann::ordered_json;

struct OperatorConfig {
    std::string type = "dirichlet_laplacian_1d";  // or "eigenvalues"
    std::size_t modes = 8;
    double diffusivity = 2.0;
    std::vector<double> eigenvalues;  // used when type == "eigenvalues"
};

struct CovarianceConfig {
    std::string type = "uniform";  // or "eigenvalues"
    double trace = 0.01;
    std::vector<double> eigenvalues;
};

struct NonlinearityConfig {
    std::string type = "sine";  // sine | linear | zero
    double c_DF = 2.0;
    double c_DG = 1.0;
    std::vector<double> kappa;  // linear only
};

struct GridConfig {
    double h = 1.0 / 1024.0;
    double horizon = 8.0;
};

struct SeedRange {
    std::uint64_t first = 1;
    std::size_t count = 1;
};

struct SolverConfig {
    std::string scheme = "exp_euler";
    double picard_tol = 1e-10;
    int picard_max_iter = 50;
    bool cell_exact = false;
};

struct InitialConditionConfig {
    double radius = 1.0;
    std::size_t count = 4;
};

struct StatsConfig {
    std::size_t samples = 100;         // Monte Carlo paths for d and dbar
    std::size_t windows = 50;          // windows per path for dbar
    std::size_t moment_samples = 1000; // paths per moment constant
    double pass_threshold = 0.9;
};

struct ToleranceConfig {
    double bisect = 0.0;  // 0 selects mu * 1e-8
};

struct ExperimentConfig {
    OperatorConfig op;
    double lambda = 12.0;
    double hurst = 0.75;
    CovarianceConfig covariance;
    NonlinearityConfig nonlinearity;
    ExponentChain chain = ExponentChain::standard();
    std::optional<double> mu = 0.02;  // empty means "auto"
    double c_alpha_beta = kDefaultCAlphaBeta;
    GridConfig grid;
    SeedRange seeds;
    SeedRange validation_seeds{1001, 50};
    SolverConfig solver;
    InitialConditionConfig initial_conditions;
    StatsConfig stats;
    ToleranceConfig tolerances;
    double rho_fraction = 0.9;
    std::string output_dir = "fbmstab_out";

    SpectralOperator spectral_operator() const {
        if (op.type == "dirichlet_laplacian_1d") return SpectralOperator::dirichlet_laplacian_1d(op.modes, lambda, op.diffusivity);
        return SpectralOperator(op.eigenvalues, lambda);
    }

    std::size_t dim() const { return op.type == "eigenvalues" ? op.eigenvalues.size() : op.modes; }

    CovarianceSpec covariance_spec() const {
        if (covariance.type == "uniform") return CovarianceSpec::uniform(dim(), covariance.trace);
        return CovarianceSpec(covariance.eigenvalues);
    }

    NonlinearitySpec nonlinearity_spec() const {
        if (nonlinearity.type == "sine") return NonlinearitySpec::sine(nonlinearity.c_DF, nonlinearity.c_DG);
        if (nonlinearity.type == "linear") return NonlinearitySpec::linear(nonlinearity.kappa);
        return NonlinearitySpec::zero();
    }

    SolveConfig solve_config() const {
        SolveConfig s;
        s.scheme = solver.scheme == "picard" ? Scheme::picard : Scheme::exp_euler;
        s.picard_tol = solver.picard_tol;
        s.picard_max_iter = solver.picard_max_iter;
        s.cell_exact = solver.cell_exact;
        s.beta = chain.beta;
        return s;
    }

    /// Stopping parameters at a given mu; the Lipschitz constants come from the nonlinearity.
    StoppingConfig stopping_config(double mu_value) const {
        auto nl = nonlinearity_spec();
        StoppingConfig s;
        s.mu = mu_value;
        s.c_alpha_beta = c_alpha_beta;
        s.c_DF = nl.c_DF;
        s.c_DG = nl.c_DG;
        s.chain = chain;
        s.bisect_tol = tolerances.bisect;
        return s;
    }

    MonteCarloSpec monte_carlo(unsigned threads) const {
        MonteCarloSpec mc;
        mc.hurst = hurst;
        mc.Q = covariance_spec();
        mc.h = grid.h;
        mc.first_seed = seeds.first;
        mc.samples = stats.samples;
        mc.threads = threads;
        return mc;
    }
};

namespace detail {

/// 1-based line of the first occurrence of "key" in the source text, or 0.
inline std::size_t line_of_key(const std::string& text, const std::string& key) {
    auto pos = text.find("\"" + key + "\"");
    if (pos == std::string::npos) return 0;
    return static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n')) + 1;
}

inline std::size_t line_of_offset(const std::string& text, std::size_t offset) {
    offset = std::min(offset, text.size());
    return static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(offset), '\n')) + 1;
}

/// Typed field access that reports the JSON path and source line on failure.
class Reader {
public:
    Reader(const Json& j, std::string path, const std::string& text) : j_(j), path_(std::move(path)), text_(text) {
        if (!j_.is_object()) fail(path_.empty() ? "config" : path_, "must be an object");
    }

    /// Rejects keys outside `allowed`.
    void only(std::initializer_list<const char*> allowed) const {
        std::set<std::string> ok(allowed.begin(), allowed.end());
        for (const auto& item : j_.items())
            if (!ok.count(item.key())) fail(join(item.key()), "unknown key");
    }

    bool has(const char* key) const { return j_.contains(key); }

    template <class T>
    void get(const char* key, T& out) const {
        if (!j_.contains(key)) return;
        if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
            if (!j_.at(key).is_number_unsigned()) fail(join(key), "must be a nonnegative integer");
        }
        try {
            out = j_.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            fail(join(key), "has the wrong type");
        }
    }

    Reader child(const char* key) const { return Reader(j_.at(key), join(key), text_); }
    const Json& raw(const char* key) const { return j_.at(key); }

    [[noreturn]] void fail(const std::string& where, const std::string& what) const {
        auto leaf = where.substr(where.find_last_of('.') + 1);
        std::size_t line = line_of_key(text_, leaf);
        std::string loc = line ? " (line " + std::to_string(line) + ")" : "";
        throw ConfigError("config: '" + where + "' " + what + loc);
    }

    std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    const Json& j_;
    std::string path_;
    const std::string& text_;
};

}  // namespace detail

/// Parses and validates a config document. Every module-level invariant is re-checked by
/// constructing the corresponding library objects.
inline ExperimentConfig parse_config(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config: JSON syntax error at line " + std::to_string(detail::line_of_offset(text, e.byte)) +
                          ": " + e.what());
    }
    detail::Reader r(j, "", text);
    r.only({"operator", "lambda", "hurst", "covariance", "nonlinearity", "chain", "mu", "c_alpha_beta", "grid", "seeds",
            "validation_seeds", "solver", "initial_conditions", "stats", "tolerances", "rho_fraction", "output_dir"});

    ExperimentConfig c;
    if (r.has("operator")) {
        auto o = r.child("operator");
        o.only({"type", "modes", "diffusivity", "eigenvalues"});
        o.get("type", c.op.type);
        o.get("modes", c.op.modes);
        o.get("diffusivity", c.op.diffusivity);
        o.get("eigenvalues", c.op.eigenvalues);
        if (c.op.type != "dirichlet_laplacian_1d" && c.op.type != "eigenvalues")
            o.fail("operator.type", "must be 'dirichlet_laplacian_1d' or 'eigenvalues'");
    }
    r.get("lambda", c.lambda);
    r.get("hurst", c.hurst);
    if (r.has("covariance")) {
        auto o = r.child("covariance");
        o.only({"type", "trace", "eigenvalues"});
        o.get("type", c.covariance.type);
        o.get("trace", c.covariance.trace);
        o.get("eigenvalues", c.covariance.eigenvalues);
        if (c.covariance.type != "uniform" && c.covariance.type != "eigenvalues")
            o.fail("covariance.type", "must be 'uniform' or 'eigenvalues'");
    }
    if (r.has("nonlinearity")) {
        auto o = r.child("nonlinearity");
        o.only({"type", "c_DF", "c_DG", "kappa"});
        o.get("type", c.nonlinearity.type);
        o.get("c_DF", c.nonlinearity.c_DF);
        o.get("c_DG", c.nonlinearity.c_DG);
        o.get("kappa", c.nonlinearity.kappa);
        const auto& t = c.nonlinearity.type;
        if (t != "sine" && t != "linear" && t != "zero") o.fail("nonlinearity.type", "must be 'sine', 'linear' or 'zero'");
    }
    if (r.has("chain")) {
        auto o = r.child("chain");
        o.only({"alpha", "beta", "beta_prime", "beta_dprime"});
        o.get("alpha", c.chain.alpha);
        o.get("beta", c.chain.beta);
        o.get("beta_prime", c.chain.beta_prime);
        o.get("beta_dprime", c.chain.beta_dprime);
    }
    c.chain.hurst = c.hurst;
    if (r.has("mu")) {
        const Json& m = r.raw("mu");
        if (m.is_string() && m.get<std::string>() == "auto")
            c.mu.reset();
        else if (m.is_number())
            c.mu = m.get<double>();
        else
            r.fail("mu", "must be a number or \"auto\"");
    }
    r.get("c_alpha_beta", c.c_alpha_beta);
    if (r.has("grid")) {
        auto o = r.child("grid");
        o.only({"h", "horizon"});
        o.get("h", c.grid.h);
        o.get("horizon", c.grid.horizon);
    }
    for (auto [key, dst] : {std::pair{"seeds", &c.seeds}, std::pair{"validation_seeds", &c.validation_seeds}}) {
        if (!r.has(key)) continue;
        auto o = r.child(key);
        o.only({"first", "count"});
        o.get("first", dst->first);
        o.get("count", dst->count);
        if (dst->count == 0) o.fail(std::string(key) + ".count", "must be >= 1");
    }
    if (r.has("solver")) {
        auto o = r.child("solver");
        o.only({"scheme", "picard_tol", "picard_max_iter", "cell_exact"});
        o.get("scheme", c.solver.scheme);
        o.get("picard_tol", c.solver.picard_tol);
        o.get("picard_max_iter", c.solver.picard_max_iter);
        o.get("cell_exact", c.solver.cell_exact);
        if (c.solver.scheme != "exp_euler" && c.solver.scheme != "picard")
            o.fail("solver.scheme", "must be 'exp_euler' or 'picard'");
    }
    if (r.has("initial_conditions")) {
        auto o = r.child("initial_conditions");
        o.only({"radius", "count"});
        o.get("radius", c.initial_conditions.radius);
        o.get("count", c.initial_conditions.count);
    }
    if (r.has("stats")) {
        auto o = r.child("stats");
        o.only({"samples", "windows", "moment_samples", "pass_threshold"});
        o.get("samples", c.stats.samples);
        o.get("windows", c.stats.windows);
        o.get("moment_samples", c.stats.moment_samples);
        o.get("pass_threshold", c.stats.pass_threshold);
    }
    if (r.has("tolerances")) {
        auto o = r.child("tolerances");
        o.only({"bisect"});
        o.get("bisect", c.tolerances.bisect);
    }
    r.get("rho_fraction", c.rho_fraction);
    r.get("output_dir", c.output_dir);

    // Revalidate through the library constructors; their messages name the offending quantity.
    auto check = [&](const char* key, auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            r.fail(key, std::string("is invalid: ") + e.what());
        }
    };
    check("operator", [&] { (void)c.spectral_operator(); });
    check("hurst", [&] { (void)HurstParameter(c.hurst); });
    check("covariance", [&] {
        auto q = c.covariance_spec();
        if (q.dim() != c.dim()) throw InvalidParameter("covariance dimension must equal the number of modes");
    });
    check("nonlinearity", [&] {
        if (c.nonlinearity.type == "linear" && c.nonlinearity.kappa.size() != c.dim())
            throw InvalidParameter("kappa must have one entry per mode");
        c.nonlinearity_spec().spot_check(c.dim());
    });
    check("chain", [&] { c.chain.validate(); });
    if (c.mu && !(*c.mu > 0.0)) r.fail("mu", "must be positive");
    if (!(c.c_alpha_beta > 0.0)) r.fail("c_alpha_beta", "must be positive");
    if (!(c.grid.h > 0.0) || !(c.grid.horizon > 0.0)) r.fail("grid", "needs h > 0 and horizon > 0");
    if (c.grid.horizon < 10.0 * c.grid.h) r.fail("grid", "horizon must span at least 10 steps");
    if (c.mu && *c.mu < 2.0 * c.grid.h) r.fail("mu", "must be at least two grid steps");
    if (!(c.solver.picard_tol > 0.0) || c.solver.picard_max_iter < 1) r.fail("solver", "needs picard_tol > 0, picard_max_iter >= 1");
    if (c.initial_conditions.radius < 0.0 || c.initial_conditions.count == 0)
        r.fail("initial_conditions", "needs radius >= 0 and count >= 1");
    if (c.stats.samples < 2 || c.stats.windows < 1 || c.stats.moment_samples < 2)
        r.fail("stats", "needs samples >= 2, windows >= 1, moment_samples >= 2");
    if (!(c.stats.pass_threshold > 0.0 && c.stats.pass_threshold <= 1.0)) r.fail("stats", "pass_threshold must lie in (0, 1]");
    if (c.tolerances.bisect < 0.0) r.fail("tolerances", "bisect must be >= 0");
    if (!(c.rho_fraction > 0.0 && c.rho_fraction < 1.0)) r.fail("rho_fraction", "must lie in (0, 1)");
    if (c.output_dir.empty()) r.fail("output_dir", "must be non-empty");
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

/// The fully resolved config; `mu` is written as given ("auto" stays "auto").
inline Json to_json(const ExperimentConfig& c) {
    Json j;
    Json op = {{"type", c.op.type}};
    if (c.op.type == "eigenvalues")
        op["eigenvalues"] = c.op.eigenvalues;
    else
        op.update(Json{{"modes", c.op.modes}, {"diffusivity", c.op.diffusivity}});
    j["operator"] = op;
    j["lambda"] = c.lambda;
    j["hurst"] = c.hurst;
    j["covariance"] = c.covariance.type == "uniform" ? Json{{"type", "uniform"}, {"trace", c.covariance.trace}}
                                                     : Json{{"type", "eigenvalues"}, {"eigenvalues", c.covariance.eigenvalues}};
    Json nl = {{"type", c.nonlinearity.type}};
    if (c.nonlinearity.type == "sine") nl.update(Json{{"c_DF", c.nonlinearity.c_DF}, {"c_DG", c.nonlinearity.c_DG}});
    if (c.nonlinearity.type == "linear") nl["kappa"] = c.nonlinearity.kappa;
    j["nonlinearity"] = nl;
    j["chain"] = {{"alpha", c.chain.alpha},
                  {"beta", c.chain.beta},
                  {"beta_prime", c.chain.beta_prime},
                  {"beta_dprime", c.chain.beta_dprime}};
    j["mu"] = c.mu ? Json(*c.mu) : Json("auto");
    j["c_alpha_beta"] = c.c_alpha_beta;
    j["grid"] = {{"h", c.grid.h}, {"horizon", c.grid.horizon}};
    j["seeds"] = {{"first", c.seeds.first}, {"count", c.seeds.count}};
    j["validation_seeds"] = {{"first", c.validation_seeds.first}, {"count", c.validation_seeds.count}};
    j["solver"] = {{"scheme", c.solver.scheme},
                   {"picard_tol", c.solver.picard_tol},
                   {"picard_max_iter", c.solver.picard_max_iter},
                   {"cell_exact", c.solver.cell_exact}};
    j["initial_conditions"] = {{"radius", c.initial_conditions.radius}, {"count", c.initial_conditions.count}};
    j["stats"] = {{"samples", c.stats.samples},
                  {"windows", c.stats.windows},
                  {"moment_samples", c.stats.moment_samples},
                  {"pass_threshold", c.stats.pass_threshold}};
    j["tolerances"] = {{"bisect", c.tolerances.bisect}};
    j["rho_fraction"] = c.rho_fraction;
    j["output_dir"] = c.output_dir;
    return j;
}

}  // namespace fbmstab
