#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "fbmstab/dynamics.hpp"
#include "fbmstab/fbm.hpp"
#include "fbmstab/holder.hpp"
#include "fbmstab/parallel.hpp"
#include "fbmstab/semigroup.hpp"
#include "fbmstab/stopping.hpp"

namespace fbmstab {

struct RateInputs {
    double lambda;
    double c_S;
    double c_DF;
    double mu;
    double D;

    void validate() const {
        if (!(lambda > 0.0)) throw InvalidParameter("RateInputs: lambda must be positive");
        if (!(c_S > 0.0) || c_DF < 0.0) throw InvalidParameter("RateInputs: need c_S > 0 and c_DF >= 0");
        if (!(mu > 0.0)) throw InvalidParameter("RateInputs: mu must be positive");
        if (c_S * c_DF * mu >= 1.0) throw InvalidParameter("RateInputs: c_S c_DF mu must be < 1");
        if (!(D > 0.0 && D <= mu * (1.0 + 1e-12))) throw InvalidParameter("RateInputs: need 0 < D <= mu");
    }
};

/// rho* = lambda - c_S c_DF mu e^{lambda mu} / ((1 - c_S c_DF mu) D); may be negative.
inline double rho_star(const RateInputs& in) {
    in.validate();
    double c = in.c_S * in.c_DF;
    return in.lambda - c * in.mu * std::exp(in.lambda * in.mu) / ((1.0 - c * in.mu) * in.D);
}

/// c prod_{j<n} (1 + g_j), rounded upward: the result is never below the exact product, which the
/// recursion y_n = c + sum_{j<n} g_j y_j attains with equality.
inline double discrete_gronwall_bound(double c, const std::vector<double>& g, std::size_t n) {
    if (c < 0.0) throw DomainError("discrete_gronwall_bound: c must be >= 0");
    if (n > g.size()) throw DomainError("discrete_gronwall_bound: n exceeds the length of g");
    long double prod = c;
    for (std::size_t j = 0; j < n; ++j) {
        if (g[j] < 0.0) throw DomainError("discrete_gronwall_bound: g must be >= 0");
        prod *= 1.0L + static_cast<long double>(g[j]);
    }
    if (n == 0 || prod == 0.0L) return static_cast<double>(prod);
    // Each long double operation errs by at most LDBL_EPSILON / 2 relative.
    prod *= 1.0L + 2.0L * static_cast<long double>(2 * n + 1) * std::numeric_limits<long double>::epsilon();
    double out = static_cast<double>(prod);
    if (static_cast<long double>(out) < prod) out = std::nextafter(out, std::numeric_limits<double>::infinity());
    return out;
}

struct DecayFit {
    double rho;
    double r_squared;
    std::size_t used;
    std::size_t truncated;  // nodes dropped because ||u|| < 1e-300
};

/// Least-squares slope of log||u(t)|| on nodes of [t_a, t_b]; rho = -slope.
inline DecayFit fit_decay_rate(const VectorPath& u, double t_a, double t_b) {
    const TimeGrid& g = u.grid();
    std::vector<double> ts, ys;
    std::size_t dropped = 0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        double t = g.time(k);
        if (t < t_a - g.snap_tol() || t > t_b + g.snap_tol()) continue;
        double n = u.node(k).norm();
        if (n < 1e-300) {
            ++dropped;
            continue;
        }
        ts.push_back(t);
        ys.push_back(std::log(n));
    }
    if (ts.size() < 10) throw FitError("fit_decay_rate: fewer than 10 usable nodes in window");
    double n = static_cast<double>(ts.size());
    double mt = 0.0, my = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        mt += ts[i];
        my += ys[i];
    }
    mt /= n;
    my /= n;
    double stt = 0.0, sty = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        stt += (ts[i] - mt) * (ts[i] - mt);
        sty += (ts[i] - mt) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    double slope = sty / stt;
    double r2 = syy > 0.0 ? sty * sty / (stt * syy) : 1.0;
    return {-slope, r2, ts.size(), dropped};
}

struct StabilityRun {
    std::uint64_t seed;
    std::size_t ic;
    bool pass;
    double head_max;    // max of m over the first third
    double tail_max;    // max of m over the last third
    double tail_slope;  // LS slope of log m over the last third
    double C_omega;     // max_t ||u(t)|| e^{rho t}
    double fitted_rate;
    double fit_r2;
};

struct StabilityReport {
    std::vector<StabilityRun> runs;
    std::vector<std::uint64_t> seeds;
    std::vector<bool> seed_pass;  // every initial condition of the seed passed
    double seed_pass_fraction = 0.0;
    double run_pass_fraction = 0.0;
};

struct StabilityEnsemble {
    double hurst = 0.75;
    CovarianceSpec Q = CovarianceSpec::uniform(8, 0.01);
    double h = 1.0 / 1024.0;
    double horizon = 8.0;
    std::uint64_t first_seed = 1;
    std::size_t n_seeds = 50;
    double radius = 1.0;
    std::size_t n_initial = 4;
    SolveConfig solver{};
    unsigned threads = 0;
};

namespace detail {

/// The ball sample: +R e1, -R e1, then random directions of norm R.
inline std::vector<Vector> initial_conditions(std::size_t dim, double radius, std::size_t count, std::uint64_t seed) {
    std::vector<Vector> out;
    Vector e1 = Vector::Zero(static_cast<Eigen::Index>(dim));
    e1(0) = radius;
    out.push_back(e1);
    if (count > 1) out.push_back(-e1);
    std::mt19937_64 rng(splitmix64(seed ^ 0x1C0FFEEULL));
    std::normal_distribution<double> n(0.0, 1.0);
    while (out.size() < count) {
        Vector v(static_cast<Eigen::Index>(dim));
        for (auto& x : v) x = n(rng);
        out.push_back(radius * v / v.norm());
    }
    out.resize(count);
    return out;
}

inline StabilityRun assess_run(const VectorPath& u, double rho) {
    const TimeGrid& g = u.grid();
    std::size_t n = g.size();
    std::vector<double> m(n);
    for (std::size_t k = 0; k < n; ++k) m[k] = u.node(k).norm() * std::exp(rho * (g.time(k) - g.front()));
    StabilityRun r{};
    r.C_omega = *std::max_element(m.begin(), m.end());
    std::size_t third = n / 3;
    r.head_max = *std::max_element(m.begin(), m.begin() + static_cast<long>(third + 1));
    r.tail_max = *std::max_element(m.begin() + static_cast<long>(n - third - 1), m.end());
    if (r.head_max == 0.0) {
        r.pass = true;
        r.tail_slope = 0.0;
        return r;
    }
    std::vector<double> ts, ys;
    for (std::size_t k = n - third - 1; k < n; ++k)
        if (m[k] > 0.0) {
            ts.push_back(g.time(k));
            ys.push_back(std::log(m[k]));
        }
    double slope = -std::numeric_limits<double>::infinity();
    if (ts.size() >= 2) {
        double mt = 0.0, my = 0.0;
        for (std::size_t i = 0; i < ts.size(); ++i) {
            mt += ts[i];
            my += ys[i];
        }
        mt /= static_cast<double>(ts.size());
        my /= static_cast<double>(ts.size());
        double stt = 0.0, sty = 0.0;
        for (std::size_t i = 0; i < ts.size(); ++i) {
            stt += (ts[i] - mt) * (ts[i] - mt);
            sty += (ts[i] - mt) * (ys[i] - my);
        }
        slope = sty / stt;
    }
    r.tail_slope = slope;
    r.pass = r.tail_max < r.head_max && slope < 0.0;
    return r;
}

}  // namespace detail

/// Solves from every initial condition of the ball sample for every seed and checks that
/// m(t) = ||u(t)|| e^{rho t} has a decreasing tail.
inline StabilityReport verify_exponential_stability(const SpectralOperator& op, const NonlinearitySpec& nl,
                                                    const StabilityEnsemble& ens, double rho) {
    if (ens.n_seeds == 0 || ens.n_initial == 0) throw InvalidParameter("verify_exponential_stability: empty ensemble");
    TimeGrid grid = TimeGrid::covering(0.0, ens.horizon, ens.h);
    FbmGenerator gen(grid, HurstParameter(ens.hurst));
    auto ics = detail::initial_conditions(op.dim(), ens.radius, ens.n_initial, ens.first_seed);
    std::size_t total = ens.n_seeds * ics.size();
    std::vector<StabilityRun> runs(total);
    parallel_for(ens.n_seeds, ens.threads, [&](std::size_t s) {
        std::uint64_t seed = ens.first_seed + s;
        VectorPath w = gen.hilbert(ens.Q, seed);
        for (std::size_t i = 0; i < ics.size(); ++i) {
            VectorPath u = solve_mild(ics[i], op, nl, w, ens.solver);
            StabilityRun r = detail::assess_run(u, rho);
            r.seed = seed;
            r.ic = i;
            try {
                auto fit = fit_decay_rate(u, grid.front() + ens.horizon / 3.0, grid.back());
                r.fitted_rate = fit.rho;
                r.fit_r2 = fit.r_squared;
            } catch (const FitError&) {
                r.fitted_rate = std::numeric_limits<double>::quiet_NaN();
                r.fit_r2 = std::numeric_limits<double>::quiet_NaN();
            }
            runs[s * ics.size() + i] = r;
        }
    });
    StabilityReport rep;
    rep.runs = std::move(runs);
    std::size_t seeds_ok = 0, runs_ok = 0;
    for (std::size_t s = 0; s < ens.n_seeds; ++s) {
        bool ok = true;
        for (std::size_t i = 0; i < ics.size(); ++i) {
            bool p = rep.runs[s * ics.size() + i].pass;
            ok = ok && p;
            runs_ok += p ? 1 : 0;
        }
        rep.seeds.push_back(ens.first_seed + s);
        rep.seed_pass.push_back(ok);
        seeds_ok += ok ? 1 : 0;
    }
    rep.seed_pass_fraction = static_cast<double>(seeds_ok) / static_cast<double>(ens.n_seeds);
    rep.run_pass_fraction = static_cast<double>(runs_ok) / static_cast<double>(total);
    return rep;
}

struct SufficientCondition {
    double mu_opt;
    double K_min;
    bool satisfied;               // lambda - K(mu_opt) > 0
    double stationarity_residual; // relative; 0 when p = 0 (no interior stationary point)
};

/// K(mu) = e^{lambda mu} (1 + p / mu^q) c / (1 - c mu) with c = c_S c_DF.
inline double sufficient_K(double mu, double lambda, double c, double p, double q) {
    return std::exp(lambda * mu) * (1.0 + p * std::pow(mu, -q)) * c / (1.0 - c * mu);
}

/// d log K / d mu.
inline double sufficient_K_log_slope(double mu, double lambda, double c, double p, double q) {
    return lambda + c / (1.0 - c * mu) - p * q / (p * mu + std::pow(mu, q + 1.0));
}

/// Minimises K over (0, 1/c) by golden-section search in log mu, then polishes the minimiser
/// by bisection on the sign of d log K / d mu.
inline SufficientCondition sufficient_condition_K(double lambda, double c_S, double c_DF, double p, double q) {
    double c = c_S * c_DF;
    if (!(c > 0.0)) throw InvalidParameter("sufficient_condition_K: need c_S c_DF > 0");
    if (p < 0.0) throw InvalidParameter("sufficient_condition_K: need p >= 0");
    if (!(q > 0.0 && q < 1.0)) throw InvalidParameter("sufficient_condition_K: need q in (0, 1)");
    double lo = std::log(1e-12 / c), hi = std::log((1.0 - 1e-12) / c);
    if (p == 0.0) {
        double mu = std::exp(lo);
        double k = sufficient_K(mu, lambda, c, p, q);
        return {mu, k, lambda - k > 0.0, 0.0};
    }
    auto logk = [&](double x) {
        double mu = std::exp(x);
        return lambda * mu + std::log1p(p * std::pow(mu, -q)) - std::log1p(-c * mu);
    };
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
    double f1 = logk(x1), f2 = logk(x2);
    for (int it = 0; it < 200 && b - a > 1e-12; ++it) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = logk(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = logk(x2);
        }
    }
    // Polish: the log-slope is negative left of the minimiser and positive right of it.
    double l = std::exp(std::max(lo, a - 0.1)), r = std::exp(std::min(hi, b + 0.1));
    if (sufficient_K_log_slope(l, lambda, c, p, q) < 0.0 && sufficient_K_log_slope(r, lambda, c, p, q) > 0.0) {
        for (int it = 0; it < 200; ++it) {
            double mid = 0.5 * (l + r);
            if (mid <= l || mid >= r) break;
            (sufficient_K_log_slope(mid, lambda, c, p, q) < 0.0 ? l : r) = mid;
        }
    } else {
        l = r = std::exp(0.5 * (a + b));
    }
    double mu = 0.5 * (l + r);
    double k = sufficient_K(mu, lambda, c, p, q);
    double rhs = (p * q / (p + std::pow(mu, q)) - c * mu / (1.0 - c * mu)) / mu;
    return {mu, k, lambda - k > 0.0, std::abs(lambda - rhs) / lambda};
}

struct PCoefficients {
    double p1;
    double p2;
    double p() const { return p1 + p2; }
};

inline PCoefficients compute_p_coefficients(double trQ, double beta_dprime, double c_alpha_beta, double c_DG,
                                            double c_DF, double C1, double C2) {
    if (trQ < 0.0 || c_alpha_beta < 0.0 || c_DG < 0.0 || C1 < 0.0 || C2 < 0.0)
        throw InvalidParameter("compute_p_coefficients: inputs must be >= 0");
    if (!(c_DF > 0.0)) throw InvalidParameter("compute_p_coefficients: c_DF must be positive");
    double r = c_alpha_beta * c_DG / c_DF;
    return {r * std::sqrt(trQ) * C1 / beta_dprime, r * r * trQ * C2 / (2.0 * beta_dprime)};
}

/// E<ω>^q_{beta'',-mu,mu} / (trQ^{q/2} mu^{(H-beta'')q}) with its standard error, on grids with a
/// fixed number of cells per mu so that the ratio is exactly scale invariant in law.
inline Estimate estimate_moment_constant(double hurst, double beta_dprime, int q_exp, double mu,
                                         const CovarianceSpec& Q, std::size_t n_samples, std::uint64_t first_seed = 1,
                                         std::size_t cells_per_mu = 128, unsigned threads = 0) {
    double trQ = Q.trace();
    if (!(trQ > 0.0)) throw InvalidParameter("estimate_moment_constant: tr(Q) must be positive");
    if (q_exp < 1) throw InvalidParameter("estimate_moment_constant: q must be >= 1");
    if (!(mu > 0.0) || n_samples < 2) throw InvalidParameter("estimate_moment_constant: need mu > 0 and samples >= 2");
    TimeGrid grid(-mu, mu / static_cast<double>(cells_per_mu), 2 * cells_per_mu + 1);
    FbmGenerator gen(grid, HurstParameter(hurst));
    double norm = std::pow(trQ, 0.5 * q_exp) * std::pow(mu, (hurst - beta_dprime) * q_exp);
    std::vector<double> x(n_samples);
    parallel_for(n_samples, threads, [&](std::size_t i) {
        VectorPath w = gen.hilbert(Q, first_seed + i);
        x[i] = std::pow(holder_seminorm(w, beta_dprime, grid.front(), grid.back()), q_exp) / norm;
    });
    return detail::mean_and_se(x);
}

struct GronwallChainReport {
    std::vector<double> y;            // e^{lambda T_n} ||u^n||_{beta,beta}
    std::vector<double> product_bound;
    std::vector<double> e1_bound;     // c_S ||u0|| e^{-rho T_n} / (1 - c_S c_DF mu)
    std::vector<double> norms;        // ||u^n||_{beta,beta}
    double min_product_margin;        // min_n (bound - y) / bound
    std::size_t n0;                   // e1 bound holds for every n >= n0 (n0 = pieces if never)
    std::size_t pieces;
};

/// Damped norms of u on consecutive stopping intervals [T_n, T_{n+1}] against the Gronwall product
/// bound and the exponential bound with rate rho.
inline GronwallChainReport gronwall_chain_check(const VectorPath& u, const std::vector<double>& times, double lambda,
                                                double c_S, double c_DF, double mu, double rho, double beta) {
    double cm = c_S * c_DF * mu;
    if (cm >= 1.0) throw InvalidParameter("gronwall_chain_check: c_S c_DF mu must be < 1");
    const TimeGrid& g = u.grid();
    double u0 = u.node(0).norm();
    double c = c_S * u0 / (1.0 - cm);
    GronwallChainReport rep;
    rep.min_product_margin = std::numeric_limits<double>::infinity();
    double prod = c;
    for (std::size_t n = 0; n + 1 < times.size(); ++n) {
        double a = g.front() + times[n], b = g.front() + times[n + 1];
        if (b > g.back() + g.snap_tol()) break;
        double norm = damped_holder_norm(u, beta, a, b);
        double y = std::exp(lambda * times[n]) * norm;
        rep.norms.push_back(norm);
        rep.y.push_back(y);
        rep.product_bound.push_back(prod);
        rep.e1_bound.push_back(c * std::exp(-rho * times[n]));
        if (prod > 0.0) rep.min_product_margin = std::min(rep.min_product_margin, (prod - y) / prod);
        prod *= 1.0 + cm / (1.0 - cm) * std::exp(lambda * (times[n + 1] - times[n]));
    }
    rep.pieces = rep.y.size();
    rep.n0 = rep.pieces;
    for (std::size_t n = rep.pieces; n-- > 0;) {
        if (rep.norms[n] > rep.e1_bound[n]) break;
        rep.n0 = n;
    }
    return rep;
}

}  // namespace fbmstab
