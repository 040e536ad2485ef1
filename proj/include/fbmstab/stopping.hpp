#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fbmstab/fbm.hpp"
#include "fbmstab/holder.hpp"
#include "fbmstab/parallel.hpp"
#include "fbmstab/young.hpp"

namespace fbmstab {

struct StoppingConfig {
    double mu = 0.02;
    double c_alpha_beta = kDefaultCAlphaBeta;
    double c_DF = 2.0;
    double c_DG = 1.0;
    ExponentChain chain = ExponentChain::standard();
    double bisect_tol = 0.0;  // 0 selects mu * 1e-8

    double tolerance() const { return bisect_tol > 0.0 ? bisect_tol : mu * 1e-8; }

    void validate() const {
        if (!(mu > 0.0)) throw InvalidParameter("StoppingConfig: mu must be positive");
        if (!(c_alpha_beta > 0.0)) throw InvalidParameter("StoppingConfig: c_alpha_beta must be positive");
        if (!(c_DF > 0.0)) throw InvalidParameter("StoppingConfig: c_DF must be positive");
        if (c_DG < 0.0) throw InvalidParameter("StoppingConfig: c_DG must be >= 0");
        if (bisect_tol < 0.0) throw InvalidParameter("StoppingConfig: bisect_tol must be >= 0");
        chain.validate();
    }
};

/// A root of the stopping equation with its residual f(tau).
struct StopRoot {
    double tau;
    double residual;
};

namespace detail {

/// Root in (0, mu] of f(s) = c c_DG <ω>_{beta', window of length s} s^{beta'} + c_DF s - c_DF mu, where the
/// window is [t0, t0 + s] (dir = +1) or [t0 - s, t0] (dir = -1).
///
/// Sample points are t0, the nodes strictly inside, and t0 + dir mu. The seminorm over the first m
/// points is maintained incrementally; the bracketing cell is then bisected with the seminorm
/// extended by the interpolated endpoint (exact for the piecewise-linear path).
inline StopRoot stopping_root(const VectorPath& omega, const StoppingConfig& cfg, double t0, int dir) {
    const TimeGrid& g = omega.grid();
    const double mu = cfg.mu;
    const double end = t0 + dir * mu;
    if (!g.contains(t0) || !g.contains(end))
        throw DomainError("stopping time: window [" + std::to_string(std::min(t0, end)) + ", " +
                          std::to_string(std::max(t0, end)) + "] outside the sampled grid");
    const double bp = cfg.chain.beta_prime;
    const double scale = cfg.c_alpha_beta * cfg.c_DG;
    std::vector<double> tau{0.0};
    std::vector<Vector> val{omega.at(t0)};
    if (dir > 0) {
        for (std::size_t k = g.first_node_after(t0); k < g.size() && g.time(k) < end - g.snap_tol(); ++k) {
            tau.push_back(g.time(k) - t0);
            val.push_back(omega.node(k).transpose());
        }
    } else {
        std::size_t k = g.first_node_after(t0);  // first node > t0; step back past t0 itself
        while (k > 0) {
            --k;
            double t = g.time(k);
            if (t >= t0 - g.snap_tol()) continue;
            if (t <= end + g.snap_tol()) break;
            tau.push_back(t0 - t);
            val.push_back(omega.node(k).transpose());
        }
    }
    tau.push_back(mu);
    val.push_back(omega.at(end));

    auto f_of = [&](double s, double semi) { return scale * semi * std::pow(s, bp) + cfg.c_DF * (s - mu); };
    auto extend = [&](std::size_t m, const Vector& v, double s) {
        double best = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double d = (v - val[i]).norm();
            if (d > 0.0) best = std::max(best, d / std::pow(s - tau[i], bp));
        }
        return best;
    };

    double semi = 0.0;
    std::size_t m = 1;
    double f_m = 0.0;
    for (; m < tau.size(); ++m) {
        semi = std::max(semi, extend(m, val[m], tau[m]));
        f_m = f_of(tau[m], semi);
        if (f_m >= 0.0) break;
    }
    if (m == tau.size()) throw ConsistencyError("stopping time: f(mu) < 0; tolerance misconfigured");
    // semi_before: seminorm over the first m points (window ending at tau[m-1]).
    double semi_before = 0.0;
    for (std::size_t j = 1; j < m; ++j) semi_before = std::max(semi_before, extend(j, val[j], tau[j]));
    double lo = tau[m - 1], hi = tau[m], f_hi = f_m;
    const Vector& vlo = val[m - 1];
    const Vector& vhi = val[m];
    const double tol = cfg.tolerance();
    const double f_tol = cfg.c_DF * mu * 1e-7;
    const double cell = tau[m] - tau[m - 1];
    while (true) {
        bool narrow = hi - lo <= tol;
        if ((narrow && std::abs(f_hi) <= f_tol) || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * mu) break;
        double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        double th = (mid - tau[m - 1]) / cell;
        Vector v = (1.0 - th) * vlo + th * vhi;
        double f_mid = f_of(mid, std::max(semi_before, extend(m, v, mid)));
        if (f_mid >= 0.0) {
            hi = mid;
            f_hi = f_mid;
        } else {
            lo = mid;
        }
    }
    return {hi, f_hi};
}

}  // namespace detail

/// T(θ_{t0}ω) in (0, mu] with its root residual.
inline StopRoot forward_stopping_root(const VectorPath& omega, const StoppingConfig& cfg, double t0) {
    cfg.validate();
    return detail::stopping_root(omega, cfg, t0, +1);
}

inline double forward_stopping_time(const VectorPath& omega, const StoppingConfig& cfg, double t0) {
    return forward_stopping_root(omega, cfg, t0).tau;
}

/// T̂(θ_{t0}ω) in [-mu, 0).
inline double backward_stopping_time(const VectorPath& omega, const StoppingConfig& cfg, double t0) {
    cfg.validate();
    return -detail::stopping_root(omega, cfg, t0, -1).tau;
}

/// Stopping times relative to `origin`: times[0] = 0 < times[1] < ..., negative_times[0] = 0 > ...
struct StoppingSequence {
    double origin = 0.0;
    std::vector<double> times;
    std::vector<double> residuals;  // residuals[i] belongs to the gap times[i+1] - times[i]
    std::vector<double> negative_times;

    std::size_t size() const noexcept { return times.size(); }
    double gap(std::size_t i) const { return times.at(i + 1) - times.at(i); }
};

/// Forward recursion T_{i+1} = T_i + T(θ_{origin+T_i}ω) until the first time past `horizon`, and the
/// backward recursion while the grid covers it (down to -horizon).
inline StoppingSequence build_stopping_sequence(const VectorPath& omega, const StoppingConfig& cfg, double horizon,
                                                double origin = 0.0) {
    cfg.validate();
    if (!(horizon > 0.0)) throw DomainError("build_stopping_sequence: horizon must be positive");
    const TimeGrid& g = omega.grid();
    if (origin + horizon + cfg.mu > g.back() + g.snap_tol())
        throw DomainError("build_stopping_sequence: grid must reach origin + horizon + mu");
    StoppingSequence seq;
    seq.origin = origin;
    seq.times.push_back(0.0);
    seq.negative_times.push_back(0.0);
    while (seq.times.back() <= horizon) {
        auto r = detail::stopping_root(omega, cfg, origin + seq.times.back(), +1);
        seq.times.push_back(seq.times.back() + r.tau);
        seq.residuals.push_back(r.residual);
    }
    while (seq.negative_times.back() >= -horizon && origin + seq.negative_times.back() - cfg.mu >= g.front() - g.snap_tol()) {
        auto r = detail::stopping_root(omega, cfg, origin + seq.negative_times.back(), -1);
        seq.negative_times.push_back(seq.negative_times.back() - r.tau);
    }
    return seq;
}

struct ComparisonReport {
    std::size_t checks = 0;
    std::size_t violations = 0;
    double worst = 0.0;  // largest amount by which an inequality failed
};

/// Checks t1 + T_n(θ_{t1}ω) <= t2 + T_n(θ_{t2}ω) for n = 1..depth and, when t2 < t1 + T(θ_{t1}ω),
/// the interleaving t2 + T_n(θ_{t2}ω) <= t1 + T_{n+1}(θ_{t1}ω).
inline ComparisonReport comparison_check(const VectorPath& omega, const StoppingConfig& cfg, double t1, double t2,
                                         std::size_t depth = 5) {
    if (t1 > t2) throw DomainError("comparison_check: need t1 <= t2");
    ComparisonReport rep;
    const double tol = 2.0 * cfg.tolerance();
    std::vector<double> a{t1}, b{t2};
    for (std::size_t n = 0; n <= depth; ++n) {
        a.push_back(a.back() + forward_stopping_time(omega, cfg, a.back()));
        if (n < depth) b.push_back(b.back() + forward_stopping_time(omega, cfg, b.back()));
    }
    auto record = [&](double lhs, double rhs, double slack) {
        ++rep.checks;
        double excess = lhs - rhs;
        if (excess > slack) {
            ++rep.violations;
            rep.worst = std::max(rep.worst, excess);
        }
    };
    for (std::size_t n = 1; n <= depth; ++n) record(a[n], b[n], tol * static_cast<double>(n));
    if (t2 < a[1])
        for (std::size_t n = 1; n <= depth; ++n) record(b[n], a[n + 1], tol * static_cast<double>(n + 1));
    return rep;
}

/// mu K(θ_{t0}ω, mu) = (c c_DG <θ_{t0}ω>_{beta'',0,mu} mu^{beta''-1} / c_DF + 1)^{1/beta''}.
inline double scaled_K_from_seminorm(double seminorm, const StoppingConfig& cfg) {
    double bd = cfg.chain.beta_dprime;
    return std::pow(cfg.c_alpha_beta * cfg.c_DG * seminorm * std::pow(cfg.mu, bd - 1.0) / cfg.c_DF + 1.0, 1.0 / bd);
}

inline double bound_K(const VectorPath& omega, const StoppingConfig& cfg, double t0) {
    cfg.validate();
    double semi = holder_seminorm(omega, cfg.chain.beta_dprime, t0, t0 + cfg.mu);
    return scaled_K_from_seminorm(semi, cfg) / cfg.mu;
}

struct WindowStats {
    std::vector<int> N;           // N(θ_{jμ}ω)
    std::vector<int> M;           // stopping times of the sequence in (jμ, (j+1)μ]
    std::vector<bool> flagged;    // a time lies within tolerance of a boundary of window j
    std::vector<double> mu_K;     // mu K(θ_{jμ}ω, mu)
    std::size_t unflagged_violations = 0;
};

namespace detail {

/// Window index of time t (ties within tol go to the left window) and whether it is a tie.
inline std::pair<long, bool> window_of(double t, double mu, double tol) {
    double x = t / mu;
    auto j = static_cast<long>(std::ceil(x)) - 1;
    double upper = static_cast<double>(j + 1) * mu;
    double lower = static_cast<double>(j) * mu;
    if (t - lower <= tol && j > 0) return {j - 1, true};
    return {j, upper - t <= tol};
}

}  // namespace detail

/// N and M_j over windows j = 0..n_windows-1; M_j - N must lie in {0, 1} unless flagged.
inline WindowStats count_window_stats(const StoppingSequence& seq, const VectorPath& omega, const StoppingConfig& cfg,
                                      std::size_t n_windows, bool throw_on_violation = true) {
    cfg.validate();
    const double mu = cfg.mu;
    if (seq.times.back() <= static_cast<double>(n_windows) * mu)
        throw DomainError("count_window_stats: sequence does not cover all windows");
    WindowStats st;
    st.N.assign(n_windows, 0);
    st.M.assign(n_windows, 0);
    st.flagged.assign(n_windows, false);
    st.mu_K.assign(n_windows, 0.0);
    for (std::size_t i = 1; i < seq.times.size(); ++i) {
        double tol = 2.0 * cfg.tolerance() * static_cast<double>(i + 1);
        auto [j, tie] = detail::window_of(seq.times[i], mu, tol);
        if (j < 0 || j >= static_cast<long>(n_windows)) continue;
        st.M[static_cast<std::size_t>(j)] += 1;
        if (tie) {
            st.flagged[static_cast<std::size_t>(j)] = true;
            if (j + 1 < static_cast<long>(n_windows)) st.flagged[static_cast<std::size_t>(j + 1)] = true;
        } else if (seq.times[i] - static_cast<double>(j) * mu <= tol) {
            st.flagged[static_cast<std::size_t>(j)] = true;
        }
    }
    for (std::size_t j = 0; j < n_windows; ++j) {
        double start = seq.origin + static_cast<double>(j) * mu;
        double t = 0.0;
        int count = 0;
        for (std::size_t i = 1;; ++i) {
            t += detail::stopping_root(omega, cfg, start + t, +1).tau;
            double tol = 2.0 * cfg.tolerance() * static_cast<double>(i + 1);
            if (std::abs(t - mu) <= tol) st.flagged[j] = true;
            if (t > mu + tol) break;
            ++count;
        }
        st.N[j] = count;
        st.mu_K[j] = scaled_K_from_seminorm(holder_seminorm(omega, cfg.chain.beta_dprime, start, start + mu), cfg);
        int diff = st.M[j] - st.N[j];
        if ((diff != 0 && diff != 1) && !st.flagged[j]) {
            ++st.unflagged_violations;
            if (throw_on_violation)
                throw ConsistencyError("window " + std::to_string(j) + ": M_j - N = " + std::to_string(diff) +
                                       " outside {0, 1}");
        }
    }
    return st;
}

/// Inputs of the Monte Carlo estimators.
struct MonteCarloSpec {
    double hurst = 0.75;
    CovarianceSpec Q = CovarianceSpec::uniform(8, 0.01);
    double h = 1.0 / 1024.0;
    std::uint64_t first_seed = 1;
    std::size_t samples = 200;
    unsigned threads = 0;
};

struct Estimate {
    double value;
    double se;
};

namespace detail {

inline Estimate mean_and_se(const std::vector<double>& x) {
    double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var = x.size() > 1 ? var / (n - 1.0) : 0.0;
    return {mean, std::sqrt(var / n)};
}

/// Grid with step h having 0 as a node and covering [a, b].
inline TimeGrid anchored_grid(double a, double b, double h) {
    double lo = std::floor(a / h + 1e-9) * h;
    auto cells = static_cast<std::size_t>(std::ceil((b - lo) / h - 1e-9));
    return TimeGrid(lo, h, cells + 1);
}

}  // namespace detail

/// d̂ = 1 / (mu E sup_{r in [-mu, 0]} K(θ_r ω, mu)) over fresh two-sided paths; SE by the delta method.
inline Estimate estimate_d(const MonteCarloSpec& mc, const StoppingConfig& cfg) {
    cfg.validate();
    if (mc.samples < 2) throw InvalidParameter("estimate_d: need at least two samples");
    FbmGenerator gen(detail::anchored_grid(-cfg.mu, cfg.mu, mc.h), HurstParameter(mc.hurst));
    std::vector<double> muk(mc.samples);
    parallel_for(mc.samples, mc.threads, [&](std::size_t i) {
        VectorPath w = gen.hilbert(mc.Q, mc.first_seed + i);
        double semi = max_sliding_seminorm(w, cfg.chain.beta_dprime, -cfg.mu, cfg.mu, cfg.mu);
        muk[i] = scaled_K_from_seminorm(semi, cfg);
    });
    auto m = detail::mean_and_se(muk);
    return {1.0 / m.value, m.se / (m.value * m.value)};
}

/// Mean over seeds of the fraction of windows with M_j > N(θ_{jμ}ω).
inline Estimate estimate_dbar(const MonteCarloSpec& mc, const StoppingConfig& cfg, std::size_t n_windows) {
    cfg.validate();
    if (mc.samples < 2) throw InvalidParameter("estimate_dbar: need at least two samples");
    double horizon = static_cast<double>(n_windows) * cfg.mu;
    FbmGenerator gen(detail::anchored_grid(0.0, horizon + 3.0 * cfg.mu, mc.h), HurstParameter(mc.hurst));
    std::vector<double> frac(mc.samples);
    parallel_for(mc.samples, mc.threads, [&](std::size_t i) {
        VectorPath w = gen.hilbert(mc.Q, mc.first_seed + i);
        auto seq = build_stopping_sequence(w, cfg, horizon);
        auto st = count_window_stats(seq, w, cfg, n_windows, false);
        std::size_t hits = 0;
        for (std::size_t j = 0; j < n_windows; ++j) hits += st.M[j] > st.N[j] ? 1 : 0;
        frac[i] = static_cast<double>(hits) / static_cast<double>(n_windows);
    });
    return detail::mean_and_se(frac);
}

/// D = mu d / (1 + d dbar).
inline double compute_D(double d, double dbar, double mu) {
    if (!(d > 0.0 && d <= 1.0)) throw InvalidParameter("compute_D: d must lie in (0, 1]");
    if (!(dbar >= 0.0 && dbar <= 1.0)) throw InvalidParameter("compute_D: dbar must lie in [0, 1]");
    if (!(mu > 0.0)) throw InvalidParameter("compute_D: mu must be positive");
    return mu * d / (1.0 + d * dbar);
}

struct GrowthReport {
    double min_ratio;     // min_{k0 <= k <= k_max} T_k / k
    std::size_t argmin;
    std::size_t k_max;
    bool ok;              // min_ratio >= D (1 - eps)
};

inline GrowthReport check_linear_growth(const StoppingSequence& seq, double D, double eps = 0.1, std::size_t k0 = 10) {
    if (seq.size() < 50) throw DomainError("check_linear_growth: need at least 50 stopping times");
    GrowthReport r{std::numeric_limits<double>::infinity(), k0, seq.size() - 1, false};
    for (std::size_t k = k0; k < seq.size(); ++k) {
        double ratio = seq.times[k] / static_cast<double>(k);
        if (ratio < r.min_ratio) {
            r.min_ratio = ratio;
            r.argmin = k;
        }
    }
    r.ok = r.min_ratio >= D * (1.0 - eps);
    return r;
}

}  // namespace fbmstab
