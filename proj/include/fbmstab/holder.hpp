#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "fbmstab/grid.hpp"
#include "fbmstab/quadrature.hpp"

namespace fbmstab {

/// Hölder and fractional exponents used throughout:
/// 1/2 < beta < beta' < beta'' < H < 1 and 1 - beta' < alpha < beta.
struct ExponentChain {
    double alpha;
    double beta;
    double beta_prime;
    double beta_dprime;
    double hurst;

    void validate() const {
        if (!(0.5 < beta && beta < beta_prime && beta_prime < beta_dprime && beta_dprime < hurst && hurst < 1.0))
            throw InvalidParameter("ExponentChain: need 1/2 < beta < beta' < beta'' < H < 1");
        if (!(1.0 - beta_prime < alpha && alpha < beta))
            throw InvalidParameter("ExponentChain: need 1 - beta' < alpha < beta");
    }

    static ExponentChain standard() { return {0.45, 0.55, 0.62, 0.70, 0.75}; }
};

/// Samples of a path restricted to [a, b]: the (interpolated) endpoints plus every node
/// strictly inside. For a piecewise-linear path the Hölder seminorm over these points
/// equals the continuum supremum, since |v(t)-v(s)|/(t-s)^beta is quasi-convex along
/// each linear piece.
struct WindowSamples {
    std::vector<double> times;
    std::vector<long> nodes;  // grid index, or -1 for an interpolated endpoint
    RowMatrix values;
    double step;

    std::size_t size() const noexcept { return times.size(); }

    double lag(std::size_t i, std::size_t j) const noexcept {
        if (nodes[i] >= 0 && nodes[j] >= 0) return static_cast<double>(nodes[j] - nodes[i]) * step;
        return times[j] - times[i];
    }
};

inline WindowSamples window_samples(const VectorPath& path, double a, double b) {
    const TimeGrid& g = path.grid();
    if (!(b > a)) throw DomainError("window: need T1 < T2");
    if (!g.contains(a) || !g.contains(b)) throw DomainError("window: endpoints outside the sampled grid");
    WindowSamples w;
    w.step = g.step();
    auto push_time = [&](double t) {
        if (auto k = g.node_index(t)) {
            w.times.push_back(g.time(*k));
            w.nodes.push_back(static_cast<long>(*k));
        } else {
            w.times.push_back(t);
            w.nodes.push_back(-1);
        }
    };
    push_time(a);
    std::size_t k = g.first_node_after(a);
    for (; k < g.size() && g.time(k) < b - g.snap_tol(); ++k) {
        w.times.push_back(g.time(k));
        w.nodes.push_back(static_cast<long>(k));
    }
    push_time(b);
    if (w.size() < 2 || !(w.times.back() > w.times.front()))
        throw DomainError("window: fewer than two samples");
    w.values.resize(static_cast<Eigen::Index>(w.size()), static_cast<Eigen::Index>(path.dim()));
    for (std::size_t i = 0; i < w.size(); ++i) {
        auto r = static_cast<Eigen::Index>(i);
        if (w.nodes[i] >= 0)
            w.values.row(r) = path.node(static_cast<std::size_t>(w.nodes[i]));
        else
            w.values.row(r) = path.at(w.times[i]).transpose();
    }
    return w;
}

namespace detail {

/// (l*h)^-beta for l = 0..n-1 (entry 0 unused).
inline std::vector<double> inverse_lag_powers(std::size_t n, double h, double beta) {
    std::vector<double> t(n + 1, 0.0);
    for (std::size_t l = 1; l <= n; ++l) t[l] = std::pow(static_cast<double>(l) * h, -beta);
    return t;
}

inline double pair_norm(const RowMatrix& v, Eigen::Index i, Eigen::Index j) {
    return (v.row(j) - v.row(i)).norm();
}

}  // namespace detail

/// Max over sample pairs s < t of ||x(t) - x(s)|| / (t - s)^beta, optionally weighted by
/// (s - T1)^beta (the damped seminorm, with s > T1 strictly).
inline double seminorm_of_samples(const WindowSamples& w, double beta, bool damped = false) {
    std::size_t n = w.size();
    auto lag_pow = detail::inverse_lag_powers(n, w.step, beta);
    double best = 0.0;
    double t1 = w.times.front();
    for (std::size_t i = 0; i < n; ++i) {
        double weight = 1.0;
        if (damped) {
            if (i == 0) continue;
            weight = std::pow(w.times[i] - t1, beta);
        }
        for (std::size_t j = i + 1; j < n; ++j) {
            double d = detail::pair_norm(w.values, static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (d == 0.0) continue;
            double inv;
            if (w.nodes[i] >= 0 && w.nodes[j] >= 0)
                inv = lag_pow[static_cast<std::size_t>(w.nodes[j] - w.nodes[i])];
            else
                inv = std::pow(w.times[j] - w.times[i], -beta);
            best = std::max(best, weight * d * inv);
        }
    }
    return best;
}

/// Hölder seminorm of the (linearly interpolated) path over [T1, T2].
inline double holder_seminorm(const VectorPath& path, double beta, double t1, double t2) {
    if (!(beta > 0.0 && beta < 1.0 + 1e-12)) throw InvalidParameter("holder_seminorm: beta outside (0,1]");
    return seminorm_of_samples(window_samples(path, t1, t2), beta);
}

inline double sup_norm(const VectorPath& path, double t1, double t2) {
    auto w = window_samples(path, t1, t2);
    return w.values.rowwise().norm().maxCoeff();
}

/// ||u||_{beta,beta,T1,T2} = sup-norm + sup_{T1<s<t<=T2} (s-T1)^beta ||u(t)-u(s)||/(t-s)^beta.
inline double damped_holder_norm(const VectorPath& path, double beta, double t1, double t2) {
    if (!(beta > 0.0 && beta < 1.0)) throw InvalidParameter("damped_holder_norm: beta outside (0,1)");
    auto w = window_samples(path, t1, t2);
    return w.values.rowwise().norm().maxCoeff() + seminorm_of_samples(w, beta, true);
}

/// sup over grid nodes r with [r, r + len] inside [lo, hi] of the seminorm over [r, r + len].
///
/// Equivalent to evaluating holder_seminorm on every such window, in O(m^2) instead of O(m^3):
/// a node pair lies in some window iff its lag is <= len, and the only other pairs involve
/// the interpolated right endpoint r + len of each window.
inline double max_sliding_seminorm(const VectorPath& path, double beta, double lo, double hi, double len) {
    const TimeGrid& g = path.grid();
    if (!(len > 0.0) || !(hi - lo >= len - g.snap_tol())) throw DomainError("max_sliding_seminorm: bad window");
    std::size_t first = g.node_index(lo).value_or(g.first_node_after(lo));
    std::vector<std::size_t> starts;
    for (std::size_t k = first; k < g.size() && g.time(k) + len <= hi + g.snap_tol(); ++k) starts.push_back(k);
    if (starts.empty()) throw DomainError("max_sliding_seminorm: no admissible window start");
    const auto& v = path.values();
    double h = g.step();
    auto max_lag = static_cast<std::size_t>(std::floor(len / h + 1e-9));
    auto lag_pow = detail::inverse_lag_powers(max_lag + 1, h, beta);
    double best = 0.0;
    std::size_t last_node = starts.back() + max_lag;
    if (last_node >= g.size()) last_node = g.size() - 1;
    while (g.time(last_node) > hi + g.snap_tol()) --last_node;
    for (std::size_t i = starts.front(); i <= last_node; ++i)
        for (std::size_t j = i + 1; j <= std::min(last_node, i + max_lag); ++j) {
            double d = detail::pair_norm(v, static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            best = std::max(best, d * lag_pow[j - i]);
        }
    bool aligned = std::abs(static_cast<double>(max_lag) * h - len) <= g.snap_tol();
    if (!aligned) {
        for (std::size_t r : starts) {
            double te = g.time(r) + len;
            Vector ve = path.at(te);
            for (std::size_t i = r; i <= r + max_lag && i < g.size(); ++i) {
                double d = (ve.transpose() - v.row(static_cast<Eigen::Index>(i))).norm();
                best = std::max(best, d * std::pow(te - g.time(i), -beta));
            }
        }
    }
    return best;
}

namespace detail {

/// expm1(z) - z without cancellation; nonnegative for all z.
inline double expm1_minus_linear(double z) {
    if (std::abs(z) >= 0.5) return std::expm1(z) - z;
    double term = 0.5 * z * z;
    double sum = term;
    for (int k = 3; k < 30; ++k) {
        term *= z / k;
        sum += term;
        if (std::abs(term) < 1e-18 * std::abs(sum)) break;
    }
    return sum;
}

/// int_B^{B+h} y^{-1-p} dy.
inline double kernel_mass(double b, double h, double p) {
    double l = std::log1p(h / b);
    return -std::pow(b, -p) * std::expm1(-p * l) / p;
}

/// int_B^{B+h} (y - B) y^{-1-p} dy.
inline double kernel_moment(double b, double h, double p) {
    double l = std::log1p(h / b);
    return std::pow(b, 1.0 - p) * (expm1_minus_linear((1.0 - p) * l) / (1.0 - p) + expm1_minus_linear(-p * l) / p);
}

/// Weights of the cells at distances x, x+h, x+2h, ... from an evaluation point.
struct KernelTable {
    std::vector<double> mass;
    std::vector<double> moment;
};

inline KernelTable kernel_table(double x, double h, double p, std::size_t cells) {
    KernelTable t;
    t.mass.resize(cells);
    t.moment.resize(cells);
    for (std::size_t k = 0; k < cells; ++k) {
        double b = x + static_cast<double>(k) * h;
        t.mass[k] = kernel_mass(b, h, p);
        t.moment[k] = kernel_moment(b, h, p);
    }
    return t;
}

/// Right-sided Weyl-Marchaud derivative D^alpha_{s+} of the piecewise-linear interpolant of
/// node rows v (columns are independent components) at r = node c + x, with s = node a,
/// a <= c, 0 < x <= h. `tab` holds the kernel weights for distances x + k h.
inline Eigen::RowVectorXd right_derivative_at(const RowMatrix& v, double h, double alpha, std::size_t a, std::size_t c,
                                              double x, const KernelTable& tab) {
    auto ci = static_cast<Eigen::Index>(c);
    Eigen::RowVectorXd slope_c = (v.row(ci + 1) - v.row(ci)) / h;
    Eigen::RowVectorXd g_r = v.row(ci) + x * slope_c;
    double dist = static_cast<double>(c - a) * h + x;
    Eigen::RowVectorXd inner = slope_c * (std::pow(x, 1.0 - alpha) / (1.0 - alpha));
    // Cells [q_i, q_{i+1}] with i = c-1-k: g(r) - g(q) = (g(r) - g_{i+1}) + slope_i (y - B).
    for (std::size_t k = 0; k + a < c; ++k) {
        auto i = static_cast<Eigen::Index>(c - 1 - k);
        inner.noalias() += tab.mass[k] * (g_r - v.row(i + 1));
        inner.noalias() += (tab.moment[k] / h) * (v.row(i + 1) - v.row(i));
    }
    return (g_r * std::pow(dist, -alpha) + alpha * inner) / std::tgamma(1.0 - alpha);
}

/// Left-sided derivative of order kappa of v(.) - v(t) at r = node c + (h - y), t = node b,
/// c < b, 0 < y <= h (y is the distance from r to node c+1). Real-valued convention: the
/// (-1)^kappa prefactor is omitted.
inline Eigen::RowVectorXd left_derivative_at(const RowMatrix& v, double h, double kappa, std::size_t b, std::size_t c,
                                             double y, const KernelTable& tab) {
    auto ci = static_cast<Eigen::Index>(c);
    Eigen::RowVectorXd slope_c = (v.row(ci + 1) - v.row(ci)) / h;
    Eigen::RowVectorXd w_r = v.row(ci + 1) - y * slope_c;
    double dist = static_cast<double>(b - c - 1) * h + y;
    Eigen::RowVectorXd inner = -slope_c * (std::pow(y, 1.0 - kappa) / (1.0 - kappa));
    // Cells [q_i, q_{i+1}] with i = c+1+k: w(r) - w(q) = (w(r) - w_i) - slope_i (y' - B).
    for (std::size_t k = 0; c + 1 + k < b; ++k) {
        auto i = static_cast<Eigen::Index>(c + 1 + k);
        inner.noalias() += tab.mass[k] * (w_r - v.row(i));
        inner.noalias() -= (tab.moment[k] / h) * (v.row(i + 1) - v.row(i));
    }
    Eigen::RowVectorXd w_t = v.row(static_cast<Eigen::Index>(b));
    return ((w_r - w_t) * std::pow(dist, -kappa) + kappa * inner) / std::tgamma(1.0 - kappa);
}

}  // namespace detail

/// D^alpha_{s+} g[r] of the piecewise-linear interpolant; s must be a node, s < r.
/// The inner singular integral is evaluated in closed form cell by cell.
inline Vector frac_deriv_right(const VectorPath& g, double alpha, double s, double r) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidParameter("frac_deriv_right: alpha outside (0,1)");
    if (!(r > s)) throw DomainError("frac_deriv_right: need r > s");
    const TimeGrid& grid = g.grid();
    auto a = grid.node_index(s);
    if (!a) throw DomainError("frac_deriv_right: lower terminal must be a grid node");
    if (!grid.contains(r)) throw DomainError("frac_deriv_right: r outside grid");
    std::size_t c;
    double x;
    if (auto k = grid.node_index(r)) {
        c = *k - 1;
        x = grid.step();
    } else {
        auto [cell, theta] = grid.locate(r);
        c = cell;
        x = theta * grid.step();
    }
    auto tab = detail::kernel_table(x, grid.step(), alpha, c - *a);
    return detail::right_derivative_at(g.values(), grid.step(), alpha, *a, c, x, tab).transpose();
}

/// D^{1-alpha}_{t-} (omega - omega(t))[r] of the piecewise-linear interpolant, real convention
/// (no (-1)^{1-alpha} factor); t must be a node, r < t.
inline Vector frac_deriv_left(const VectorPath& omega, double one_minus_alpha, double t, double r) {
    if (!(one_minus_alpha > 0.0 && one_minus_alpha < 1.0))
        throw InvalidParameter("frac_deriv_left: order outside (0,1)");
    if (!(r < t)) throw DomainError("frac_deriv_left: need r < t");
    const TimeGrid& grid = omega.grid();
    auto b = grid.node_index(t);
    if (!b) throw DomainError("frac_deriv_left: upper terminal must be a grid node");
    if (!grid.contains(r)) throw DomainError("frac_deriv_left: r outside grid");
    std::size_t c;
    double y;
    if (auto k = grid.node_index(r)) {
        c = *k;
        y = grid.step();
    } else {
        auto [cell, theta] = grid.locate(r);
        c = cell;
        y = (1.0 - theta) * grid.step();
    }
    auto tab = detail::kernel_table(y, grid.step(), one_minus_alpha, *b - c - 1);
    return detail::left_derivative_at(omega.values(), grid.step(), one_minus_alpha, *b, c, y, tab).transpose();
}

namespace detail {

/// Adaptive tanh-sinh of int_0^len diff(y) y^{-1-p} dy, where diff(y) = g(r) - g(r +- y),
/// split at the interior distances `cuts`. On [0, y0] the difference is replaced by its
/// secant slope: near y = 0 the rounding of r +- y would otherwise be amplified by y^{-1-p}.
template <class Diff>
quad::Estimate integrate_pieces(Diff&& diff, double p, double len, std::vector<double> cuts, double rel_tol,
                                int max_level) {
    cuts.erase(std::remove_if(cuts.begin(), cuts.end(), [&](double c) { return !(c > 0.0 && c < len); }), cuts.end());
    std::sort(cuts.begin(), cuts.end());
    double y0 = 1e-6 * (cuts.empty() ? len : cuts.front());
    cuts.insert(cuts.begin(), y0);
    cuts.push_back(len);
    quad::Estimate total{diff(y0) / y0 * std::pow(y0, 1.0 - p) / (1.0 - p), 0.0, 0};
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        double a = cuts[i], piece = cuts[i + 1] - a;
        auto shifted = [&](double tl, double) { return diff(a + tl) * std::pow(a + tl, -1.0 - p); };
        auto e = quad::integrate_adaptive(shifted, piece, rel_tol, 2, max_level);
        total.value += e.value;
        total.error += e.error;
        total.level = std::max(total.level, e.level);
    }
    return total;
}

}  // namespace detail

/// D^alpha_{s+} g[r] for an arbitrary scalar function by tanh-sinh quadrature of
/// int_0^{r-s} (g(r) - g(r-x)) x^{-1-alpha} dx, split at the times in `breaks` (kinks of g).
/// Independent of the closed-form route.
inline quad::Estimate frac_deriv_right_quadrature(const std::function<double(double)>& g, double alpha, double s,
                                                  double r, double rel_tol = 1e-10, int max_level = 8,
                                                  const std::vector<double>& breaks = {}) {
    if (!(r > s)) throw DomainError("frac_deriv_right_quadrature: need r > s");
    double gr = g(r);
    auto diff = [&](double x) { return gr - g(r - x); };
    std::vector<double> cuts;
    for (double b : breaks) cuts.push_back(r - b);
    auto est = detail::integrate_pieces(diff, alpha, r - s, cuts, rel_tol, max_level);
    double c = 1.0 / std::tgamma(1.0 - alpha);
    return {c * (gr * std::pow(r - s, -alpha) + alpha * est.value), c * alpha * est.error, est.level};
}

/// Left-sided counterpart of frac_deriv_right_quadrature (real convention).
inline quad::Estimate frac_deriv_left_quadrature(const std::function<double(double)>& w, double kappa, double t,
                                                 double r, double rel_tol = 1e-10, int max_level = 8,
                                                 const std::vector<double>& breaks = {}) {
    if (!(r < t)) throw DomainError("frac_deriv_left_quadrature: need r < t");
    double wr = w(r);
    auto diff = [&](double y) { return wr - w(r + y); };
    std::vector<double> cuts;
    for (double b : breaks) cuts.push_back(b - r);
    auto est = detail::integrate_pieces(diff, kappa, t - r, cuts, rel_tol, max_level);
    double c = 1.0 / std::tgamma(1.0 - kappa);
    return {c * ((wr - w(t)) * std::pow(t - r, -kappa) + kappa * est.value), c * kappa * est.error, est.level};
}

}  // namespace fbmstab
