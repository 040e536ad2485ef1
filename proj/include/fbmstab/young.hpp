#pragma once

#include <cmath>
#include <vector>

#include "fbmstab/fbm.hpp"
#include "fbmstab/holder.hpp"
#include "fbmstab/quadrature.hpp"
#include "fbmstab/semigroup.hpp"

namespace fbmstab {

/// Default c_{alpha,beta,beta'}. The largest observed convolution_bound_ratio on the built-in
/// stochastic example (20 seeds, dyadic horizons h..8) is about 0.61, attained near T = 4h;
/// rounded up. Overridable per experiment.
inline constexpr double kDefaultCAlphaBeta = 1.0;

namespace detail {

inline std::pair<std::size_t, std::size_t> node_window(const TimeGrid& grid, double s, double t, const char* who) {
    if (!(s < t)) throw DomainError(std::string(who) + ": need s < t");
    auto a = grid.node_index(s);
    auto b = grid.node_index(t);
    if (!a || !b) throw DomainError(std::string(who) + ": s and t must be grid nodes");
    return {*a, *b};
}

inline void require_shared_grid(const OperatorPath& g, const VectorPath& omega, const char* who) {
    if (!(g.grid() == omega.grid())) throw InvalidParameter(std::string(who) + ": g and omega must share a grid");
    if (g.dim() != omega.dim()) throw InvalidParameter(std::string(who) + ": dimension mismatch");
}

/// sum_i M_{ji} d_i with M stored row-major as in OperatorPath.
inline void accumulate_apply(Vector& out, const double* m, const double* d, std::size_t k, double w) {
    for (std::size_t j = 0; j < k; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < k; ++i) s += m[j * k + i] * d[i];
        out(static_cast<Eigen::Index>(j)) += w * s;
    }
}

}  // namespace detail

/// Zähle's integral int_s^t g dω = -sum_i int_s^t D^alpha_{s+} g_{.i}[r] D^{1-alpha}_{t-} ω_{t-,i}[r] dr
/// for the piecewise-linear interpolants of g and ω (real convention).
///
/// Inner fractional derivatives are exact; the outer integral is tanh-sinh on each cell, refined
/// until two levels agree to quad_tol relative to the result (or to the scale of the integrand).
inline Vector young_integral_fracderiv(const OperatorPath& g, const VectorPath& omega, const ExponentChain& chain,
                                       double s, double t, double quad_tol = 1e-8, int max_level = 7) {
    chain.validate();
    detail::require_shared_grid(g, omega, "young_integral_fracderiv");
    auto [a, b] = detail::node_window(omega.grid(), s, t, "young_integral_fracderiv");
    const double h = omega.grid().step();
    const double alpha = chain.alpha;
    const std::size_t k = omega.dim();
    const std::size_t cells = b - a;

    auto at_level = [&](int level, double& scale) {
        Vector out = Vector::Zero(static_cast<Eigen::Index>(k));
        scale = 0.0;
        for (const auto& node : quad::tanh_sinh(h, level)) {
            auto right = detail::kernel_table(node.to_left, h, alpha, cells);
            auto left = detail::kernel_table(node.to_right, h, 1.0 - alpha, cells);
            for (std::size_t c = a; c < b; ++c) {
                Eigen::RowVectorXd dg = detail::right_derivative_at(g.values(), h, alpha, a, c, node.to_left, right);
                Eigen::RowVectorXd dw = detail::left_derivative_at(omega.values(), h, 1.0 - alpha, b, c, node.to_right, left);
                detail::accumulate_apply(out, dg.data(), dw.data(), k, -node.weight);
                scale += node.weight * dg.norm() * dw.norm();
            }
        }
        return out;
    };

    double scale = 0.0;
    Vector prev = at_level(3, scale);
    double err = 0.0;
    for (int level = 4; level <= max_level; ++level) {
        Vector cur = at_level(level, scale);
        err = (cur - prev).norm();
        if (err <= quad_tol * std::max(cur.norm(), scale)) return cur;
        prev = std::move(cur);
    }
    throw NumericalError("young_integral_fracderiv: outer quadrature did not reach tolerance", err);
}

struct YoungSumResult {
    Vector value;                     // finest-level sum
    std::vector<Vector> levels;       // level l uses step 2^l h; index 0 is finest
    std::vector<double> cauchy;       // ||levels[l+1] - levels[l]||
};

namespace detail {

/// Left-point sum over partition a, a + stride, ..., b (b always included).
inline Vector left_point_sum(const OperatorPath& g, const VectorPath& omega, std::size_t a, std::size_t b,
                             std::size_t stride) {
    const std::size_t k = omega.dim();
    Vector out = Vector::Zero(static_cast<Eigen::Index>(k));
    Vector dw(static_cast<Eigen::Index>(k));
    for (std::size_t p = a; p < b; p += stride) {
        std::size_t q = std::min(p + stride, b);
        dw = (omega.node(q) - omega.node(p)).transpose();
        accumulate_apply(out, g.values().row(static_cast<Eigen::Index>(p)).data(), dw.data(), k, 1.0);
    }
    return out;
}

}  // namespace detail

/// Left-point Riemann-Stieltjes sums of g against ω on nested dyadic coarsenings of [s, t].
inline YoungSumResult young_integral_sums(const OperatorPath& g, const VectorPath& omega, double s, double t,
                                          int levels = 4) {
    if (levels < 2) throw DomainError("young_integral_sums: need at least two levels");
    detail::require_shared_grid(g, omega, "young_integral_sums");
    auto [a, b] = detail::node_window(omega.grid(), s, t, "young_integral_sums");
    YoungSumResult r;
    for (int l = 0; l < levels; ++l) r.levels.push_back(detail::left_point_sum(g, omega, a, b, std::size_t{1} << l));
    for (int l = 0; l + 1 < levels; ++l) r.cauchy.push_back((r.levels[l + 1] - r.levels[l]).norm());
    r.value = r.levels.front();
    return r;
}

/// Trapezoidal Young sum; equals the Zähle integral of the piecewise-linear interpolants.
inline Vector young_integral_trapezoid(const OperatorPath& g, const VectorPath& omega, double s, double t) {
    detail::require_shared_grid(g, omega, "young_integral_trapezoid");
    auto [a, b] = detail::node_window(omega.grid(), s, t, "young_integral_trapezoid");
    const std::size_t k = omega.dim();
    Vector out = Vector::Zero(static_cast<Eigen::Index>(k));
    for (std::size_t p = a; p < b; ++p) {
        Vector dw = (omega.node(p + 1) - omega.node(p)).transpose();
        detail::accumulate_apply(out, g.values().row(static_cast<Eigen::Index>(p)).data(), dw.data(), k, 0.5);
        detail::accumulate_apply(out, g.values().row(static_cast<Eigen::Index>(p + 1)).data(), dw.data(), k, 0.5);
    }
    return out;
}

/// t -> int_s^t S(t-r) g(r) dω(r) at every node t >= s (zero at s).
///
/// Left-point weight e^{-lambda_j (t - r_k)}; with cell_exact the weight is the cell average of
/// e^{-lambda_j (t - r)}, which stays accurate when lambda_j h > 1.
inline VectorPath convolution_young_path(const SpectralOperator& op, const OperatorPath& g, const VectorPath& omega,
                                         double s = 0.0, bool cell_exact = false) {
    detail::require_shared_grid(g, omega, "convolution_young_integral");
    if (op.dim() != omega.dim()) throw InvalidParameter("convolution_young_integral: operator dimension mismatch");
    const TimeGrid& grid = omega.grid();
    auto a = grid.node_index(s);
    if (!a) throw DomainError("convolution_young_integral: lower limit must be a grid node");
    const std::size_t k = omega.dim();
    const double h = grid.step();
    Vector decay(static_cast<Eigen::Index>(k)), weight(static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < k; ++j) {
        double x = op.eigenvalue(j) * h;
        decay(static_cast<Eigen::Index>(j)) = std::exp(-x);
        weight(static_cast<Eigen::Index>(j)) = cell_exact ? -std::expm1(-x) / x : std::exp(-x);
    }
    std::size_t n = grid.size() - *a;
    RowMatrix vals = RowMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    Vector acc = Vector::Zero(static_cast<Eigen::Index>(k));
    Vector inc(static_cast<Eigen::Index>(k));
    for (std::size_t p = *a; p + 1 < grid.size(); ++p) {
        Vector dw = (omega.node(p + 1) - omega.node(p)).transpose();
        inc.setZero();
        detail::accumulate_apply(inc, g.values().row(static_cast<Eigen::Index>(p)).data(), dw.data(), k, 1.0);
        acc = decay.cwiseProduct(acc) + weight.cwiseProduct(inc);
        vals.row(static_cast<Eigen::Index>(p + 1 - *a)) = acc.transpose();
    }
    return VectorPath(TimeGrid(grid.time(*a), h, n), std::move(vals));
}

inline Vector convolution_young_integral(const SpectralOperator& op, const OperatorPath& g, const VectorPath& omega,
                                         double t, double s = 0.0, bool cell_exact = false) {
    auto b = omega.grid().node_index(t);
    auto a = omega.grid().node_index(s);
    if (!a || !b || *b < *a) throw DomainError("convolution_young_integral: t must be a grid node >= s");
    if (*a == *b) return Vector::Zero(static_cast<Eigen::Index>(omega.dim()));
    // Only the nodes up to t matter; truncate to avoid work past t.
    TimeGrid sub(omega.grid().time(*a), omega.grid().step(), *b - *a + 1);
    RowMatrix gv = g.values().middleRows(static_cast<Eigen::Index>(*a), static_cast<Eigen::Index>(*b - *a + 1));
    RowMatrix wv = omega.values().middleRows(static_cast<Eigen::Index>(*a), static_cast<Eigen::Index>(*b - *a + 1));
    auto path = convolution_young_path(op, OperatorPath(sub, g.dim(), std::move(gv)), VectorPath(sub, std::move(wv)),
                                       sub.front(), cell_exact);
    return path.node(path.size() - 1).transpose();
}

/// ||int_s^t g dω - int_{s-tau}^{t-tau} g(. + tau) d(theta_tau ω)||, both by left-point sums.
inline double change_of_variable_check(const OperatorPath& g, const VectorPath& omega, double s, double t, double tau) {
    if (!omega.grid().node_index(tau)) throw DomainError("change_of_variable_check: tau must be a grid node");
    Vector direct = young_integral_sums(g, omega, s, t, 2).value;
    VectorPath shifted = wiener_shift(omega, tau);
    OperatorPath g_shift = g.relabelled(tau);
    Vector moved = young_integral_sums(g_shift, shifted, s - tau, t - tau, 2).value;
    return (direct - moved).norm();
}

/// Ratio of the damped norm of t -> int_0^t S(t-r) g(r) dω over
/// T^{beta'} c_S c_DG <ω>_{beta',0,T} ||u||_{beta,beta,0,T}; its supremum calibrates c_{alpha,beta,beta'}.
inline double convolution_bound_ratio(const SpectralOperator& op, const OperatorPath& g_of_u, const VectorPath& omega,
                                      const VectorPath& u, const ExponentChain& chain, double c_s, double c_dg,
                                      double horizon) {
    double t0 = omega.grid().front();
    auto conv = convolution_young_path(op, g_of_u, omega, t0);
    double lhs = damped_holder_norm(conv, chain.beta, t0, t0 + horizon);
    double rhs = std::pow(horizon, chain.beta_prime) * c_s * c_dg *
                 holder_seminorm(omega, chain.beta_prime, t0, t0 + horizon) *
                 damped_holder_norm(u, chain.beta, t0, t0 + horizon);
    if (rhs == 0.0) return 0.0;
    return lhs / rhs;
}

}  // namespace fbmstab
