#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fbmstab/fbm.hpp"
#include "fbmstab/holder.hpp"
#include "fbmstab/semigroup.hpp"
#include "fbmstab/young.hpp"

namespace fbmstab {

/// Drift F and noise coefficient G on coefficient vectors, with their Lipschitz constants.
struct NonlinearitySpec {
    std::string name;
    std::function<Vector(const Vector&)> F;
    std::function<Matrix(const Vector&)> G;
    double c_F = 0.0;
    double c_DF = 0.0;
    double c_G = 0.0;
    double c_DG = 0.0;
    double c_D2G = 0.0;
    bool zero_fixed = true;
    bool diagonal_G = false;  // G(u) diagonal for every u

    /// F(u) = a sin(u), G(u) = diag(b sin(u_i)).
    static NonlinearitySpec sine(double a, double b) {
        if (a < 0.0 || b < 0.0) throw InvalidParameter("sine nonlinearity: a, b must be >= 0");
        NonlinearitySpec s;
        s.name = "sine";
        s.F = [a](const Vector& u) -> Vector { return a * u.array().sin().matrix(); };
        s.G = [b](const Vector& u) -> Matrix { return (b * u.array().sin()).matrix().asDiagonal(); };
        s.c_DF = a;
        s.c_DG = b;
        s.c_D2G = b;
        s.diagonal_G = true;
        return s;
    }

    /// F(u) = diag(kappa) u, G = 0.
    static NonlinearitySpec linear(std::vector<double> kappa) {
        NonlinearitySpec s;
        s.name = "linear";
        Vector k = Eigen::Map<const Vector>(kappa.data(), static_cast<Eigen::Index>(kappa.size()));
        s.F = [k](const Vector& u) -> Vector { return k.cwiseProduct(u); };
        s.G = [](const Vector& u) -> Matrix { return Matrix::Zero(u.size(), u.size()); };
        s.c_DF = k.cwiseAbs().maxCoeff();
        s.diagonal_G = true;
        return s;
    }

    static NonlinearitySpec zero() { return sine(0.0, 0.0); }

    /// Checks the Lipschitz constants and zero_fixed on random pairs; throws InvalidParameter.
    void spot_check(std::size_t dim, std::size_t pairs = 100, std::uint64_t seed = 7) const {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> n(0.0, 1.0);
        auto draw = [&] {
            Vector v(static_cast<Eigen::Index>(dim));
            for (auto& x : v) x = n(rng);
            return v;
        };
        const double slack = 1.0 + 1e-12;
        for (std::size_t p = 0; p < pairs; ++p) {
            Vector u = draw(), v = draw();
            double d = (u - v).norm();
            if ((F(u) - F(v)).norm() > slack * c_DF * d + 1e-14)
                throw InvalidParameter("nonlinearity '" + name + "': F violates its Lipschitz constant c_DF");
            if ((G(u) - G(v)).norm() > slack * c_DG * d + 1e-14)
                throw InvalidParameter("nonlinearity '" + name + "': G violates its Lipschitz constant c_DG");
        }
        if (zero_fixed) {
            Vector z = Vector::Zero(static_cast<Eigen::Index>(dim));
            if (F(z).norm() != 0.0 || G(z).norm() != 0.0)
                throw InvalidParameter("nonlinearity '" + name + "': zero_fixed but F(0) or G(0) is nonzero");
        }
    }
};

enum class Scheme { exp_euler, picard };

struct SolveConfig {
    Scheme scheme = Scheme::exp_euler;
    std::optional<TimeGrid> grid;  // must equal the noise grid when set
    double picard_tol = 1e-10;
    int picard_max_iter = 50;
    bool cell_exact = false;
    double beta = 0.55;  // exponent of the damped norm in the Picard stopping rule

    void validate() const {
        if (!(picard_tol > 0.0)) throw InvalidParameter("SolveConfig: picard_tol must be positive");
        if (picard_max_iter < 1) throw InvalidParameter("SolveConfig: picard_max_iter must be >= 1");
        if (!(beta > 0.0 && beta < 1.0)) throw InvalidParameter("SolveConfig: beta outside (0,1)");
    }
};

inline OperatorPath operator_path_of(const NonlinearitySpec& nl, const VectorPath& u) {
    return OperatorPath::generate(u.grid(), u.dim(), [&](std::size_t k) { return nl.G(u.node(k).transpose()); });
}

namespace detail {

/// Per-mode weights of one step of length h.
struct StepWeights {
    Vector decay;      // e^{-lambda h}
    Vector phi;        // int_0^h e^{-lambda r} dr
    Vector left;       // weight of f(t_k) for the linear interpolant of f on the cell
    Vector right;      // weight of f(t_{k+1})
    Vector noise;      // left-point (or cell-exact) noise weight
};

/// (1 - e^{-x}(1 + x)) / x^2.
inline double psi(double x) {
    if (x > 0.5) return -(std::expm1(-x) + x * std::exp(-x)) / (x * x);
    double term = 0.5, sum = 0.5;
    double fact = 2.0;
    double pw = 1.0;
    for (int n = 3; n < 30; ++n) {
        fact *= n;
        pw *= -x;
        term = (n - 1) * pw / fact;
        sum += term;
        if (std::abs(term) < 1e-18) break;
    }
    return sum;
}

inline double phi1(double x) { return x == 0.0 ? 1.0 : -std::expm1(-x) / x; }

inline StepWeights step_weights(const SpectralOperator& op, double h, bool cell_exact) {
    auto k = static_cast<Eigen::Index>(op.dim());
    StepWeights w{Vector(k), Vector(k), Vector(k), Vector(k), Vector(k)};
    for (Eigen::Index i = 0; i < k; ++i) {
        double x = op.eigenvalue(static_cast<std::size_t>(i)) * h;
        w.decay(i) = std::exp(-x);
        w.phi(i) = h * phi1(x);
        w.left(i) = h * psi(x);
        w.right(i) = w.phi(i) - w.left(i);
        w.noise(i) = cell_exact ? phi1(x) : std::exp(-x);
    }
    return w;
}

inline void require_finite(const Vector& v, double t) {
    if (!v.allFinite()) throw NumericalError("solver produced a non-finite value at t = " + std::to_string(t));
}

inline VectorPath exp_euler(const Vector& u0, const SpectralOperator& op, const NonlinearitySpec& nl,
                            const VectorPath& omega, bool cell_exact) {
    const TimeGrid& grid = omega.grid();
    auto w = step_weights(op, grid.step(), cell_exact);
    RowMatrix vals(static_cast<Eigen::Index>(grid.size()), u0.size());
    Vector u = u0;
    vals.row(0) = u.transpose();
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        Vector dw = (omega.node(k + 1) - omega.node(k)).transpose();
        Vector next = w.decay.cwiseProduct(u) + w.phi.cwiseProduct(nl.F(u)) + w.noise.cwiseProduct(nl.G(u) * dw);
        require_finite(next, grid.time(k + 1));
        u = std::move(next);
        vals.row(static_cast<Eigen::Index>(k + 1)) = u.transpose();
    }
    return VectorPath(grid, std::move(vals));
}

/// Gauss-Seidel sweeps of the discrete mild map with piecewise-linear integrands on every
/// cell; the noise enters as the rate (ω(t_{k+1}) - ω(t_k)) / h on its cell.
inline VectorPath picard(const Vector& u0, const SpectralOperator& op, const NonlinearitySpec& nl,
                         const VectorPath& omega, const SolveConfig& cfg) {
    const TimeGrid& grid = omega.grid();
    const double h = grid.step();
    auto w = step_weights(op, h, false);
    VectorPath old = exp_euler(u0, op, nl, omega, cfg.cell_exact);
    double diff = 0.0;
    for (int it = 0; it < cfg.picard_max_iter; ++it) {
        RowMatrix vals(old.values().rows(), old.values().cols());
        Vector u = u0;
        vals.row(0) = u.transpose();
        for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
            Vector dw = (omega.node(k + 1) - omega.node(k)).transpose() / h;
            Vector ur = old.node(k + 1).transpose();
            Vector next = w.decay.cwiseProduct(u) + w.left.cwiseProduct(nl.F(u) + nl.G(u) * dw) +
                          w.right.cwiseProduct(nl.F(ur) + nl.G(ur) * dw);
            require_finite(next, grid.time(k + 1));
            u = std::move(next);
            vals.row(static_cast<Eigen::Index>(k + 1)) = u.transpose();
        }
        VectorPath cur(grid, std::move(vals));
        VectorPath delta(grid, cur.values() - old.values());
        diff = delta.values().rowwise().norm().maxCoeff();
        // The damped norm dominates the sup-norm; only pay for it once the sup-norm is small.
        if (diff < cfg.picard_tol) {
            diff = damped_holder_norm(delta, cfg.beta, grid.front(), grid.back());
            if (diff < cfg.picard_tol) return cur;
        }
        old = std::move(cur);
    }
    throw ConvergenceError("picard: no convergence within " + std::to_string(cfg.picard_max_iter) + " iterations", diff);
}

}  // namespace detail

/// Mild solution of du = (Au + F(u))dt + G(u)dω on the noise grid, started at its first node.
inline VectorPath solve_mild(const Vector& u0, const SpectralOperator& op, const NonlinearitySpec& nl,
                             const VectorPath& omega, const SolveConfig& cfg = {}) {
    cfg.validate();
    if (cfg.grid && !(*cfg.grid == omega.grid())) throw InvalidParameter("solve_mild: solver grid differs from noise grid");
    if (static_cast<std::size_t>(u0.size()) != op.dim() || omega.dim() != op.dim())
        throw InvalidParameter("solve_mild: dimension mismatch");
    if (cfg.scheme == Scheme::exp_euler) return detail::exp_euler(u0, op, nl, omega, cfg.cell_exact);
    return detail::picard(u0, op, nl, omega, cfg);
}

/// max_t ||u(t) - S(t)u0 - int_0^t S(t-r)F(u)dr - int_0^t S(t-r)G(u)dω|| over grid nodes.
/// Drift: exact exponential weights on the linear interpolant of F(u). Noise: left-point
/// convolution sums (cell-averaged weights with cell_exact).
inline double mild_residual(const VectorPath& u, const Vector& u0, const SpectralOperator& op,
                            const NonlinearitySpec& nl, const VectorPath& omega, bool cell_exact = false) {
    if (!(u.grid() == omega.grid())) throw InvalidParameter("mild_residual: u and omega must share a grid");
    const TimeGrid& grid = u.grid();
    auto w = detail::step_weights(op, grid.step(), cell_exact);
    auto conv = convolution_young_path(op, operator_path_of(nl, u), omega, grid.front(), cell_exact);
    Vector free = u0;
    Vector drift = Vector::Zero(u0.size());
    Vector f_prev = nl.F(u.node(0).transpose());
    double worst = (u.node(0).transpose() - u0).norm();
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        Vector f_next = nl.F(u.node(k + 1).transpose());
        free = w.decay.cwiseProduct(free);
        drift = w.decay.cwiseProduct(drift) + w.left.cwiseProduct(f_prev) + w.right.cwiseProduct(f_next);
        Vector r = u.node(k + 1).transpose() - free - drift - conv.node(k + 1).transpose();
        worst = std::max(worst, r.norm());
        f_prev = std::move(f_next);
    }
    return worst;
}

/// (h/2) c_DF sum_k ||u(t_{k+1}) - u(t_k)||: dominates mild_residual of an exp_euler solution,
/// whose residual is the accumulated difference between left-point and linear drift weights.
inline double exp_euler_residual_bound(const VectorPath& u, const NonlinearitySpec& nl) {
    double tv = 0.0;
    for (std::size_t k = 0; k + 1 < u.size(); ++k) tv += (u.node(k + 1) - u.node(k)).norm();
    return 0.5 * u.grid().step() * nl.c_DF * tv;
}

/// Rebuilds u on each [T_n, T_{n+1}] from u(T_n) via the shifted noise θ_{T_n}ω and the relabelled
/// integrand, and returns the largest discrepancy with u. Stopping times are snapped to nodes.
inline double splitting_check(const VectorPath& u, const std::vector<double>& stopping_times,
                              const SpectralOperator& op, const NonlinearitySpec& nl, const VectorPath& omega,
                              bool cell_exact = false) {
    if (!(u.grid() == omega.grid())) throw InvalidParameter("splitting_check: u and omega must share a grid");
    const TimeGrid& grid = u.grid();
    const double h = grid.step();
    auto w = detail::step_weights(op, h, cell_exact);
    auto snap = [&](double t) {
        double x = std::round((t - grid.front()) / h);
        return static_cast<std::size_t>(std::clamp(x, 0.0, static_cast<double>(grid.size() - 1)));
    };
    OperatorPath g = operator_path_of(nl, u);
    double worst = 0.0;
    for (std::size_t n = 0; n + 1 < stopping_times.size(); ++n) {
        std::size_t a = snap(stopping_times[n]);
        std::size_t b = snap(stopping_times[n + 1]);
        if (b <= a || b >= grid.size()) continue;
        double tn = grid.time(a);
        VectorPath shifted = wiener_shift(omega, tn);
        OperatorPath g_shift = g.relabelled(tn);
        auto conv = convolution_young_path(op, g_shift, shifted, 0.0, cell_exact);
        Vector start = u.node(a).transpose();
        Vector drift = Vector::Zero(start.size());
        for (std::size_t k = a; k < b; ++k) {
            drift = w.decay.cwiseProduct(drift) + w.phi.cwiseProduct(nl.F(u.node(k).transpose()));
            Vector rebuilt = apply_semigroup(op, grid.time(k + 1) - tn, start) + drift + conv.node(k + 1 - a).transpose();
            worst = std::max(worst, (rebuilt - u.node(k + 1).transpose()).norm());
        }
    }
    return worst;
}

}  // namespace fbmstab
