#pragma once

#include <cmath>
#include <numbers>
#include <vector>

namespace fbmstab::quad {

/// Abscissa of a rule on [0, len], stored as distances to both ends so that points close
/// to either end are represented without cancellation.
struct Node {
    double to_left;
    double to_right;
    double weight;
};

/// Tanh-sinh (double exponential) rule on [0, len] with step 2^-level in the
/// transformed variable. Handles integrable algebraic endpoint singularities.
/// Nodes of level L are a superset of those of level L-1.
inline std::vector<Node> tanh_sinh(double len, int level, double tau_max = 4.5) {
    const double pi_2 = 0.5 * std::numbers::pi;
    double step = std::ldexp(1.0, -level);
    auto kmax = static_cast<int>(std::floor(tau_max / step));
    std::vector<Node> nodes;
    nodes.reserve(static_cast<std::size_t>(2 * kmax + 1));
    for (int k = -kmax; k <= kmax; ++k) {
        double tau = k * step;
        double z = pi_2 * std::sinh(tau);
        double to_left = len / (1.0 + std::exp(-2.0 * z));
        double to_right = len / (1.0 + std::exp(2.0 * z));
        double ch = std::cosh(z);
        double w = 0.5 * len * step * pi_2 * std::cosh(tau) / (ch * ch);
        if (to_left <= 0.0 || to_right <= 0.0 || w == 0.0) continue;
        nodes.push_back({to_left, to_right, w});
    }
    return nodes;
}

/// Integral of f over [0, len] with f taking (to_left, to_right).
template <class Fn>
double integrate(Fn&& f, double len, int level) {
    double s = 0.0;
    for (const auto& n : tanh_sinh(len, level)) s += n.weight * f(n.to_left, n.to_right);
    return s;
}

/// Result of an adaptive tanh-sinh integration.
struct Estimate {
    double value;
    double error;
    int level;
};

/// Increases the level until two successive estimates agree to rel_tol.
template <class Fn>
Estimate integrate_adaptive(Fn&& f, double len, double rel_tol, int min_level = 2, int max_level = 7) {
    double prev = integrate(f, len, min_level);
    double err = 0.0;
    int level = min_level + 1;
    for (; level <= max_level; ++level) {
        double cur = integrate(f, len, level);
        err = std::abs(cur - prev);
        prev = cur;
        if (err <= rel_tol * std::max(std::abs(cur), 1e-300)) return {cur, err, level};
    }
    return {prev, err, max_level};
}

}  // namespace fbmstab::quad
