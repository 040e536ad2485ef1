#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "fbmstab/grid.hpp"

namespace fbmstab {

/// Negative self-adjoint operator A represented by its eigenvalues -lambda_i, with a decay
/// rate lambda in (0, lambda_1) used by every semigroup estimate.
class SpectralOperator {
public:
    SpectralOperator(std::vector<double> eigenvalues, double lambda) : eig_(std::move(eigenvalues)), lambda_(lambda) {
        if (eig_.empty()) throw InvalidParameter("SpectralOperator: need at least one mode");
        for (std::size_t i = 0; i < eig_.size(); ++i) {
            if (!(eig_[i] > 0.0) || !std::isfinite(eig_[i]))
                throw InvalidParameter("SpectralOperator: eigenvalues must be positive");
            if (i > 0 && eig_[i] < eig_[i - 1]) throw InvalidParameter("SpectralOperator: eigenvalues must be nondecreasing");
        }
        if (!(lambda > 0.0 && lambda < eig_.front()))
            throw InvalidParameter("SpectralOperator: need 0 < lambda < lambda_1");
    }

    /// lambda_i = diffusivity * (i pi)^2, i = 1..K.
    static SpectralOperator dirichlet_laplacian_1d(std::size_t modes, double lambda, double diffusivity = 1.0) {
        if (!(diffusivity > 0.0)) throw InvalidParameter("dirichlet_laplacian_1d: diffusivity must be positive");
        std::vector<double> e(modes);
        for (std::size_t i = 0; i < modes; ++i) {
            double k = static_cast<double>(i + 1) * std::numbers::pi;
            e[i] = diffusivity * k * k;
        }
        return SpectralOperator(std::move(e), lambda);
    }

    std::size_t dim() const noexcept { return eig_.size(); }
    const std::vector<double>& eigenvalues() const noexcept { return eig_; }
    double eigenvalue(std::size_t i) const noexcept { return eig_[i]; }
    double lambda() const noexcept { return lambda_; }

    SpectralOperator with_lambda(double lambda) const { return SpectralOperator(eig_, lambda); }

private:
    std::vector<double> eig_;
    double lambda_;
};

inline Vector apply_semigroup(const SpectralOperator& op, double t, const Vector& x) {
    if (t < 0.0) throw DomainError("apply_semigroup: t must be >= 0");
    if (static_cast<std::size_t>(x.size()) != op.dim()) throw InvalidParameter("apply_semigroup: dimension mismatch");
    Vector y = x;
    for (std::size_t i = 0; i < op.dim(); ++i) y(static_cast<Eigen::Index>(i)) *= std::exp(-op.eigenvalue(i) * t);
    return y;
}

/// (-A)^delta x.
inline Vector apply_frac_power(const SpectralOperator& op, double delta, const Vector& x) {
    if (delta < 0.0) throw DomainError("apply_frac_power: delta must be >= 0");
    if (static_cast<std::size_t>(x.size()) != op.dim()) throw InvalidParameter("apply_frac_power: dimension mismatch");
    Vector y = x;
    for (std::size_t i = 0; i < op.dim(); ++i) y(static_cast<Eigen::Index>(i)) *= std::pow(op.eigenvalue(i), delta);
    return y;
}

/// Node values of t -> S(t - t_start) v on a grid with t_start <= front.
inline VectorPath semigroup_path(const SpectralOperator& op, const Vector& v, const TimeGrid& grid, double t_start = 0.0) {
    RowMatrix vals(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(op.dim()));
    for (std::size_t k = 0; k < grid.size(); ++k)
        vals.row(static_cast<Eigen::Index>(k)) = apply_semigroup(op, std::max(grid.time(k) - t_start, 0.0), v).transpose();
    return VectorPath(grid, std::move(vals));
}

namespace detail {

/// t^p e^{lambda t} lambda_i^p e^{-lambda_i t}, maximised over modes.
inline double cs_ratio(const SpectralOperator& op, double p, double t) {
    double best = 0.0;
    for (double li : op.eigenvalues()) {
        double v = (p == 0.0 ? 1.0 : std::pow(li * t, p)) * std::exp((op.lambda() - li) * t);
        best = std::max(best, v);
    }
    return best;
}

}  // namespace detail

/// Smallest constant c with ||S(t)||_{L(V_zeta, V_gamma)} <= c t^{zeta-gamma} e^{-lambda t} on (0, t_max],
/// observed on a log-spaced sample augmented by the per-mode stationary points.
inline double estimate_cS(const SpectralOperator& op, double gamma, double zeta, double t_max = 0.0,
                          std::size_t samples = 2000) {
    if (gamma < zeta || zeta < 0.0) throw DomainError("estimate_cS: need gamma >= zeta >= 0");
    if (t_max <= 0.0) t_max = 50.0 / (op.eigenvalue(0) - op.lambda());
    samples = std::max<std::size_t>(samples, 1000);
    double p = gamma - zeta;
    if (p == 0.0) return 1.0;  // sup of e^{(lambda - lambda_i) t} is its t -> 0 limit
    double t_min = std::min(1e-6 / op.eigenvalues().back(), t_max * 1e-3);
    double best = 0.0;
    double ratio = std::log(t_max / t_min);
    for (std::size_t k = 0; k < samples; ++k) {
        double t = t_min * std::exp(ratio * static_cast<double>(k) / static_cast<double>(samples - 1));
        best = std::max(best, detail::cs_ratio(op, p, t));
    }
    for (double li : op.eigenvalues()) {
        double ts = p / (li - op.lambda());
        if (ts > 0.0 && ts <= t_max) best = std::max(best, detail::cs_ratio(op, p, ts));
    }
    return best;
}

/// Constant c_S with ||S(.)v||_{beta,beta,t1,t2} <= c_S e^{-lambda t1} ||v|| for all windows:
/// 1 bounds the sup-norm term and c_{beta,0} bounds the damped seminorm term, because
/// ||S(r) - id||_{L(V_beta, V)} <= r^beta on the spectrum.
inline double damped_semigroup_constant(const SpectralOperator& op, double beta, double t_max = 0.0) {
    return estimate_cS(op, 0.0, 0.0, t_max) + estimate_cS(op, beta, 0.0, t_max);
}

/// Exponents for the increment estimates; sigma in [eta, 1 + eta] and gamma >= delta - eta >= 0.
struct SemigroupExponents {
    double sigma = 0.5;
    double eta = 0.0;
    double delta = 0.0;
    double gamma = 0.5;
    double eta2 = 0.3;
    double gamma2 = 0.3;
};

struct SemigroupEstimateReport {
    double c_identity_difference;  // ||S(t) - id||_{L(V_sigma, V_eta)} / t^{sigma-eta}
    double c_increment;            // ||S(t-r) - S(t-q)||_{L(V_delta, V_gamma)} / ((r-q)^eta (t-r)^{delta-eta-gamma})
    double c_double_increment;     // rectangular increment over (t-s)^eta2 (r-q)^gamma2 (s-r)^{-(eta2+gamma2)}
    std::size_t samples;
};

/// Observed constants of the three increment estimates over random tuples 0 <= q <= r <= s <= t <= t_max.
inline SemigroupEstimateReport check_holder_semigroup_estimates(const SpectralOperator& op, const SemigroupExponents& ex,
                                                                std::size_t samples, double t_max = 2.0,
                                                                std::uint64_t seed = 1) {
    if (ex.eta < 0.0 || ex.sigma < ex.eta || ex.sigma > 1.0 + ex.eta)
        throw DomainError("check_holder_semigroup_estimates: need sigma in [eta, 1 + eta], eta >= 0");
    if (ex.delta - ex.eta < 0.0 || ex.gamma < ex.delta - ex.eta)
        throw DomainError("check_holder_semigroup_estimates: need gamma >= delta - eta >= 0");
    if (ex.eta2 < 0.0 || ex.gamma2 < 0.0) throw DomainError("check_holder_semigroup_estimates: need eta2, gamma2 >= 0");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> logu(std::log(1e-6), std::log(t_max));
    auto draw = [&] { return std::exp(logu(rng)); };
    SemigroupEstimateReport rep{0.0, 0.0, 0.0, samples};
    const auto& lam = op.eigenvalues();
    for (std::size_t n = 0; n < samples; ++n) {
        std::vector<double> p{draw(), draw(), draw(), draw()};
        std::sort(p.begin(), p.end());
        double q = p[0], r = p[1], s = p[2], t = p[3];
        double tt = draw();
        double a = 0.0, b = 0.0, c = 0.0;
        for (double li : lam) {
            a = std::max(a, std::pow(li, ex.eta - ex.sigma) * -std::expm1(-li * tt));
            b = std::max(b, std::pow(li, ex.gamma - ex.delta) * std::abs(std::exp(-li * (t - r)) - std::exp(-li * (t - q))));
            c = std::max(c, std::abs(std::exp(-li * (t - r)) - std::exp(-li * (s - r)) - std::exp(-li * (t - q)) +
                                     std::exp(-li * (s - q))));
        }
        rep.c_identity_difference = std::max(rep.c_identity_difference, a / std::pow(tt, ex.sigma - ex.eta));
        if (r > q && t > r)
            rep.c_increment = std::max(
                rep.c_increment, b / (std::pow(r - q, ex.eta) * std::pow(t - r, ex.delta - ex.eta - ex.gamma)));
        if (r > q && s > r && t > s)
            rep.c_double_increment =
                std::max(rep.c_double_increment, c / (std::pow(t - s, ex.eta2) * std::pow(r - q, ex.gamma2) *
                                                      std::pow(s - r, -(ex.eta2 + ex.gamma2))));
    }
    return rep;
}

}  // namespace fbmstab
