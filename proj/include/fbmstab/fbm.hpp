#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <unsupported/Eigen/FFT>

#include "fbmstab/grid.hpp"

namespace fbmstab {

/// R(s,t) = (|t|^{2H} + |s|^{2H} - |t-s|^{2H}) / 2, two-sided.
inline double fbm_covariance(double s, double t, double hurst) {
    if (!(hurst > 0.0 && hurst < 1.0)) throw InvalidParameter("fbm_covariance: H outside (0,1)");
    double e = 2.0 * hurst;
    return 0.5 * (std::pow(std::abs(t), e) + std::pow(std::abs(s), e) - std::pow(std::abs(t - s), e));
}

/// Autocovariance of unit-step fractional Gaussian noise at lag k.
inline double fgn_autocovariance(std::size_t k, double hurst) {
    double e = 2.0 * hurst;
    double x = static_cast<double>(k);
    return 0.5 * (std::pow(x + 1.0, e) - 2.0 * std::pow(x, e) + std::pow(std::abs(x - 1.0), e));
}

/// SplitMix64 finaliser; used to derive independent stream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed of mode i given the master seed. Depends only on (seed, i), never on K.
inline std::uint64_t mode_seed(std::uint64_t seed, std::size_t mode) noexcept {
    return splitmix64(splitmix64(seed) ^ splitmix64(0xF0B1A5ULL + static_cast<std::uint64_t>(mode)));
}

/// Exact-in-distribution sampler of n unit-step fGn increments.
///
/// Circulant embedding of the fGn covariance (padded to a power of two) is tried first;
/// if the embedding has a significantly negative eigenvalue, or `force_cholesky` is set,
/// the n x n Toeplitz covariance is Cholesky-factorised instead. Construction is the
/// expensive part; `sample` is cheap and const, so one generator can serve many seeds.
class FgnSampler {
public:
    FgnSampler(std::size_t n, double hurst, bool force_cholesky = false) : n_(n), hurst_(hurst) {
        if (!(hurst > 0.0 && hurst < 1.0)) throw InvalidParameter("FgnSampler: H outside (0,1)");
        if (n == 0) throw InvalidParameter("FgnSampler: need at least one increment");
        if (!force_cholesky && try_embedding()) return;
        setup_cholesky();
    }

    std::size_t size() const noexcept { return n_; }
    bool uses_embedding() const noexcept { return !sqrt_eig_.empty(); }

    std::vector<double> sample(std::uint64_t seed) const {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> out(n_);
        if (uses_embedding()) {
            std::size_t m = sqrt_eig_.size();
            std::vector<std::complex<double>> a(m), x;
            for (std::size_t k = 0; k < m; ++k) {
                double re = normal(rng);
                double im = normal(rng);
                a[k] = sqrt_eig_[k] * std::complex<double>(re, im);
            }
            Eigen::FFT<double> fft;
            fft.fwd(x, a);
            for (std::size_t k = 0; k < n_; ++k) out[k] = x[k].real();
        } else {
            Vector z(static_cast<Eigen::Index>(n_));
            for (std::size_t k = 0; k < n_; ++k) z(static_cast<Eigen::Index>(k)) = normal(rng);
            Vector y = chol_ * z;
            for (std::size_t k = 0; k < n_; ++k) out[k] = y(static_cast<Eigen::Index>(k));
        }
        return out;
    }

private:
    bool try_embedding() {
        std::size_t half = 1;
        while (half < n_) half <<= 1;
        std::size_t m = 2 * half;
        std::vector<std::complex<double>> row(m), eig;
        for (std::size_t k = 0; k <= half; ++k) row[k] = fgn_autocovariance(k, hurst_);
        for (std::size_t k = half + 1; k < m; ++k) row[k] = row[m - k];
        Eigen::FFT<double> fft;
        fft.fwd(eig, row);
        sqrt_eig_.assign(m, 0.0);
        double scale = 0.0;
        for (const auto& e : eig) scale = std::max(scale, std::abs(e.real()));
        for (std::size_t k = 0; k < m; ++k) {
            double v = eig[k].real();
            if (v < -1e-10 * scale) {
                sqrt_eig_.clear();
                return false;
            }
            // Re(FFT(a)) has covariance sum_k lambda_k/m e^{...} when E|a_k|^2 = 2 lambda_k/m.
            sqrt_eig_[k] = std::sqrt(std::max(v, 0.0) / static_cast<double>(m));
        }
        return true;
    }

    void setup_cholesky() {
        auto n = static_cast<Eigen::Index>(n_);
        Matrix cov(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                cov(i, j) = fgn_autocovariance(static_cast<std::size_t>(std::abs(i - j)), hurst_);
        Eigen::LLT<Matrix> llt(cov);
        if (llt.info() != Eigen::Success)
            throw GenerationError("fBm generation failed: circulant embedding and Cholesky both rejected for grid of " +
                                  std::to_string(n_ + 1) + " nodes");
        chol_ = llt.matrixL();
    }

    std::size_t n_;
    double hurst_;
    std::vector<double> sqrt_eig_;
    Matrix chol_;
};

namespace detail {

/// Node pinned to zero: the node at t = 0 if the grid has one, else the first node.
inline std::size_t anchor_node(const TimeGrid& grid) {
    if (grid.front() <= grid.snap_tol())
        if (auto k = grid.node_index(0.0)) return *k;
    return 0;
}

inline std::vector<double> integrate_increments(const TimeGrid& grid, const std::vector<double>& fgn, double hurst) {
    double scale = std::pow(grid.step(), hurst);
    std::vector<double> v(grid.size(), 0.0);
    for (std::size_t k = 1; k < grid.size(); ++k) v[k] = v[k - 1] + scale * fgn[k - 1];
    std::size_t a = anchor_node(grid);
    double offset = v[a];
    for (double& x : v) x -= offset;
    v[a] = 0.0;
    return v;
}

}  // namespace detail

/// Scalar fBm sample on a grid; zero at t = 0 when 0 is a node, otherwise at the first node.
inline ScalarPath generate_fbm_scalar(const TimeGrid& grid, HurstParameter hurst, std::uint64_t seed) {
    FgnSampler sampler(grid.size() - 1, hurst.value());
    return ScalarPath(grid, detail::integrate_increments(grid, sampler.sample(seed), hurst.value()));
}

/// Reusable generator for many seeds on one grid.
class FbmGenerator {
public:
    FbmGenerator(TimeGrid grid, HurstParameter hurst, bool force_cholesky = false)
        : grid_(grid), hurst_(hurst.value()), sampler_(grid.size() - 1, hurst.value(), force_cholesky) {}

    const TimeGrid& grid() const noexcept { return grid_; }
    bool uses_embedding() const noexcept { return sampler_.uses_embedding(); }

    ScalarPath scalar(std::uint64_t seed) const {
        return ScalarPath(grid_, detail::integrate_increments(grid_, sampler_.sample(seed), hurst_));
    }

    /// Mode i is sqrt(q_i) times an independent scalar fBm seeded by mode_seed(seed, i).
    VectorPath hilbert(const CovarianceSpec& q, std::uint64_t seed) const {
        auto n = static_cast<Eigen::Index>(grid_.size());
        RowMatrix vals = RowMatrix::Zero(n, static_cast<Eigen::Index>(q.dim()));
        for (std::size_t i = 0; i < q.dim(); ++i) {
            double qi = q.eigenvalues()[i];
            if (qi == 0.0) continue;
            double amp = std::sqrt(qi);
            auto path = detail::integrate_increments(grid_, sampler_.sample(mode_seed(seed, i)), hurst_);
            for (Eigen::Index k = 0; k < n; ++k) vals(k, static_cast<Eigen::Index>(i)) = amp * path[static_cast<std::size_t>(k)];
        }
        return VectorPath(grid_, std::move(vals));
    }

private:
    TimeGrid grid_;
    double hurst_;
    FgnSampler sampler_;
};

inline VectorPath generate_fbm_hilbert(const TimeGrid& grid, HurstParameter hurst, const CovarianceSpec& q,
                                       std::uint64_t seed) {
    return FbmGenerator(grid, hurst).hilbert(q, seed);
}

/// theta_t omega(.) = omega(t + .) - omega(t). All nodes are kept; the grid is relabelled so
/// that the old node t becomes the origin.
inline VectorPath wiener_shift(const VectorPath& path, double t) {
    auto k = path.grid().node_index(t);
    if (!k) throw DomainError("wiener_shift: shift must be a grid node inside the sampled window");
    if (*k + 1 >= path.size()) throw DomainError("wiener_shift: shifted window is exhausted");
    const TimeGrid& g = path.grid();
    double t_node = g.time(*k);
    RowMatrix v = path.values().rowwise() - path.values().row(static_cast<Eigen::Index>(*k));
    v.row(static_cast<Eigen::Index>(*k)).setZero();
    return VectorPath(TimeGrid(g.t0() - t_node, g.step(), g.size()), std::move(v));
}

inline ScalarPath wiener_shift(const ScalarPath& path, double t) {
    auto shifted = wiener_shift(VectorPath::from_scalar(path), t);
    std::vector<double> v(path.values.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = shifted.values()(static_cast<Eigen::Index>(k), 0);
    return ScalarPath(shifted.grid(), std::move(v));
}

}  // namespace fbmstab
