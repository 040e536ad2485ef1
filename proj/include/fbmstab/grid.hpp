#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fbmstab/errors.hpp"

namespace fbmstab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Uniform time grid: node k sits at t0 + k*h.
class TimeGrid {
public:
    TimeGrid(double t0, double h, std::size_t n_nodes) : t0_(t0), h_(h), n_(n_nodes) {
        if (!(h > 0.0) || !std::isfinite(h)) throw InvalidParameter("TimeGrid: step must be positive");
        if (n_nodes < 2) throw InvalidParameter("TimeGrid: need at least two nodes");
    }

    /// Grid with step h covering [a, b] (b rounded up to the next node).
    static TimeGrid covering(double a, double b, double h) {
        if (!(b > a)) throw InvalidParameter("TimeGrid::covering: empty interval");
        auto cells = static_cast<std::size_t>(std::ceil((b - a) / h - 1e-9));
        return TimeGrid(a, h, cells + 1);
    }

    double t0() const noexcept { return t0_; }
    double step() const noexcept { return h_; }
    std::size_t size() const noexcept { return n_; }
    double time(std::size_t k) const noexcept { return t0_ + static_cast<double>(k) * h_; }
    double front() const noexcept { return t0_; }
    double back() const noexcept { return time(n_ - 1); }

    /// Tolerance below which a time is identified with a grid node.
    double snap_tol() const noexcept { return 1e-9 * h_; }

    bool contains(double t) const noexcept {
        return t >= front() - snap_tol() && t <= back() + snap_tol();
    }

    /// Node index of t if t is a node (up to snap_tol).
    std::optional<std::size_t> node_index(double t) const noexcept {
        double x = (t - t0_) / h_;
        double r = std::round(x);
        if (std::abs(x - r) * h_ > snap_tol() || r < 0.0 || r > static_cast<double>(n_ - 1)) return std::nullopt;
        return static_cast<std::size_t>(r);
    }

    /// Cell containing t and the fractional position inside it; nodes map to (k, 0) except the last.
    std::pair<std::size_t, double> locate(double t) const {
        if (!contains(t)) throw DomainError("TimeGrid::locate: time outside grid");
        if (auto k = node_index(t)) {
            if (*k == n_ - 1) return {n_ - 2, 1.0};
            return {*k, 0.0};
        }
        double x = (t - t0_) / h_;
        auto k = static_cast<std::size_t>(std::floor(x));
        if (k >= n_ - 1) k = n_ - 2;
        return {k, x - static_cast<double>(k)};
    }

    /// First node strictly greater than t (beyond snap tolerance); n if none.
    std::size_t first_node_after(double t) const noexcept {
        double x = (t - t0_) / h_;
        double k = std::floor(x + 1e-9) + 1.0;
        if (k < 0.0) return 0;
        return k > static_cast<double>(n_) ? n_ : static_cast<std::size_t>(k);
    }

    bool operator==(const TimeGrid& o) const noexcept {
        return n_ == o.n_ && std::abs(h_ - o.h_) <= 1e-15 * h_ && std::abs(t0_ - o.t0_) <= snap_tol();
    }

private:
    double t0_;
    double h_;
    std::size_t n_;
};

/// Real-valued sample path on a grid.
struct ScalarPath {
    TimeGrid grid;
    std::vector<double> values;

    ScalarPath(TimeGrid g, std::vector<double> v) : grid(g), values(std::move(v)) {
        if (values.size() != grid.size()) throw InvalidParameter("ScalarPath: values/grid size mismatch");
    }
};

/// Path of K-dimensional coefficient vectors (eigenbasis coordinates), one row per node.
class VectorPath {
public:
    VectorPath(TimeGrid g, RowMatrix values) : grid_(g), values_(std::move(values)) {
        if (static_cast<std::size_t>(values_.rows()) != grid_.size())
            throw InvalidParameter("VectorPath: values/grid size mismatch");
        if (values_.cols() < 1) throw InvalidParameter("VectorPath: dimension must be >= 1");
    }

    static VectorPath zeros(TimeGrid g, std::size_t dim) {
        return VectorPath(g, RowMatrix::Zero(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(dim)));
    }

    static VectorPath from_scalar(const ScalarPath& p) {
        RowMatrix m(static_cast<Eigen::Index>(p.values.size()), 1);
        for (std::size_t k = 0; k < p.values.size(); ++k) m(static_cast<Eigen::Index>(k), 0) = p.values[k];
        return VectorPath(p.grid, std::move(m));
    }

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(values_.cols()); }
    std::size_t size() const noexcept { return grid_.size(); }
    const RowMatrix& values() const noexcept { return values_; }
    RowMatrix& values() noexcept { return values_; }

    auto node(std::size_t k) const { return values_.row(static_cast<Eigen::Index>(k)); }

    /// Linear interpolation between neighbouring nodes.
    Vector at(double t) const {
        auto [k, theta] = grid_.locate(t);
        auto kk = static_cast<Eigen::Index>(k);
        if (theta == 0.0) return values_.row(kk).transpose();
        return ((1.0 - theta) * values_.row(kk) + theta * values_.row(kk + 1)).transpose();
    }

private:
    TimeGrid grid_;
    RowMatrix values_;
};

/// Path of K x K matrices; row k stores the matrix at node k flattened row-major,
/// so column j*K + i holds (e_j, g(t) e_i).
class OperatorPath {
public:
    OperatorPath(TimeGrid g, std::size_t dim, RowMatrix values) : grid_(g), dim_(dim), values_(std::move(values)) {
        if (static_cast<std::size_t>(values_.rows()) != grid_.size() ||
            static_cast<std::size_t>(values_.cols()) != dim * dim)
            throw InvalidParameter("OperatorPath: shape mismatch");
    }

    /// Builds node values from a callable (node index) -> K x K matrix.
    template <class Fn>
    static OperatorPath generate(TimeGrid g, std::size_t dim, Fn&& fn) {
        RowMatrix v(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(dim * dim));
        for (std::size_t k = 0; k < g.size(); ++k) {
            Matrix m = fn(k);
            for (std::size_t j = 0; j < dim; ++j)
                for (std::size_t i = 0; i < dim; ++i)
                    v(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j * dim + i)) =
                        m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
        }
        return OperatorPath(g, dim, std::move(v));
    }

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t dim() const noexcept { return dim_; }
    const RowMatrix& values() const noexcept { return values_; }

    Matrix at_node(std::size_t k) const {
        Matrix m(static_cast<Eigen::Index>(dim_), static_cast<Eigen::Index>(dim_));
        for (std::size_t j = 0; j < dim_; ++j)
            for (std::size_t i = 0; i < dim_; ++i)
                m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) =
                    values_(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j * dim_ + i));
        return m;
    }

    /// Same node values on the grid relabelled so that old time t becomes t - tau.
    OperatorPath relabelled(double tau) const {
        return OperatorPath(TimeGrid(grid_.t0() - tau, grid_.step(), grid_.size()), dim_, values_);
    }

private:
    TimeGrid grid_;
    std::size_t dim_;
    RowMatrix values_;
};

/// Eigenvalues of the covariance operator Q in the eigenbasis of A.
class CovarianceSpec {
public:
    explicit CovarianceSpec(std::vector<double> q) : q_(std::move(q)) {
        if (q_.empty()) throw InvalidParameter("CovarianceSpec: need at least one mode");
        for (double v : q_)
            if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidParameter("CovarianceSpec: eigenvalues must be >= 0");
    }

    /// K equal eigenvalues summing to trace.
    static CovarianceSpec uniform(std::size_t k, double trace) {
        return CovarianceSpec(std::vector<double>(k, trace / static_cast<double>(k)));
    }

    std::size_t dim() const noexcept { return q_.size(); }
    const std::vector<double>& eigenvalues() const noexcept { return q_; }
    double trace() const noexcept {
        double s = 0.0;
        for (double v : q_) s += v;
        return s;
    }
    CovarianceSpec scaled(double factor) const {
        auto q = q_;
        for (double& v : q) v *= factor;
        return CovarianceSpec(std::move(q));
    }

private:
    std::vector<double> q_;
};

/// Hurst index; generation accepts (0, 1), integration needs (1/2, 1).
class HurstParameter {
public:
    explicit HurstParameter(double h) : h_(h) {
        if (!(h > 0.0 && h < 1.0)) throw InvalidParameter("Hurst parameter must lie in (0, 1)");
    }
    double value() const noexcept { return h_; }
    void require_young() const {
        if (!(h_ > 0.5)) throw InvalidParameter("Hurst parameter must exceed 1/2 for Young integration");
    }

private:
    double h_;
};

}  // namespace fbmstab
