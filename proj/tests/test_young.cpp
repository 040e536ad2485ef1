#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "fbmstab/fbm.hpp"
#include "fbmstab/young.hpp"

using namespace fbmstab;

namespace {

VectorPath fbm(std::size_t cells, double h, std::uint64_t seed, std::size_t dim) {
    return generate_fbm_hilbert(TimeGrid(0.0, h, cells + 1), HurstParameter(0.75), CovarianceSpec::uniform(dim, 1.0),
                                seed);
}

OperatorPath constant_path(const TimeGrid& g, const Matrix& m) {
    return OperatorPath::generate(g, static_cast<std::size_t>(m.rows()), [&](std::size_t) { return m; });
}

/// g(r) = diag(sin(omega_i(r))).
OperatorPath sine_of(const VectorPath& w) {
    return OperatorPath::generate(w.grid(), w.dim(), [&](std::size_t k) {
        Matrix m = Matrix::Zero(static_cast<Eigen::Index>(w.dim()), static_cast<Eigen::Index>(w.dim()));
        for (std::size_t i = 0; i < w.dim(); ++i) {
            auto ii = static_cast<Eigen::Index>(i);
            m(ii, ii) = std::sin(w.values()(static_cast<Eigen::Index>(k), ii));
        }
        return m;
    });
}

/// Dense coupling: g(r)_{ji} = cos(omega_j(r) + i) / (1 + j).
OperatorPath coupled_of(const VectorPath& w) {
    return OperatorPath::generate(w.grid(), w.dim(), [&](std::size_t k) {
        auto n = static_cast<Eigen::Index>(w.dim());
        Matrix m(n, n);
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i < n; ++i)
                m(j, i) = std::cos(w.values()(static_cast<Eigen::Index>(k), j) + static_cast<double>(i)) / (1.0 + j);
        return m;
    });
}

double rel(const Vector& a, const Vector& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

}  // namespace

TEST(YoungFracDeriv, ConstantIntegrandIsIncrement) {
    const auto chain = ExponentChain::standard();
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        auto w = fbm(128, 1.0 / 64, seed, 3);
        auto g = constant_path(w.grid(), 2.5 * Matrix::Identity(3, 3));
        Vector expected = 2.5 * (w.node(96) - w.node(16)).transpose();
        Vector got = young_integral_fracderiv(g, w, chain, 0.25, 1.5, 1e-13, 9);
        EXPECT_LT(rel(got, expected), 1e-12);
    }
}

TEST(YoungFracDeriv, EqualsTrapezoidSumForInterpolants) {
    const auto chain = ExponentChain::standard();
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto w = fbm(64, 1.0 / 64, seed, 2);
        auto g = coupled_of(w);
        Vector frac = young_integral_fracderiv(g, w, chain, 0.0, 1.0, 1e-10, 9);
        Vector trap = young_integral_trapezoid(g, w, 0.0, 1.0);
        EXPECT_LT((frac - trap).norm(), 1e-8 * (1.0 + trap.norm())) << "seed " << seed;
    }
}

TEST(YoungFracDeriv, SmoothDriverMatchesClassicalIntegral) {
    // omega(t) = t e_1: int_s^t g(r) e_1 dr with g_{j0}(r) = cos(r + j).
    const auto chain = ExponentChain::standard();
    TimeGrid grid(0.0, 1.0 / 1024, 1025);
    RowMatrix wv = RowMatrix::Zero(1025, 2);
    for (std::size_t k = 0; k < grid.size(); ++k) wv(static_cast<Eigen::Index>(k), 0) = grid.time(k);
    VectorPath w(grid, wv);
    auto g = OperatorPath::generate(grid, 2, [&](std::size_t k) {
        double r = grid.time(k);
        Matrix m(2, 2);
        m << std::cos(r), std::exp(r), std::cos(r + 1.0), r * r;
        return m;
    });
    double s = 0.125, t = 0.875;
    Vector exact(2);
    exact << std::sin(t) - std::sin(s), std::sin(t + 1.0) - std::sin(s + 1.0);
    Vector got = young_integral_fracderiv(g, w, chain, s, t, 1e-10, 8);
    EXPECT_LT(rel(got, exact), 1e-6);
}

TEST(YoungFracDeriv, AgreesWithLeftPointSumsAtYoungRate) {
    // |fracderiv - finest sums| <= C h^{beta + beta' - 1}; C from the coarse grid, checked on the fine one.
    const auto chain = ExponentChain::standard();
    const double rate = chain.beta + chain.beta_prime - 1.0;
    auto worst = [&](std::size_t n) {
        double c = 0.0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            double h = 1.0 / static_cast<double>(n);
            auto w = fbm(n, h, 100 + seed, 2);
            auto g = sine_of(w);
            Vector frac = young_integral_fracderiv(g, w, chain, 0.0, 1.0, 1e-9, 8);
            Vector sums = young_integral_sums(g, w, 0.0, 1.0, 3).value;
            c = std::max(c, (frac - sums).norm() / std::pow(h, rate));
        }
        return c;
    };
    double c_coarse = worst(64);
    double c_fine = worst(256);
    RecordProperty("C_calibrated", std::to_string(c_coarse));
    EXPECT_GT(c_coarse, 0.0);
    EXPECT_LE(c_fine, c_coarse);
}

TEST(YoungFracDeriv, Additivity) {
    const auto chain = ExponentChain::standard();
    auto w = fbm(96, 1.0 / 64, 7, 2);
    auto g = coupled_of(w);
    const double tol = 1e-9;
    Vector whole = young_integral_fracderiv(g, w, chain, 0.0, 1.5, tol, 9);
    Vector split = young_integral_fracderiv(g, w, chain, 0.0, 0.5, tol, 9) +
                   young_integral_fracderiv(g, w, chain, 0.5, 1.5, tol, 9);
    EXPECT_LT((whole - split).norm(), 2.0 * tol * (1.0 + whole.norm()));
}

TEST(YoungFracDeriv, Errors) {
    auto w = fbm(32, 1.0 / 32, 1, 2);
    auto g = sine_of(w);
    EXPECT_THROW(young_integral_fracderiv(g, w, ExponentChain{0.3, 0.55, 0.62, 0.7, 0.75}, 0.0, 1.0), InvalidParameter);
    EXPECT_THROW(young_integral_fracderiv(g, w, ExponentChain::standard(), 0.01, 1.0), DomainError);
    EXPECT_THROW(young_integral_fracderiv(g, w, ExponentChain::standard(), 0.5, 0.5), DomainError);
    auto other = fbm(32, 1.0 / 32, 1, 3);
    EXPECT_THROW(young_integral_fracderiv(g, other, ExponentChain::standard(), 0.0, 1.0), InvalidParameter);
}

TEST(YoungSums, IdentityGivesIncrementAtEveryLevel) {
    auto w = fbm(100, 0.01, 4, 3);
    auto g = constant_path(w.grid(), Matrix::Identity(3, 3));
    auto r = young_integral_sums(g, w, 0.1, 0.97, 4);
    Vector inc = (w.node(97) - w.node(10)).transpose();
    ASSERT_EQ(r.levels.size(), 4u);
    for (const auto& v : r.levels) EXPECT_LT((v - inc).norm(), 1e-14 * (1.0 + inc.norm()));
}

TEST(YoungSums, LinearDriverConstantDiagonal) {
    TimeGrid grid(0.0, 0.125, 17);
    RowMatrix wv(17, 2);
    for (Eigen::Index k = 0; k < 17; ++k) wv.row(k) << 0.125 * k, -0.375 * k;
    VectorPath w(grid, wv);
    Matrix d = Matrix::Zero(2, 2);
    d(0, 0) = 3.0;
    d(1, 1) = -0.5;
    auto r = young_integral_sums(constant_path(grid, d), w, 0.25, 1.75, 3);
    Vector expected = d * (w.node(14) - w.node(2)).transpose();
    for (const auto& v : r.levels) EXPECT_LT((v - expected).norm(), 1e-14);
    EXPECT_THROW(young_integral_sums(constant_path(grid, d), w, 0.25, 1.75, 1), DomainError);
}

TEST(YoungSums, CauchyDifferencesDecayAtYoungRate) {
    const auto chain = ExponentChain::standard();
    const double predicted = std::pow(2.0, -(chain.beta + chain.beta_prime - 1.0));
    const int levels = 5;
    std::vector<double> mean(levels - 1, 0.0);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto w = fbm(1024, 1.0 / 1024, seed, 1);
        auto r = young_integral_sums(sine_of(w), w, 0.0, 1.0, levels);
        ASSERT_EQ(r.cauchy.size(), static_cast<std::size_t>(levels - 1));
        for (int l = 0; l + 1 < levels; ++l) mean[l] += r.cauchy[l] / 100.0;
    }
    for (int l = 0; l + 2 < levels; ++l) {
        double ratio = mean[l] / mean[l + 1];
        EXPECT_LT(ratio, 1.0);
        EXPECT_GT(ratio, predicted / 2.0);
        EXPECT_LT(ratio, predicted * 2.0);
    }
}

TEST(YoungSums, Linearity) {
    auto w1 = fbm(64, 1.0 / 64, 1, 2);
    auto w2 = fbm(64, 1.0 / 64, 2, 2);
    auto g1 = coupled_of(w1);
    auto g2 = sine_of(w2);
    VectorPath wsum(w1.grid(), 2.0 * w1.values() - w2.values());
    OperatorPath gsum(w1.grid(), 2, 0.5 * g1.values() + 3.0 * g2.values());
    auto sum = [](const OperatorPath& g, const VectorPath& w, double a, double b) {
        return young_integral_sums(g, w, a, b, 2).value;
    };
    Vector lin_w = sum(g1, wsum, 0.0, 1.0) - (2.0 * sum(g1, w1, 0.0, 1.0) - sum(g1, w2, 0.0, 1.0));
    Vector lin_g = sum(gsum, w1, 0.0, 1.0) - (0.5 * sum(g1, w1, 0.0, 1.0) + 3.0 * sum(g2, w1, 0.0, 1.0));
    EXPECT_LT(lin_w.norm(), 1e-13);
    EXPECT_LT(lin_g.norm(), 1e-13);
    Vector add = sum(g1, w1, 0.0, 0.5) + sum(g1, w1, 0.5, 1.0) - sum(g1, w1, 0.0, 1.0);
    EXPECT_LT(add.norm(), 1e-13);
}

TEST(Convolution, ZeroIntegrand) {
    auto op = SpectralOperator::dirichlet_laplacian_1d(3, 5.0);
    auto w = fbm(64, 1.0 / 64, 3, 3);
    auto g = constant_path(w.grid(), Matrix::Zero(3, 3));
    EXPECT_EQ(convolution_young_integral(op, g, w, 1.0).norm(), 0.0);
}

TEST(Convolution, NegligibleSpectrumReducesToSums) {
    // Eigenvalues so small that e^{-lambda h} == 1 in double precision: S acts as the identity.
    SpectralOperator op({1e-300, 2e-300}, 1e-301);
    auto w = fbm(64, 1.0 / 64, 9, 2);
    auto g = coupled_of(w);
    Vector conv = convolution_young_integral(op, g, w, 0.75);
    Vector sums = young_integral_sums(g, w, 0.0, 0.75, 2).value;
    EXPECT_LT((conv - sums).norm(), 1e-14 * (1.0 + sums.norm()));
}

TEST(Convolution, SingleModeClosedForm) {
    const double lam1 = std::numbers::pi * std::numbers::pi;
    auto op = SpectralOperator::dirichlet_laplacian_1d(1, 1.0);
    const double exact = -std::expm1(-lam1) / lam1;
    auto run = [&](std::size_t n, bool cell_exact) {
        TimeGrid grid(0.0, 1.0 / static_cast<double>(n), n + 1);
        RowMatrix wv(static_cast<Eigen::Index>(n + 1), 1);
        for (std::size_t k = 0; k <= n; ++k) wv(static_cast<Eigen::Index>(k), 0) = grid.time(k);
        VectorPath w(grid, std::move(wv));
        return convolution_young_integral(op, constant_path(grid, Matrix::Identity(1, 1)), w, 1.0, 0.0, cell_exact)(0);
    };
    EXPECT_NEAR(run(std::size_t{1} << 20, false), exact, 1e-6);
    EXPECT_NEAR(run(64, true), exact, 1e-13);
}

TEST(Convolution, PathMatchesPointEvaluations) {
    auto op = SpectralOperator::dirichlet_laplacian_1d(2, 5.0);
    auto w = fbm(64, 1.0 / 64, 12, 2);
    auto g = coupled_of(w);
    auto path = convolution_young_path(op, g, w);
    for (std::size_t k : {1u, 17u, 64u})
        EXPECT_LT((path.node(k).transpose() - convolution_young_integral(op, g, w, w.grid().time(k))).norm(), 1e-14);
    EXPECT_THROW(convolution_young_integral(op, g, w, 0.501), DomainError);
}

TEST(ChangeOfVariable, Examples) {
    auto w = fbm(128, 1.0 / 64, 5, 3);
    auto g = coupled_of(w);
    EXPECT_EQ(change_of_variable_check(g, w, 0.25, 1.25, 0.0), 0.0);
    for (double tau : {0.25, 0.5, 1.0}) {
        double magnitude = young_integral_sums(g, w, tau, 2.0, 2).value.norm();
        EXPECT_LE(change_of_variable_check(g, w, tau, 2.0, tau), 1e-12 * (1.0 + magnitude));
    }
    auto c = constant_path(w.grid(), 0.7 * Matrix::Identity(3, 3));
    EXPECT_LE(change_of_variable_check(c, w, 0.5, 1.0, 0.5), 1e-15);
    EXPECT_THROW(change_of_variable_check(g, w, 0.25, 1.25, 0.013), DomainError);
}

TEST(ConvolutionBound, RatioIsFiniteAndPositive) {
    auto op = SpectralOperator::dirichlet_laplacian_1d(4, 12.0, 2.0);
    auto w = fbm(256, 1.0 / 256, 3, 4);
    auto g = sine_of(w);
    double r = convolution_bound_ratio(op, g, w, w, ExponentChain::standard(), damped_semigroup_constant(op, 0.55),
                                       1.0, 1.0);
    EXPECT_TRUE(std::isfinite(r));
    EXPECT_GT(r, 0.0);
}
