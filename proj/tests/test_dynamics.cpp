#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "fbmstab/dynamics.hpp"

using namespace fbmstab;

namespace {

VectorPath noise(std::size_t cells, double h, std::uint64_t seed, std::size_t dim, double tr = 1.0) {
    return generate_fbm_hilbert(TimeGrid(0.0, h, cells + 1), HurstParameter(0.75), CovarianceSpec::uniform(dim, tr),
                                seed);
}

/// Every other node of a path: the same realisation on the grid with twice the step.
VectorPath coarsen(const VectorPath& p) {
    std::size_t n = (p.size() - 1) / 2 + 1;
    RowMatrix v(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p.dim()));
    for (std::size_t k = 0; k < n; ++k) v.row(static_cast<Eigen::Index>(k)) = p.node(2 * k);
    return VectorPath(TimeGrid(p.grid().front(), 2.0 * p.grid().step(), n), std::move(v));
}

double sup_distance(const VectorPath& a, const VectorPath& b) {
    return (a.values() - b.values()).rowwise().norm().maxCoeff();
}

Vector test_u0(std::size_t k) { return Vector::LinSpaced(static_cast<Eigen::Index>(k), 1.0, -0.5); }

SolveConfig scheme(Scheme s) {
    SolveConfig c;
    c.scheme = s;
    return c;
}

}  // namespace

TEST(Nonlinearity, BuiltInsPassSpotCheck) {
    EXPECT_NO_THROW(NonlinearitySpec::sine(2.0, 1.0).spot_check(8));
    EXPECT_NO_THROW(NonlinearitySpec::linear({1.0, -3.0}).spot_check(2));
    auto bad = NonlinearitySpec::sine(2.0, 1.0);
    bad.c_DF = 0.5;
    EXPECT_THROW(bad.spot_check(8), InvalidParameter);
    auto shifted = NonlinearitySpec::sine(1.0, 1.0);
    shifted.F = [](const Vector& u) -> Vector { return u.array().cos().matrix(); };
    EXPECT_THROW(shifted.spot_check(3), InvalidParameter);
    EXPECT_THROW(NonlinearitySpec::sine(-1.0, 0.0), InvalidParameter);
}

TEST(SolveMild, ZeroNonlinearityIsFreeSemigroup) {
    auto op = SpectralOperator::dirichlet_laplacian_1d(4, 5.0);
    auto w = noise(256, 1.0 / 256, 1, 4);
    Vector u0 = test_u0(4);
    auto expected = semigroup_path(op, u0, w.grid());
    for (Scheme s : {Scheme::exp_euler, Scheme::picard}) {
        auto u = solve_mild(u0, op, NonlinearitySpec::zero(), w, scheme(s));
        EXPECT_LT(sup_distance(u, expected), 1e-13 * u0.norm());
    }
}

TEST(SolveMild, TrivialSolutionPreserved) {
    auto op = SpectralOperator::dirichlet_laplacian_1d(8, 12.0, 2.0);
    auto w = noise(2048, 1.0 / 256, 2, 8, 0.01);
    for (Scheme s : {Scheme::exp_euler, Scheme::picard}) {
        auto u = solve_mild(Vector::Zero(8), op, NonlinearitySpec::sine(2.0, 1.0), w, scheme(s));
        EXPECT_EQ(u.values().cwiseAbs().maxCoeff(), 0.0);
    }
}

TEST(SolveMild, LinearDriftClosedForm) {
    // Single mode: u(t) = e^{(kappa - lambda_1) t} u0.
    auto op = SpectralOperator::dirichlet_laplacian_1d(1, 1.0);
    const double kappa = 2.0;
    const double exact = 0.7 * std::exp(kappa - std::numbers::pi * std::numbers::pi);
    auto w = noise(1000, 1e-3, 3, 1);
    Vector u0 = Vector::Constant(1, 0.7);
    auto pic = solve_mild(u0, op, NonlinearitySpec::linear({kappa}), w, scheme(Scheme::picard));
    EXPECT_NEAR(pic.node(1000)(0), exact, 1e-4 * exact);
    auto eul = solve_mild(u0, op, NonlinearitySpec::linear({kappa}), w, scheme(Scheme::exp_euler));
    EXPECT_NEAR(eul.node(1000)(0), exact, 1e-2 * exact);
}

TEST(SolveMild, PicardIsFixedPointOfItsMap) {
    auto op = SpectralOperator::dirichlet_laplacian_1d(4, 12.0, 2.0);
    auto w = noise(512, 1.0 / 128, 4, 4, 0.5);
    auto cfg = scheme(Scheme::picard);
    cfg.picard_tol = 1e-12;
    auto a = solve_mild(test_u0(4), op, NonlinearitySpec::sine(2.0, 1.0), w, cfg);
    cfg.picard_tol = 1e-9;
    auto b = solve_mild(test_u0(4), op, NonlinearitySpec::sine(2.0, 1.0), w, cfg);
    EXPECT_LT(sup_distance(a, b), 1e-8);
    cfg.picard_max_iter = 1;
    cfg.picard_tol = 1e-300;
    EXPECT_THROW(solve_mild(test_u0(4), op, NonlinearitySpec::sine(2.0, 1.0), w, cfg), ConvergenceError);
}

TEST(SolveMild, SchemesAgreeAtRateBeta) {
    // sup|picard - exp_euler| <= C h^beta: C from h = 2^-7, checked at h = 2^-9 on the same paths.
    auto op = SpectralOperator::dirichlet_laplacian_1d(8, 12.0, 2.0);
    auto nl = NonlinearitySpec::sine(2.0, 1.0);
    const double beta = 0.55;
    double c_coarse = 0.0, c_fine = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto fine = noise(2048, 1.0 / 512, seed, 8, 0.01);
        auto coarse = coarsen(coarsen(fine));
        for (auto* w : {&coarse, &fine}) {
            auto e = solve_mild(test_u0(8), op, nl, *w, scheme(Scheme::exp_euler));
            auto p = solve_mild(test_u0(8), op, nl, *w, scheme(Scheme::picard));
            double& c = (w == &coarse) ? c_coarse : c_fine;
            c = std::max(c, sup_distance(e, p) / std::pow(w->grid().step(), beta));
        }
    }
    EXPECT_GT(c_coarse, 0.0);
    EXPECT_LE(c_fine, c_coarse);
}

TEST(SolveMild, LipschitzResponseStableUnderRefinement) {
    auto op = SpectralOperator::dirichlet_laplacian_1d(8, 12.0, 2.0);
    auto nl = NonlinearitySpec::sine(2.0, 1.0);
    Vector a = test_u0(8), b = a + 1e-3 * Vector::Ones(8);
    double c_coarse = 0.0, c_fine = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto fine = noise(512, 1.0 / 512, seed, 8, 0.01);
        auto coarse = coarsen(fine);
        for (auto* w : {&coarse, &fine}) {
            std::size_t last = w->size() - 1;
            double d = (solve_mild(a, op, nl, *w).node(last) - solve_mild(b, op, nl, *w).node(last)).norm() /
                       (a - b).norm();
            double& c = (w == &coarse) ? c_coarse : c_fine;
            c = std::max(c, d);
        }
    }
    EXPECT_LT(c_fine, 1.5 * c_coarse);
    EXPECT_LT(c_fine, 1.0);
}

TEST(SolveMild, Errors) {
    auto op = SpectralOperator::dirichlet_laplacian_1d(2, 5.0);
    auto w = noise(16, 1.0 / 16, 1, 2);
    auto nl = NonlinearitySpec::zero();
    EXPECT_THROW(solve_mild(Vector::Zero(3), op, nl, w), InvalidParameter);
    SolveConfig cfg;
    cfg.grid = TimeGrid(0.0, 1.0 / 32, 33);
    EXPECT_THROW(solve_mild(Vector::Zero(2), op, nl, w, cfg), InvalidParameter);
    cfg = {};
    cfg.picard_tol = 0.0;
    EXPECT_THROW(solve_mild(Vector::Zero(2), op, nl, w, cfg), InvalidParameter);
    auto blowup = NonlinearitySpec::zero();
    blowup.F = [](const Vector& u) -> Vector {
        return Vector::Constant(u.size(), std::numeric_limits<double>::quiet_NaN());
    };
    EXPECT_THROW(solve_mild(Vector::Ones(2), op, blowup, w), NumericalError);
}

TEST(MildResidual, TrivialCases) {
    auto op = SpectralOperator::dirichlet_laplacian_1d(4, 5.0);
    auto w = noise(128, 1.0 / 128, 5, 4);
    auto nl = NonlinearitySpec::sine(2.0, 1.0);
    EXPECT_EQ(mild_residual(VectorPath::zeros(w.grid(), 4), Vector::Zero(4), op, nl, w), 0.0);
    Vector u0 = test_u0(4);
    EXPECT_LT(mild_residual(semigroup_path(op, u0, w.grid()), u0, op, NonlinearitySpec::zero(), w), 1e-14);
}

TEST(MildResidual, ExpEulerWithinBoundAndHalvesUnderRefinement) {
    auto op = SpectralOperator::dirichlet_laplacian_1d(8, 12.0, 2.0);
    auto nl = NonlinearitySpec::sine(2.0, 1.0);
    Vector u0 = test_u0(8);
    double coarse_sum = 0.0, fine_sum = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto fine = noise(2048, 1.0 / 1024, seed, 8, 0.01);
        auto coarse = coarsen(fine);
        auto uc = solve_mild(u0, op, nl, coarse);
        auto uf = solve_mild(u0, op, nl, fine);
        double rc = mild_residual(uc, u0, op, nl, coarse);
        double rf = mild_residual(uf, u0, op, nl, fine);
        EXPECT_LE(rc, exp_euler_residual_bound(uc, nl));
        EXPECT_LE(rf, exp_euler_residual_bound(uf, nl));
        coarse_sum += rc;
        fine_sum += rf;
    }
    EXPECT_GE(coarse_sum / fine_sum, 1.5);
}

TEST(SplittingCheck, Examples) {
    auto op = SpectralOperator::dirichlet_laplacian_1d(4, 12.0, 2.0);
    auto w = noise(512, 1.0 / 128, 6, 4, 0.5);
    Vector u0 = test_u0(4);
    auto nl = NonlinearitySpec::sine(2.0, 1.0);
    auto u = solve_mild(u0, op, nl, w);
    EXPECT_EQ(splitting_check(u, {0.0}, op, nl, w), 0.0);
    auto free = solve_mild(u0, op, NonlinearitySpec::zero(), w);
    EXPECT_LT(splitting_check(free, {0.0, 0.5, 1.25, 3.0}, op, NonlinearitySpec::zero(), w), 1e-14);
    EXPECT_LT(splitting_check(u, {0.0, 0.3, 0.71, 1.9, 2.5, 3.99}, op, nl, w), 1e-12);
}
