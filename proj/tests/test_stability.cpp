#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fbmstab/stability.hpp"

using namespace fbmstab;

namespace {

VectorPath path_of(const TimeGrid& g, auto&& norm_at) {
    RowMatrix v = RowMatrix::Zero(static_cast<Eigen::Index>(g.size()), 2);
    for (std::size_t k = 0; k < g.size(); ++k) v(static_cast<Eigen::Index>(k), 0) = norm_at(g.time(k));
    return VectorPath(g, std::move(v));
}

}  // namespace

TEST(RhoStar, Examples) {
    EXPECT_DOUBLE_EQ(rho_star({3.0, 1.7, 0.0, 0.1, 0.05}), 3.0);
    EXPECT_NEAR(rho_star({2.0, 1.0, 0.5, 0.1, 0.1}), 2.0 - 0.05 / (0.95 * 0.1) * std::exp(0.2), 1e-15);
    EXPECT_NEAR(rho_star({2.0, 1.0, 0.5, 0.1, 0.1}), 1.35716, 1e-5);
    // Deterministic limit D = mu.
    double lam = 12.0, c = 1.695 * 2.0, mu = 0.02;
    EXPECT_NEAR(rho_star({lam, 1.695, 2.0, mu, mu}), lam - c * std::exp(lam * mu) / (1.0 - c * mu), 1e-12);
    EXPECT_THROW(rho_star({2.0, 1.0, 10.0, 0.1, 0.1}), InvalidParameter);
    EXPECT_THROW(rho_star({2.0, 1.0, 0.5, 0.1, 0.2}), InvalidParameter);
    EXPECT_THROW(rho_star({2.0, 1.0, 0.5, 0.1, 0.0}), InvalidParameter);
}

TEST(RhoStar, DeterministicLimitPositiveIffLambdaExceedsCsCdf) {
    for (double lam : {1.0, 3.0, 5.0}) {
        double c = 3.0;  // c_S c_DF
        double best = -std::numeric_limits<double>::infinity();
        for (double mu = 1e-6; mu < 1.0 / c; mu *= 1.5) best = std::max(best, rho_star({lam, 1.0, c, mu, mu}));
        EXPECT_EQ(best > 0.0, lam > c) << "lambda " << lam;
    }
}

TEST(RhoStar, MonotoneInEachArgument) {
    const double eps = 1e-6;
    for (double lam : {4.0, 8.0, 12.0})
        for (double mu : {0.01, 0.02, 0.05})
            for (double dfrac : {0.3, 0.7, 1.0}) {
                RateInputs base{lam, 1.7, 2.0, mu, dfrac * mu};
                double r = rho_star(base);
                auto bumped = base;
                bumped.c_DF += eps;
                EXPECT_LT(rho_star(bumped), r);
                bumped = base;
                bumped.mu += eps;
                EXPECT_LT(rho_star(bumped), r);
                if (dfrac < 1.0) {
                    bumped = base;
                    bumped.D += eps;
                    EXPECT_GT(rho_star(bumped), r);
                }
                // d rho / d lambda = 1 - mu (lambda - rho) is positive whenever rho > 0.
                if (r > 0.0) {
                    bumped = base;
                    bumped.lambda += eps;
                    EXPECT_GT(rho_star(bumped), r);
                }
            }
}

TEST(Gronwall, Examples) {
    EXPECT_DOUBLE_EQ(discrete_gronwall_bound(2.5, {0.0, 0.0, 0.0}, 3), 2.5);
    EXPECT_DOUBLE_EQ(discrete_gronwall_bound(1.0, {1.0, 1.0, 1.0, 1.0, 1.0}, 5), 32.0);
    EXPECT_EQ(discrete_gronwall_bound(4.0, {3.0}, 0), 4.0);
    EXPECT_THROW(discrete_gronwall_bound(-1.0, {0.0}, 1), DomainError);
    EXPECT_THROW(discrete_gronwall_bound(1.0, {-0.1}, 1), DomainError);
    EXPECT_THROW(discrete_gronwall_bound(1.0, {0.1}, 2), DomainError);
}

TEST(Gronwall, DominatesBruteForceRecursion) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> uc(0.0, 5.0), ug(0.0, 2.0);
    std::uniform_int_distribution<int> un(1, 50);
    for (int inst = 0; inst < 1000; ++inst) {
        double c = uc(rng);
        std::size_t n = static_cast<std::size_t>(un(rng));
        std::vector<double> g(n);
        for (auto& x : g) x = ug(rng);
        // y_0 = c, y_m = c + sum_{j<m} g_j y_j, in extended precision.
        std::vector<long double> y{c};
        for (std::size_t m = 1; m <= n; ++m) {
            long double acc = c;
            for (std::size_t j = 0; j < m; ++j) acc += static_cast<long double>(g[j]) * y[j];
            y.push_back(acc);
        }
        for (std::size_t m = 0; m <= n; ++m)
            ASSERT_GE(static_cast<long double>(discrete_gronwall_bound(c, g, m)), y[m]) << "instance " << inst;
    }
}

TEST(DecayFit, SyntheticPaths) {
    TimeGrid g(0.0, 0.01, 401);
    auto f = fit_decay_rate(path_of(g, [](double t) { return std::exp(-2.0 * t); }), 0.0, 4.0);
    EXPECT_NEAR(f.rho, 2.0, 1e-12);
    EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
    EXPECT_NEAR(fit_decay_rate(path_of(g, [](double) { return 3.0; }), 0.0, 4.0).rho, 0.0, 1e-14);
    TimeGrid long_grid(0.0, 0.01, 3001);
    auto wobble = fit_decay_rate(path_of(long_grid, [](double t) { return std::exp(-1.5 * t) * (1.0 + 0.1 * std::sin(t)); }),
                                 0.0, 30.0);
    EXPECT_NEAR(wobble.rho, 1.5, 0.02 * 1.5);
}

TEST(DecayFit, FreeSemigroupDecaysAtFirstEigenvalue) {
    auto op = SpectralOperator::dirichlet_laplacian_1d(4, 5.0);
    TimeGrid g(0.0, 1.0 / 256, 513);
    auto u = semigroup_path(op, Vector::Unit(4, 0), g);
    EXPECT_NEAR(fit_decay_rate(u, 0.0, 2.0).rho, std::numbers::pi * std::numbers::pi,
                0.01 * std::numbers::pi * std::numbers::pi);
}

TEST(DecayFit, TruncationAndErrors) {
    TimeGrid g(0.0, 0.1, 41);
    auto p = path_of(g, [](double t) { return t < 1.95 ? std::exp(-t) : 0.0; });
    auto f = fit_decay_rate(p, 0.0, 4.0);
    EXPECT_EQ(f.truncated, 21u);
    EXPECT_EQ(f.used, 20u);
    EXPECT_NEAR(f.rho, 1.0, 1e-12);
    EXPECT_THROW(fit_decay_rate(p, 2.0, 4.0), FitError);
    EXPECT_THROW(fit_decay_rate(p, 0.0, 0.5), FitError);
}

TEST(VerifyStability, TrivialEnsembles) {
    auto op = SpectralOperator::dirichlet_laplacian_1d(4, 5.0);
    StabilityEnsemble ens;
    ens.Q = CovarianceSpec::uniform(4, 0.01);
    ens.h = 1.0 / 256;
    ens.horizon = 2.0;
    ens.n_seeds = 4;
    auto free = verify_exponential_stability(op, NonlinearitySpec::zero(), ens, 2.5);
    EXPECT_DOUBLE_EQ(free.seed_pass_fraction, 1.0);
    EXPECT_DOUBLE_EQ(free.run_pass_fraction, 1.0);
    for (const auto& r : free.runs) EXPECT_NEAR(r.fitted_rate, std::numbers::pi * std::numbers::pi, 0.2);
    ens.radius = 0.0;
    auto zero = verify_exponential_stability(op, NonlinearitySpec::sine(2.0, 1.0), ens, 2.5);
    EXPECT_DOUBLE_EQ(zero.seed_pass_fraction, 1.0);
    for (const auto& r : zero.runs) EXPECT_EQ(r.C_omega, 0.0);
    ens.n_seeds = 0;
    EXPECT_THROW(verify_exponential_stability(op, NonlinearitySpec::zero(), ens, 1.0), InvalidParameter);
}

TEST(VerifyStability, RateAboveDecayFails) {
    auto op = SpectralOperator::dirichlet_laplacian_1d(2, 5.0);
    StabilityEnsemble ens;
    ens.Q = CovarianceSpec::uniform(2, 0.0);
    ens.h = 1.0 / 256;
    ens.horizon = 2.0;
    ens.n_seeds = 2;
    ens.n_initial = 2;
    auto rep = verify_exponential_stability(op, NonlinearitySpec::zero(), ens, 15.0);
    EXPECT_DOUBLE_EQ(rep.run_pass_fraction, 0.0);
}

TEST(SufficientCondition, DeterministicCriterionOnGrid) {
    const double cs = 1.695;
    std::size_t checked = 0;
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j) {
            double lam = 1.0 + 2.0 * i;
            double cdf = 0.5 + 1.2 * j;
            double c = cs * cdf;
            if (std::abs(lam - c) < 0.05 * c) continue;
            auto r = sufficient_condition_K(lam, cs, cdf, 0.0, 0.5);
            EXPECT_EQ(r.satisfied, lam > c) << lam << " " << cdf;
            ++checked;
        }
    EXPECT_GT(checked, 80u);
}

TEST(SufficientCondition, InteriorMinimumAndStationarity) {
    const double cs = 1.695, cdf = 2.0, q = 0.5;
    const double c = cs * cdf;
    for (double p : {1e-4, 1e-2, 0.1, 1.0}) {
        auto r = sufficient_condition_K(12.0, cs, cdf, p, q);
        EXPECT_GT(r.mu_opt, 0.0);
        EXPECT_LT(r.mu_opt, 1.0 / c);
        EXPECT_LE(r.stationarity_residual, 1e-6);
        EXPECT_GT(sufficient_K(r.mu_opt * 1e-3, 12.0, c, p, q), r.K_min);
        EXPECT_GT(sufficient_K((1.0 / c) * (1.0 - 1e-6), 12.0, c, p, q), r.K_min);
        EXPECT_GT(sufficient_K(r.mu_opt * 1.01, 12.0, c, p, q), r.K_min);
        EXPECT_GT(sufficient_K(r.mu_opt * 0.99, 12.0, c, p, q), r.K_min);
        EXPECT_EQ(r.satisfied, 12.0 > r.K_min);
    }
    EXPECT_THROW(sufficient_condition_K(12.0, cs, cdf, -1.0, q), InvalidParameter);
    EXPECT_THROW(sufficient_condition_K(12.0, cs, cdf, 0.1, 1.5), InvalidParameter);
}

TEST(PCoefficients, Examples) {
    auto zero = compute_p_coefficients(0.0, 0.7, 1.0, 1.0, 2.0, 3.0, 4.0);
    EXPECT_EQ(zero.p1, 0.0);
    EXPECT_EQ(zero.p2, 0.0);
    auto a = compute_p_coefficients(0.01, 0.7, 1.0, 1.0, 2.0, 3.0, 4.0);
    auto b = compute_p_coefficients(0.01, 0.7, 1.0, 2.0, 2.0, 3.0, 4.0);
    EXPECT_NEAR(b.p1, 2.0 * a.p1, 1e-15);
    EXPECT_NEAR(b.p2, 4.0 * a.p2, 1e-15);
    EXPECT_DOUBLE_EQ(a.p(), a.p1 + a.p2);
    EXPECT_THROW(compute_p_coefficients(0.01, 0.7, 1.0, 1.0, 0.0, 3.0, 4.0), InvalidParameter);
}

TEST(PCoefficients, SmallNoiseRecoversDeterministicCriterion) {
    const double cs = 1.695, H = 0.75, bdd = 0.7;
    const double q = 2.0 * (1.0 - H);
    CovarianceSpec unit = CovarianceSpec::uniform(8, 1.0);
    double C1 = estimate_moment_constant(H, bdd, 1, 0.02, unit, 1000, 1, 64).value;
    double C2 = estimate_moment_constant(H, bdd, 2, 0.02, unit, 1000, 1, 64).value;
    for (double cdf : {2.0, 20.0}) {
        double lam = 12.0;
        auto p = compute_p_coefficients(1e-12, bdd, 1.0, 1.0, cdf, C1, C2);
        auto r = sufficient_condition_K(lam, cs, cdf, p.p(), q);
        EXPECT_EQ(r.satisfied, lam > cs * cdf);
    }
}

TEST(MomentConstant, PositiveAndScaleInvariant) {
    const double H = 0.75, bdd = 0.7;
    CovarianceSpec q1 = CovarianceSpec::uniform(4, 0.01);
    auto base = estimate_moment_constant(H, bdd, 2, 0.02, q1, 1000, 1, 64);
    EXPECT_GT(base.value, 0.0);
    auto half = estimate_moment_constant(H, bdd, 2, 0.01, q1, 1000, 1, 64);
    EXPECT_LE(std::abs(half.value - base.value), 2.0 * std::hypot(half.se, base.se));
    auto wide = estimate_moment_constant(H, bdd, 2, 0.02, q1.scaled(4.0), 1000, 1, 64);
    EXPECT_LE(std::abs(wide.value - base.value), 2.0 * std::hypot(wide.se, base.se));
    EXPECT_THROW(estimate_moment_constant(H, bdd, 2, 0.02, CovarianceSpec::uniform(4, 0.0), 1000), InvalidParameter);
}

TEST(GronwallChain, FreeSemigroupWithinBounds) {
    auto op = SpectralOperator::dirichlet_laplacian_1d(8, 12.0, 2.0);
    const double cs = damped_semigroup_constant(op, 0.55);
    TimeGrid g(0.0, 1.0 / 1024, 2049);
    Vector u0 = Vector::Ones(8) / std::sqrt(8.0);
    auto u = semigroup_path(op, u0, g);
    std::vector<double> times;
    for (int n = 0; n <= 100; ++n) times.push_back(0.02 * n);
    auto rep = gronwall_chain_check(u, times, 12.0, cs, 2.0, 0.02, 5.0, 0.55);
    ASSERT_GT(rep.pieces, 90u);
    EXPECT_GT(rep.min_product_margin, 0.0);
    for (std::size_t n = 0; n < rep.pieces; ++n)
        EXPECT_LE(rep.norms[n], cs * std::exp(-12.0 * times[n]) * u0.norm() * (1.0 + 1e-9));
    EXPECT_EQ(rep.n0, 0u);
    auto zero = gronwall_chain_check(VectorPath::zeros(g, 8), times, 12.0, cs, 2.0, 0.02, 5.0, 0.55);
    for (double v : zero.norms) EXPECT_EQ(v, 0.0);
    EXPECT_THROW(gronwall_chain_check(u, times, 12.0, cs, 40.0, 0.02, 5.0, 0.55), InvalidParameter);
}
