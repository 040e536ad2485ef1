#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fbmstab/semigroup.hpp"

using namespace fbmstab;

TEST(SpectralOperator, Validation) {
    EXPECT_THROW(SpectralOperator({1.0, 0.5}, 0.1), InvalidParameter);
    EXPECT_THROW(SpectralOperator({1.0, 2.0}, 1.0), InvalidParameter);
    EXPECT_THROW(SpectralOperator({-1.0}, 0.1), InvalidParameter);
    auto op = SpectralOperator::dirichlet_laplacian_1d(3, 5.0);
    EXPECT_NEAR(op.eigenvalue(0), std::numbers::pi * std::numbers::pi, 1e-12);
    EXPECT_NEAR(op.eigenvalue(2), 9.0 * std::numbers::pi * std::numbers::pi, 1e-12);
    EXPECT_NEAR(SpectralOperator::dirichlet_laplacian_1d(1, 12.0, 2.0).eigenvalue(0),
                2.0 * std::numbers::pi * std::numbers::pi, 1e-12);
}

TEST(Semigroup, Action) {
    auto op = SpectralOperator::dirichlet_laplacian_1d(4, 5.0);
    Vector x = Vector::LinSpaced(4, 1.0, 4.0);
    EXPECT_EQ(apply_semigroup(op, 0.0, x), x);
    Vector e1 = Vector::Unit(4, 0);
    EXPECT_NEAR(apply_semigroup(op, 0.1, e1)(0), std::exp(-0.1 * std::numbers::pi * std::numbers::pi), 1e-15);
    EXPECT_NEAR(apply_semigroup(op, 0.1, e1)(0), 0.37271, 1e-5);
    Vector a = apply_semigroup(op, 0.03, apply_semigroup(op, 0.05, x));
    EXPECT_LT((a - apply_semigroup(op, 0.08, x)).norm(), 1e-15 * x.norm());
    EXPECT_THROW(apply_semigroup(op, -0.1, x), DomainError);
    EXPECT_LE(apply_semigroup(op, 0.2, x).norm(), std::exp(-op.eigenvalue(0) * 0.2) * x.norm() + 1e-15);
}

TEST(Semigroup, FractionalPowers) {
    auto op = SpectralOperator::dirichlet_laplacian_1d(4, 5.0);
    Vector x = Vector::LinSpaced(4, -1.0, 2.0);
    EXPECT_EQ(apply_frac_power(op, 0.0, x), x);
    Vector e1 = Vector::Unit(4, 0);
    EXPECT_NEAR(apply_frac_power(op, 1.0, e1)(0), op.eigenvalue(0), 1e-12);
    Vector twice = apply_frac_power(op, 0.5, apply_frac_power(op, 0.5, x));
    EXPECT_LT((twice - apply_frac_power(op, 1.0, x)).norm(), 1e-12 * twice.norm());
    // ||x||_{V_zeta} <= lambda_1^{zeta - gamma} ||x||_{V_gamma}
    double zeta = 0.2, gamma = 0.7;
    EXPECT_LE(apply_frac_power(op, zeta, x).norm(),
              std::pow(op.eigenvalue(0), zeta - gamma) * apply_frac_power(op, gamma, x).norm() * (1 + 1e-14));
    EXPECT_THROW(apply_frac_power(op, -0.5, x), DomainError);
}

TEST(EstimateCS, Examples) {
    auto op = SpectralOperator::dirichlet_laplacian_1d(8, 12.0, 2.0);
    EXPECT_DOUBLE_EQ(estimate_cS(op, 0.3, 0.3), 1.0);
    SpectralOperator single({10.0}, 5.0);
    EXPECT_NEAR(estimate_cS(single, 1.0, 0.0), 2.0 / std::exp(1.0), 1e-12);
    EXPECT_THROW(estimate_cS(op, 0.1, 0.2), DomainError);
}

TEST(EstimateCS, MonotoneInLambda) {
    auto base = SpectralOperator::dirichlet_laplacian_1d(8, 15.0, 2.0);
    double prev = estimate_cS(base, 0.55, 0.0, 5.0);
    for (double lam : {12.0, 8.0, 4.0, 1.0, 0.1}) {
        double cur = estimate_cS(base.with_lambda(lam), 0.55, 0.0, 5.0);
        EXPECT_LE(cur, prev * (1 + 1e-12));
        prev = cur;
    }
}

TEST(EstimateCS, BuiltInExampleConstant) {
    auto op = SpectralOperator::dirichlet_laplacian_1d(8, 12.0, 2.0);
    double cs = damped_semigroup_constant(op, 0.55);
    EXPECT_NEAR(cs, 1.695, 0.01);
}

TEST(SemigroupEstimates, ObservedConstantsAreFiniteAndStable) {
    auto op = SpectralOperator::dirichlet_laplacian_1d(8, 12.0, 2.0);
    SemigroupExponents ex;
    auto a = check_holder_semigroup_estimates(op, ex, 2000, 2.0, 1);
    auto b = check_holder_semigroup_estimates(op, ex, 20000, 2.0, 2);
    for (double c : {a.c_identity_difference, a.c_increment, a.c_double_increment}) {
        EXPECT_TRUE(std::isfinite(c));
        EXPECT_GT(c, 0.0);
    }
    EXPECT_LT(b.c_identity_difference, 1.5 * a.c_identity_difference);
    EXPECT_LT(b.c_increment, 1.5 * a.c_increment);
    EXPECT_LT(b.c_double_increment, 1.5 * a.c_double_increment);
}

TEST(SemigroupEstimates, SigmaEqualsEta) {
    auto op = SpectralOperator::dirichlet_laplacian_1d(8, 12.0, 2.0);
    SemigroupExponents ex;
    ex.sigma = ex.eta = 0.0;
    auto r = check_holder_semigroup_estimates(op, ex, 5000);
    EXPECT_LE(r.c_identity_difference, 1.0);
    EXPECT_GT(r.c_identity_difference, 0.9);
    ex.sigma = 1.5;
    EXPECT_THROW(check_holder_semigroup_estimates(op, ex, 10), DomainError);
}
