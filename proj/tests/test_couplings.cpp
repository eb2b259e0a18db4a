#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mot/couplings.hpp"

using namespace mot;

namespace {

const Marginal& mu_ln() {
    static const Marginal m = Marginal::lognormal(0.2);
    return m;
}
const Marginal& nu_ln() {
    static const Marginal m = Marginal::lognormal(0.3);
    return m;
}

const ThreeBandKernel& hk_ln() {
    static const ThreeBandKernel k = build_hk(mu_ln(), nu_ln());
    return k;
}
const TwoBandKernel& left_ln() {
    static const TwoBandKernel k = build_left_monotone(mu_ln(), nu_ln());
    return k;
}
const TwoBandKernel& right_ln() {
    static const TwoBandKernel k = build_right_monotone(mu_ln(), nu_ln());
    return k;
}

// unit-mean gamma density with shape k; the pair (30, 12) is not S-invariant
Marginal gamma_table(double k) {
    std::vector<double> x, d;
    for (int i = 0; i <= 1500; ++i) {
        const double xx = 0.02 * std::pow(300.0, i / 1500.0);
        x.push_back(xx);
        d.push_back(std::exp((k - 1) * std::log(xx) - k * xx + k * std::log(k) - std::lgamma(k)));
    }
    return Marginal::tabulated(x, d, "gamma");
}

void expect_row_is_martingale(const AtomRow& row, double x) {
    const auto [mass, drift] = row_residuals(row, x);
    EXPECT_LE(mass, 1e-10) << "x = " << x;
    EXPECT_LE(drift, 1e-8) << "x = " << x;
    for (const auto& a : row) EXPECT_GE(a.weight, 0.0) << "x = " << x;
}

}  // namespace

TEST(ThreeBand, EndpointsAreTheExtremizers) {
    EXPECT_NEAR(hk_ln().a, 0.7838879660398044, 1e-6);
    EXPECT_NEAR(hk_ln().b, 1.275692501126139, 1e-6);
    EXPECT_TRUE(hk_ln().flagged.empty());
}

TEST(ThreeBand, IdentityOutsideTheBand) {
    for (double x : {0.5, 0.7, 0.78, 1.3, 2.0}) {
        const auto row = kernel_at(hk_ln(), x);
        ASSERT_EQ(row.size(), 1u);
        EXPECT_EQ(row[0].y, x);
        EXPECT_EQ(row[0].weight, 1.0);
    }
}

TEST(ThreeBand, InteriorRowsHaveThreeAtoms) {
    const auto& k = hk_ln();
    for (double x : log_grid(k.a * 1.001, k.b * 0.999, 97)) {
        const auto row = kernel_at(k, x);
        ASSERT_EQ(row.size(), 3u);
        EXPECT_LE(row[0].y, k.a);
        EXPECT_EQ(row[1].y, x);
        EXPECT_GE(row[2].y, k.b);
        expect_row_is_martingale(row, x);
    }
}

TEST(ThreeBand, NodeEquationsHold) {
    const auto& k = hk_ln();
    for (std::size_t i = 0; i < k.x.size(); i += 7) {
        const double x = k.x[i], p = k.p[i], q = k.q[i];
        const double f = delta_cdf(mu_ln(), nu_ln(), p) + delta_cdf(mu_ln(), nu_ln(), q) - delta_cdf(mu_ln(), nu_ln(), x);
        const double g = delta_cumulated_expectation(mu_ln(), nu_ln(), p) +
                         delta_cumulated_expectation(mu_ln(), nu_ln(), q) -
                         delta_cumulated_expectation(mu_ln(), nu_ln(), x);
        EXPECT_NEAR(f, 0.0, 1e-10) << x;
        EXPECT_NEAR(g, 0.0, 1e-10) << x;
    }
}

TEST(ThreeBand, MovingMassMatchesDensityGap) {
    const auto& k = hk_ln();
    for (std::size_t i = 0; i < k.x.size(); ++i) {
        const double x = k.x[i];
        const double gap = (mu_ln().pdf(x) - nu_ln().pdf(x)) / mu_ln().pdf(x);
        EXPECT_NEAR(k.l[i] + k.u[i], gap, 1e-10);
        EXPECT_GE(k.l[i], 0.0);
        EXPECT_GE(k.u[i], 0.0);
        EXPECT_LE(k.l[i] + k.u[i], 1.0);
    }
}

TEST(ThreeBand, LowerAndUpperAtomsDecrease) {
    const auto& k = hk_ln();
    for (std::size_t i = 1; i < k.x.size(); ++i) {
        EXPECT_LT(k.p[i], k.p[i - 1]);
        EXPECT_LT(k.q[i], k.q[i - 1]);
        EXPECT_LE(k.p[i], k.a);
        EXPECT_GE(k.q[i], k.b);
    }
}

TEST(ThreeBand, ValidCoupling) {
    const auto rep = validate_coupling(hk_ln(), mu_ln(), nu_ln());
    EXPECT_LE(rep.marginal_err, 1e-4);
    EXPECT_LE(rep.martingale_err, 1e-8);
    EXPECT_TRUE(rep.ok());
}

TEST(ThreeBand, CorruptedUpperAtomsBreakTheMartingale) {
    auto k = hk_ln();
    for (double& q : k.q) q *= 1.01;
    const auto rep = validate_coupling(k, mu_ln(), nu_ln());
    EXPECT_GT(rep.martingale_err, 1e-3);
    EXPECT_FALSE(rep.ok());
}

TEST(ThreeBand, ReflectionOfSymmetrizedPairMatchesDirectPlan) {
    // for S-invariant laws the plan is its own reflection
    const auto refl = std::get<ThreeBandKernel>(symmetrize_coupling(hk_ln(), mu_ln()));
    const auto& k = hk_ln();
    double err = 0.0;
    for (std::size_t i = 0; i < k.x.size(); ++i) {
        err = std::max({err, std::abs(refl.p_table(k.x[i]) - k.p[i]), std::abs(1.0 / refl.z_table(k.x[i]) - k.q[i])});
    }
    EXPECT_LE(err, 1e-6);
}

TEST(ThreeBand, ReflectionOnAsymmetricPair) {
    const auto mu = gamma_table(30.0), nu = gamma_table(12.0);
    const auto direct = build_hk(mu, nu, 256);
    const auto smu = symmetrize_marginal(mu), snu = symmetrize_marginal(nu);
    const auto refl = std::get<ThreeBandKernel>(symmetrize_coupling(build_hk(smu, snu, 256), smu));
    EXPECT_NEAR(refl.a, direct.a, 1e-6);
    EXPECT_NEAR(refl.b, direct.b, 1e-6);
    double err = 0.0;
    for (std::size_t i = 0; i < direct.x.size(); ++i) {
        const double x = direct.x[i];
        err = std::max({err, std::abs(refl.p_table(x) - direct.p[i]), std::abs(1.0 / refl.z_table(x) - direct.q[i])});
    }
    EXPECT_LE(err, 1e-6);
    const auto rep = validate_coupling(refl, mu, nu);
    EXPECT_TRUE(rep.ok()) << rep.marginal_err << " " << rep.martingale_err;
}

TEST(ThreeBand, AssumptionsAreChecked) {
    EXPECT_THROW(build_hk(mu_ln(), mu_ln(), 16), AssumptionViolated);
    EXPECT_THROW(build_hk(nu_ln(), mu_ln(), 16), AssumptionViolated);
    EXPECT_THROW(build_hk(Marginal::atoms({{1.0, 1.0}}), nu_ln(), 16), AssumptionViolated);
}

TEST(LeftMonotone, IdentityUpToTheMaximizer) {
    const auto& k = left_ln();
    EXPECT_NEAR(k.x_star, 0.7838879660398044, 1e-6);
    for (double x : {0.3, 0.6, 0.78}) {
        const auto row = kernel_at(k, x);
        ASSERT_EQ(row.size(), 1u);
        EXPECT_EQ(row[0].y, x);
    }
}

TEST(LeftMonotone, SplitRowsAreMartingales) {
    const auto& k = left_ln();
    for (std::size_t i = 0; i < k.x.size(); ++i) {
        EXPECT_LT(k.t_d[i], k.x[i]);
        EXPECT_GT(k.t_u[i], k.x[i]);
        EXPECT_NEAR(k.prob[i] * k.t_u[i] + (1.0 - k.prob[i]) * k.t_d[i], k.x[i], 1e-10);
    }
    for (double x : log_grid(k.x_star * 1.01, 3.0, 50)) {
        const auto row = kernel_at(k, x);
        ASSERT_EQ(row.size(), 2u);
        expect_row_is_martingale(row, x);
    }
}

TEST(LeftMonotone, BranchesAreMonotone) {
    const auto& k = left_ln();
    for (std::size_t i = 1; i < k.x.size(); ++i) {
        EXPECT_LE(k.t_d[i], k.t_d[i - 1]);
        EXPECT_GE(k.t_u[i], k.t_u[i - 1]);
    }
}

TEST(LeftMonotone, ValidCoupling) {
    const auto rep = validate_coupling(left_ln(), mu_ln(), nu_ln());
    EXPECT_LE(rep.marginal_err, 1e-4);
    EXPECT_LE(rep.martingale_err, 1e-8);
}

TEST(RightMonotone, IdentityFromTheMinimizer) {
    const auto& k = right_ln();
    EXPECT_NEAR(k.x_star, 1.275692501126139, 1e-5);
    for (double x : {1.28, 1.5, 3.0}) {
        const auto row = kernel_at(k, x);
        ASSERT_EQ(row.size(), 1u);
        EXPECT_EQ(row[0].y, x);
    }
}

TEST(RightMonotone, BranchesAreMonotone) {
    const auto& k = right_ln();
    for (std::size_t i = 1; i < k.x.size(); ++i) {
        EXPECT_GE(k.t_d[i], k.t_d[i - 1]);
        EXPECT_LE(k.t_u[i], k.t_u[i - 1]);
        EXPECT_LT(k.t_d[i], k.x[i]);
        EXPECT_GT(k.t_u[i], k.x[i]);
    }
}

TEST(RightMonotone, ReflectionAndDirectAgree) {
    const auto direct = build_right_monotone(mu_ln(), nu_ln(), tol::default_grid, RightMethod::direct);
    EXPECT_LE(two_band_distance(right_ln(), direct), 1e-6);
    EXPECT_LE(two_band_distance(direct, right_ln()), 1e-6);
    EXPECT_NO_THROW(build_right_monotone(mu_ln(), nu_ln(), 128, RightMethod::direct, true));
}

TEST(RightMonotone, ValidCoupling) {
    const auto rep = validate_coupling(right_ln(), mu_ln(), nu_ln());
    EXPECT_LE(rep.marginal_err, 1e-4);
    EXPECT_LE(rep.martingale_err, 1e-8);
}

TEST(TwoBand, AsymmetricPairBothDirections) {
    const auto mu = gamma_table(30.0), nu = gamma_table(12.0);
    const auto left = build_left_monotone(mu, nu, 256);
    EXPECT_TRUE(validate_coupling(left, mu, nu).ok());
    const auto right = build_right_monotone(mu, nu, 256, RightMethod::reflection, true);
    EXPECT_TRUE(validate_coupling(right, mu, nu).ok());
    // x_star of the right plan is the reciprocal of the left maximizer of the reflected pair
    const auto sl = build_left_monotone(symmetrize_marginal(mu), symmetrize_marginal(nu), 64);
    EXPECT_NEAR(right.x_star, 1.0 / sl.x_star, 1e-6);
}

TEST(KernelAt, OutsideTheTableThrows) {
    EXPECT_THROW(kernel_at(left_ln(), left_ln().d_table.back() * 1.5), OutOfRange);
    EXPECT_THROW(kernel_at(hk_ln(), 0.0), OutOfRange);
}

TEST(Validation, IdentityOnEqualLaws) {
    const auto rep = validate_coupling(IdentityKernel{mu_ln()}, mu_ln(), mu_ln());
    EXPECT_LE(rep.marginal_err, 1e-10);
    EXPECT_LE(rep.martingale_err, 1e-10);
}
