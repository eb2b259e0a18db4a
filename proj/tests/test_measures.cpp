#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "mot/measures.hpp"

using namespace mot;

namespace {

Marginal two_point() { return Marginal::atoms({{0.5, 2.0 / 3.0}, {2.0, 1.0 / 3.0}}); }

// lognormal mixture with well separated modes, tabulated on a fine log grid
Marginal bimodal() {
    std::vector<double> x, d;
    for (int k = 0; k <= 4000; ++k) {
        const double xx = std::exp(-3.0 + 6.0 * k / 4000.0);
        auto ln = [xx](double mu, double s) {
            return normal_pdf((std::log(xx) - mu) / s) / (xx * s);
        };
        x.push_back(xx);
        d.push_back(0.5 * ln(std::log(0.6), 0.08) + 0.5 * ln(std::log(1.4), 0.08));
    }
    return Marginal::tabulated(x, d, "bimodal");
}

}  // namespace

TEST(MarginalCdf, LogNormalAtOne) {
    EXPECT_NEAR(Marginal::lognormal(0.2).cdf(1.0), 0.539827837277029, 1e-12);
}

TEST(MarginalCdf, PointMassIsRightContinuous) {
    const auto m = Marginal::atoms({{1.0, 1.0}});
    EXPECT_EQ(m.cdf(0.5), 0.0);
    EXPECT_EQ(m.cdf(1.0), 1.0);
}

TEST(MarginalCdf, NonPositiveArgumentThrows) {
    EXPECT_THROW(Marginal::lognormal(0.2).cdf(0.0), DomainError);
    EXPECT_THROW(two_point().cdf(-1.0), DomainError);
}

TEST(MarginalCdf, MonotoneWithLimits) {
    for (const auto& m : {Marginal::lognormal(0.3), two_point(), bimodal()}) {
        double prev = 0.0;
        for (double x : log_grid(1e-3, 1e3, 500)) {
            const double f = m.cdf(x);
            EXPECT_GE(f, prev - 1e-15);
            prev = f;
        }
        EXPECT_NEAR(m.cdf(1e-3), 0.0, 1e-9);
        EXPECT_NEAR(m.cdf(1e3), 1.0, 1e-9);
    }
}

TEST(MarginalQuantile, RoundTripOnLogNormal) {
    const auto m = Marginal::lognormal(0.25);
    for (double x0 : {0.3, 0.8, 1.0, 1.7, 3.0}) EXPECT_NEAR(m.quantile(m.cdf(x0)), x0, 1e-10);
    EXPECT_NEAR(Marginal::lognormal(0.2).quantile(0.539828), 1.0, 1e-6);
}

TEST(MarginalQuantile, AtomsUseGeneralizedInverse) {
    const auto m = Marginal::atoms({{0.5, 0.5}, {1.5, 0.5}});
    EXPECT_EQ(m.quantile(0.25), 0.5);
    EXPECT_EQ(m.quantile(0.5), 0.5);
    EXPECT_EQ(m.quantile(0.75), 1.5);
    EXPECT_THROW(m.quantile(0.0), DomainError);
    EXPECT_THROW(m.quantile(1.0), DomainError);
}

TEST(MarginalQuantile, RoundTripOnTabulated) {
    const auto m = bimodal();
    for (double p : {0.01, 0.2, 0.5, 0.77, 0.99}) EXPECT_NEAR(m.cdf(m.quantile(p)), p, 1e-8);
}

TEST(CumulatedExpectation, LogNormalClosedForm) {
    EXPECT_NEAR(Marginal::lognormal(0.2).cumulated_expectation(1.0), 0.460172162722971, 1e-12);
}

TEST(CumulatedExpectation, TwoPointLaw) {
    EXPECT_NEAR(two_point().cumulated_expectation(1.0), 1.0 / 3.0, 1e-15);
}

TEST(CumulatedExpectation, TendsToUnitMean) {
    for (const auto& m : {Marginal::lognormal(0.5), two_point(), bimodal()}) {
        EXPECT_NEAR(m.cumulated_expectation(1e4), 1.0, 1e-9);
        EXPECT_NEAR(m.mean(), 1.0, 1e-9);
    }
}

TEST(CumulatedExpectation, BoundedByUnitAndByArgument) {
    for (const auto& m : {Marginal::lognormal(0.5), two_point(), bimodal()}) {
        double prev = 0.0;
        for (double x : log_grid(1e-2, 1e2, 300)) {
            const double g = m.cumulated_expectation(x);
            EXPECT_GE(g, prev - 1e-15);
            EXPECT_LE(g, 1.0 + 1e-12);
            EXPECT_LE(g, x + 1e-15);
            prev = g;
        }
    }
}

TEST(CumulatedExpectation, InverseRoundTrip) {
    const auto m = Marginal::lognormal(0.3);
    for (double x : {0.5, 0.9, 1.2, 2.0}) {
        EXPECT_NEAR(m.inverse_cumulated_expectation(m.cumulated_expectation(x)), x, 1e-9);
        EXPECT_NEAR(m.inverse_upper_expectation(m.upper_expectation(x)), x, 1e-9);
    }
}

TEST(Tabulated, RenormalizedToUnitMassAndMean) {
    const auto m = Marginal::tabulated({1.0, 2.0, 3.0}, {1.0, 4.0, 1.0}, "tri");
    EXPECT_NEAR(m.cdf(m.support_upper()), 1.0, 1e-12);
    EXPECT_NEAR(m.mean(), 1.0, 1e-12);
    EXPECT_NEAR(m.quantile(0.5), 1.0, 1e-9);  // symmetric shape, median = mean
}

TEST(Tabulated, ReadsFromFile) {
    const std::string path = ::testing::TempDir() + "density.txt";
    {
        std::ofstream out(path);
        out << "# x density\n0.5 0\n1.0 2\n1.5 0\n";
    }
    const auto m = parse_marginal("table:" + path);
    EXPECT_EQ(m.kind(), MarginalKind::tabulated);
    EXPECT_NEAR(m.cdf(1.0), 0.5, 1e-12);
    std::remove(path.c_str());
}

TEST(ConvexOrder, LogNormalPairInOrder) {
    const auto r = check_convex_order(Marginal::lognormal(0.2), Marginal::lognormal(0.3));
    EXPECT_TRUE(r.ok);
}

TEST(ConvexOrder, ReversedPairViolates) {
    const auto r = check_convex_order(Marginal::lognormal(0.3), Marginal::lognormal(0.2));
    EXPECT_FALSE(r.ok);
    EXPECT_GT(r.worst_violation, 1e-3);
}

TEST(ConvexOrder, SameLawHasZeroViolation) {
    const auto m = Marginal::lognormal(0.2);
    const auto r = check_convex_order(m, m);
    EXPECT_TRUE(r.ok);
    EXPECT_EQ(r.worst_violation, 0.0);
}

TEST(ConvexOrder, DifferentMeansThrow) {
    EXPECT_THROW(check_convex_order(Marginal::atoms({{1.0, 1.0}}), Marginal::atoms({{2.0, 1.0}})), MeanMismatch);
}

TEST(Dispersion, LogNormalPairHasOneInterval) {
    const auto r = check_dispersion(Marginal::lognormal(0.2), Marginal::lognormal(0.3));
    EXPECT_TRUE(r.ok);
    EXPECT_NEAR(r.a, 0.7838879660398044, 1e-6);
    EXPECT_NEAR(r.b, 1.275692501126139, 1e-6);
}

TEST(Dispersion, SameLawFails) {
    const auto m = Marginal::lognormal(0.2);
    EXPECT_FALSE(check_dispersion(m, m).ok);
}

TEST(Dispersion, BimodalAgainstLogNormalFails) {
    const auto r = check_dispersion(bimodal(), Marginal::lognormal(0.5));
    EXPECT_FALSE(r.ok);
    EXPECT_EQ(r.sign_changes, 4);
}

TEST(Dispersion, AtomsHaveNoDensity) {
    EXPECT_THROW(check_dispersion(two_point(), Marginal::lognormal(0.2)), NoDensity);
}

TEST(DeltaProfile, ExtremizersMatchFrozenClosedForm) {
    const auto p = delta_profile(Marginal::lognormal(0.2), Marginal::lognormal(0.3));
    EXPECT_NEAR(p.m, 0.7838879660398044, 1e-6);
    EXPECT_NEAR(p.m_tilde, 1.275692501126139, 1e-6);
    EXPECT_LT(p.m, p.m_tilde);
}

TEST(DeltaProfile, ProfileShape) {
    const auto mu = Marginal::lognormal(0.2), nu = Marginal::lognormal(0.3);
    const auto p = delta_profile(mu, nu);
    const double top = delta_cdf(mu, nu, p.m), bottom = delta_cdf(mu, nu, p.m_tilde);
    for (std::size_t i = 0; i < p.x.size(); ++i) {
        EXPECT_LE(p.delta_F[i], top + 1e-15);
        EXPECT_GE(p.delta_F[i], bottom - 1e-15);
    }
    EXPECT_NEAR(p.delta_F.front(), 0.0, 1e-8);
    EXPECT_NEAR(p.delta_F.back(), 0.0, 1e-8);
    EXPECT_NEAR(p.delta_G.back(), 0.0, 1e-8);
}

TEST(DeltaProfile, SymmetricPairsGiveReciprocalExtremizers) {
    for (auto [s1, s2] : {std::pair{0.1, 0.15}, {0.2, 0.3}, {0.2, 0.5}, {0.3, 0.35}, {0.4, 0.9}}) {
        const auto p = delta_profile(Marginal::lognormal(s1), Marginal::lognormal(s2));
        const auto [m, mt] = lognormal_extremizer_closed_form(s1, s2);
        EXPECT_NEAR(p.m, m, 1e-6) << s1 << " " << s2;
        EXPECT_NEAR(p.m_tilde, mt, 1e-6) << s1 << " " << s2;
        EXPECT_NEAR(p.m * p.m_tilde, 1.0, 1e-6);
    }
}

TEST(DeltaProfile, SameLawViolatesAssumptions) {
    const auto m = Marginal::lognormal(0.2);
    EXPECT_THROW(delta_profile(m, m), AssumptionViolated);
}

TEST(ClosedForm, FrozenValuesAndReciprocity) {
    const auto [m, mt] = lognormal_extremizer_closed_form(0.2, 0.3);
    EXPECT_NEAR(m, 0.7838879660398044, 1e-12);
    EXPECT_NEAR(mt, 1.275692501126139, 1e-12);
    EXPECT_EQ(m * mt, 1.0);
    for (auto [s1, s2] : {std::pair{0.05, 0.06}, {0.5, 2.0}, {1.0, 1.5}}) {
        EXPECT_LT(lognormal_extremizer_closed_form(s1, s2).first, 1.0);
    }
    EXPECT_THROW(lognormal_extremizer_closed_form(0.3, 0.2), DomainError);
    EXPECT_THROW(lognormal_extremizer_closed_form(0.3, 0.3), DomainError);
}

TEST(MarginalSpec, ParsesAllKinds) {
    EXPECT_EQ(parse_marginal("lognormal:sigma=0.2").describe(), "lognormal:sigma=0.2");
    const auto a = parse_marginal("atoms:0.5=2/3,2=1/3");
    EXPECT_NEAR(a.cumulated_expectation(1.0), 1.0 / 3.0, 1e-15);
    // rounded decimals are renormalized
    EXPECT_NEAR(parse_marginal("atoms:0.5=0.6667,2.0=0.3333").cdf(1.0), 0.6667, 1e-12);
    EXPECT_THROW(parse_marginal("lognormal:s=0.2"), ConfigError);
    EXPECT_THROW(parse_marginal("gamma:k=2"), ConfigError);
    EXPECT_THROW(parse_marginal("atoms:1=0.5"), ConfigError);
    EXPECT_THROW(parse_marginal("table:/nonexistent/file"), ConfigError);
}
