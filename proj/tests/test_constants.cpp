#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "smoosh/constants.hpp"
#include "smoosh/random.hpp"

using namespace smoosh;

namespace {

// K0(z) = int_0^inf exp(-z cosh t) dt by the trapezoid rule, which converges
// geometrically for this doubly-decaying integrand.
double k0_trapezoid(double z) {
  const double h = 1.0 / 128;
  double sum = 0.5 * std::exp(-z);
  for (int k = 1;; ++k) {
    const double v = std::exp(-z * std::cosh(k * h));
    sum += v;
    if (v < 1e-300 || (v < 1e-18 * sum && k > 100)) break;
  }
  return h * sum;
}

}  // namespace

TEST(BesselK0, MatchesIntegralRepresentation) {
  for (double z : {0.01, 0.1, 0.5, 1.0, 1.9, 2.0, 2.1, 3.0, 5.0, 10.0, 20.0, 50.0}) {
    EXPECT_NEAR(bessel_k0(z) / k0_trapezoid(z), 1.0, 1e-12) << "z=" << z;
  }
}

TEST(BesselK0, ReferenceValues) {
  EXPECT_NEAR(bessel_k0(1.0), 0.42102443824070833, 1e-15);
  EXPECT_NEAR(bessel_k0(0.5), 0.92441907122766586, 1e-14);
  EXPECT_NEAR(bessel_k0(5.0) / 3.6910983340425942e-3, 1.0, 1e-13);
}

TEST(BesselK0, Asymptotics) {
  // Small z: -ln(z/2) - gamma. Large z: sqrt(pi/2z) e^{-z} (1 - 1/(8z)).
  const double z0 = 1e-6;
  EXPECT_NEAR(bessel_k0(z0), -std::log(z0 / 2) - 0.5772156649015329, 1e-10);
  const double z1 = 200.0;
  const double lead = std::sqrt(std::numbers::pi / (2 * z1)) * std::exp(-z1);
  EXPECT_NEAR(bessel_k0(z1) / (lead * (1 - 1 / (8 * z1) + 9 / (128 * z1 * z1))), 1.0, 1e-6);
}

TEST(BesselK0, MonotoneAndContinuousAtSwitch) {
  double prev = bessel_k0(0.05);
  for (double z = 0.06; z < 30; z += 0.01) {
    const double v = bessel_k0(z);
    EXPECT_LT(v, prev);
    prev = v;
  }
  EXPECT_NEAR(detail::bessel_k0_series(2.0) / detail::bessel_k0_cf2(2.0), 1.0, 1e-13);
  EXPECT_THROW(bessel_k0(0.0), std::domain_error);
  EXPECT_THROW(bessel_k0(-1.0), std::domain_error);
}

TEST(FrakP, ReferenceValueAtDeltaPointThree) {
  const double v = frak_p(0.3, 0.5, 0.5);
  EXPECT_GE(v, 1.82e-7);
  EXPECT_LE(v, 1.94e-7);
}

TEST(FrakP, ClosedFormByHand) {
  const double delta = 0.6, p = 0.5, s2 = 0.5;
  const double arg = (std::sqrt(2.0) + 1.2) / (std::sqrt(0.5) * 0.6 * std::sqrt(std::numbers::pi * 0.25));
  const double pre = 0.36 / (2 * 0.5 * std::numbers::pi * 0.5 * 2.2 * 2.2);
  EXPECT_NEAR(frak_p(delta, p, s2) / (pre * k0_trapezoid(arg)), 1.0, 1e-12);
  EXPECT_NEAR(frak_p(delta, p, s2), 2.11e-5, 0.01e-5);
}

TEST(FrakP, RangeAndMonotonicity) {
  for (double p : {0.1, 0.3, 0.5, 0.9}) {
    double prev = 0.0;
    for (double d = 0.05; d <= 1.0; d += 0.05) {
      const double v = frak_p(d, p, 0.5);
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
      EXPECT_GT(v, prev) << "p=" << p << " delta=" << d;
      prev = v;
    }
  }
  EXPECT_THROW(frak_p(0.0, 0.5, 0.5), std::domain_error);
  EXPECT_THROW(frak_p(0.3, 1.0, 0.5), std::domain_error);
  EXPECT_THROW(frak_p(0.3, 0.5, -1.0), std::domain_error);
}

TEST(FrakP, InjectedKernel) {
  const double base = frak_p(0.3, 0.5, 0.5);
  const double bumped = frak_p_with(0.3, 0.5, 0.5, [](double z) { return 1.01 * bessel_k0(z); });
  EXPECT_NEAR(bumped / base, 1.01, 1e-14);
}

TEST(Rescale, UnitTable) {
  const auto u = rescale_to_unit(5.0, 0.5, 1.0);
  EXPECT_DOUBLE_EQ(u.delta, 0.1);
  EXPECT_DOUBLE_EQ(u.s0, 0.2);
  EXPECT_THROW(rescale_to_unit(0.0, 0.5, 1.0), std::domain_error);
}

TEST(Resolvent, BoundHoldsAndIsTightToLeadingOrder) {
  for (double delta : {0.1, 0.2, 0.3, 0.5}) {
    const auto r = resolvent_bound_check(delta, 0.5, 0.5);
    EXPECT_GT(r.lhs, 0.0);
    EXPECT_LE(r.lhs_error, 1e-8 * r.lhs);
    // Every point of the disc lies within sqrt 2 + 2 delta of v and K0 decreases.
    EXPECT_GE(r.lhs * std::numbers::pi, r.rhs) << "delta=" << delta;
  }
  EXPECT_THROW(resolvent_bound_check(0.8, 0.5, 0.5), std::domain_error);
}

TEST(Resolvent, RateFormula) {
  EXPECT_NEAR(resolvent_rate(0.3, 0.5, 0.5), 1.0 / (2 * 0.5 * 0.25 * std::numbers::pi * 0.09), 1e-12);
}

TEST(MixingBound, Formula) {
  const double f = frak_p(0.3, 0.5, 0.5);
  EXPECT_NEAR(mixing_bound(52, 0.3, 0.5, 0.5, 2.0), 52 / f + 2 * std::sqrt(52.0), 1e-6);
  EXPECT_THROW(mixing_bound(1, 0.3, 0.5, 0.5, 1.0), std::domain_error);
  EXPECT_DOUBLE_EQ(lattice_bound_coefficient(8, 3, 0.5), 512.0 * 3 / 0.5);
}

TEST(ZetaMoments, MeanAndBound) {
  const auto z = zeta_moments(0.3, 0.1);
  EXPECT_NEAR(z.mean, 1 / 0.3, 1e-15);
  EXPECT_NEAR(z.mgf_bound, std::sqrt(0.3 / 0.7) / (1 - std::sqrt(0.7 / 0.9)), 1e-12);
  // The exact MGF of an Exp(0.3) variable lies under the bound.
  EXPECT_LE(0.3 / (0.3 - 0.1), z.mgf_bound);
  EXPECT_THROW(zeta_moments(0.3, 0.3), std::domain_error);
  EXPECT_THROW(zeta_moments(1.0, 0.1), std::domain_error);
}

TEST(Zeta, AbstractMeanAndExponentialLaw) {
  Rng rng(31);
  for (double f : {0.1, 0.3, 0.8}) {
    const int n = 200000;
    double s = 0, s2 = 0;
    int above = 0;
    for (int k = 0; k < n; ++k) {
      const double z = simulate_zeta_abstract(f, rng);
      s += z;
      s2 += z * z;
      above += z > 1.0 / f;
    }
    const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
    EXPECT_NEAR(mean, 1 / f, 3.5 * se);
    // A geometric sum of unit exponentials is Exp(f): P(z > 1/f) = e^{-1}.
    EXPECT_NEAR(double(above) / n, std::exp(-1.0), 4 * std::sqrt(0.25 / n));
  }
}

TEST(Zeta, LiteralAgreesWithAbstract) {
  Rng a(32), b(33);
  const int n = 100000;
  double sa = 0, sb = 0;
  for (int k = 0; k < n; ++k) {
    sa += simulate_zeta_abstract(0.3, a);
    sb += simulate_zeta_literal(0.3, b);
  }
  EXPECT_NEAR(sa / n, sb / n, 4 * (1 / 0.3) * std::sqrt(2.0 / n));
  EXPECT_THROW(simulate_zeta_abstract(0.0, a), std::domain_error);
  EXPECT_GT(simulate_zeta_literal(1.0, a), 0.0);
}

TEST(Chebyshev, C1) {
  const std::vector<double> xs{1, 2, 3, 4};
  EXPECT_NEAR(sample_variance(xs), 5.0 / 3.0, 1e-15);
  EXPECT_NEAR(chebyshev_c1(4.0, 0.25), 4.0, 1e-15);
  EXPECT_THROW(chebyshev_c1(1.0, 0.0), std::domain_error);
}

TEST(BoundReport, JsonFields) {
  const auto r = bound_report(0.3, 0.5, 0.5, 52, 1.0, 1e-8);
  const auto j = to_json(r);
  EXPECT_NEAR(j["frak_p"].get<double>(), frak_p(0.3, 0.5, 0.5), 1e-20);
  EXPECT_EQ(j["m"], 52);
  EXPECT_GT(j["mixing_time"].get<double>(), 2.7e8);
}
