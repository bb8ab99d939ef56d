#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "smoosh/geometry.hpp"
#include "smoosh/random.hpp"

using namespace smoosh;

TEST(Clamp, Examples) {
  EXPECT_EQ(clamp(1.05, 0, 1), 1.0);
  EXPECT_EQ(clamp(0.5, 0, 1), 0.5);
  EXPECT_EQ(clamp(-0.2, 0, 1), 0.0);
}

TEST(UnderPalm, ClosedDisc) {
  EXPECT_TRUE(under_palm({0.6, 0.6}, {0.5, 0.5}, 0.2));
  EXPECT_FALSE(under_palm({0.9, 0.9}, {0.5, 0.5}, 0.2));
  EXPECT_TRUE(under_palm({0.3, 0.3}, {0.3, 0.3}, 1e-9));
  EXPECT_TRUE(under_palm({0.75, 0.5}, {0.5, 0.5}, 0.25));
}

TEST(Table, Validation) {
  EXPECT_THROW(Table(0.0, 1.0, 0.1), std::invalid_argument);
  EXPECT_THROW(Table(1.0, -1.0, 0.1), std::invalid_argument);
  EXPECT_THROW(Table(0.0), std::invalid_argument);
  Table t(0.2);
  EXPECT_EQ(t.width(), 1.0);
  EXPECT_EQ(t.height(), 1.0);
}

TEST(ClampCenter, Examples) {
  Table t(0.2);
  EXPECT_EQ(clamp_center({1.05, 0.5}, t), (Point2{1.0, 0.5}));
  EXPECT_EQ(clamp_center({0.3, 0.7}, t), (Point2{0.3, 0.7}));
  EXPECT_EQ(clamp_center({-0.1, 1.1}, t), (Point2{0.0, 1.0}));
}

TEST(ClampCenter, RejectsOutsideExtendedDomain) {
  Table t(0.2);
  EXPECT_THROW(clamp_center({1.3, 0.5}, t), std::domain_error);
  // Inside the bounding box but outside the rounded corner.
  EXPECT_THROW(clamp_center({-0.19, -0.19}, t), std::domain_error);
  EXPECT_THROW(clamp_center({std::nan(""), 0.5}, t), std::domain_error);
}

TEST(ClampCenter, IdempotentAndWithinDelta) {
  Rng rng(11);
  for (double delta : {0.05, 0.3, 0.7}) {
    Table t(2.0, 1.5, delta);
    for (int k = 0; k < 20000; ++k) {
      const Point2 w = sample_extended(rng, t);
      const Point2 c = clamp_center(w, t);
      EXPECT_EQ(clamp_center(c, t), c);
      EXPECT_LE(distance(c, w), delta + 1e-15);
      EXPECT_TRUE(t.contains(c));
    }
  }
}

TEST(LensArea, Examples) {
  for (double d : {0.1, 0.3, 1.0}) {
    EXPECT_NEAR(lens_area(0.0, d), std::numbers::pi * d * d, 1e-15);
    EXPECT_EQ(lens_area(2 * d, d), 0.0);
    EXPECT_EQ(lens_area(5 * d, d), 0.0);
  }
  EXPECT_NEAR(lens_area(1.0, 1.0), 2.0 * std::numbers::pi / 3.0 - std::sqrt(3.0) / 2.0, 1e-14);
}

TEST(LensArea, MatchesHitOrMiss) {
  // Unit discs at (0,0) and (1,0); sample the bounding box of their intersection.
  Rng rng(2024);
  std::uniform_real_distribution<double> ux(0.0, 1.0), uy(-1.0, 1.0);
  const int n = 10'000'000;
  int hits = 0;
  for (int k = 0; k < n; ++k) {
    const double x = ux(rng), y = uy(rng);
    if (x * x + y * y <= 1.0 && (x - 1) * (x - 1) + y * y <= 1.0) ++hits;
  }
  const double frac = double(hits) / n;
  const double est = 2.0 * frac;
  const double se = 2.0 * std::sqrt(frac * (1 - frac) / n);
  EXPECT_NEAR(lens_area(1.0, 1.0), est, 4 * se);
  EXPECT_NEAR(est, 1.2284, 1e-3);
}

TEST(LensArea, BoundedNonincreasingConvex) {
  for (double d : {0.05, 0.4, 1.0}) {
    const int n = 2000;
    const double h = 2.5 * d / n;
    for (int k = 0; k + 2 <= n; ++k) {
      const double a = lens_area(k * h, d), b = lens_area((k + 1) * h, d), c = lens_area((k + 2) * h, d);
      EXPECT_GE(a, 0.0);
      EXPECT_LE(a, std::numbers::pi * d * d + 1e-15);
      EXPECT_GE(a, b);
      EXPECT_LE(b, 0.5 * (a + c) + 1e-12);
    }
  }
}

TEST(LensArea, ContinuousAtTwoDelta) {
  const double d = 0.3;
  EXPECT_LT(lens_area(2 * d * (1 - 1e-9), d), 1e-12);
}

TEST(LensIntegral, EqualsPiDeltaFourth) {
  for (double d : {0.3, 0.5, 1.0, 0.05}) {
    const double exact = std::numbers::pi * std::pow(d, 4);
    EXPECT_NEAR(lens_integral(d) / exact, 1.0, 1e-8) << "delta=" << d;
  }
  EXPECT_NEAR(lens_integral(1.0), std::numbers::pi, 1e-8);
  EXPECT_NEAR(lens_integral(0.5), 0.19634954084936207, 1e-9);
  EXPECT_NEAR(lens_integral(0.3), 0.025446900494077322, 1e-10);
}

TEST(LensIntegral, RejectsBadDelta) { EXPECT_THROW(lens_integral(0.0), std::domain_error); }

TEST(ExtendedDomain, AreaMatchesMonteCarloAndBound) {
  Rng rng(5);
  for (double d : {0.1, 0.3, 0.6}) {
    Table t(d);
    EXPECT_NEAR(t.extended_area(), 1 + 4 * d + std::numbers::pi * d * d, 1e-14);
    EXPECT_LE(t.extended_area(), (1 + 2 * d) * (1 + 2 * d));
    EXPECT_NEAR(t.extended_area_bound(), (1 + 2 * d) * (1 + 2 * d), 1e-14);
    std::uniform_real_distribution<double> u(-d, 1 + d);
    const int n = 2'000'000;
    int in = 0;
    for (int k = 0; k < n; ++k)
      if (t.in_extended_domain({u(rng), u(rng)})) ++in;
    const double box = (1 + 2 * d) * (1 + 2 * d);
    const double frac = double(in) / n;
    EXPECT_NEAR(frac * box, t.extended_area(), 4 * box * std::sqrt(frac * (1 - frac) / n));
  }
}

TEST(ExtendedDomain, SamplesAreUniform) {
  // Quadrant counts of the palm centre match the quadrant areas of the domain.
  Rng rng(9);
  Table t(0.25);
  const int n = 400000;
  int left = 0;
  for (int k = 0; k < n; ++k)
    if (sample_extended(rng, t).x < 0.5) ++left;
  EXPECT_NEAR(double(left) / n, 0.5, 4 * std::sqrt(0.25 / n));
}
