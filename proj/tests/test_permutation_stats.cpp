#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "smoosh/permutation.hpp"
#include "smoosh/permutation_stats.hpp"
#include "smoosh/random.hpp"

using namespace smoosh;

namespace {

std::size_t lis_quadratic(const std::vector<int>& a) {
  std::vector<std::size_t> best(a.size(), 1);
  std::size_t out = a.empty() ? 0 : 1;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (a[j] < a[i]) out = std::max(out, best[i] = std::max(best[i], best[j] + 1));
  return out;
}

// Minimum number of transpositions by greedy selection sort.
int cayley_by_sorting(std::vector<int> a) {
  int swaps = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    while (a[i] != int(i)) {
      std::swap(a[i], a[a[i]]);
      ++swaps;
    }
  return swaps;
}

PermSample uniform_sample(std::size_t m, std::uint64_t n, Rng& rng) {
  PermSample s(m);
  for (std::uint64_t k = 0; k < n; ++k) s.add(random_permutation(m, rng));
  return s;
}

}  // namespace

TEST(PermSample, CountsAndMerge) {
  PermSample a(3), b(3);
  a.add(Permutation{0, 1, 2});
  a.add(Permutation{2, 1, 0}, 4);
  b.add(Permutation{2, 1, 0});
  a.merge(b);
  EXPECT_EQ(a.n_total(), 6u);
  EXPECT_EQ(a.count(Permutation{2, 1, 0}), 5u);
  EXPECT_THROW(a.add(Permutation{0, 0, 1}), std::invalid_argument);
  EXPECT_THROW(a.merge(PermSample(2)), std::invalid_argument);
  EXPECT_THROW(PermSample(9), std::invalid_argument);
  EXPECT_THROW(PermSample::from_counts(3, {1, 2}), std::invalid_argument);
}

TEST(TvToUniform, Examples) {
  // All mass on one of 6 cells: TV = 5/6.
  std::vector<std::uint64_t> c(6, 0);
  c[2] = 600;
  EXPECT_NEAR(tv_to_uniform(PermSample::from_counts(3, c)).estimate, 5.0 / 6.0, 1e-15);
  const auto exact = PermSample::from_counts(3, std::vector<std::uint64_t>(6, 100));
  const auto tv = tv_to_uniform(exact);
  EXPECT_EQ(tv.estimate, 0.0);
  EXPECT_GT(tv.std_error, 0.0);
}

TEST(TvToUniform, RefusesUndersampled) {
  const auto s = PermSample::from_counts(3, std::vector<std::uint64_t>(6, 9));
  try {
    tv_to_uniform(s);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("600"), std::string::npos);
  }
  EXPECT_THROW(chi_square_uniformity(s), std::invalid_argument);
}

TEST(TvToUniform, BiasShrinksWithSampleSize) {
  Rng rng(1);
  const auto small = tv_to_uniform(uniform_sample(4, 2400, rng));
  const auto large = tv_to_uniform(uniform_sample(4, 240000, rng));
  EXPECT_LT(large.estimate, small.estimate);
  EXPECT_LT(large.estimate, 0.01);
  EXPECT_NEAR(small.std_error / large.std_error, 10.0, 4.0);
}

TEST(TvToUniform, DetectsKnownBias) {
  // Half the time the identity, otherwise uniform: TV = (1/2)(1 - 1/24).
  Rng rng(2);
  PermSample s(4);
  for (int k = 0; k < 200000; ++k) s.add(bernoulli(rng, 0.5) ? identity_permutation(4) : random_permutation(4, rng));
  const auto tv = tv_to_uniform(s);
  EXPECT_NEAR(tv.estimate, 0.5 * (1 - 1.0 / 24), 4 * tv.std_error + 0.003);
}

TEST(ChiSquare, PValuesAreUniformUnderNull) {
  Rng rng(3);
  int low = 0;
  const int reps = 400;
  for (int r = 0; r < reps; ++r) low += chi_square_uniformity(uniform_sample(3, 600, rng)).p_value < 0.1;
  // Binomial(400, 0.1): mean 40, sd 6.
  EXPECT_NEAR(low, 40, 24);
}

TEST(ChiSquare, RejectsSkew) {
  std::vector<std::uint64_t> c(6, 100);
  c[0] = 200;
  EXPECT_LT(chi_square_uniformity(PermSample::from_counts(3, c)).p_value, 1e-6);
  const auto one = PermSample::from_counts(1, {50});
  EXPECT_EQ(chi_square_uniformity(one).p_value, 1.0);
}

TEST(DeckStatistics, IdentityAndReversal) {
  const auto id = identity_permutation(5);
  auto st = test_statistics(id, id);
  EXPECT_EQ(st.adjacent_preserved, 4);
  EXPECT_EQ(st.cayley, 0);
  EXPECT_EQ(st.footrule, 0);
  EXPECT_EQ(st.lis, 5);
  EXPECT_EQ(st.top_position, 1);
  EXPECT_EQ(st.bottom_position, 5);
  const Permutation rev{4, 3, 2, 1, 0};
  st = test_statistics(rev, id);
  EXPECT_EQ(st.lis, 1);
  EXPECT_EQ(st.footrule, 12);
  EXPECT_EQ(st.top_position, 5);
  EXPECT_EQ(st.bottom_position, 1);
  EXPECT_EQ(st.adjacent_preserved, 0);
  EXPECT_EQ(st.cayley, 2);
  EXPECT_THROW(test_statistics(rev, identity_permutation(4)), std::invalid_argument);
}

TEST(DeckStatistics, RelativeToReference) {
  Rng rng(4);
  for (int k = 0; k < 500; ++k) {
    const auto ref = random_permutation(7, rng);
    const auto st = test_statistics(ref, ref);
    EXPECT_EQ(st.lis, 7);
    EXPECT_EQ(st.cayley, 0);
  }
}

TEST(DeckStatistics, MatchesBruteForce) {
  Rng rng(5);
  for (int k = 0; k < 3000; ++k) {
    const std::size_t m = 1 + k % 12;
    const auto p = random_permutation(m, rng);
    const auto st = test_statistics(p, identity_permutation(m));
    EXPECT_EQ(std::size_t(st.lis), lis_quadratic(p));
    EXPECT_EQ(st.cayley, cayley_by_sorting(p));
    std::vector<int> rev(p.rbegin(), p.rend());
    EXPECT_GE(longest_increasing_subsequence(p) * longest_increasing_subsequence(rev), m);
    int foot = 0;
    for (std::size_t i = 0; i < m; ++i) foot += std::abs(p[i] - int(i));
    EXPECT_EQ(st.footrule, foot);
    EXPECT_EQ(foot % 2, 0);
  }
}

TEST(DeckStatistics, MeanLisOfUniformDeck) {
  // Finite-size Tracy-Widom mean 2 sqrt(m) - 1.7711 m^{1/6} is about 11.0 at m = 52.
  Rng rng(6);
  const int n = 10000;
  double sum = 0.0;
  for (int k = 0; k < n; ++k) sum += double(longest_increasing_subsequence(random_permutation(52, rng)));
  const double center = 2 * std::sqrt(52.0) - 1.7711 * std::pow(52.0, 1.0 / 6);
  EXPECT_NEAR(sum / n, center, 1.0);
}

TEST(DeckStatistics, TopCardPositionUniform) {
  Rng rng(7);
  const int m = 6, n = 60000;
  std::vector<int> hist(m, 0);
  for (int k = 0; k < n; ++k) ++hist[test_statistics(random_permutation(m, rng), identity_permutation(m)).top_position - 1];
  for (int c : hist) EXPECT_NEAR(c, n / m, 5 * std::sqrt(n / m));
}

TEST(Ks, UniformAndTwoSample) {
  EXPECT_NEAR(ks_uniform(std::vector<double>{0.5}), 0.5, 1e-15);
  EXPECT_NEAR(ks_uniform(std::vector<double>{0.25, 0.75}), 0.25, 1e-15);
  EXPECT_NEAR(ks_two_sample(std::vector<double>{1, 2, 3}, std::vector<double>{4, 5}), 1.0, 1e-15);
  EXPECT_NEAR(ks_two_sample(std::vector<double>{1, 2}, std::vector<double>{1, 2}), 0.0, 1e-15);
  EXPECT_NEAR(ks_critical(100, 100, 0.05), 1.358 * std::sqrt(0.02), 1e-3);
}

TEST(Ks, NullRejectionRate) {
  Rng rng(8);
  int rejects = 0;
  const int reps = 500;
  for (int r = 0; r < reps; ++r) {
    std::vector<double> a(400), b(300);
    for (auto& v : a) v = uniform01(rng);
    for (auto& v : b) v = uniform01(rng);
    rejects += ks_two_sample(a, b) > ks_critical(400, 300, 0.05);
  }
  EXPECT_LE(rejects, 50);
}

TEST(Dominance, ShiftedExponentials) {
  Rng rng(9);
  std::exponential_distribution<double> e1(1.0), e2(0.5);
  std::vector<double> small(20000), big(20000);
  for (auto& v : small) v = e1(rng);
  for (auto& v : big) v = e2(rng);
  EXPECT_TRUE(cdf_dominance(small, big).holds);
  const auto bad = cdf_dominance(big, small);
  EXPECT_FALSE(bad.holds);
  EXPECT_NEAR(bad.violation, 0.25, 0.03);  // max of e^{-x/2} - e^{-x} at x = 2 ln 2
  EXPECT_TRUE(cdf_dominance(small, small).holds);
  EXPECT_EQ(cdf_dominance(small, small).violation, 0.0);
}

TEST(PermReport, FieldsAndUndersampledNote) {
  Rng rng(10);
  const auto s = uniform_sample(3, 1000, rng);
  std::vector<DeckStatistics> st{test_statistics(Permutation{0, 1, 2}, Permutation{0, 1, 2})};
  auto j = perm_report(s, st);
  EXPECT_EQ(j["m"], 3);
  EXPECT_TRUE(j["tv"].is_number());
  EXPECT_DOUBLE_EQ(j["statistics"]["lis"]["mean"].get<double>(), 3.0);
  j = perm_report(uniform_sample(3, 5, rng), {});
  EXPECT_TRUE(j["tv"].is_null());
  EXPECT_TRUE(j.contains("note"));
}
