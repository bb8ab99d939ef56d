#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "smoosh/discrete_motion.hpp"
#include "smoosh/lattice.hpp"
#include "smoosh/permutation_stats.hpp"
#include "smoosh/shadow_coupling.hpp"

using namespace smoosh;

namespace {

// Deterministic source: a list of (time, site labels) snapshots.
class ScriptedSource {
 public:
  ScriptedSource(std::vector<int> start, std::vector<std::pair<double, std::vector<int>>> script)
      : sites_(std::move(start)), script_(std::move(script)) {}

  std::size_t size() const { return sites_.size(); }
  double time() const { return now_; }
  bool advance(double horizon) {
    if (next_ >= script_.size() || script_[next_].first > horizon) {
      now_ = std::max(now_, horizon);
      return false;
    }
    now_ = script_[next_].first;
    sites_ = script_[next_].second;
    ++next_;
    return true;
  }
  bool coincide(std::size_t i, std::size_t j) const { return sites_[i] == sites_[j]; }
  double x_coordinate(std::size_t i) const { return sites_[i]; }

 private:
  std::vector<int> sites_;
  std::vector<std::pair<double, std::vector<int>>> script_;
  std::size_t next_ = 0;
  double now_ = 0.0;
};

static_assert(PointMotionSource<ScriptedSource>);
static_assert(PointMotionSource<LatticeSource>);
static_assert(PointMotionSource<DiscreteSource>);

}  // namespace

TEST(InitShadow, TrivialCases) {
  Rng rng(1);
  auto one = init_shadow(1, rng);
  EXPECT_TRUE(one.terminal());
  EXPECT_EQ(one.tau_m(), 0.0);
  auto id = init_shadow(identity_permutation(5));
  EXPECT_TRUE(id.terminal());
  for (std::size_t l = 1; l <= 5; ++l) EXPECT_EQ(id.tau(l), 0.0);
  EXPECT_EQ(id.active_i(), -1);
  EXPECT_THROW(init_shadow(Permutation{0, 0}), std::invalid_argument);
  EXPECT_THROW(init_shadow(0, rng), std::invalid_argument);
}

TEST(InitShadow, FourCycleActivePair) {
  // 1->2, 2->3, 3->4, 4->1 in 0-based form.
  auto s = init_shadow(Permutation{1, 2, 3, 0});
  EXPECT_FALSE(s.terminal());
  EXPECT_EQ(s.active_i(), 0);
  EXPECT_EQ(s.active_j(), 1);
  EXPECT_TRUE(s.fixed().empty());
}

TEST(RecordMeet, FourCycleTrace) {
  auto s = init_shadow(Permutation{1, 2, 3, 0});
  s.record_meet(1.5);
  EXPECT_EQ(s.fixed(), (std::vector<int>{1}));
  EXPECT_EQ(s.active_i(), 0);
  EXPECT_EQ(s.active_j(), 2);
  s.record_meet(2.0);
  EXPECT_EQ(s.fixed(), (std::vector<int>{1, 2}));
  EXPECT_EQ(s.active_i(), 0);
  EXPECT_EQ(s.active_j(), 3);
  s.record_meet(2.0);
  EXPECT_TRUE(s.terminal());
  EXPECT_TRUE(is_identity(s.pi_star()));
  EXPECT_EQ(s.stage(), 3u);
  EXPECT_EQ(s.tau(1), 1.5);
  EXPECT_EQ(s.tau(4), 2.0);
  EXPECT_THROW(s.record_meet(3.0), std::logic_error);
}

TEST(RecordMeet, Transposition) {
  auto s = init_shadow(Permutation{1, 0});
  EXPECT_EQ(s.tau(2), std::numeric_limits<double>::infinity());
  s = record_meet(s, 0.25);
  EXPECT_TRUE(s.terminal());
  EXPECT_EQ(s.tau_m(), 0.25);
}

TEST(RecordMeet, RejectsDecreasingTime) {
  auto s = init_shadow(Permutation{2, 0, 1});
  s.record_meet(3.0);
  EXPECT_THROW(s.record_meet(2.0), std::invalid_argument);
}

TEST(RecordMeet, FixedSetInvariantOnRandomRuns) {
  Rng rng(5);
  for (int rep = 0; rep < 2000; ++rep) {
    const std::size_t m = 1 + rep % 8;
    auto s = init_shadow(m, rng);
    double t = 0.0;
    std::size_t swaps = 0;
    while (!s.terminal()) {
      const auto before = s.fixed();
      s.record_meet(t += 1.0);
      ++swaps;
      const auto after = s.fixed();
      EXPECT_GT(after.size(), before.size());
      for (std::size_t i = 0; i < m; ++i) EXPECT_EQ(s.is_fixed(i), s.pi_star()[i] == int(i));
      if (!s.terminal()) {
        EXPECT_FALSE(s.is_fixed(s.active_i()));
        for (int i = 0; i < s.active_i(); ++i) EXPECT_TRUE(s.is_fixed(i));
      }
      EXPECT_TRUE(is_permutation(s.pi_star()));
    }
    EXPECT_LE(swaps, m - 1);
  }
}

TEST(SigmaStar, Examples) {
  EXPECT_EQ(sigma_star(identity_permutation(4), identity_permutation(4)), identity_permutation(4));
  const Permutation pi{1, 2, 0, 3};
  EXPECT_EQ(sigma_star(identity_permutation(4), pi), pi);
  const Permutation g{0, 2, 1, 3};
  EXPECT_TRUE(is_identity(sigma_star(g, inverse(g))));
}

TEST(Couple, IdentityReturnsImmediately) {
  ScriptedSource src({0, 1, 2}, {{1.0, {0, 0, 0}}});
  auto res = couple(src, init_shadow(identity_permutation(3)), 10.0);
  EXPECT_TRUE(res.terminal);
  EXPECT_EQ(res.tau_m(), 0.0);
  EXPECT_EQ(src.time(), 0.0);
}

TEST(Couple, SameSiteTranspositionMeetsAtTimeZero) {
  LatticeSource src(LatticeConfig{8, 2, 0.5}, {4, 4}, Rng(1));
  auto res = couple(src, init_shadow(Permutation{1, 0}), 100.0);
  EXPECT_TRUE(res.terminal);
  EXPECT_EQ(res.tau_m(), 0.0);
}

TEST(Couple, ScriptedStages) {
  // pi = (1->2, 2->3, 3->1). Stage 1 waits for cards 1,2; stage 2 for 1,3.
  ScriptedSource src({0, 1, 2}, {{1.0, {0, 5, 0}}, {2.0, {7, 7, 2}}, {3.0, {9, 4, 9}}});
  auto res = couple(src, init_shadow(Permutation{1, 2, 0}), 10.0);
  EXPECT_TRUE(res.terminal);
  EXPECT_EQ(res.shadow.tau(1), 2.0);
  EXPECT_EQ(res.shadow.tau(2), 3.0);
  EXPECT_EQ(res.swaps(), 2u);
}

TEST(Couple, HorizonFlagsPartialResult) {
  ScriptedSource src({0, 1, 2}, {{1.0, {0, 0, 2}}, {20.0, {3, 4, 3}}});
  auto res = couple(src, init_shadow(Permutation{1, 2, 0}), 10.0);
  EXPECT_FALSE(res.terminal);
  EXPECT_EQ(res.swaps(), 1u);
  EXPECT_EQ(src.time(), 10.0);
  EXPECT_EQ(res.tau_m(), std::numeric_limits<double>::infinity());
}

TEST(CoupleFast, SmallestIndexWinsTies) {
  // pi = (1->2, 2->1, 3->4, 4->3): both pairs meet at t=1.
  ScriptedSource src({0, 1, 2, 3}, {{1.0, {5, 5, 6, 6}}});
  auto res = couple_fast(src, init_shadow(Permutation{1, 0, 3, 2}), 10.0);
  EXPECT_TRUE(res.terminal);
  EXPECT_EQ(res.shadow.tau(1), 1.0);
  EXPECT_EQ(res.shadow.tau(2), 1.0);
}

TEST(CoupleFast, UsesAnyEligiblePair) {
  // pi = (1->2, 2->1, 3->4, 4->3); the (3,4) pair meets first.
  ScriptedSource src({0, 1, 2, 3}, {{1.0, {0, 1, 6, 6}}, {2.0, {5, 5, 7, 8}}});
  auto res = couple_fast(src, init_shadow(Permutation{1, 0, 3, 2}), 10.0);
  EXPECT_TRUE(res.terminal);
  EXPECT_EQ(res.shadow.tau(1), 1.0);
  EXPECT_EQ(res.shadow.tau(2), 2.0);
  ScriptedSource slow_src({0, 1, 2, 3}, {{1.0, {0, 1, 6, 6}}, {2.0, {5, 5, 7, 8}}});
  auto slow = couple(slow_src, init_shadow(Permutation{1, 0, 3, 2}), 10.0);
  EXPECT_FALSE(slow.terminal);
}

TEST(CoupleFast, IdenticalToCoupleForTwoCards) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    LatticeSource a(LatticeConfig{8, 2, 0.5}, {1, 8}, Rng(seed));
    LatticeSource b = a;
    auto ra = couple(a, init_shadow(Permutation{1, 0}), 1e6);
    auto rb = couple_fast(b, init_shadow(Permutation{1, 0}), 1e6);
    EXPECT_EQ(ra.tau_m(), rb.tau_m());
  }
}

TEST(Couple, DiscreteThreeCardsFinite) {
  ModelConfig c;
  c.table = Table(0.4);
  c.s0 = 0.2;
  c.p = 0.5;
  Rng rng(7);
  int finite = 0;
  const int n = 2000;
  for (int r = 0; r < n; ++r) {
    DiscreteSource src(c, {{0.1, 0.5}, {0.5, 0.5}, {0.9, 0.5}}, make_rng(7, r));
    auto res = couple(src, init_shadow(3, rng), 1e3);
    finite += res.terminal && std::isfinite(res.tau_m());
    EXPECT_LE(res.swaps(), 2u);
  }
  EXPECT_EQ(finite, n);
}

TEST(SigmaStar, UniformAtFixedTimeOnLattice) {
  const LatticeConfig c{8, 3, 0.5};
  PermSample sample(3);
  const int n = 30000;
  for (int r = 0; r < n; ++r) {
    Rng rng = make_rng(11, r);
    auto shadow = init_shadow(3, rng);
    LatticeSource src(c, {1, 4, 8}, Rng(rng()));
    auto res = couple(src, shadow, 5.0);
    advance_until(src, 5.0);
    const auto xs = x_coordinates(src);
    const auto gamma = rank_to_index(std::span<const double>(xs), rng);
    const auto s = sigma_star(gamma, res.shadow.pi_star());
    if (res.terminal) {
      EXPECT_EQ(s, gamma);
    }
    sample.add(s);
  }
  EXPECT_GT(chi_square_uniformity(sample).p_value, 1e-3);
}

TEST(Export, CouplingCsvAndSummary) {
  std::vector<CouplingResult> results;
  auto s1 = init_shadow(Permutation{1, 0});
  s1.record_meet(2.5);
  results.push_back({s1, true});
  results.push_back({init_shadow(Permutation{1, 2, 0}), false});
  std::ostringstream out;
  write_coupling_csv(out, results);
  EXPECT_EQ(out.str(), "replica,stage,tau_k\n0,1,2.5\n0,2,2.5\n");
  const auto j = coupling_summary(results);
  EXPECT_EQ(j["replicas"], 2);
  EXPECT_EQ(j["terminal"], 1);
  EXPECT_DOUBLE_EQ(j["tau_m"]["mean"].get<double>(), 2.5);
}

TEST(Quantile, Interpolates) {
  EXPECT_DOUBLE_EQ(empirical_quantile({3, 1, 2}, 0.5), 2.0);
  EXPECT_DOUBLE_EQ(empirical_quantile({0, 10}, 0.25), 2.5);
}

TEST(CoupleFast, StochasticallyFasterOnLattice) {
  // Per-replica ordering under a shared stream does not hold in general; the
  // laws are compared instead.
  const LatticeConfig c{8, 4, 0.5};
  const int n = 20000;
  std::vector<double> fast(n), seq(n);
  for (int r = 0; r < n; ++r) {
    Rng a = make_rng(21, r), b = make_rng(22, r);
    auto sa = init_shadow(4, a);
    auto sb = init_shadow(4, b);
    LatticeSource src_a(c, {1, 3, 6, 8}, Rng(a()));
    LatticeSource src_b(c, {1, 3, 6, 8}, Rng(b()));
    fast[r] = couple_fast(src_a, sa, 1e9).tau_m();
    seq[r] = couple(src_b, sb, 1e9).tau_m();
  }
  EXPECT_TRUE(cdf_dominance(fast, seq).holds);
  double mf = 0, ms = 0;
  for (int r = 0; r < n; ++r) mf += fast[r], ms += seq[r];
  EXPECT_LT(mf, ms);
}
