#pragma once

// Measuring permutation laws: total variation to uniform, chi-square
// uniformity, deck statistics, and empirical CDF comparisons.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>
#include <json.hpp>

#include "smoosh/permutation.hpp"
#include "smoosh/random.hpp"

namespace smoosh {

inline constexpr std::size_t kMaxStatsM = 8;

/// Counts of observed permutations of [m], indexed by Lehmer rank.
class PermSample {
 public:
  explicit PermSample(std::size_t m) : m_(m) {
    if (m == 0 || m > kMaxStatsM) throw std::invalid_argument("PermSample: m must lie in 1..8");
    counts_.assign(factorial(m), 0);
  }

  std::size_t m() const noexcept { return m_; }
  std::uint64_t n_total() const noexcept { return n_total_; }
  std::size_t cells() const noexcept { return counts_.size(); }
  std::span<const std::uint64_t> counts() const noexcept { return counts_; }
  std::uint64_t count(std::span<const int> perm) const { return counts_[checked_rank(perm)]; }

  void add(std::span<const int> perm, std::uint64_t times = 1) {
    counts_[checked_rank(perm)] += times;
    n_total_ += times;
  }

  void merge(const PermSample& other) {
    if (other.m_ != m_) throw std::invalid_argument("PermSample::merge: different m");
    for (std::size_t k = 0; k < counts_.size(); ++k) counts_[k] += other.counts_[k];
    n_total_ += other.n_total_;
  }

  static PermSample from_counts(std::size_t m, std::vector<std::uint64_t> counts) {
    PermSample s(m);
    if (counts.size() != s.counts_.size()) throw std::invalid_argument("PermSample::from_counts: need m! cells");
    s.counts_ = std::move(counts);
    s.n_total_ = 0;
    for (auto c : s.counts_) s.n_total_ += c;
    return s;
  }

 private:
  std::uint64_t checked_rank(std::span<const int> perm) const {
    if (perm.size() != m_ || !is_permutation(perm)) throw std::invalid_argument("PermSample: not a permutation of [m]");
    return permutation_rank(perm);
  }

  std::size_t m_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t n_total_ = 0;
};

/// Throws if n_total < 10 m!, quoting the recommended 100 m!.
inline void require_sample_size(const PermSample& s) {
  const std::uint64_t cells = s.cells();
  if (s.n_total() < 10 * cells) {
    std::ostringstream msg;
    msg << "undersampled: n_total = " << s.n_total() << " < 10 * " << s.m() << "! = " << 10 * cells
        << "; use at least " << 100 * cells << " samples for a plug-in bias below sqrt(m!/n)/2";
    throw std::invalid_argument(msg.str());
  }
}

inline double tv_plugin(std::span<const std::uint64_t> counts, std::uint64_t n) {
  const double u = 1.0 / static_cast<double>(counts.size());
  double sum = 0.0;
  for (auto c : counts) sum += std::abs(static_cast<double>(c) / static_cast<double>(n) - u);
  return 0.5 * sum;
}

struct TvEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Plug-in TV distance to uniform with a multinomial bootstrap standard error.
inline TvEstimate tv_to_uniform(const PermSample& s, std::size_t resamples = 200, std::uint64_t seed = 0x7f4a7c15) {
  require_sample_size(s);
  TvEstimate out;
  out.estimate = tv_plugin(s.counts(), s.n_total());
  if (resamples < 2) return out;
  Rng rng(seed);
  std::vector<std::uint64_t> boot(s.cells());
  std::vector<double> values(resamples);
  const double n = static_cast<double>(s.n_total());
  for (std::size_t b = 0; b < resamples; ++b) {
    // Multinomial draw as a chain of conditional binomials.
    std::uint64_t left = s.n_total();
    double mass_left = 1.0;
    for (std::size_t k = 0; k < boot.size(); ++k) {
      const double pk = static_cast<double>(s.counts()[k]) / n;
      if (k + 1 == boot.size() || left == 0) {
        boot[k] = left;
      } else {
        const double q = mass_left > 0.0 ? std::clamp(pk / mass_left, 0.0, 1.0) : 0.0;
        boot[k] = std::binomial_distribution<std::uint64_t>(left, q)(rng);
      }
      left -= boot[k];
      mass_left -= pk;
    }
    values[b] = tv_plugin(boot, s.n_total());
  }
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(resamples);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  out.std_error = std::sqrt(ss / static_cast<double>(resamples - 1));
  return out;
}

struct ChiSquare {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Pearson statistic against uniform over m! cells, chi-square tail with m!-1 dof.
inline ChiSquare chi_square_uniformity(const PermSample& s) {
  require_sample_size(s);
  const double expected = static_cast<double>(s.n_total()) / static_cast<double>(s.cells());
  ChiSquare out;
  for (auto c : s.counts()) {
    const double d = static_cast<double>(c) - expected;
    out.statistic += d * d / expected;
  }
  const double dof = static_cast<double>(s.cells()) - 1.0;
  out.p_value = dof > 0.0 ? boost::math::gamma_q(0.5 * dof, 0.5 * out.statistic) : 1.0;
  return out;
}

/// Length of the longest strictly increasing subsequence (patience sorting).
inline std::size_t longest_increasing_subsequence(std::span<const int> seq) {
  std::vector<int> piles;
  for (int v : seq) {
    auto it = std::lower_bound(piles.begin(), piles.end(), v);
    if (it == piles.end())
      piles.push_back(v);
    else
      *it = v;
  }
  return piles.size();
}

inline std::size_t cycle_count(std::span<const int> perm) {
  std::vector<char> seen(perm.size(), 0);
  std::size_t cycles = 0;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (seen[i]) continue;
    ++cycles;
    for (std::size_t j = i; !seen[j]; j = static_cast<std::size_t>(perm[j])) seen[j] = 1;
  }
  return cycles;
}

/// Deck statistics of `perm` relative to `reference`; both map deck
/// position to card label. Positions are 1-based.
struct DeckStatistics {
  int top_position = 0;
  int bottom_position = 0;
  int adjacent_preserved = 0;
  int cayley = 0;
  int footrule = 0;
  int lis = 0;
};

inline DeckStatistics test_statistics(std::span<const int> perm, std::span<const int> reference) {
  if (perm.size() != reference.size() || !is_permutation(perm) || !is_permutation(reference))
    throw std::invalid_argument("test_statistics: need two permutations of the same [m]");
  // rel[i] = original position of the card now at position i.
  const Permutation rel = compose(inverse(reference), perm);
  const int m = static_cast<int>(rel.size());
  DeckStatistics st;
  for (int i = 0; i < m; ++i) {
    if (rel[i] == 0) st.top_position = i + 1;
    if (rel[i] == m - 1) st.bottom_position = i + 1;
    if (i + 1 < m && rel[i + 1] == rel[i] + 1) ++st.adjacent_preserved;
    st.footrule += std::abs(rel[i] - i);
  }
  st.cayley = m - static_cast<int>(cycle_count(rel));
  st.lis = static_cast<int>(longest_increasing_subsequence(rel));
  return st;
}

inline nlohmann::json to_json(const DeckStatistics& s) {
  return {{"top_position", s.top_position}, {"bottom_position", s.bottom_position},
          {"adjacent_preserved", s.adjacent_preserved}, {"cayley", s.cayley},
          {"footrule", s.footrule}, {"lis", s.lis}};
}

inline std::vector<double> sorted_copy(std::span<const double> xs) {
  std::vector<double> v(xs.begin(), xs.end());
  std::sort(v.begin(), v.end());
  return v;
}

/// One-sample Kolmogorov-Smirnov distance to Uniform[lo, hi].
inline double ks_uniform(std::span<const double> xs, double lo = 0.0, double hi = 1.0) {
  if (xs.empty()) throw std::invalid_argument("ks_uniform: empty sample");
  const auto v = sorted_copy(xs);
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = std::clamp((v[i] - lo) / (hi - lo), 0.0, 1.0);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

/// Walks the merged order of two sorted samples, calling visit(Fa, Fb)
/// after each distinct value.
template <class Visit>
void walk_ecdfs(const std::vector<double>& a, const std::vector<double>& b, Visit&& visit) {
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    double x;
    if (j == b.size() || (i < a.size() && a[i] <= b[j]))
      x = a[i];
    else
      x = b[j];
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    visit(static_cast<double>(i) / na, static_cast<double>(j) / nb);
  }
}

/// Two-sample Kolmogorov-Smirnov distance.
inline double ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: empty sample");
  double d = 0.0;
  walk_ecdfs(sorted_copy(a), sorted_copy(b), [&](double fa, double fb) { d = std::max(d, std::abs(fa - fb)); });
  return d;
}

/// Asymptotic two-sample KS critical value at level alpha.
inline double ks_critical(std::size_t na, std::size_t nb, double alpha) {
  const double n = static_cast<double>(na), m = static_cast<double>(nb);
  return std::sqrt(-0.5 * std::log(alpha / 2.0) * (n + m) / (n * m));
}

struct Dominance {
  bool holds = false;
  double violation = 0.0;  // max_x (F_b(x) - F_a(x)); positive means b sits below a somewhere
  double tolerance = 0.0;
};

/// Checks a <= b stochastically (F_a >= F_b pointwise) up to the two-sample
/// DKW band at level alpha.
inline Dominance cdf_dominance(std::span<const double> a, std::span<const double> b, double alpha = 1e-3) {
  if (a.empty() || b.empty()) throw std::invalid_argument("cdf_dominance: empty sample");
  Dominance out;
  out.violation = -1.0;
  walk_ecdfs(sorted_copy(a), sorted_copy(b),
             [&](double fa, double fb) { out.violation = std::max(out.violation, fb - fa); });
  out.tolerance = ks_critical(a.size(), b.size(), alpha);
  out.holds = out.violation <= out.tolerance;
  return out;
}

struct StatSummary {
  double mean = 0.0;
  double sd = 0.0;
};

inline nlohmann::json perm_report(const PermSample& s, std::span<const DeckStatistics> stats) {
  nlohmann::json j{{"m", s.m()}, {"n_total", s.n_total()}};
  if (s.n_total() >= 10 * s.cells()) {
    const auto tv = tv_to_uniform(s);
    const auto chi = chi_square_uniformity(s);
    j["tv"] = tv.estimate;
    j["tv_se"] = tv.std_error;
    j["chi2"] = chi.statistic;
    j["p_value"] = chi.p_value;
  } else {
    for (const char* k : {"tv", "tv_se", "chi2", "p_value"}) j[k] = nullptr;
    j["note"] = "n_total < 10 m!; tv and chi2 omitted";
  }
  auto summarize = [&](auto field) {
    StatSummary r;
    if (stats.empty()) return nlohmann::json{{"mean", nullptr}, {"sd", nullptr}};
    for (const auto& st : stats) r.mean += field(st);
    r.mean /= static_cast<double>(stats.size());
    for (const auto& st : stats) r.sd += (field(st) - r.mean) * (field(st) - r.mean);
    r.sd = stats.size() > 1 ? std::sqrt(r.sd / static_cast<double>(stats.size() - 1)) : 0.0;
    return nlohmann::json{{"mean", r.mean}, {"sd", r.sd}};
  };
  j["statistics"] = {
      {"top_position", summarize([](const DeckStatistics& d) { return double(d.top_position); })},
      {"bottom_position", summarize([](const DeckStatistics& d) { return double(d.bottom_position); })},
      {"adjacent_preserved", summarize([](const DeckStatistics& d) { return double(d.adjacent_preserved); })},
      {"cayley", summarize([](const DeckStatistics& d) { return double(d.cayley); })},
      {"footrule", summarize([](const DeckStatistics& d) { return double(d.footrule); })},
      {"lis", summarize([](const DeckStatistics& d) { return double(d.lis); })}};
  return j;
}

}  // namespace smoosh
