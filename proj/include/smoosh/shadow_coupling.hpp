#pragma once

// Shadow-index coupling. A uniform "shadow" permutation is attached to the
// cards at time zero; whenever the designated pair of cards coincides their
// shadow indices are swapped so that one more index becomes a fixed point.
// The rank-to-shadow-index permutation pi* o gamma stays exactly uniform and
// equals gamma once pi* is the identity, which bounds the total variation
// distance of gamma(t) by P(tau(m) > t).

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <json.hpp>

#include "smoosh/permutation.hpp"

namespace smoosh {

/// An exchangeable m-point motion the coupling engine can drive.
///
/// advance(h) applies the next transition if it happens by time h and
/// returns true; otherwise it brings the clock to h and returns false.
/// Implementations must satisfy the exchangeability contract: swapping the
/// future paths of two coinciding cards leaves the law unchanged. That is a
/// property of the model and is checked statistically in the test suite,
/// not here.
template <class S>
concept PointMotionSource = requires(S s, const S cs, std::size_t i, std::size_t j, double h) {
  { cs.size() } -> std::convertible_to<std::size_t>;
  { cs.time() } -> std::convertible_to<double>;
  { s.advance(h) } -> std::same_as<bool>;
  { cs.coincide(i, j) } -> std::same_as<bool>;
  { cs.x_coordinate(i) } -> std::convertible_to<double>;
};

/// Evolves the source until cards i and j coincide (returning the time) or
/// the horizon is reached (returning nullopt). A pair that already
/// coincides meets at the current time.
template <PointMotionSource S>
std::optional<double> advance_to_meet(S& source, std::size_t i, std::size_t j, double horizon) {
  while (!source.coincide(i, j)) {
    if (!source.advance(horizon)) return std::nullopt;
  }
  return source.time();
}

/// Runs the source up to `horizon`.
template <PointMotionSource S>
void advance_until(S& source, double horizon) {
  while (source.advance(horizon)) {
  }
}

template <PointMotionSource S>
std::vector<double> x_coordinates(const S& source) {
  std::vector<double> xs(source.size());
  for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = source.x_coordinate(i);
  return xs;
}

class ShadowState {
 public:
  explicit ShadowState(Permutation pi) : pi_star_(std::move(pi)) {
    if (pi_star_.empty() || !is_permutation(pi_star_))
      throw std::invalid_argument("ShadowState: not a permutation of [m]");
    refresh();
  }

  std::size_t size() const noexcept { return pi_star_.size(); }
  const Permutation& pi_star() const noexcept { return pi_star_; }
  bool is_fixed(std::size_t i) const { return pi_star_[i] == static_cast<int>(i); }
  std::vector<int> fixed() const {
    std::vector<int> f;
    for (std::size_t i = 0; i < size(); ++i)
      if (is_fixed(i)) f.push_back(static_cast<int>(i));
    return f;
  }
  bool terminal() const noexcept { return active_i_ < 0; }
  /// Smallest non-fixed index, or -1 when terminal.
  int active_i() const noexcept { return active_i_; }
  /// Shadow index of active_i, or -1 when terminal.
  int active_j() const noexcept { return active_i_ < 0 ? -1 : pi_star_[active_i_]; }
  /// Number of swaps performed so far (the stage k).
  std::size_t stage() const noexcept { return stage_times_.size(); }
  std::span<const double> stage_times() const noexcept { return stage_times_; }

  /// tau(l) for l in 1..m: the recorded stage time, the stopping time for
  /// stages past termination, and +inf for stages not yet reached.
  double tau(std::size_t l) const {
    if (l == 0 || l > size()) throw std::out_of_range("ShadowState::tau: l must lie in 1..m");
    if (l <= stage_times_.size()) return stage_times_[l - 1];
    if (terminal()) return stage_times_.empty() ? 0.0 : stage_times_.back();
    return std::numeric_limits<double>::infinity();
  }
  double tau_m() const { return tau(size()); }

  /// Swap at a meet of the active pair at time t.
  void record_meet(double t) {
    if (terminal()) throw std::logic_error("record_meet: coupling already terminal");
    record_meet_at(static_cast<std::size_t>(active_i_), t);
  }

  /// Swap at a meet of card i with card pi*(i) (i must not be fixed):
  /// pi*(j) <- j and pi*(i) <- old pi*(j), where j = pi*(i).
  void record_meet_at(std::size_t i, double t) {
    if (terminal()) throw std::logic_error("record_meet: coupling already terminal");
    if (i >= size() || is_fixed(i)) throw std::invalid_argument("record_meet: index is fixed or out of range");
    if (!stage_times_.empty() && t < stage_times_.back())
      throw std::invalid_argument("record_meet: stage times must be nondecreasing");
    const auto j = static_cast<std::size_t>(pi_star_[i]);
    pi_star_[i] = pi_star_[j];
    pi_star_[j] = static_cast<int>(j);
    stage_times_.push_back(t);
    refresh();
  }

 private:
  void refresh() {
    active_i_ = -1;
    for (std::size_t i = 0; i < pi_star_.size(); ++i)
      if (!is_fixed(i)) {
        active_i_ = static_cast<int>(i);
        break;
      }
  }

  Permutation pi_star_;
  int active_i_ = -1;
  std::vector<double> stage_times_;
};

inline ShadowState init_shadow(Permutation pi) { return ShadowState(std::move(pi)); }

template <class URBG>
ShadowState init_shadow(std::size_t m, URBG& rng) {
  if (m == 0) throw std::invalid_argument("init_shadow: m must be >= 1");
  return ShadowState(random_permutation(m, rng));
}

inline ShadowState record_meet(ShadowState state, double t) {
  state.record_meet(t);
  return state;
}

/// Rank-to-shadow-index permutation pi* o gamma.
inline Permutation sigma_star(std::span<const int> gamma, std::span<const int> pi_star) {
  return compose(pi_star, gamma);
}

struct CouplingResult {
  ShadowState shadow;
  bool terminal = false;

  double tau_m() const { return shadow.tau_m(); }
  std::size_t swaps() const { return shadow.stage(); }
};

/// Sequential stages: each stage waits for the active pair to meet.
template <PointMotionSource S>
CouplingResult couple(S& source, ShadowState shadow, double horizon) {
  if (shadow.size() != source.size()) throw std::invalid_argument("couple: shadow size differs from source");
  while (!shadow.terminal()) {
    const auto i = static_cast<std::size_t>(shadow.active_i());
    const auto j = static_cast<std::size_t>(shadow.active_j());
    const auto met = advance_to_meet(source, i, j, horizon);
    if (!met) break;
    shadow.record_meet(*met);
  }
  const bool done = shadow.terminal();
  return {std::move(shadow), done};
}

/// Faster variant: any non-fixed i meeting pi*(i) triggers the swap. Pairs
/// meeting at the same instant resolve to the smallest i.
template <PointMotionSource S>
CouplingResult couple_fast(S& source, ShadowState shadow, double horizon) {
  if (shadow.size() != source.size()) throw std::invalid_argument("couple_fast: shadow size differs from source");
  while (!shadow.terminal()) {
    bool swapped = false;
    for (std::size_t i = 0; i < shadow.size(); ++i) {
      if (shadow.is_fixed(i)) continue;
      if (source.coincide(i, static_cast<std::size_t>(shadow.pi_star()[i]))) {
        shadow.record_meet_at(i, source.time());
        swapped = true;
        break;
      }
    }
    if (swapped) continue;
    if (!source.advance(horizon)) break;
  }
  const bool done = shadow.terminal();
  return {std::move(shadow), done};
}

/// Rows (replica, stage, tau_k), 1-based stages. Terminal runs list all m
/// stage times; unfinished runs list the stages reached.
inline void write_coupling_csv(std::ostream& out, std::span<const CouplingResult> results) {
  out << "replica,stage,tau_k\n";
  for (std::size_t r = 0; r < results.size(); ++r) {
    const auto& s = results[r].shadow;
    const std::size_t stages = results[r].terminal ? s.size() : s.stage();
    for (std::size_t l = 1; l <= stages; ++l) out << r << ',' << l << ',' << s.tau(l) << '\n';
  }
}

inline double empirical_quantile(std::vector<double> sorted_or_not, double q) {
  if (sorted_or_not.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(sorted_or_not.begin(), sorted_or_not.end());
  const double pos = q * static_cast<double>(sorted_or_not.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted_or_not.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return sorted_or_not[lo] * (1.0 - w) + sorted_or_not[hi] * w;
}

inline nlohmann::json coupling_summary(std::span<const CouplingResult> results) {
  std::vector<double> taus;
  for (const auto& r : results)
    if (r.terminal) taus.push_back(r.tau_m());
  nlohmann::json j;
  j["replicas"] = results.size();
  j["terminal"] = taus.size();
  if (!taus.empty()) {
    double mean = 0.0;
    for (double t : taus) mean += t;
    mean /= static_cast<double>(taus.size());
    double var = 0.0;
    for (double t : taus) var += (t - mean) * (t - mean);
    var = taus.size() > 1 ? var / static_cast<double>(taus.size() - 1) : 0.0;
    j["tau_m"] = {{"mean", mean},
                  {"sd", std::sqrt(var)},
                  {"q05", empirical_quantile(taus, 0.05)},
                  {"q25", empirical_quantile(taus, 0.25)},
                  {"q50", empirical_quantile(taus, 0.50)},
                  {"q75", empirical_quantile(taus, 0.75)},
                  {"q95", empirical_quantile(taus, 0.95)},
                  {"max", *std::max_element(taus.begin(), taus.end())}};
  }
  return j;
}

}  // namespace smoosh
