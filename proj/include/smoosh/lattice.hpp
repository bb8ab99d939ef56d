#pragma once

// One-dimensional warm-up model: m cards on sites 1..N, each step picks a
// site and a direction, and every card at that site follows with
// probability p (reflected at the ends).

#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "smoosh/random.hpp"

namespace smoosh {

struct LatticeConfig {
  int N = 8;
  int m = 1;
  double p = 0.5;

  void validate() const {
    if (N < 2) throw std::invalid_argument("LatticeConfig: N must be >= 2");
    if (m < 1) throw std::invalid_argument("LatticeConfig: m must be >= 1");
    if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("LatticeConfig: p must lie in (0, 1]");
  }

  /// Probability that a card at an interior site moves left (or right) in one step.
  double move_probability() const { return p / (2.0 * N); }
};

struct LatticeState {
  std::vector<int> positions;  // sites in 1..N
  std::int64_t time = 0;
};

template <class URBG>
void lattice_step_in_place(LatticeState& state, URBG& rng, const LatticeConfig& config) {
  std::uniform_int_distribution<int> site_dist(1, config.N);
  const int site = site_dist(rng);
  const bool right = bernoulli(rng, 0.5);
  for (auto& x : state.positions) {
    if (x != site) continue;
    if (!bernoulli(rng, config.p)) continue;
    if (right && x < config.N) ++x;
    if (!right && x > 1) --x;
  }
  ++state.time;
}

template <class URBG>
LatticeState lattice_step(const LatticeState& state, URBG& rng, const LatticeConfig& config) {
  LatticeState next = state;
  lattice_step_in_place(next, rng, config);
  return next;
}

/// Steps until a single card started at `start` first sits at `target`.
/// Idle steps are skipped in geometric blocks: a move attempt (site hit and
/// coin heads) has probability p/N per step, then the direction is fair.
template <class URBG>
std::int64_t hit_time(const LatticeConfig& config, int start, int target, URBG& rng) {
  config.validate();
  if (start < 1 || start > config.N || target < 1 || target > config.N)
    throw std::invalid_argument("hit_time: start and target must be sites in 1..N");
  std::geometric_distribution<std::int64_t> idle(config.p / config.N);
  int x = start;
  std::int64_t steps = 0;
  while (x != target) {
    steps += idle(rng) + 1;
    if (bernoulli(rng, 0.5)) {
      if (x < config.N) ++x;
    } else if (x > 1) {
      --x;
    }
  }
  return steps;
}

/// Exact expected hitting time from the birth-death linear system, solved
/// as a tridiagonal system (Thomas algorithm).
inline double hitting_oracle(const LatticeConfig& config, int start, int target) {
  config.validate();
  if (config.N > 10000) throw std::invalid_argument("hitting_oracle: N must be <= 10^4");
  if (start < 1 || start > config.N || target < 1 || target > config.N)
    throw std::invalid_argument("hitting_oracle: start and target must be sites in 1..N");
  if (start == target) return 0.0;

  const int n = config.N;
  const double q = config.move_probability();
  // Row j (0-based site j+1): diag*h_j - q*h_{j-1} - q*h_{j+1} = 1.
  std::vector<double> lower(n, 0.0), diag(n, 0.0), upper(n, 0.0), rhs(n, 0.0);
  for (int j = 0; j < n; ++j) {
    if (j + 1 == target) {
      diag[j] = 1.0;
      continue;
    }
    if (j > 0) {
      lower[j] = -q;
      diag[j] += q;
    }
    if (j < n - 1) {
      upper[j] = -q;
      diag[j] += q;
    }
    rhs[j] = 1.0;
  }
  for (int j = 1; j < n; ++j) {
    if (diag[j - 1] == 0.0) throw std::runtime_error("hitting_oracle: singular system");
    const double w = lower[j] / diag[j - 1];
    diag[j] -= w * upper[j - 1];
    rhs[j] -= w * rhs[j - 1];
  }
  std::vector<double> h(n, 0.0);
  if (diag[n - 1] == 0.0) throw std::runtime_error("hitting_oracle: singular system");
  h[n - 1] = rhs[n - 1] / diag[n - 1];
  for (int j = n - 2; j >= 0; --j) {
    if (diag[j] == 0.0) throw std::runtime_error("hitting_oracle: singular system");
    h[j] = (rhs[j] - upper[j] * h[j + 1]) / diag[j];
  }
  return h[start - 1];
}

/// Coupling source over the lattice model (unit time steps).
class LatticeSource {
 public:
  LatticeSource(LatticeConfig config, std::vector<int> initial, Rng rng)
      : config_(config), rng_(rng) {
    config_.m = static_cast<int>(initial.size());
    config_.validate();
    for (int x : initial)
      if (x < 1 || x > config_.N) throw std::invalid_argument("LatticeSource: site out of range");
    state_.positions = std::move(initial);
  }

  std::size_t size() const noexcept { return state_.positions.size(); }
  double time() const noexcept { return static_cast<double>(state_.time); }

  bool advance(double horizon) {
    if (static_cast<double>(state_.time + 1) > horizon) return false;
    lattice_step_in_place(state_, rng_, config_);
    return true;
  }

  bool coincide(std::size_t i, std::size_t j) const {
    return state_.positions[i] == state_.positions[j];
  }
  double x_coordinate(std::size_t i) const { return state_.positions[i]; }
  const LatticeState& state() const noexcept { return state_; }

 private:
  LatticeConfig config_;
  Rng rng_;
  LatticeState state_;
};

inline void write_hitting_csv(std::ostream& out, std::span<const std::int64_t> samples) {
  out << "replica,steps\n";
  for (std::size_t r = 0; r < samples.size(); ++r) out << r << ',' << samples[r] << '\n';
}

}  // namespace smoosh
