#pragma once

// The discrete gather-and-spread m-point motion driven by a Poisson point
// process of palm placements on the extended domain.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "smoosh/geometry.hpp"
#include "smoosh/permutation.hpp"
#include "smoosh/random.hpp"

namespace smoosh {

/// Law of the spread direction. Construction checks the unbiasedness
/// moments: mean of cos, sin and sin*cos vanish, cos^2 and sin^2 agree.
class DirectionLaw {
 public:
  enum class Kind { ContinuousUniform, FourAxis, Custom };

  struct Atom {
    double angle;
    double weight;
  };

  static DirectionLaw continuous_uniform() { return DirectionLaw(Kind::ContinuousUniform, {}); }

  static DirectionLaw four_axis() {
    const double h = std::numbers::pi / 2.0;
    return DirectionLaw(Kind::FourAxis, {{0.0, 0.25}, {h, 0.25}, {2.0 * h, 0.25}, {3.0 * h, 0.25}});
  }

  static DirectionLaw custom(std::vector<Atom> atoms) {
    return DirectionLaw(Kind::Custom, std::move(atoms));
  }

  Kind kind() const noexcept { return kind_; }
  double sigma2() const noexcept { return sigma2_; }
  std::span<const Atom> atoms() const noexcept { return atoms_; }

  template <class URBG>
  double sample(URBG& rng) const {
    if (kind_ == Kind::ContinuousUniform) return 2.0 * std::numbers::pi * uniform01(rng);
    const double u = uniform01(rng);
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()),
                                         atoms_.size() - 1);
    return atoms_[k].angle;
  }

 private:
  DirectionLaw(Kind kind, std::vector<Atom> atoms) : kind_(kind), atoms_(std::move(atoms)) {
    if (kind_ == Kind::ContinuousUniform) {
      sigma2_ = 0.5;
      return;
    }
    if (atoms_.empty()) throw std::invalid_argument("DirectionLaw: no atoms");
    double total = 0.0;
    for (const auto& a : atoms_) {
      if (!(a.weight >= 0.0) || !std::isfinite(a.angle))
        throw std::invalid_argument("DirectionLaw: weights must be nonnegative, angles finite");
      total += a.weight;
    }
    if (!(total > 0.0)) throw std::invalid_argument("DirectionLaw: total weight must be positive");
    double c = 0, s = 0, sc = 0, c2 = 0, s2 = 0, acc = 0;
    for (auto& a : atoms_) {
      a.weight /= total;
      const double ca = std::cos(a.angle), sa = std::sin(a.angle);
      c += a.weight * ca;
      s += a.weight * sa;
      sc += a.weight * sa * ca;
      c2 += a.weight * ca * ca;
      s2 += a.weight * sa * sa;
      acc += a.weight;
      cumulative_.push_back(acc);
    }
    const double tol = kind_ == Kind::FourAxis ? 1e-12 : 1e-9;
    if (std::abs(c) > tol || std::abs(s) > tol || std::abs(sc) > tol || std::abs(c2 - s2) > tol) {
      std::ostringstream msg;
      msg << "DirectionLaw: unbiasedness violated (E cos=" << c << ", E sin=" << s
          << ", E sin cos=" << sc << ", E cos^2 - E sin^2=" << c2 - s2 << ")";
      throw std::invalid_argument(msg.str());
    }
    sigma2_ = c2;
  }

  Kind kind_;
  std::vector<Atom> atoms_;
  std::vector<double> cumulative_;
  double sigma2_ = 0.5;
};

enum class GatherMode { EveryEvent, RareGather, Never };

struct ModelConfig {
  Table table{0.2};
  double s0 = 0.1;
  double p = 0.5;
  double lambda = 1.0;
  DirectionLaw direction = DirectionLaw::continuous_uniform();
  GatherMode gather_mode = GatherMode::EveryEvent;

  /// Probability that an atom gathers.
  double gather_probability() const {
    switch (gather_mode) {
      case GatherMode::EveryEvent: return 1.0;
      case GatherMode::RareGather: return 1.0 / lambda;
      case GatherMode::Never: return 0.0;
    }
    return 1.0;
  }

  /// Total event rate lambda * Area(extended domain).
  double event_rate() const { return lambda * table.extended_area(); }

  void validate() const {
    if (!(s0 > 0.0) || !std::isfinite(s0)) throw std::invalid_argument("ModelConfig: s0 must be > 0");
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("ModelConfig: p must lie in (0, 1)");
    if (!(lambda > 0.0) || !std::isfinite(lambda))
      throw std::invalid_argument("ModelConfig: lambda must be > 0");
    if (gather_mode == GatherMode::RareGather && lambda < 1.0)
      throw std::invalid_argument("ModelConfig: RareGather needs lambda >= 1 (gather prob 1/lambda)");
  }
};

/// One atom of the driving point process.
struct EventAtom {
  double time = 0.0;
  Point2 center;
  double angle = 0.0;
  std::vector<bool> coins;
  bool gather = true;
};

/// Piecewise-constant, right-continuous record of card positions.
struct MotionPath {
  std::size_t cards = 0;
  std::vector<double> times;
  std::vector<Point2> positions;  // times.size() x cards, row-major
  std::vector<EventAtom> events;  // filled only when requested

  std::size_t samples() const noexcept { return times.size(); }
  Point2 at(std::size_t sample, std::size_t card) const { return positions[sample * cards + card]; }
  std::span<const Point2> snapshot(std::size_t sample) const {
    return std::span<const Point2>(positions).subspan(sample * cards, cards);
  }
  void record(double t, std::span<const Point2> z) {
    times.push_back(t);
    positions.insert(positions.end(), z.begin(), z.end());
  }
};

inline void gather_in_place(std::span<Point2> positions, Point2 w, const Table& table) {
  const Point2 heap = clamp_center(w, table);
  for (auto& z : positions)
    if (under_palm(z, w, table.delta())) z = heap;
}

/// Cards under the palm at w are moved to the gathering point.
inline std::vector<Point2> gather(std::span<const Point2> positions, Point2 w, const Table& table) {
  std::vector<Point2> out(positions.begin(), positions.end());
  gather_in_place(out, w, table);
  return out;
}

inline void spread_in_place(std::span<Point2> positions, Point2 w, double angle, double s0,
                            const std::vector<bool>& coins, const Table& table) {
  if (coins.size() != positions.size())
    throw std::invalid_argument("spread: one coin per card required");
  if (!table.in_extended_domain(w)) throw std::domain_error("spread: palm centre outside extended domain");
  const double dx = s0 * std::cos(angle);
  const double dy = s0 * std::sin(angle);
  for (std::size_t j = 0; j < positions.size(); ++j) {
    auto& z = positions[j];
    if (!coins[j] || !under_palm(z, w, table.delta())) continue;
    z = {clamp(z.x + dx, 0.0, table.width()), clamp(z.y + dy, 0.0, table.height())};
  }
}

/// Cards under the palm whose coin shows heads are dragged distance s0 in
/// direction `angle`, each coordinate stopping at the table edge.
inline std::vector<Point2> spread(std::span<const Point2> positions, Point2 w, double angle, double s0,
                                  const std::vector<bool>& coins, const Table& table) {
  std::vector<Point2> out(positions.begin(), positions.end());
  spread_in_place(out, w, angle, s0, coins, table);
  return out;
}

inline void step_in_place(std::span<Point2> positions, const EventAtom& atom, const ModelConfig& config) {
  if (atom.gather) gather_in_place(positions, atom.center, config.table);
  spread_in_place(positions, atom.center, atom.angle, config.s0, atom.coins, config.table);
}

inline std::vector<Point2> step(std::span<const Point2> positions, const EventAtom& atom,
                                const ModelConfig& config) {
  std::vector<Point2> out(positions.begin(), positions.end());
  step_in_place(out, atom, config);
  return out;
}

/// Draws the next atom after time `now` into `atom`, reusing its storage.
template <class URBG>
void draw_event(URBG& rng, const ModelConfig& config, std::size_t m, double now, EventAtom& atom) {
  std::exponential_distribution<double> gap(config.event_rate());
  atom.time = now + gap(rng);
  atom.center = sample_extended(rng, config.table);
  atom.angle = config.direction.sample(rng);
  atom.coins.resize(m);
  for (std::size_t j = 0; j < m; ++j) atom.coins[j] = bernoulli(rng, config.p);
  switch (config.gather_mode) {
    case GatherMode::EveryEvent: atom.gather = true; break;
    case GatherMode::RareGather: atom.gather = bernoulli(rng, 1.0 / config.lambda); break;
    case GatherMode::Never: atom.gather = false; break;
  }
}

template <class URBG>
EventAtom next_event(URBG& rng, const ModelConfig& config, std::size_t m, double now = 0.0) {
  EventAtom atom;
  draw_event(rng, config, m, now, atom);
  return atom;
}

struct SimulationOptions {
  std::size_t record_every = 1;           // record after every k-th event
  std::optional<std::size_t> max_events;  // stop after this many events
  bool keep_events = false;
};

/// Runs the m-point motion over all atoms with time <= horizon.
template <class URBG>
MotionPath simulate(const ModelConfig& config, std::span<const Point2> initial, double horizon,
                    URBG& rng, const SimulationOptions& options = {}) {
  config.validate();
  for (const auto& z : initial)
    if (!config.table.contains(z)) throw std::invalid_argument("simulate: initial position off the table");
  if (options.record_every == 0) throw std::invalid_argument("simulate: record_every must be >= 1");

  MotionPath path;
  path.cards = initial.size();
  std::vector<Point2> z(initial.begin(), initial.end());
  path.record(0.0, z);

  EventAtom atom;
  double now = 0.0;
  std::size_t count = 0;
  bool recorded_last = true;
  for (;;) {
    if (options.max_events && count >= *options.max_events) break;
    draw_event(rng, config, z.size(), now, atom);
    if (atom.time > horizon) break;
    now = atom.time;
    step_in_place(z, atom, config);
    ++count;
    if (options.keep_events) path.events.push_back(atom);
    recorded_last = count % options.record_every == 0;
    if (recorded_last) path.record(now, z);
  }
  const double end = options.max_events && count >= *options.max_events ? now : horizon;
  if (!recorded_last || end > path.times.back()) path.record(end, z);
  return path;
}

/// Rank-to-index permutation: gamma[i] is the index of the card with the
/// i-th smallest value, ties resolved by fresh i.i.d. uniforms.
template <class URBG>
Permutation rank_to_index(std::span<const double> xs, URBG& rng) {
  if (xs.empty()) throw std::invalid_argument("rank_to_index: need at least one value");
  std::vector<std::pair<double, double>> keys(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) keys[i] = {xs[i], uniform01(rng)};
  Permutation gamma = identity_permutation(xs.size());
  std::sort(gamma.begin(), gamma.end(), [&](int a, int b) { return keys[a] < keys[b]; });
  return gamma;
}

template <class URBG>
Permutation rank_to_index(std::span<const Point2> z, URBG& rng) {
  std::vector<double> xs(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) xs[i] = z[i].x;
  return rank_to_index(std::span<const double>(xs), rng);
}

/// Coupling source over the discrete model. Copying the source copies its
/// random stream, so two copies replay the same event sequence.
class DiscreteSource {
 public:
  DiscreteSource(ModelConfig config, std::vector<Point2> initial, Rng rng)
      : config_(std::move(config)), z_(std::move(initial)), rng_(rng) {
    config_.validate();
    for (const auto& z : z_)
      if (!config_.table.contains(z)) throw std::invalid_argument("DiscreteSource: initial position off the table");
    draw_event(rng_, config_, z_.size(), 0.0, pending_);
  }

  std::size_t size() const noexcept { return z_.size(); }
  double time() const noexcept { return now_; }

  /// Applies the next atom if it occurs by `horizon`; otherwise moves the
  /// clock to the horizon and returns false.
  bool advance(double horizon) {
    if (pending_.time > horizon) {
      now_ = std::max(now_, horizon);
      return false;
    }
    now_ = pending_.time;
    step_in_place(z_, pending_, config_);
    ++events_;
    draw_event(rng_, config_, z_.size(), now_, pending_);
    return true;
  }

  bool coincide(std::size_t i, std::size_t j) const { return z_[i] == z_[j]; }
  double x_coordinate(std::size_t i) const { return z_[i].x; }
  std::span<const Point2> positions() const noexcept { return z_; }
  std::size_t events() const noexcept { return events_; }
  Rng& rng() noexcept { return rng_; }
  const ModelConfig& config() const noexcept { return config_; }

 private:
  ModelConfig config_;
  std::vector<Point2> z_;
  Rng rng_;
  EventAtom pending_;
  double now_ = 0.0;
  std::size_t events_ = 0;
};

struct ClusterSummary {
  std::size_t total = 0;
  std::size_t boundary = 0;
  std::size_t largest = 0;
  std::size_t singletons = 0;
};

/// Clusters are maximal groups of cards at exactly equal positions.
inline ClusterSummary count_clusters(std::span<const Point2> positions, const Table& table) {
  std::map<std::pair<double, double>, std::size_t> groups;
  for (const auto& z : positions) ++groups[{z.x, z.y}];
  ClusterSummary s;
  s.total = groups.size();
  for (const auto& [key, n] : groups) {
    if (table.on_boundary({key.first, key.second})) ++s.boundary;
    s.largest = std::max(s.largest, n);
    if (n == 1) ++s.singletons;
  }
  return s;
}

inline void write_path_csv_header(std::ostream& out) { out << "replica,time,card,x,y\n"; }

inline void write_path_csv(std::ostream& out, const MotionPath& path, std::size_t replica) {
  for (std::size_t k = 0; k < path.samples(); ++k)
    for (std::size_t j = 0; j < path.cards; ++j) {
      const auto z = path.at(k, j);
      out << replica << ',' << path.times[k] << ',' << j + 1 << ',' << z.x << ',' << z.y << '\n';
    }
}

inline void write_event_log_header(std::ostream& out, bool with_replica) {
  if (with_replica) out << "replica,";
  out << "time,wx,wy,theta,gather,coins\n";
}

inline void write_event_log(std::ostream& out, std::span<const EventAtom> events,
                            std::optional<std::size_t> replica = std::nullopt) {
  for (const auto& e : events) {
    if (replica) out << *replica << ',';
    out << e.time << ',' << e.center.x << ',' << e.center.y << ',' << e.angle << ','
        << (e.gather ? 1 : 0) << ',';
    for (bool c : e.coins) out << (c ? '1' : '0');
    out << '\n';
  }
}

}  // namespace smoosh
