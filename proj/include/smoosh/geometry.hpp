#pragma once

// Planar primitives: the table, the palm, the extended domain of palm
// centres and the lens area of two overlapping palms.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "smoosh/quadrature.hpp"
#include "smoosh/random.hpp"

namespace smoosh {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

inline double squared_distance(Point2 a, Point2 b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

inline double distance(Point2 a, Point2 b) { return std::sqrt(squared_distance(a, b)); }

inline bool is_finite(Point2 z) { return std::isfinite(z.x) && std::isfinite(z.y); }

/// Rectangular table [0, width] x [0, height] with palm radius delta.
class Table {
 public:
  explicit Table(double delta) : Table(1.0, 1.0, delta) {}

  Table(double width, double height, double delta) : width_(width), height_(height), delta_(delta) {
    if (!(width > 0.0) || !(height > 0.0) || !(delta > 0.0) || !std::isfinite(width) ||
        !std::isfinite(height) || !std::isfinite(delta)) {
      std::ostringstream msg;
      msg << "Table: width, height and delta must be finite and positive (got " << width << ", "
          << height << ", " << delta << ")";
      throw std::invalid_argument(msg.str());
    }
  }

  double width() const noexcept { return width_; }
  double height() const noexcept { return height_; }
  double delta() const noexcept { return delta_; }

  bool contains(Point2 z) const noexcept {
    return z.x >= 0.0 && z.x <= width_ && z.y >= 0.0 && z.y <= height_;
  }

  bool on_boundary(Point2 z) const noexcept {
    return z.x == 0.0 || z.y == 0.0 || z.x == width_ || z.y == height_;
  }

  /// Euclidean distance from w to the table rectangle (0 inside).
  double distance_to(Point2 w) const noexcept {
    const double dx = std::max({0.0, -w.x, w.x - width_});
    const double dy = std::max({0.0, -w.y, w.y - height_});
    return std::sqrt(dx * dx + dy * dy);
  }

  /// Membership in the Minkowski sum of the table and the palm.
  bool in_extended_domain(Point2 w) const noexcept { return distance_to(w) <= delta_; }

  /// Exact area of the Minkowski sum (rounded corners).
  double extended_area() const noexcept {
    return width_ * height_ + 2.0 * delta_ * (width_ + height_) +
           std::numbers::pi * delta_ * delta_;
  }

  /// Area of the bounding box of the extended domain, (1 + 2 delta)^2 on the
  /// unit table; the constant in the mixing bound uses this.
  double extended_area_bound() const noexcept {
    return (width_ + 2.0 * delta_) * (height_ + 2.0 * delta_);
  }

 private:
  double width_;
  double height_;
  double delta_;
};

inline double clamp(double x, double lo, double hi) { return std::max(std::min(x, hi), lo); }

/// Closed-disc membership: ||z - center|| <= delta.
inline bool under_palm(Point2 z, Point2 center, double delta) {
  return squared_distance(z, center) <= delta * delta;
}

/// Gathering point for a palm centred at w: the coordinate-wise clamp of w
/// into the table. Throws std::domain_error if w lies outside the extended
/// domain, which means the event stream is corrupted.
inline Point2 clamp_center(Point2 w, const Table& table) {
  if (!is_finite(w) || !table.in_extended_domain(w)) {
    std::ostringstream msg;
    msg << "clamp_center: palm centre (" << w.x << ", " << w.y
        << ") lies outside the extended domain";
    throw std::domain_error(msg.str());
  }
  return {clamp(w.x, 0.0, table.width()), clamp(w.y, 0.0, table.height())};
}

/// Uniform point of the extended domain by rejection from its bounding box.
template <class URBG>
Point2 sample_extended(URBG& rng, const Table& table) {
  const double d = table.delta();
  std::uniform_real_distribution<double> ux(-d, table.width() + d);
  std::uniform_real_distribution<double> uy(-d, table.height() + d);
  for (;;) {
    const Point2 w{ux(rng), uy(rng)};
    if (table.in_extended_domain(w)) return w;
  }
}

/// Area of the intersection of two closed discs of radius delta whose
/// centres are r apart.
inline double lens_area(double r, double delta) {
  if (!(r >= 0.0)) throw std::domain_error("lens_area: distance must be nonnegative");
  if (!(delta > 0.0)) throw std::domain_error("lens_area: delta must be positive");
  const double two_delta = 2.0 * delta;
  if (r >= two_delta) return 0.0;
  return 2.0 * delta * delta * std::acos(r / two_delta) -
         0.5 * r * std::sqrt(two_delta * two_delta - r * r);
}

/// (1/pi) * integral of lens_area(|z|) over the disc |z| < 2 delta, i.e.
/// 2 * int_0^{2 delta} r lens_area(r) dr, by adaptive quadrature.
inline QuadratureResult lens_integral_result(double delta) {
  if (!(delta > 0.0)) throw std::domain_error("lens_integral: delta must be positive");
  auto integrand = [delta](double r) { return 2.0 * r * lens_area(r, delta); };
  QuadratureOptions opts;
  opts.abs_tol = 1e-10 * std::pow(delta, 4);
  opts.rel_tol = 1e-10;
  return integrate(integrand, 0.0, 2.0 * delta, opts);
}

inline double lens_integral(double delta) { return lens_integral_result(delta).value; }

}  // namespace smoosh
