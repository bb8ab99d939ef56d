#pragma once

// Globally adaptive Gauss-Kronrod (7/15) quadrature on finite intervals.

#include <array>
#include <cmath>
#include <cstddef>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace smoosh {

class QuadratureError : public std::runtime_error {
 public:
  QuadratureError(const std::string& what, double estimate, double error)
      : std::runtime_error(what), estimate_(estimate), error_(error) {}
  double estimate() const noexcept { return estimate_; }
  double achieved_error() const noexcept { return error_; }

 private:
  double estimate_;
  double error_;
};

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
  std::size_t intervals = 0;
};

struct QuadratureOptions {
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  std::size_t max_intervals = 4000;
};

namespace detail {

// Kronrod abscissae (descending, last is the centre) and weights; Gauss
// weights belong to the odd-indexed abscissae plus the centre.
inline constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
  double a;
  double b;
  double value;
  double error;
  bool operator<(const Segment& o) const { return error < o.error; }
};

template <class F>
Segment gk15(F& f, double a, double b) {
  const double centre = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(centre);
  double kronrod = fc * kWgk[7];
  double gauss = fc * kWg[3];
  for (std::size_t k = 0; k < 7; ++k) {
    const double dx = half * kXgk[k];
    const double sum = f(centre - dx) + f(centre + dx);
    kronrod += kWgk[k] * sum;
    if (k % 2 == 1) gauss += kWg[k / 2] * sum;
  }
  kronrod *= half;
  gauss *= half;
  return {a, b, kronrod, std::abs(kronrod - gauss)};
}

}  // namespace detail

/// Integrates f over [a, b]. Throws QuadratureError (carrying the achieved
/// error) if the interval budget runs out before the tolerance is met.
template <class F>
QuadratureResult integrate(F&& f, double a, double b, const QuadratureOptions& opts = {}) {
  if (!(a <= b)) throw std::invalid_argument("integrate: requires a <= b");
  if (a == b) return {0.0, 0.0, 0};

  std::priority_queue<detail::Segment> heap;
  auto first = detail::gk15(f, a, b);
  double total = first.value;
  double error = first.error;
  heap.push(first);

  auto converged = [&] {
    return error <= std::max(opts.abs_tol, opts.rel_tol * std::abs(total));
  };
  while (!converged()) {
    if (heap.size() >= opts.max_intervals) {
      std::ostringstream msg;
      msg << "integrate: no convergence on [" << a << ", " << b << "] after " << heap.size()
          << " intervals; estimate " << total << " with error " << error;
      throw QuadratureError(msg.str(), total, error);
    }
    const auto worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    auto left = detail::gk15(f, worst.a, mid);
    auto right = detail::gk15(f, mid, worst.b);
    total += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
  }
  // Re-sum to shed the drift of the running updates.
  double value = 0.0;
  double err = 0.0;
  const std::size_t n = heap.size();
  while (!heap.empty()) {
    value += heap.top().value;
    err += heap.top().error;
    heap.pop();
  }
  return {value, err, n};
}

}  // namespace smoosh
