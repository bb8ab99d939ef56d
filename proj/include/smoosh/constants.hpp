#pragma once

// Closed-form constants of the mixing bound: K0, the capture constant frak_p,
// the resolvent lower bound, the mixing-time bound and the moments of the
// stage-duration variable zeta*.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "smoosh/geometry.hpp"
#include "smoosh/quadrature.hpp"
#include "smoosh/random.hpp"

namespace smoosh {

namespace detail {

inline constexpr double kEulerGamma = 0.57721566490153286061;

// K0 for 0 < z <= 2:
// K0(z) = -(ln(z/2) + gamma) I0(z) + sum_{k>=1} (z^2/4)^k / (k!)^2 H_k.
inline double bessel_k0_series(double z) {
  const double q = 0.25 * z * z;
  double term = 1.0;  // (z^2/4)^k / (k!)^2
  double i0 = 1.0;
  double harmonic = 0.0;
  double tail = 0.0;
  for (int k = 1; k < 60; ++k) {
    term *= q / (static_cast<double>(k) * k);
    harmonic += 1.0 / k;
    i0 += term;
    tail += term * harmonic;
    if (term * harmonic < 1e-17 * std::abs(tail)) break;
  }
  return -(std::log(0.5 * z) + kEulerGamma) * i0 + tail;
}

// K0 for z > 2 by Steed's evaluation of the second continued fraction
// (Temme's method), order zero.
inline double bessel_k0_cf2(double x) {
  double b = 2.0 * (1.0 + x);
  double d = 1.0 / b;
  double h = d;
  double delh = d;
  double q1 = 0.0, q2 = 1.0;
  const double a1 = 0.25;
  double q = a1, c = a1;
  double a = -a1;
  double s = 1.0 + q * delh;
  for (int i = 1; i < 100000; ++i) {
    a -= 2 * i;
    c = -a * c / (i + 1.0);
    const double qnew = (q1 - b * q2) / a;
    q1 = q2;
    q2 = qnew;
    q += c * qnew;
    b += 2.0;
    d = 1.0 / (b + a * d);
    delh = (b * d - 1.0) * delh;
    h += delh;
    const double dels = q * delh;
    s += dels;
    if (std::abs(dels / s) < 1e-16) break;
  }
  return std::sqrt(std::numbers::pi / (2.0 * x)) * std::exp(-x) / s;
}

inline void check_model_params(double delta, double p, double sigma2, const char* who) {
  if (!(delta > 0.0) || !std::isfinite(delta)) throw std::domain_error(std::string(who) + ": delta must be > 0");
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error(std::string(who) + ": p must lie in (0, 1)");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw std::domain_error(std::string(who) + ": sigma2 must be > 0");
}

}  // namespace detail

/// Modified Bessel function of the second kind, order zero.
inline double bessel_k0(double z) {
  if (!(z > 0.0)) throw std::domain_error("bessel_k0: argument must be positive");
  if (z <= 2.0) return detail::bessel_k0_series(z);
  return detail::bessel_k0_cf2(z);
}

/// Resolvent rate c = 1 / (2 sigma^2 p (1-p) pi delta^2).
inline double resolvent_rate(double delta, double p, double sigma2) {
  detail::check_model_params(delta, p, sigma2, "resolvent_rate");
  return 1.0 / (2.0 * sigma2 * p * (1.0 - p) * std::numbers::pi * delta * delta);
}

/// Argument of K0 in frak_p: (sqrt 2 + 2 delta) / (sigma delta sqrt(pi p (1-p))).
inline double frak_p_argument(double delta, double p, double sigma2) {
  detail::check_model_params(delta, p, sigma2, "frak_p");
  return (std::numbers::sqrt2 + 2.0 * delta) /
         (std::sqrt(sigma2) * delta * std::sqrt(std::numbers::pi * p * (1.0 - p)));
}

/// frak_p = delta^2 / (2 p pi sigma^2 (1+2 delta)^2) * K0(frak_p_argument).
template <class K0>
double frak_p_with(double delta, double p, double sigma2, K0&& k0) {
  const double arg = frak_p_argument(delta, p, sigma2);
  const double ext = 1.0 + 2.0 * delta;
  return delta * delta / (2.0 * p * std::numbers::pi * sigma2 * ext * ext) * k0(arg);
}

inline double frak_p(double delta, double p, double sigma2) {
  return frak_p_with(delta, p, sigma2, [](double z) { return bessel_k0(z); });
}

/// A table of side L maps to the unit table with delta and s0 divided by L.
struct UnitScaled {
  double delta;
  double s0;
};

inline UnitScaled rescale_to_unit(double side, double delta, double s0) {
  if (!(side > 0.0)) throw std::domain_error("rescale_to_unit: side must be > 0");
  return {delta / side, s0 / side};
}

struct ResolventCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double lhs_error = 0.0;
};

/// lhs = (1/pi) int_{|z|<2 delta} K0(sqrt(2c) |v - z|) phi(|z|) dz at |v| = sqrt 2,
/// by nested adaptive quadrature in polar coordinates;
/// rhs = K0(sqrt(2c) (sqrt 2 + 2 delta)) pi delta^4.
inline ResolventCheck resolvent_bound_check(double delta, double p, double sigma2) {
  detail::check_model_params(delta, p, sigma2, "resolvent_bound_check");
  if (2.0 * delta >= std::numbers::sqrt2)
    throw std::domain_error("resolvent_bound_check: requires 2 delta < sqrt 2 (kernel singular otherwise)");
  const double kappa = std::sqrt(2.0 * resolvent_rate(delta, p, sigma2));
  const double v = std::numbers::sqrt2;

  ResolventCheck out;
  out.rhs = bessel_k0(kappa * (v + 2.0 * delta)) * std::numbers::pi * std::pow(delta, 4);

  QuadratureOptions inner_opts;
  inner_opts.abs_tol = 0.0;
  inner_opts.rel_tol = 1e-10;
  auto radial = [&](double r) {
    if (r == 0.0) return 0.0;
    auto angular = [&](double theta) {
      const double d = std::sqrt(v * v + r * r - 2.0 * v * r * std::cos(theta));
      return bessel_k0(kappa * d);
    };
    // Symmetric in theta; integrate over [0, pi] and double.
    const auto res = integrate(angular, 0.0, std::numbers::pi, inner_opts);
    return 2.0 * res.value * r * lens_area(r, delta);
  };
  QuadratureOptions outer_opts;
  outer_opts.abs_tol = 0.0;
  outer_opts.rel_tol = 1e-9;
  const auto res = integrate(radial, 0.0, 2.0 * delta, outer_opts);
  out.lhs = res.value / std::numbers::pi;
  out.lhs_error = res.error / std::numbers::pi;
  return out;
}

/// Mixing-time bound m / frak_p + c1 sqrt(m).
inline double mixing_bound(int m, double delta, double p, double sigma2, double c1) {
  if (m < 2) throw std::domain_error("mixing_bound: m must be >= 2");
  return m / frak_p(delta, p, sigma2) + c1 * std::sqrt(static_cast<double>(m));
}

/// The lattice bound C N^3 m / p, returned as its coefficient of C.
inline double lattice_bound_coefficient(int N, int m, double p) {
  if (N < 2 || m < 1 || !(p > 0.0 && p <= 1.0)) throw std::domain_error("lattice_bound_coefficient: bad parameters");
  return std::pow(static_cast<double>(N), 3) * m / p;
}

struct ZetaMoments {
  double mean = 0.0;
  double mgf_bound = std::numeric_limits<double>::quiet_NaN();
};

/// Mean 1/frak_p and the bound sqrt(frak_p / q) (1 - sqrt(q / (1 - alpha)))^{-1}
/// on E exp(alpha zeta*), q = 1 - frak_p; finite for alpha < frak_p.
inline ZetaMoments zeta_moments(double frak, double alpha) {
  if (!(frak > 0.0 && frak < 1.0)) throw std::domain_error("zeta_moments: frak_p must lie in (0, 1)");
  if (!(alpha >= 0.0)) throw std::domain_error("zeta_moments: alpha must be >= 0");
  if (alpha >= frak) throw std::domain_error("zeta_moments: alpha must be < frak_p");
  const double q = 1.0 - frak;
  ZetaMoments z;
  z.mean = 1.0 / frak;
  z.mgf_bound = std::sqrt(frak / q) / (1.0 - std::sqrt(q / (1.0 - alpha)));
  return z;
}

/// zeta* = rho_1 + ... + rho_J, rho_i ~ Exp(1), J the first success of
/// Bernoulli(frak_p) trials. Drawn as Gamma(J, 1) given J.
template <class URBG>
double simulate_zeta_abstract(double frak, URBG& rng) {
  if (!(frak > 0.0 && frak <= 1.0)) throw std::domain_error("simulate_zeta_abstract: frak_p must lie in (0, 1]");
  const std::int64_t failures = frak == 1.0 ? 0 : std::geometric_distribution<std::int64_t>(frak)(rng);
  return std::gamma_distribution<double>(static_cast<double>(failures + 1), 1.0)(rng);
}

/// Literal draw: one exponential and one coin per trial.
template <class URBG>
double simulate_zeta_literal(double frak, URBG& rng) {
  if (!(frak > 0.0 && frak <= 1.0)) throw std::domain_error("simulate_zeta_literal: frak_p must lie in (0, 1]");
  std::exponential_distribution<double> rho(1.0);
  double sum = 0.0;
  do {
    sum += rho(rng);
  } while (!bernoulli(rng, frak));
  return sum;
}

/// Unbiased sample variance, used as the b^2 of the Chebyshev step.
inline double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) throw std::invalid_argument("sample_variance: need at least two samples");
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(xs.size() - 1);
}

/// c1 with P(sum of m stage durations > m mean + c1 sqrt m) <= eps by Chebyshev.
inline double chebyshev_c1(double b2, double eps) {
  if (!(b2 >= 0.0) || !(eps > 0.0 && eps < 1.0)) throw std::domain_error("chebyshev_c1: bad arguments");
  return std::sqrt(b2 / eps);
}

struct BoundReport {
  double delta = 0.0;
  double p = 0.0;
  double sigma2 = 0.0;
  double frak_p = 0.0;
  int m = 0;
  double c1 = 0.0;
  double mixing_time = 0.0;
  double zeta_mean = 0.0;
  double alpha = 0.0;
  double mgf_bound = 0.0;
};

inline BoundReport bound_report(double delta, double p, double sigma2, int m, double c1, double alpha) {
  BoundReport r;
  r.delta = delta;
  r.p = p;
  r.sigma2 = sigma2;
  r.frak_p = frak_p(delta, p, sigma2);
  r.m = m;
  r.c1 = c1;
  r.mixing_time = mixing_bound(m, delta, p, sigma2, c1);
  r.alpha = alpha;
  const auto z = zeta_moments(r.frak_p, alpha);
  r.zeta_mean = z.mean;
  r.mgf_bound = z.mgf_bound;
  return r;
}

inline nlohmann::json to_json(const BoundReport& r) {
  return {{"delta", r.delta},         {"p", r.p},
          {"sigma2", r.sigma2},       {"frak_p", r.frak_p},
          {"m", r.m},                 {"c1", r.c1},
          {"mixing_time", r.mixing_time}, {"zeta_mean", r.zeta_mean},
          {"alpha", r.alpha},         {"mgf_bound", r.mgf_bound}};
}

}  // namespace smoosh
