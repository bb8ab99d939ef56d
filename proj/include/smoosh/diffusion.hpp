#pragma once

// Jump-diffusion limit of the gather-and-spread model: between rate-one
// gather epochs the 2m coordinates follow a driftless diffusion on [0,1]^2m
// with covariance B = F (x) Sigma and normal reflection at the edges.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "smoosh/discrete_motion.hpp"
#include "smoosh/geometry.hpp"
#include "smoosh/random.hpp"

namespace smoosh {

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DiffusionParams {
  double delta = 0.2;
  double p = 0.5;
  double sigma2 = 0.5;

  void validate() const {
    if (!(delta > 0.0) || !std::isfinite(delta)) throw std::invalid_argument("DiffusionParams: delta must be > 0");
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("DiffusionParams: p must lie in (0, 1)");
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw std::invalid_argument("DiffusionParams: sigma2 must be > 0");
  }

  /// Variance rate of one coordinate, p pi delta^2 sigma^2.
  double one_point_rate() const { return p * std::numbers::pi * delta * delta * sigma2; }
  /// Lower bound on the spectrum of F, p (1-p) pi delta^2.
  double ellipticity_floor() const { return p * (1.0 - p) * std::numbers::pi * delta * delta; }
};

struct CovarianceSet {
  Eigen::MatrixXd F;      // m x m card-overlap covariances
  Eigen::Matrix2d Sigma;  // sigma^2 I
  Eigen::MatrixXd B;      // 2m x 2m, rows (x_1, y_1, x_2, y_2, ...)
  Eigen::MatrixXd A;      // symmetric PSD square root of B
};

inline constexpr double kEigenvalueFloor = -1e-12;

/// F_ii = p pi delta^2, F_ij = p^2 lens_area(|z_i - z_j|).
inline Eigen::MatrixXd overlap_matrix(std::span<const Point2> z, const DiffusionParams& params) {
  const auto m = static_cast<Eigen::Index>(z.size());
  Eigen::MatrixXd F(m, m);
  const double diag = params.p * std::numbers::pi * params.delta * params.delta;
  for (Eigen::Index i = 0; i < m; ++i) {
    F(i, i) = diag;
    for (Eigen::Index j = i + 1; j < m; ++j) {
      F(i, j) = F(j, i) = params.p * params.p * lens_area(distance(z[i], z[j]), params.delta);
    }
  }
  return F;
}

/// Symmetric PSD square root of a symmetric matrix. Eigenvalues in
/// [-1e-12, 0) are clamped to zero; anything lower is a NumericalError.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
  if (eig.info() != Eigen::Success) throw NumericalError("psd_sqrt: eigendecomposition failed");
  Eigen::VectorXd lambda = eig.eigenvalues();
  for (Eigen::Index k = 0; k < lambda.size(); ++k) {
    if (lambda(k) < kEigenvalueFloor) {
      std::ostringstream msg;
      msg << "psd_sqrt: eigenvalue " << lambda(k) << " below " << kEigenvalueFloor;
      throw NumericalError(msg.str());
    }
    lambda(k) = std::sqrt(std::max(lambda(k), 0.0));
  }
  return eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
}

/// Square root of F. The 1x1 and 2x2 cases (equal diagonal) are closed form.
inline Eigen::MatrixXd overlap_sqrt(const Eigen::MatrixXd& F) {
  const auto m = F.rows();
  if (m == 1) {
    Eigen::MatrixXd R(1, 1);
    R(0, 0) = std::sqrt(F(0, 0));
    return R;
  }
  if (m == 2) {
    const double a = F(0, 0), b = F(0, 1);
    const double hi = a + b, lo = a - b;
    if (lo < kEigenvalueFloor) throw NumericalError("overlap_sqrt: negative eigenvalue");
    const double s_hi = std::sqrt(hi), s_lo = std::sqrt(std::max(lo, 0.0));
    Eigen::MatrixXd R(2, 2);
    R(0, 0) = R(1, 1) = 0.5 * (s_hi + s_lo);
    R(0, 1) = R(1, 0) = 0.5 * (s_hi - s_lo);
    return R;
  }
  return psd_sqrt(F);
}

/// Kronecker product with a 2x2 right factor.
inline Eigen::MatrixXd kron2(const Eigen::MatrixXd& left, const Eigen::Matrix2d& right) {
  Eigen::MatrixXd out(2 * left.rows(), 2 * left.cols());
  for (Eigen::Index i = 0; i < left.rows(); ++i)
    for (Eigen::Index j = 0; j < left.cols(); ++j) out.block<2, 2>(2 * i, 2 * j) = left(i, j) * right;
  return out;
}

inline CovarianceSet build_covariance(std::span<const Point2> positions, const DiffusionParams& params) {
  params.validate();
  if (positions.empty()) throw std::invalid_argument("build_covariance: m must be >= 1");
  CovarianceSet cov;
  cov.F = overlap_matrix(positions, params);
  cov.Sigma = params.sigma2 * Eigen::Matrix2d::Identity();
  cov.B = kron2(cov.F, cov.Sigma);
  // sqrt(F (x) sigma^2 I) = sqrt(F) (x) sigma I.
  cov.A = kron2(overlap_sqrt(cov.F), std::sqrt(params.sigma2) * Eigen::Matrix2d::Identity());
  return cov;
}

struct SkorokhodResult {
  std::vector<double> output;
  std::vector<double> lower;  // nondecreasing push at lo
  std::vector<double> upper;  // nondecreasing push at hi
};

/// Two-sided Skorokhod map on [lo, hi] applied to a sampled path, as the
/// composition Lambda_hi o Gamma_lo of the explicit running-extremum maps:
///   Gamma_0(psi)(t)  = psi(t) + sup_{s<=t} (-psi(s))^+
///   Lambda_1(phi)(t) = phi(t) - sup_{s<=t} [ (phi(s)-1)^+ ^ inf_{s<=u<=t} phi(u) ].
/// The sup in Lambda_1 is carried by M_k = max(min(M_{k-1}, phi_k), (phi_k-1)^+).
/// A step where M drops or the Gamma_0 push grows pushes at lo; a step where
/// M grows pushes at hi.
inline SkorokhodResult skorokhod_map(std::span<const double> path, double lo = 0.0, double hi = 1.0) {
  if (!(lo < hi)) throw std::invalid_argument("skorokhod_map: requires lo < hi");
  const double width = hi - lo;
  SkorokhodResult r;
  r.output.resize(path.size());
  r.lower.resize(path.size());
  r.upper.resize(path.size());
  double push0 = 0.0;  // sup (-psi)^+
  double sup_m = 0.0;
  double lower = 0.0, upper = 0.0;
  for (std::size_t k = 0; k < path.size(); ++k) {
    const double psi = (path[k] - lo) / width;
    const double new_push0 = std::max(push0, std::max(-psi, 0.0));
    const double phi = psi + new_push0;
    const double new_m = std::max(std::min(sup_m, phi), std::max(phi - 1.0, 0.0));
    lower += (new_push0 - push0) + std::max(sup_m - new_m, 0.0);
    upper += std::max(new_m - sup_m, 0.0);
    push0 = new_push0;
    sup_m = new_m;
    r.output[k] = lo + width * (phi - sup_m);
    r.lower[k] = width * lower;
    r.upper[k] = width * upper;
  }
  return r;
}

/// Positions and boundary local times of the 2m reflected coordinates.
struct DiffusionState {
  std::vector<double> z;            // x_1, y_1, x_2, y_2, ...
  std::vector<double> local_times;  // per card: L^{X,0}, L^{X,1}, L^{Y,0}, L^{Y,1}
  double t = 0.0;

  DiffusionState() = default;
  explicit DiffusionState(std::span<const Point2> positions) {
    for (const auto& p : positions) {
      if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0))
        throw std::invalid_argument("DiffusionState: positions must lie in [0,1]^2");
      z.push_back(p.x);
      z.push_back(p.y);
    }
    local_times.assign(2 * z.size(), 0.0);
  }

  std::size_t cards() const noexcept { return z.size() / 2; }
  Point2 card(std::size_t j) const { return {z[2 * j], z[2 * j + 1]}; }
  void set_card(std::size_t j, Point2 p) {
    z[2 * j] = p.x;
    z[2 * j + 1] = p.y;
  }
  std::vector<Point2> points() const {
    std::vector<Point2> out(cards());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = card(j);
    return out;
  }
};

/// Reusable integrator: caches the constant square root for m = 1 and the
/// scratch buffers for the Gaussian draws.
class EulerIntegrator {
 public:
  explicit EulerIntegrator(DiffusionParams params) : params_(params) { params_.validate(); }

  const DiffusionParams& params() const noexcept { return params_; }

  /// One reflected Euler-Maruyama step of length dt: proposal z + sqrt(dt) A(z) xi,
  /// each coordinate clamped into [0,1] with the clamped amount added to its
  /// local time.
  template <class URBG>
  void step(DiffusionState& s, double dt, URBG& rng) {
    if (!(dt > 0.0)) throw std::invalid_argument("euler_step: dt must be > 0");
    const std::size_t m = s.cards();
    xi_.resize(2 * m);
    for (auto& v : xi_) v = normal_(rng);
    const double scale = std::sqrt(dt * params_.sigma2);
    if (m == 1) {
      const double a = std::sqrt(params_.p * std::numbers::pi) * params_.delta;
      inc_.assign({scale * a * xi_[0], scale * a * xi_[1]});
    } else {
      pts_.resize(m);
      for (std::size_t j = 0; j < m; ++j) pts_[j] = s.card(j);
      root_ = overlap_sqrt(overlap_matrix(pts_, params_));
      inc_.assign(2 * m, 0.0);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          const double rij = root_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
          inc_[2 * i] += rij * xi_[2 * j];
          inc_[2 * i + 1] += rij * xi_[2 * j + 1];
        }
      for (auto& v : inc_) v *= scale;
    }
    for (std::size_t k = 0; k < 2 * m; ++k) {
      double v = s.z[k] + inc_[k];
      const std::size_t card = k / 2;
      const std::size_t lt = 4 * card + (k % 2 == 0 ? 0 : 2);
      if (v < 0.0) {
        s.local_times[lt] += -v;
        v = 0.0;
      } else if (v > 1.0) {
        s.local_times[lt + 1] += v - 1.0;
        v = 1.0;
      }
      s.z[k] = v;
    }
    s.t += dt;
  }

 private:
  DiffusionParams params_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::vector<double> xi_, inc_;
  std::vector<Point2> pts_;
  Eigen::MatrixXd root_;
};

template <class URBG>
DiffusionState euler_step(DiffusionState state, double dt, URBG& rng, const DiffusionParams& params) {
  EulerIntegrator integrator(params);
  integrator.step(state, dt, rng);
  return state;
}

struct JumpDiffusionConfig {
  DiffusionParams params;
  double dt = 1e-3;
  double gather_rate = 1.0;

  Table table() const { return Table(params.delta); }

  void validate() const {
    params.validate();
    if (!(dt > 0.0)) throw std::invalid_argument("JumpDiffusionConfig: dt must be > 0");
    if (!(gather_rate >= 0.0)) throw std::invalid_argument("JumpDiffusionConfig: gather_rate must be >= 0");
  }
};

struct GatherRecord {
  double time = 0.0;
  Point2 w;
  std::vector<bool> captured;
};

struct JumpDiffusionPath {
  MotionPath path;
  std::vector<GatherRecord> gathers;
  DiffusionState final_state;
};

struct JumpDiffusionOptions {
  std::size_t record_every = 1;  // Euler steps between recorded samples
  bool record_path = true;
};

/// Samples a gather epoch: palm centre uniform on the extended domain; all
/// cards under the palm jump to the gathering point.
template <class URBG>
GatherRecord apply_gather(DiffusionState& s, double t, const Table& table, URBG& rng) {
  GatherRecord g;
  g.time = t;
  g.w = sample_extended(rng, table);
  const Point2 heap = clamp_center(g.w, table);
  g.captured.resize(s.cards());
  for (std::size_t j = 0; j < s.cards(); ++j) {
    g.captured[j] = under_palm(s.card(j), g.w, table.delta());
    if (g.captured[j]) s.set_card(j, heap);
  }
  return g;
}

template <class URBG>
double next_gather_gap(URBG& rng, double rate) {
  if (rate <= 0.0) return std::numeric_limits<double>::infinity();
  return std::exponential_distribution<double>(rate)(rng);
}

/// Reflected diffusion between gather epochs of a rate-one Poisson process;
/// the Euler step before an epoch is shortened to land on it.
template <class URBG>
JumpDiffusionPath jump_diffusion_simulate(const JumpDiffusionConfig& config, std::span<const Point2> initial,
                                          double horizon, URBG& rng, const JumpDiffusionOptions& options = {}) {
  config.validate();
  if (options.record_every == 0) throw std::invalid_argument("jump_diffusion_simulate: record_every must be >= 1");
  const Table table = config.table();
  JumpDiffusionPath out;
  DiffusionState s(initial);
  out.path.cards = s.cards();
  if (options.record_path) out.path.record(0.0, s.points());
  EulerIntegrator integrator(config.params);
  double next_gather = next_gather_gap(rng, config.gather_rate);
  std::size_t steps = 0;
  while (s.t < horizon) {
    const double target = std::min({s.t + config.dt, next_gather, horizon});
    const double h = target - s.t;
    if (h > 0.0) integrator.step(s, h, rng);
    s.t = target;
    ++steps;
    bool record = options.record_path && steps % options.record_every == 0;
    if (target == next_gather) {
      out.gathers.push_back(apply_gather(s, s.t, table, rng));
      next_gather = s.t + next_gather_gap(rng, config.gather_rate);
      record = options.record_path;
    }
    if (record) out.path.record(s.t, s.points());
  }
  if (options.record_path && out.path.times.back() < s.t) out.path.record(s.t, s.points());
  out.final_state = std::move(s);
  return out;
}

struct PairMeeting {
  double time = std::numeric_limits<double>::infinity();
  std::size_t epochs = 0;
  bool met = false;
};

/// Runs a two-card jump-diffusion until a gather epoch whose palm covers
/// both cards; returns the elapsed time and the number of epochs used.
template <class URBG>
PairMeeting pair_meeting_time(const JumpDiffusionConfig& config, Point2 z1, Point2 z2, URBG& rng, double horizon) {
  config.validate();
  const Table table = config.table();
  const Point2 init[2] = {z1, z2};
  DiffusionState s{std::span<const Point2>(init)};
  EulerIntegrator integrator(config.params);
  PairMeeting result;
  double next_gather = next_gather_gap(rng, config.gather_rate);
  while (s.t < horizon) {
    const double target = std::min({s.t + config.dt, next_gather, horizon});
    if (target > s.t) integrator.step(s, target - s.t, rng);
    s.t = target;
    if (target == next_gather) {
      ++result.epochs;
      const auto g = apply_gather(s, s.t, table, rng);
      if (g.captured[0] && g.captured[1]) {
        result.met = true;
        result.time = s.t;
        return result;
      }
      next_gather = s.t + next_gather_gap(rng, config.gather_rate);
    }
  }
  return result;
}

struct CaptureCount {
  std::size_t epochs = 0;
  std::size_t captures = 0;
  double frequency() const { return epochs ? static_cast<double>(captures) / static_cast<double>(epochs) : 0.0; }
};

/// Runs a two-card jump-diffusion through `epochs` gather epochs and counts
/// the epochs whose palm covers both cards.
template <class URBG>
CaptureCount capture_frequency(const JumpDiffusionConfig& config, Point2 z1, Point2 z2, std::size_t epochs,
                               URBG& rng) {
  config.validate();
  const Table table = config.table();
  const Point2 init[2] = {z1, z2};
  DiffusionState s{std::span<const Point2>(init)};
  EulerIntegrator integrator(config.params);
  CaptureCount count;
  double next_gather = next_gather_gap(rng, config.gather_rate);
  while (count.epochs < epochs) {
    const double target = std::min(s.t + config.dt, next_gather);
    if (target > s.t) integrator.step(s, target - s.t, rng);
    s.t = target;
    if (target == next_gather) {
      ++count.epochs;
      const auto g = apply_gather(s, s.t, table, rng);
      if (g.captured[0] && g.captured[1]) ++count.captures;
      next_gather = s.t + next_gather_gap(rng, config.gather_rate);
    }
  }
  return count;
}

/// Coupling source over the jump-diffusion. Cards coincide only through a
/// gather (or a shared corner clamp).
class DiffusionSource {
 public:
  DiffusionSource(JumpDiffusionConfig config, std::span<const Point2> initial, Rng rng)
      : config_(config), table_(config.table()), state_(initial), integrator_(config.params), rng_(rng) {
    config_.validate();
    next_gather_ = next_gather_gap(rng_, config_.gather_rate);
  }

  std::size_t size() const noexcept { return state_.cards(); }
  double time() const noexcept { return state_.t; }

  /// One Euler step (shortened to land on a gather epoch). If the next
  /// transition lies past the horizon the state is integrated up to the
  /// horizon and false is returned.
  bool advance(double horizon) {
    const double target = std::min(state_.t + config_.dt, next_gather_);
    if (target > horizon) {
      if (horizon > state_.t) {
        integrator_.step(state_, horizon - state_.t, rng_);
        state_.t = horizon;
      }
      return false;
    }
    if (target > state_.t) integrator_.step(state_, target - state_.t, rng_);
    state_.t = target;
    if (target == next_gather_) {
      apply_gather(state_, state_.t, table_, rng_);
      ++epochs_;
      next_gather_ = state_.t + next_gather_gap(rng_, config_.gather_rate);
    }
    return true;
  }

  bool coincide(std::size_t i, std::size_t j) const { return state_.card(i) == state_.card(j); }
  double x_coordinate(std::size_t i) const { return state_.z[2 * i]; }
  const DiffusionState& state() const noexcept { return state_; }
  std::size_t epochs() const noexcept { return epochs_; }

 private:
  JumpDiffusionConfig config_;
  Table table_;
  DiffusionState state_;
  EulerIntegrator integrator_;
  Rng rng_;
  double next_gather_ = 0.0;
  std::size_t epochs_ = 0;
};

inline void write_gather_log_header(std::ostream& out) { out << "replica,epoch_time,wx,wy,captured_mask\n"; }

inline void write_gather_log(std::ostream& out, std::span<const GatherRecord> gathers, std::size_t replica) {
  for (const auto& g : gathers) {
    out << replica << ',' << g.time << ',' << g.w.x << ',' << g.w.y << ',';
    for (bool c : g.captured) out << (c ? '1' : '0');
    out << '\n';
  }
}

inline nlohmann::json local_time_summary(const DiffusionState& s) {
  nlohmann::json cards = nlohmann::json::array();
  for (std::size_t j = 0; j < s.cards(); ++j) {
    cards.push_back({{"card", j + 1},
                     {"LX0", s.local_times[4 * j]},
                     {"LX1", s.local_times[4 * j + 1]},
                     {"LY0", s.local_times[4 * j + 2]},
                     {"LY1", s.local_times[4 * j + 3]}});
  }
  return {{"t", s.t}, {"cards", cards}};
}

}  // namespace smoosh
