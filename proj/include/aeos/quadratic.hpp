#pragma once

// Exact optimizer dynamics on quadratic objectives f(x) = 1/2 x^T A x + b^T x + c.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "aeos/optimizers.hpp"

namespace aeos {


struct QuadraticObjective {
  Mat A;
  Vec b;
  double c = 0.0;

  Eigen::Index dim() const { return b.size(); }
  double value(const Vec& x) const { return 0.5 * x.dot(A * x) + b.dot(x) + c; }
  Vec gradient(const Vec& x) const { return A * x + b; }

  /// Checks shapes and symmetry (within 1e-12).
  void validate() const {
    if (A.rows() != A.cols() || A.rows() != b.size()) {
      throw std::invalid_argument("quadratic: A must be square and match b");
    }
    if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
      throw std::invalid_argument("quadratic: A must be symmetric");
    }
  }

  /// Minimizer -A^{-1} b when A is invertible.
  std::optional<Vec> minimizer() const {
    Eigen::FullPivLU<Mat> lu(A);
    if (!lu.isInvertible()) return std::nullopt;
    return Vec(-lu.solve(b));
  }
};

/// 1/2 x^2 in one dimension.
inline QuadraticObjective half_square() {
  return {Mat::Identity(1, 1), Vec::Zero(1), 0.0};
}

inline QuadraticObjective diagonal_quadratic(const Vec& diag) {
  return {Mat(diag.asDiagonal()), Vec::Zero(diag.size()), 0.0};
}

struct QuadStep {
  std::size_t t = 0;
  Vec x;
  Vec m;
  Vec nu;
  double grad_norm = 0.0;  // ||A x_t + b||
};

struct Trajectory {
  std::vector<QuadStep> steps;  // steps[0] is the initial state
  bool diverged = false;        // run stopped on overflow / non-finite values
  std::optional<std::size_t> divergence_step;
  std::optional<Vec> x_star;    // reference point for growth detection
};

struct QuadRunOptions {
  /// Iterates with ||x||_inf beyond this stop the run (marked diverged).
  double overflow_bound = 1e150;
  std::optional<Vec> nu0;  // initial second moment; zeros when absent
};

inline Trajectory run_quadratic(const QuadraticObjective& obj, const OptimizerSpec& spec,
                                const Vec& x0, const Vec& m0, std::size_t steps,
                                const QuadRunOptions& opts = {}) {
  obj.validate();
  validate(spec);
  if (x0.size() != obj.dim() || m0.size() != obj.dim()) {
    throw std::invalid_argument("run_quadratic: x0/m0 shape mismatch");
  }
  if (steps < 1) throw std::invalid_argument("run_quadratic: steps must be >= 1");

  OptimizerState state = init_state(x0);
  state.m = m0;
  if (opts.nu0) {
    if (opts.nu0->size() != obj.dim()) throw std::invalid_argument("nu0 shape mismatch");
    state.nu = *opts.nu0;
    state.nu_max = *opts.nu0;
  }

  Trajectory traj;
  traj.x_star = obj.minimizer();
  traj.steps.reserve(steps + 1);
  Vec g = obj.gradient(state.x);
  traj.steps.push_back({0, state.x, state.m, state.nu, g.norm()});
  for (std::size_t i = 0; i < steps; ++i) {
    try {
      state = step(std::move(state), g, spec);
    } catch (const DivergenceError& e) {
      traj.diverged = true;
      traj.divergence_step = e.step() + 1;
      break;
    }
    g = obj.gradient(state.x);
    traj.steps.push_back({state.t, state.x, state.m, state.nu, g.norm()});
    if (state.x.cwiseAbs().maxCoeff() > opts.overflow_bound || !std::isfinite(g.norm())) {
      traj.diverged = true;
      traj.divergence_step = state.t;
      break;
    }
  }
  return traj;
}

enum class Classification { Converged, Bounded, Diverged };

inline const char* to_string(Classification c) {
  switch (c) {
    case Classification::Converged: return "Converged";
    case Classification::Bounded: return "Bounded";
    case Classification::Diverged: return "Diverged";
  }
  return "?";
}

struct TrajectoryVerdict {
  Classification classification = Classification::Bounded;
  std::optional<std::size_t> first_unstable_step;
  double peak_abs = 0.0;
};

inline constexpr std::size_t kGrowthWindow = 20;

/// Distance of each recorded iterate from the reference point (x* when the
/// quadratic has a unique minimizer, else the origin).
inline std::vector<double> distances_to_reference(const Trajectory& traj) {
  std::vector<double> d;
  d.reserve(traj.steps.size());
  for (const auto& s : traj.steps) {
    d.push_back(traj.x_star ? (s.x - *traj.x_star).norm() : s.x.norm());
  }
  return d;
}

/// First step t >= window at which ||x_t - x*|| exceeds ||x_{t-window} - x*||,
/// i.e. the windowed growth factor is above one.
inline std::optional<std::size_t> first_window_growth(const std::vector<double>& dist,
                                                      std::size_t window = kGrowthWindow) {
  for (std::size_t t = window; t < dist.size(); ++t) {
    const double now = dist[t], then = dist[t - window];
    if (then > 0.0 && (now > then || !std::isfinite(now))) return t;
  }
  return std::nullopt;
}

inline TrajectoryVerdict classify(const Trajectory& traj, double tol_converge = 1e-10,
                                  double bound_diverge = 1e10) {
  if (traj.steps.empty()) throw std::invalid_argument("classify: empty trajectory");
  TrajectoryVerdict v;
  bool blew_up = traj.diverged;
  for (const auto& s : traj.steps) {
    const double peak = s.x.size() ? s.x.cwiseAbs().maxCoeff() : 0.0;
    if (!std::isfinite(peak)) {
      blew_up = true;
      v.peak_abs = std::numeric_limits<double>::infinity();
      continue;
    }
    v.peak_abs = std::max(v.peak_abs, peak);
    if (peak > bound_diverge) blew_up = true;
  }
  v.first_unstable_step = first_window_growth(distances_to_reference(traj));
  if (blew_up) {
    v.classification = Classification::Diverged;
  } else if (traj.steps.back().grad_norm < tol_converge) {
    v.classification = Classification::Converged;
  } else {
    v.classification = Classification::Bounded;
  }
  return v;
}

/// A maximal run of strictly growing distance-to-minimizer, starting at the
/// first step whose distance exceeds its predecessor's.
struct ExplosivePhase {
  std::size_t start = 0;  // first step with d_t > d_{t-1}
  std::size_t peak = 0;   // last step of the growing run
};

inline std::optional<ExplosivePhase> find_explosive_phase(const Trajectory& traj) {
  const auto d = distances_to_reference(traj);
  for (std::size_t t = 1; t < d.size(); ++t) {
    if (d[t] > d[t - 1]) {
      ExplosivePhase ph{t, t};
      while (ph.peak + 1 < d.size() && d[ph.peak + 1] > d[ph.peak]) ++ph.peak;
      return ph;
    }
  }
  return std::nullopt;
}

/// True when every component of nu rises on each step of the phase. nu_{t+1}
/// is built from the gradient at x_t, so the check is nu_{t+1} > nu_t for
/// t in [start, peak].
inline bool nu_rises_during(const Trajectory& traj, const ExplosivePhase& ph) {
  for (std::size_t t = ph.start; t <= ph.peak; ++t) {
    if (t + 1 >= traj.steps.size()) return false;
    if (!(traj.steps[t + 1].nu.array() > traj.steps[t].nu.array()).all()) return false;
  }
  return true;
}

/// f~(x) = f(P^{-1/2} x): A -> P^{-1/2} A P^{-1/2}, b -> P^{-1/2} b.
inline QuadraticObjective reparameterized_twin(const QuadraticObjective& obj, const Vec& P) {
  if (P.size() != obj.dim()) throw std::invalid_argument("twin: P shape mismatch");
  if ((P.array() <= 0.0).any()) throw std::invalid_argument("twin: P must be positive");
  const Vec s = P.array().rsqrt().matrix();
  QuadraticObjective twin;
  twin.A = s.asDiagonal() * obj.A * s.asDiagonal();
  twin.A = 0.5 * (twin.A + twin.A.transpose());
  twin.b = s.cwiseProduct(obj.b);
  twin.c = obj.c;
  return twin;
}

/// Squared gradient norms of EmaHB(eta, beta1) on 1/2 x^2, index 0 being the
/// initial point.
inline std::vector<double> stable_momentum_gradient_growth(double eta, double beta1,
                                                           double x0 = 1.0, double m0 = 0.2,
                                                           std::size_t steps = 30) {
  const auto spec = make_momentum(MomentumKind::EmaHB, eta, beta1);
  const auto traj = run_quadratic(half_square(), spec, Vec::Constant(1, x0),
                                  Vec::Constant(1, m0), steps);
  std::vector<double> out;
  out.reserve(traj.steps.size());
  for (const auto& s : traj.steps) out.push_back(s.grad_norm * s.grad_norm);
  return out;
}

/// Smallest learning rate (within `tol`) at which `diverges(eta)` holds, given a
/// bracket with diverges(lo) == false and diverges(hi) == true.
template <class Pred>
double bisect_divergence_boundary(Pred&& diverges, double lo, double hi, double tol) {
  if (diverges(lo) || !diverges(hi)) {
    throw std::invalid_argument("bisect: bracket does not straddle the boundary");
  }
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    (diverges(mid) ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace aeos
