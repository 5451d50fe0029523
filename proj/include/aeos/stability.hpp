#pragma once

// Stability thresholds and per-eigendirection recurrences for gradient descent
// with and without momentum, on quadratic objectives.
//
// Every optimizer below, run on f(x) = 1/2 x^T A x + b^T x + c, evolves
// independently along each eigenvector of A. Along an eigenvector with
// eigenvalue lambda the homogeneous part of the iterate obeys
//
//     x_{t+1} = a * x_t + b * x_{t-1}
//
// whose growth rate is governed by the largest root of x^2 - a x - b.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <string_view>

namespace aeos {

enum class MomentumKind { None, StandardHB, EmaHB, StandardNesterov, EmaNesterov };

inline constexpr std::array<MomentumKind, 5> kAllMomentumKinds = {
    MomentumKind::None, MomentumKind::StandardHB, MomentumKind::EmaHB,
    MomentumKind::StandardNesterov, MomentumKind::EmaNesterov};

inline std::string_view to_string(MomentumKind kind) {
  switch (kind) {
    case MomentumKind::None: return "None";
    case MomentumKind::StandardHB: return "StandardHB";
    case MomentumKind::EmaHB: return "EmaHB";
    case MomentumKind::StandardNesterov: return "StandardNesterov";
    case MomentumKind::EmaNesterov: return "EmaNesterov";
  }
  return "?";
}

inline MomentumKind momentum_kind_from_string(std::string_view name) {
  for (auto k : kAllMomentumKinds) {
    if (to_string(k) == name) return k;
  }
  // Common aliases used on the command line.
  if (name == "GD" || name == "none" || name == "gd") return MomentumKind::None;
  throw std::invalid_argument("unknown momentum kind: " + std::string(name));
}

struct MomentumFlavor {
  MomentumKind kind = MomentumKind::None;
  double beta1 = 0.0;  // ignored when kind == None

  /// beta1 as seen by the update rules: zero when there is no momentum.
  double effective_beta1() const { return kind == MomentumKind::None ? 0.0 : beta1; }

  bool is_ema() const {
    return kind == MomentumKind::EmaHB || kind == MomentumKind::EmaNesterov;
  }
  bool is_nesterov() const {
    return kind == MomentumKind::StandardNesterov || kind == MomentumKind::EmaNesterov;
  }
};

struct RecurrenceCoeffs {
  double a = 0.0;
  double b = 0.0;
};

using RootPair = std::array<std::complex<double>, 2>;

struct StabilityReport {
  double threshold = 0.0;
  double probed_eigenvalue = 0.0;
  RecurrenceCoeffs coeffs;
  RootPair roots{};
  double agf = 0.0;
};

namespace detail {

inline void validate(const MomentumFlavor& flavor, double eta) {
  if (!(eta > 0.0) || !std::isfinite(eta)) {
    throw std::invalid_argument("learning rate must be positive and finite");
  }
  if (flavor.kind != MomentumKind::None && !(flavor.beta1 >= 0.0 && flavor.beta1 < 1.0)) {
    throw std::invalid_argument("beta1 must lie in [0, 1)");
  }
}

}  // namespace detail

/// Largest Hessian eigenvalue for which the optimizer's quadratic-model
/// recurrence does not diverge.
inline double stability_threshold(const MomentumFlavor& flavor, double eta) {
  detail::validate(flavor, eta);
  const double beta = flavor.effective_beta1();
  const double numer = 2.0 + 2.0 * beta;
  switch (flavor.kind) {
    case MomentumKind::None: return 2.0 / eta;
    case MomentumKind::StandardHB: return numer / eta;
    case MomentumKind::EmaHB: return numer / (eta * (1.0 - beta));
    case MomentumKind::StandardNesterov: return numer / (eta * (1.0 + 2.0 * beta));
    case MomentumKind::EmaNesterov:
      return numer / (eta * (1.0 - beta) * (1.0 + 2.0 * beta));
  }
  throw std::logic_error("unhandled momentum kind");
}

/// Coefficients (a, b) of x_{t+1} = a x_t + b x_{t-1} along an eigendirection
/// with eigenvalue `lambda`.
///
/// The EMA flavors are their standard counterparts with eta replaced by
/// eta * (1 - beta1). For Nesterov, eliminating m from
///   m_{t+1} = beta m_t + g_{t+1},  x_{t+1} = x_t - eta (beta m_{t+1} + g_{t+1})
/// gives x_{t+1} = (1 + beta)(1 - eta lambda) x_t - beta (1 - eta lambda) x_{t-1}.
inline RecurrenceCoeffs recurrence_coefficients(const MomentumFlavor& flavor, double eta,
                                                double lambda) {
  detail::validate(flavor, eta);
  const double beta = flavor.effective_beta1();
  const double step = flavor.is_ema() ? eta * (1.0 - beta) : eta;
  switch (flavor.kind) {
    case MomentumKind::None: return {1.0 - eta * lambda, 0.0};
    case MomentumKind::StandardHB:
    case MomentumKind::EmaHB: return {(1.0 + beta) - step * lambda, -beta};
    case MomentumKind::StandardNesterov:
    case MomentumKind::EmaNesterov: {
      const double damp = 1.0 - step * lambda;
      return {(1.0 + beta) * damp, -beta * damp};
    }
  }
  throw std::logic_error("unhandled momentum kind");
}

/// Both roots of x^2 - a x - b. Real roots are ordered by decreasing magnitude;
/// a complex pair is returned as (re + i im, re - i im) with im >= 0.
inline RootPair char_poly_roots(const RecurrenceCoeffs& c) {
  using cd = std::complex<double>;
  if (c.b == 0.0) return {cd(c.a, 0.0), cd(0.0, 0.0)};
  const double disc = c.a * c.a + 4.0 * c.b;
  if (disc >= 0.0) {
    const double s = std::sqrt(disc);
    // Avoid cancellation: take the larger-magnitude root first, then use the
    // product of roots (= -b) for the other.
    const double q = 0.5 * (c.a + std::copysign(s, c.a));
    if (q == 0.0) return {cd(0.0, 0.0), cd(0.0, 0.0)};
    return {cd(q, 0.0), cd(-c.b / q, 0.0)};
  }
  const double re = 0.5 * c.a;
  const double im = 0.5 * std::sqrt(-disc);
  return {cd(re, im), cd(re, -im)};
}

inline double max_root_magnitude(const RootPair& roots) {
  return std::max(std::abs(roots[0]), std::abs(roots[1]));
}

inline double asymptotic_growth_factor(const MomentumFlavor& flavor, double eta,
                                       double lambda) {
  return max_root_magnitude(char_poly_roots(recurrence_coefficients(flavor, eta, lambda)));
}

/// Marginal stability (growth factor exactly one, up to 1e-12) counts as stable.
inline bool is_stable(const MomentumFlavor& flavor, double eta, double lambda) {
  return asymptotic_growth_factor(flavor, eta, lambda) <= 1.0 + 1e-12;
}

inline StabilityReport stability_report(const MomentumFlavor& flavor, double eta,
                                        double lambda) {
  StabilityReport r;
  r.threshold = stability_threshold(flavor, eta);
  r.probed_eigenvalue = lambda;
  r.coeffs = recurrence_coefficients(flavor, eta, lambda);
  r.roots = char_poly_roots(r.coeffs);
  r.agf = max_root_magnitude(r.roots);
  return r;
}

/// Empirical per-step log growth rate of the recurrence x_{t+1} = a x_t + b x_{t-1},
/// measured as the slope of log max(|x_t|, |x_{t-1}|) over `steps` steps after
/// `burn_in` steps. The pair is renormalized as it runs so long unstable runs
/// never overflow.
inline double empirical_log_growth(const RecurrenceCoeffs& c, double x0, double x1,
                                   int burn_in, int steps) {
  double prev = x0, cur = x1;
  double log_scale = 0.0;
  auto advance = [&] {
    const double next = c.a * cur + c.b * prev;
    prev = cur;
    cur = next;
    const double mag = std::max(std::abs(cur), std::abs(prev));
    if (mag > 1e100 || (mag < 1e-100 && mag > 0.0)) {
      prev /= mag;
      cur /= mag;
      log_scale += std::log(mag);
    }
  };
  for (int i = 0; i < burn_in; ++i) advance();
  const double start = log_scale + std::log(std::max(std::abs(cur), std::abs(prev)));
  for (int i = 0; i < steps; ++i) advance();
  const double end = log_scale + std::log(std::max(std::abs(cur), std::abs(prev)));
  return (end - start) / steps;
}

}  // namespace aeos
