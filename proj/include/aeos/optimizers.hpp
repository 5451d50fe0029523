#pragma once

// Diagonal-preconditioned gradient methods with heavy-ball or Nesterov
// momentum. A step is a pure state transition:
//
//   (1) nu_{t+1} from g_{t+1} per the preconditioner rule (skipped when frozen)
//   (2) m_{t+1}  per the momentum flavor (Nesterov uses the look-ahead m-hat)
//   (3) x_{t+1} = x_t - eta * P_{t+1}^{-1} m_{t+1}
//
// where g_{t+1} is the gradient evaluated at x_t. Adam is EmaHB momentum with
// an AdamNoBC/AdamBC preconditioner, rmsprop is no momentum with Rmsprop, Nadam
// is EmaNesterov with an Adam preconditioner, and so on.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "aeos/stability.hpp"

namespace aeos {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class PrecondKind {
  Identity,
  FixedDiagonal,
  Rmsprop,
  AdamNoBC,
  AdamBC,
  Amsgrad,
  Padam,
  Adagrad,
  AdafactorLike
};

inline constexpr std::array<PrecondKind, 9> kAllPrecondKinds = {
    PrecondKind::Identity, PrecondKind::FixedDiagonal, PrecondKind::Rmsprop,
    PrecondKind::AdamNoBC, PrecondKind::AdamBC,        PrecondKind::Amsgrad,
    PrecondKind::Padam,    PrecondKind::Adagrad,       PrecondKind::AdafactorLike};

inline std::string_view to_string(PrecondKind kind) {
  switch (kind) {
    case PrecondKind::Identity: return "Identity";
    case PrecondKind::FixedDiagonal: return "FixedDiagonal";
    case PrecondKind::Rmsprop: return "Rmsprop";
    case PrecondKind::AdamNoBC: return "AdamNoBC";
    case PrecondKind::AdamBC: return "AdamBC";
    case PrecondKind::Amsgrad: return "Amsgrad";
    case PrecondKind::Padam: return "Padam";
    case PrecondKind::Adagrad: return "Adagrad";
    case PrecondKind::AdafactorLike: return "AdafactorLike";
  }
  return "?";
}

inline PrecondKind precond_kind_from_string(std::string_view name) {
  for (auto k : kAllPrecondKinds) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown preconditioner kind: " + std::string(name));
}

inline constexpr double kDefaultEpsilon = 1e-7;
inline constexpr double kDefaultPadamExponent = 0.25;

struct PreconditionerRule {
  PrecondKind kind = PrecondKind::Identity;
  double beta2 = 0.999;
  double epsilon = kDefaultEpsilon;
  double exponent = 0.5;               // only Padam may differ from 0.5
  std::optional<Vec> fixed_values;     // FixedDiagonal only

  /// True for rules whose nu is an exponential moving average of g^2.
  bool uses_ema() const {
    return kind == PrecondKind::Rmsprop || kind == PrecondKind::AdamNoBC ||
           kind == PrecondKind::AdamBC || kind == PrecondKind::Amsgrad ||
           kind == PrecondKind::Padam || kind == PrecondKind::AdafactorLike;
  }
  bool adaptive() const {
    return kind != PrecondKind::Identity && kind != PrecondKind::FixedDiagonal;
  }
};

struct OptimizerSpec {
  double eta = 1e-3;
  MomentumFlavor momentum;
  PreconditionerRule precond;
  double weight_decay = 0.0;  // decoupled (AdamW): x -= eta * weight_decay * x
};

/// A contiguous slice of the flat parameter vector. Blocks with cols > 1 are
/// treated as (rows x cols) column-major matrices by the factored rule.
struct ParamBlock {
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 1;
  std::size_t size() const { return rows * cols; }
};

struct OptimizerState {
  Vec x;
  Vec m;
  Vec nu;
  Vec nu_max;       // Amsgrad running maximum of nu
  Vec nu_row;       // AdafactorLike row factors, concatenated over rank-2 blocks
  Vec nu_col;       // AdafactorLike column factors
  std::vector<ParamBlock> blocks;  // empty = one rank-1 block
  std::size_t t = 0;
  bool frozen = false;
  std::size_t frozen_t = 0;  // step counter captured at freeze (bias correction)
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t step, const std::string& what)
      : std::runtime_error(what + " at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

// ---- construction helpers --------------------------------------------------

inline OptimizerSpec make_gd(double eta) {
  OptimizerSpec s;
  s.eta = eta;
  return s;
}

inline OptimizerSpec make_momentum(MomentumKind kind, double eta, double beta1) {
  OptimizerSpec s;
  s.eta = eta;
  s.momentum = {kind, beta1};
  return s;
}

inline OptimizerSpec make_adam(double eta, double beta1 = 0.9, double beta2 = 0.999,
                               double eps = kDefaultEpsilon, bool bias_correction = false) {
  OptimizerSpec s;
  s.eta = eta;
  s.momentum = {MomentumKind::EmaHB, beta1};
  s.precond.kind = bias_correction ? PrecondKind::AdamBC : PrecondKind::AdamNoBC;
  s.precond.beta2 = beta2;
  s.precond.epsilon = eps;
  return s;
}

/// Adam without bias correction plus decoupled weight decay.
inline OptimizerSpec make_adamw(double eta, double weight_decay, double beta1 = 0.9,
                                double beta2 = 0.999, double eps = kDefaultEpsilon) {
  OptimizerSpec s = make_adam(eta, beta1, beta2, eps);
  s.weight_decay = weight_decay;
  return s;
}

inline OptimizerSpec make_rmsprop(double eta, double beta2 = 0.999, double eps = kDefaultEpsilon) {
  OptimizerSpec s;
  s.eta = eta;
  s.precond.kind = PrecondKind::Rmsprop;
  s.precond.beta2 = beta2;
  s.precond.epsilon = eps;
  return s;
}

inline OptimizerSpec make_nadam(double eta, double beta1 = 0.9, double beta2 = 0.999,
                                double eps = kDefaultEpsilon) {
  OptimizerSpec s = make_adam(eta, beta1, beta2, eps);
  s.momentum.kind = MomentumKind::EmaNesterov;
  return s;
}

/// PrecondEmaHB(eta, beta1, P): EMA heavy ball with the static diagonal P.
/// The preconditioner applied is fixed_values + epsilon.
inline OptimizerSpec make_precond_ema_hb(double eta, double beta1, Vec fixed,
                                         double eps = kDefaultEpsilon) {
  OptimizerSpec s;
  s.eta = eta;
  s.momentum = {MomentumKind::EmaHB, beta1};
  s.precond.kind = PrecondKind::FixedDiagonal;
  s.precond.epsilon = eps;
  s.precond.fixed_values = std::move(fixed);
  return s;
}

inline void validate(const OptimizerSpec& spec) {
  if (!(spec.eta > 0.0) || !std::isfinite(spec.eta)) {
    throw std::invalid_argument("eta must be positive and finite");
  }
  const auto& m = spec.momentum;
  if (m.kind != MomentumKind::None && !(m.beta1 >= 0.0 && m.beta1 < 1.0)) {
    throw std::invalid_argument("beta1 must lie in [0, 1)");
  }
  if (!(spec.weight_decay >= 0.0) || !std::isfinite(spec.weight_decay)) {
    throw std::invalid_argument("weight_decay must be nonnegative");
  }
  const auto& p = spec.precond;
  if (!(p.epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (p.uses_ema() && !(p.beta2 >= 0.0 && p.beta2 < 1.0)) {
    throw std::invalid_argument("beta2 must lie in [0, 1)");
  }
  if (p.kind == PrecondKind::Padam) {
    if (!(p.exponent > 0.0 && p.exponent <= 0.5)) {
      throw std::invalid_argument("Padam exponent must lie in (0, 0.5]");
    }
  } else if (p.exponent != 0.5) {
    throw std::invalid_argument("exponent must be 0.5 except for Padam");
  }
  if (p.kind == PrecondKind::FixedDiagonal) {
    if (!p.fixed_values) throw std::invalid_argument("FixedDiagonal requires fixed_values");
    if ((p.fixed_values->array() < 0.0).any()) {
      throw std::invalid_argument("fixed_values must be nonnegative");
    }
  } else if (p.fixed_values) {
    throw std::invalid_argument("fixed_values only allowed for FixedDiagonal");
  }
}

/// Fresh state at x0 with zero momentum and zero second moment.
inline OptimizerState init_state(Vec x0, std::vector<ParamBlock> blocks = {}) {
  OptimizerState s;
  const auto n = x0.size();
  s.x = std::move(x0);
  s.m = Vec::Zero(n);
  s.nu = Vec::Zero(n);
  s.nu_max = Vec::Zero(n);
  s.blocks = std::move(blocks);
  std::size_t rows = 0, cols = 0;
  for (const auto& b : s.blocks) {
    if (b.cols > 1) {
      rows += b.rows;
      cols += b.cols;
    }
  }
  s.nu_row = Vec::Zero(static_cast<Eigen::Index>(rows));
  s.nu_col = Vec::Zero(static_cast<Eigen::Index>(cols));
  return s;
}

/// Diagonal of the preconditioner P for the current nu. The bias-correction
/// exponent is t + 1, matching the P_{t+1} formed right after nu_{t+1} is
/// computed inside step(); a frozen state keeps the counter captured at freeze.
inline Vec preconditioner(const OptimizerState& state, const OptimizerSpec& spec) {
  const auto& p = spec.precond;
  const auto n = state.x.size();
  switch (p.kind) {
    case PrecondKind::Identity: return Vec::Ones(n);
    case PrecondKind::FixedDiagonal:
      return (p.fixed_values->array() + p.epsilon).matrix();
    case PrecondKind::Rmsprop:
    case PrecondKind::AdamNoBC:
    case PrecondKind::Adagrad:
    case PrecondKind::AdafactorLike:
      return (state.nu.array().sqrt() + p.epsilon).matrix();
    case PrecondKind::Padam:
      return (state.nu.array().pow(p.exponent) + p.epsilon).matrix();
    case PrecondKind::Amsgrad:
      return (state.nu_max.array().sqrt() + p.epsilon).matrix();
    case PrecondKind::AdamBC: {
      const double k = static_cast<double>((state.frozen ? state.frozen_t : state.t) + 1);
      const double beta1 = spec.momentum.effective_beta1();
      const double c1 = 1.0 - std::pow(beta1, k);
      const double c2 = 1.0 - std::pow(p.beta2, k);
      if (!(c1 > 0.0) || !(c2 > 0.0)) {
        throw std::domain_error("bias-correction denominator underflowed to zero");
      }
      return ((state.nu.array() / c2).sqrt() + p.epsilon).matrix() / c1;
    }
  }
  throw std::logic_error("unhandled preconditioner kind");
}

namespace detail {

// Factored second moment for one rank-2 block: EMA of row and column sums of
// g^2, recombined as V = R C^T / sum(R).
inline void adafactor_block(const ParamBlock& blk, const Vec& g, double beta2,
                            Eigen::Ref<Vec> row, Eigen::Ref<Vec> col, Eigen::Ref<Vec> nu) {
  const auto r = static_cast<Eigen::Index>(blk.rows);
  const auto c = static_cast<Eigen::Index>(blk.cols);
  Eigen::Map<const Eigen::MatrixXd> G(g.data() + blk.offset, r, c);
  const Eigen::MatrixXd G2 = G.array().square().matrix();
  row = beta2 * row + (1.0 - beta2) * G2.rowwise().sum();
  col = beta2 * col + (1.0 - beta2) * G2.colwise().sum().transpose();
  const double total = row.sum();
  Eigen::Map<Eigen::MatrixXd> V(nu.data(), r, c);
  if (total > 0.0) {
    V.noalias() = row * col.transpose() / total;
  } else {
    V.setZero();
  }
}

inline void update_second_moment(OptimizerState& s, const Vec& g, const PreconditionerRule& p) {
  switch (p.kind) {
    case PrecondKind::Identity:
    case PrecondKind::FixedDiagonal: return;
    case PrecondKind::Rmsprop:
    case PrecondKind::AdamNoBC:
    case PrecondKind::AdamBC:
    case PrecondKind::Padam:
      s.nu = p.beta2 * s.nu + (1.0 - p.beta2) * g.cwiseAbs2();
      return;
    case PrecondKind::Amsgrad:
      s.nu = p.beta2 * s.nu + (1.0 - p.beta2) * g.cwiseAbs2();
      s.nu_max = s.nu_max.cwiseMax(s.nu);
      return;
    case PrecondKind::Adagrad:
      s.nu += g.cwiseAbs2();
      return;
    case PrecondKind::AdafactorLike: {
      if (s.blocks.empty()) {
        s.nu = p.beta2 * s.nu + (1.0 - p.beta2) * g.cwiseAbs2();
        return;
      }
      Eigen::Index row_off = 0, col_off = 0;
      for (const auto& blk : s.blocks) {
        const auto off = static_cast<Eigen::Index>(blk.offset);
        const auto len = static_cast<Eigen::Index>(blk.size());
        if (blk.cols > 1) {
          const auto r = static_cast<Eigen::Index>(blk.rows);
          const auto c = static_cast<Eigen::Index>(blk.cols);
          adafactor_block(blk, g, p.beta2, s.nu_row.segment(row_off, r),
                          s.nu_col.segment(col_off, c), s.nu.segment(off, len));
          row_off += r;
          col_off += c;
        } else {
          s.nu.segment(off, len) = p.beta2 * s.nu.segment(off, len) +
                                   (1.0 - p.beta2) * g.segment(off, len).cwiseAbs2();
        }
      }
      return;
    }
  }
}

}  // namespace detail

/// One optimizer step from `state` given the gradient at state.x.
inline OptimizerState step(OptimizerState state, const Vec& gradient, const OptimizerSpec& spec) {
  if (gradient.size() != state.x.size()) {
    throw std::invalid_argument("gradient size does not match parameters");
  }
  if (!gradient.allFinite()) throw DivergenceError(state.t, "non-finite gradient");

  if (!state.frozen) detail::update_second_moment(state, gradient, spec.precond);
  const Vec p = preconditioner(state, spec);

  const auto& mom = spec.momentum;
  const double beta = mom.effective_beta1();
  const double gain = mom.is_ema() ? 1.0 - beta : 1.0;
  Vec direction;
  switch (mom.kind) {
    case MomentumKind::None:
      state.m = gradient;
      direction = state.m;
      break;
    case MomentumKind::StandardHB:
    case MomentumKind::EmaHB:
      state.m = beta * state.m + gain * gradient;
      direction = state.m;
      break;
    case MomentumKind::StandardNesterov:
    case MomentumKind::EmaNesterov:
      state.m = beta * state.m + gain * gradient;
      direction = beta * state.m + gain * gradient;
      break;
  }
  if (spec.weight_decay > 0.0) state.x *= 1.0 - spec.eta * spec.weight_decay;
  state.x.array() -= spec.eta * direction.array() / p.array();
  if (!state.x.allFinite()) throw DivergenceError(state.t, "non-finite iterate");
  ++state.t;
  return state;
}

/// Stop updating nu (and anything derived from it) from now on.
inline OptimizerState freeze_preconditioner(OptimizerState state) {
  if (!state.frozen) {
    state.frozen = true;
    state.frozen_t = state.t == 0 ? 0 : state.t - 1;
  }
  return state;
}

/// Reference line for the preconditioned sharpness: the stability threshold of
/// the optimizer's momentum flavor at its learning rate (38/eta for Adam at 0.9).
inline double frozen_threshold(const OptimizerSpec& spec) {
  return stability_threshold(spec.momentum, spec.eta);
}

}  // namespace aeos
