#pragma once

// Fully-connected networks in float64 with reverse-mode gradients and exact
// Hessian-vector products (forward-over-reverse R-operator), plus the datasets
// they train on.
//
// Parameter layout: for each layer l, W_l (out x in, column-major) followed by
// b_l (out). Activations are stored feature-major: one column per example.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "aeos/optimizers.hpp"

namespace aeos {


enum class Activation { Tanh, ReLU };
enum class LossKind { CrossEntropy, SquaredError };

inline const char* to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "relu"; }
inline const char* to_string(LossKind k) {
  return k == LossKind::CrossEntropy ? "cross_entropy" : "squared_error";
}
inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh" || s == "Tanh") return Activation::Tanh;
  if (s == "relu" || s == "ReLU") return Activation::ReLU;
  throw std::invalid_argument("unknown activation: " + s);
}
inline LossKind loss_kind_from_string(const std::string& s) {
  if (s == "cross_entropy" || s == "CrossEntropy") return LossKind::CrossEntropy;
  if (s == "squared_error" || s == "SquaredError") return LossKind::SquaredError;
  throw std::invalid_argument("unknown loss kind: " + s);
}

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Weights ~ N(0, 1/fan_in), biases zero.
struct MLPConfig {
  std::vector<std::size_t> layer_widths;  // input, hidden..., output
  Activation activation = Activation::Tanh;
  std::uint64_t seed = 0;

  void validate() const {
    if (layer_widths.size() < 3) {
      throw std::invalid_argument("MLP needs input, at least one hidden, and output widths");
    }
    for (auto w : layer_widths) {
      if (w < 1) throw std::invalid_argument("MLP widths must be >= 1");
    }
  }
  std::size_t num_layers() const { return layer_widths.size() - 1; }

  std::size_t num_params() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layer_widths.size(); ++l) {
      n += layer_widths[l + 1] * (layer_widths[l] + 1);
    }
    return n;
  }

  /// One rank-2 block per weight matrix and one rank-1 block per bias.
  std::vector<ParamBlock> blocks() const {
    std::vector<ParamBlock> out;
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < layer_widths.size(); ++l) {
      const auto in = layer_widths[l], o = layer_widths[l + 1];
      out.push_back({off, o, in});
      off += o * in;
      out.push_back({off, o, 1});
      off += o;
    }
    return out;
  }
};

/// FC net with five hidden layers of width 200 and tanh activations.
inline MLPConfig fc_tanh_preset(std::size_t input_dim, std::size_t classes,
                                std::uint64_t seed = 0) {
  MLPConfig c;
  c.layer_widths = {input_dim, 200, 200, 200, 200, 200, classes};
  c.activation = Activation::Tanh;
  c.seed = seed;
  return c;
}

inline Vec init_params(const MLPConfig& cfg) {
  cfg.validate();
  Vec p = Vec::Zero(static_cast<Eigen::Index>(cfg.num_params()));
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < cfg.layer_widths.size(); ++l) {
    const auto in = cfg.layer_widths[l], out = cfg.layer_widths[l + 1];
    const double sd = 1.0 / std::sqrt(static_cast<double>(in));
    for (std::size_t i = 0; i < in * out; ++i) p[static_cast<Eigen::Index>(off + i)] = sd * normal(rng);
    off += in * out + out;
  }
  return p;
}

// ---- datasets ---------------------------------------------------------------

enum class Split { Train, Test };

struct Dataset {
  Mat inputs;                  // n x d
  std::vector<int> labels;     // n, each in [0, classes)
  int classes = 0;
  Split split = Split::Train;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(inputs.cols()); }

  void validate() const {
    if (labels.empty()) throw std::invalid_argument("dataset is empty");
    if (static_cast<std::size_t>(inputs.rows()) != labels.size()) {
      throw std::invalid_argument("dataset inputs/labels size mismatch");
    }
    for (int y : labels) {
      if (y < 0 || y >= classes) throw std::invalid_argument("label out of range");
    }
    if (!inputs.allFinite()) throw std::invalid_argument("dataset inputs not finite");
  }
};

/// k Gaussian clusters with means separation * e_c (c < d), labels assigned
/// round-robin. Noise on coordinate j has standard deviation (j+1)^-noise_decay,
/// so noise_decay = 0 gives unit covariance. Deterministic in seed.
inline Dataset synthetic_dataset(std::uint64_t seed, std::size_t n, std::size_t d, int k,
                                 double separation = 3.0, Split split = Split::Train,
                                 double noise_decay = 0.0) {
  if (k < 2) throw std::invalid_argument("synthetic_dataset: need k >= 2");
  if (d < static_cast<std::size_t>(k)) {
    throw std::invalid_argument("synthetic_dataset: need d >= k for simplex means");
  }
  Dataset ds;
  ds.classes = k;
  ds.split = split;
  ds.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  ds.labels.resize(n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % static_cast<std::size_t>(k));
    ds.labels[i] = y;
    for (std::size_t j = 0; j < d; ++j) {
      ds.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          normal(rng) * std::pow(static_cast<double>(j + 1), -noise_decay);
    }
    ds.inputs(static_cast<Eigen::Index>(i), y) += separation;
  }
  return ds;
}

// ---- loss surface -------------------------------------------------------------

struct LossSurface {
  MLPConfig model;
  const Dataset* data = nullptr;
  LossKind loss_kind = LossKind::CrossEntropy;
  std::optional<std::vector<std::size_t>> batch;  // absent = full batch

  LossSurface(MLPConfig m, const Dataset& d, LossKind k = LossKind::CrossEntropy,
              std::optional<std::vector<std::size_t>> b = std::nullopt)
      : model(std::move(m)), data(&d), loss_kind(k), batch(std::move(b)) {
    model.validate();
    if (model.layer_widths.front() != d.dim()) {
      throw std::invalid_argument("model input width does not match dataset dimension");
    }
    if (static_cast<int>(model.layer_widths.back()) != d.classes) {
      throw std::invalid_argument("model output width does not match class count");
    }
    build_batch();
  }

  std::size_t num_params() const { return model.num_params(); }
  std::size_t batch_size() const { return static_cast<std::size_t>(X.cols()); }

  Mat X;  // d x n_batch
  Mat Y;  // k x n_batch one-hot
  std::vector<int> y;

 private:
  void build_batch() {
    const std::size_t n = batch ? batch->size() : data->size();
    if (n == 0) throw std::invalid_argument("empty batch");
    X.resize(static_cast<Eigen::Index>(data->dim()), static_cast<Eigen::Index>(n));
    Y = Mat::Zero(data->classes, static_cast<Eigen::Index>(n));
    y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t src = batch ? (*batch)[i] : i;
      if (src >= data->size()) throw std::out_of_range("batch index out of range");
      X.col(static_cast<Eigen::Index>(i)) = data->inputs.row(static_cast<Eigen::Index>(src)).transpose();
      y[i] = data->labels[src];
      Y(y[i], static_cast<Eigen::Index>(i)) = 1.0;
    }
  }
};

namespace detail {

struct LayerView {
  Eigen::Map<const Mat> W;
  Eigen::Map<const Vec> b;
};

inline std::vector<LayerView> layer_views(const MLPConfig& cfg, const double* p) {
  std::vector<LayerView> out;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < cfg.layer_widths.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(cfg.layer_widths[l]);
    const auto o = static_cast<Eigen::Index>(cfg.layer_widths[l + 1]);
    out.push_back({Eigen::Map<const Mat>(p + off, o, in), Eigen::Map<const Vec>(p + off + o * in, o)});
    off += static_cast<std::size_t>(o * in + o);
  }
  return out;
}

inline void apply_activation(Activation act, const Mat& z, Mat& a, Mat& da, Mat* d2a) {
  if (act == Activation::Tanh) {
    a = z.array().tanh();
    da = 1.0 - a.array().square();
    if (d2a) *d2a = -2.0 * a.array() * da.array();
  } else {
    a = z.cwiseMax(0.0);
    da = (z.array() > 0.0).cast<double>();
    if (d2a) *d2a = Mat::Zero(z.rows(), z.cols());
  }
}

struct Forward {
  std::vector<Mat> a;    // a[0] = X, a[l] = activation output of layer l (hidden)
  std::vector<Mat> da;   // sigma'(z_l) for hidden layers
  std::vector<Mat> d2a;  // sigma''(z_l) (HVP only)
  Mat logits;
};

inline Forward forward(const LossSurface& s, const std::vector<LayerView>& L, bool second) {
  Forward f;
  const std::size_t nl = L.size();
  f.a.resize(nl);
  f.da.resize(nl);
  if (second) f.d2a.resize(nl);
  f.a[0] = s.X;
  for (std::size_t l = 0; l < nl; ++l) {
    Mat z = L[l].W * f.a[l];
    z.colwise() += L[l].b;
    if (l + 1 == nl) {
      f.logits = std::move(z);
    } else {
      apply_activation(s.model.activation, z, f.a[l + 1], f.da[l + 1],
                       second ? &f.d2a[l + 1] : nullptr);
    }
  }
  if (!f.logits.allFinite()) throw NumericalError("non-finite activations in forward pass");
  return f;
}

/// Loss and dL/dlogits (already divided by the batch size). For cross-entropy
/// also returns the softmax probabilities.
inline double output_loss(const LossSurface& s, const Mat& logits, Mat& delta, Mat* probs) {
  const double n = static_cast<double>(logits.cols());
  if (s.loss_kind == LossKind::CrossEntropy) {
    Mat p = logits;
    double loss = 0.0;
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      const double mx = p.col(j).maxCoeff();
      p.col(j).array() = (p.col(j).array() - mx).exp();
      const double z = p.col(j).sum();
      p.col(j) /= z;
      loss += -(logits(s.y[static_cast<std::size_t>(j)], j) - mx - std::log(z));
    }
    delta = (p - s.Y) / n;
    if (probs) *probs = std::move(p);
    return loss / n;
  }
  const Mat r = logits - s.Y;
  delta = r / n;
  return 0.5 * r.squaredNorm() / n;
}

}  // namespace detail

struct LossGrad {
  double loss = 0.0;
  Vec gradient;
};

inline void check_params(const LossSurface& s, const Vec& params) {
  if (static_cast<std::size_t>(params.size()) != s.num_params()) {
    throw std::invalid_argument("parameter vector length does not match architecture");
  }
  if (!params.allFinite()) throw NumericalError("non-finite parameters");
}

/// Mean loss over the surface's batch and its exact gradient.
inline LossGrad loss_and_gradient(const LossSurface& s, const Vec& params) {
  check_params(s, params);
  const auto L = detail::layer_views(s.model, params.data());
  auto f = detail::forward(s, L, false);
  Mat delta;
  LossGrad out;
  out.loss = detail::output_loss(s, f.logits, delta, nullptr);
  if (!std::isfinite(out.loss)) throw NumericalError("non-finite loss");
  out.gradient.resize(params.size());
  std::size_t off = static_cast<std::size_t>(params.size());
  for (std::size_t l = L.size(); l-- > 0;) {
    const auto o = L[l].W.rows(), in = L[l].W.cols();
    off -= static_cast<std::size_t>(o * in + o);
    Eigen::Map<Mat>(out.gradient.data() + off, o, in).noalias() = delta * f.a[l].transpose();
    Eigen::Map<Vec>(out.gradient.data() + off + o * in, o) = delta.rowwise().sum();
    if (l > 0) {
      Mat back = L[l].W.transpose() * delta;
      delta = back.cwiseProduct(f.da[l]);
    }
  }
  return out;
}

inline double loss_value(const LossSurface& s, const Vec& params) {
  check_params(s, params);
  const auto L = detail::layer_views(s.model, params.data());
  auto f = detail::forward(s, L, false);
  Mat delta;
  return detail::output_loss(s, f.logits, delta, nullptr);
}

/// Fraction of batch examples whose argmax logit differs from the label.
inline double classification_error(const LossSurface& s, const Vec& params) {
  check_params(s, params);
  const auto L = detail::layer_views(s.model, params.data());
  auto f = detail::forward(s, L, false);
  std::size_t wrong = 0;
  for (Eigen::Index j = 0; j < f.logits.cols(); ++j) {
    Eigen::Index arg = 0;
    f.logits.col(j).maxCoeff(&arg);
    if (arg != s.y[static_cast<std::size_t>(j)]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(f.logits.cols());
}

/// Exact H v by propagating the directional derivative R{.} = d/dr (.)(params + r v)
/// through both the forward and the backward pass.
inline Vec hessian_vector_product(const LossSurface& s, const Vec& params, const Vec& v) {
  check_params(s, params);
  if (v.size() != params.size()) throw std::invalid_argument("HVP: v has wrong length");
  const auto L = detail::layer_views(s.model, params.data());
  const auto R = detail::layer_views(s.model, v.data());
  const std::size_t nl = L.size();
  auto f = detail::forward(s, L, true);

  // R-forward: R{a_0} = 0.
  std::vector<Mat> ra(nl);
  std::vector<Mat> rz(nl + 1);
  ra[0] = Mat::Zero(f.a[0].rows(), f.a[0].cols());
  Mat rlogits;
  for (std::size_t l = 0; l < nl; ++l) {
    Mat z = R[l].W * f.a[l];
    if (l > 0) z.noalias() += L[l].W * ra[l];
    z.colwise() += R[l].b;
    if (l + 1 == nl) {
      rlogits = std::move(z);
    } else {
      ra[l + 1] = f.da[l + 1].cwiseProduct(z);
      rz[l + 1] = std::move(z);
    }
  }

  Mat delta, probs;
  detail::output_loss(s, f.logits, delta, &probs);
  const double n = static_cast<double>(f.logits.cols());
  Mat rdelta;
  if (s.loss_kind == LossKind::CrossEntropy) {
    // (diag(p) - p p^T) R{z} per column.
    Mat pr = probs.cwiseProduct(rlogits);
    const Eigen::RowVectorXd dots = pr.colwise().sum();
    rdelta = (pr - probs * dots.asDiagonal()) / n;
  } else {
    rdelta = rlogits / n;
  }

  Vec hv(params.size());
  std::size_t off = static_cast<std::size_t>(params.size());
  for (std::size_t l = nl; l-- > 0;) {
    const auto o = L[l].W.rows(), in = L[l].W.cols();
    off -= static_cast<std::size_t>(o * in + o);
    auto HW = Eigen::Map<Mat>(hv.data() + off, o, in);
    HW.noalias() = rdelta * f.a[l].transpose();
    if (l > 0) HW.noalias() += delta * ra[l].transpose();
    Eigen::Map<Vec>(hv.data() + off + o * in, o) = rdelta.rowwise().sum();
    if (l > 0) {
      const Mat back = L[l].W.transpose() * delta;
      Mat rback = R[l].W.transpose() * delta;
      rback.noalias() += L[l].W.transpose() * rdelta;
      Mat next_rdelta = rback.cwiseProduct(f.da[l]);
      next_rdelta.array() += back.array() * f.d2a[l].array() * rz[l].array();
      delta = back.cwiseProduct(f.da[l]);
      rdelta = std::move(next_rdelta);
    }
  }
  if (!hv.allFinite()) throw NumericalError("non-finite Hessian-vector product");
  return hv;
}

/// Central difference of gradients, (grad(x + h v) - grad(x - h v)) / 2h.
inline Vec finite_difference_hvp(const LossSurface& s, const Vec& params, const Vec& v,
                                 double h = 1e-4) {
  const Vec gp = loss_and_gradient(s, params + h * v).gradient;
  const Vec gm = loss_and_gradient(s, params - h * v).gradient;
  return (gp - gm) / (2.0 * h);
}

// ---- minibatches ----------------------------------------------------------------

/// Sampling without replacement, reshuffled each epoch with a seeded RNG.
class MinibatchSampler {
 public:
  MinibatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
      : n_(n), batch_(batch_size), rng_(seed), order_(n) {
    if (batch_size == 0 || batch_size > n) throw std::invalid_argument("bad batch size");
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    reshuffle();
  }

  std::vector<std::size_t> next() {
    if (pos_ + batch_ > n_) reshuffle();
    std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(pos_ + batch_));
    pos_ += batch_;
    return out;
  }

 private:
  void reshuffle() {
    std::shuffle(order_.begin(), order_.end(), rng_);
    pos_ = 0;
  }

  std::size_t n_, batch_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

}  // namespace aeos
