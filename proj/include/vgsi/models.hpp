#pragma once

// DeViSE, similarity-network and triplet-network scorers with closed-form
// losses and hand-derived gradients.
//
// Parameter structs are templated on the storage scalar: float for training,
// double for finite-difference verification. Every reduction (dot products,
// norms, batch sums) accumulates in double. Gradients are returned in double
// with the same shapes as the parameters.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "vgsi/error.hpp"
#include "vgsi/linalg.hpp"
#include "vgsi/rng.hpp"

namespace vgsi {

enum class ModelKind { devise, simnet, triplet };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::devise: return "devise";
    case ModelKind::simnet: return "simnet";
    case ModelKind::triplet: return "triplet";
  }
  return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "devise") return ModelKind::devise;
  if (s == "simnet") return ModelKind::simnet;
  if (s == "triplet") return ModelKind::triplet;
  throw Error("unknown model kind '" + s + "'");
}

struct ModelDims {
  std::size_t goal = 0;   // text feature dimension
  std::size_t image = 0;  // image feature dimension
  std::size_t joint = 1024;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

inline constexpr double kDefaultMargin = 0.2;
inline constexpr double kProbabilityClamp = 1e-12;

// Image features projected onto the goal space (no bias).
template <typename T>
struct DeviseParams {
  static constexpr ModelKind kind = ModelKind::devise;
  Matrix<T> img_to_goal;  // d_I x d_G

  std::array<Matrix<T>*, 1> tensors() { return {&img_to_goal}; }
  std::array<const Matrix<T>*, 1> tensors() const { return {&img_to_goal}; }
  friend bool operator==(const DeviseParams&, const DeviseParams&) = default;
};

// Two unbiased branches into the joint space, elementwise product, then a
// 2-way fully connected head with bias.
template <typename T>
struct SimNetParams {
  static constexpr ModelKind kind = ModelKind::simnet;
  Matrix<T> img_to_joint;   // d_I x d_J
  Matrix<T> goal_to_joint;  // d_G x d_J
  Matrix<T> head_weight;    // d_J x 2
  Matrix<T> head_bias;      // 1 x 2

  std::array<Matrix<T>*, 4> tensors() { return {&img_to_joint, &goal_to_joint, &head_weight, &head_bias}; }
  std::array<const Matrix<T>*, 4> tensors() const {
    return {&img_to_joint, &goal_to_joint, &head_weight, &head_bias};
  }
  friend bool operator==(const SimNetParams&, const SimNetParams&) = default;
};

// Goal branch plus one image branch shared by positive and negative images.
template <typename T>
struct TripletParams {
  static constexpr ModelKind kind = ModelKind::triplet;
  Matrix<T> goal_to_joint;  // d_G x d_J
  Matrix<T> img_to_joint;   // d_I x d_J

  std::array<Matrix<T>*, 2> tensors() { return {&goal_to_joint, &img_to_joint}; }
  std::array<const Matrix<T>*, 2> tensors() const { return {&goal_to_joint, &img_to_joint}; }
  friend bool operator==(const TripletParams&, const TripletParams&) = default;
};

// ---- generic parameter utilities ----

template <template <typename> class P, typename U, typename T>
P<U> cast_params(const P<T>& p) {
  P<U> out;
  auto src = p.tensors();
  auto dst = out.tensors();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<U>();
  return out;
}

template <template <typename> class P, typename U = double, typename T>
P<U> zeros_like(const P<T>& p) {
  P<U> out;
  auto src = p.tensors();
  auto dst = out.tensors();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = Matrix<U>(src[i]->rows(), src[i]->cols());
  return out;
}

template <typename P>
std::size_t parameter_count(const P& p) {
  std::size_t n = 0;
  for (const auto* t : p.tensors()) n += t->size();
  return n;
}

template <typename P>
std::vector<double> flatten(const P& p) {
  std::vector<double> out;
  for (const auto* t : p.tensors())
    for (auto v : t->flat()) out.push_back(static_cast<double>(v));
  return out;
}

template <typename P>
void unflatten(P& p, std::span<const double> values) {
  if (values.size() != parameter_count(p)) throw Error("unflatten: size mismatch");
  std::size_t k = 0;
  for (auto* t : p.tensors())
    for (auto& v : t->flat()) v = static_cast<typename std::remove_reference_t<decltype(v)>>(values[k++]);
}

template <typename P>
bool all_finite(const P& p) {
  for (const auto* t : p.tensors())
    for (auto v : t->flat())
      if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

namespace detail {

template <typename T>
Matrix<T> glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Matrix<T> m(fan_in, fan_out);
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : m.flat()) v = static_cast<T>(rng.uniform(-limit, limit));
  return m;
}

}  // namespace detail

template <typename T = float>
DeviseParams<T> init_devise(const ModelDims& d, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "devise-init"));
  return {detail::glorot_uniform<T>(d.image, d.goal, rng)};
}

template <typename T = float>
SimNetParams<T> init_simnet(const ModelDims& d, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "simnet-init"));
  SimNetParams<T> p;
  p.img_to_joint = detail::glorot_uniform<T>(d.image, d.joint, rng);
  p.goal_to_joint = detail::glorot_uniform<T>(d.goal, d.joint, rng);
  p.head_weight = detail::glorot_uniform<T>(d.joint, 2, rng);
  p.head_bias = Matrix<T>(1, 2);
  return p;
}

template <typename T = float>
TripletParams<T> init_triplet(const ModelDims& d, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "triplet-init"));
  TripletParams<T> p;
  p.goal_to_joint = detail::glorot_uniform<T>(d.goal, d.joint, rng);
  p.img_to_joint = detail::glorot_uniform<T>(d.image, d.joint, rng);
  return p;
}

// ---- normalized projections and their backward pass ----

struct UnitVector {
  std::vector<double> unit;
  double norm = 0.0;
};

template <typename X>
UnitVector unit_vector(std::span<const X> x) {
  UnitVector u{std::vector<double>(x.begin(), x.end()), norm64(x)};
  if (!(u.norm > 0.0)) throw Error("zero-norm vector cannot be normalized");
  for (auto& v : u.unit) v /= u.norm;
  return u;
}

/// L2N(x * W).
template <typename X, typename T>
UnitVector unit_projection(std::span<const X> x, const Matrix<T>& w) {
  UnitVector u{project(x, w), 0.0};
  u.norm = norm64(std::span<const double>(u.unit));
  if (!(u.norm > 0.0)) throw Error("zero-norm projection");
  for (auto& v : u.unit) v /= u.norm;
  return u;
}

/// Given dL/d(unit), adds scale * dL/dW into grad_w for unit = L2N(x * W).
/// d unit / d u = (I - unit unit^T) / |u|.
template <typename X>
void backprop_unit_projection(std::span<const X> x, const UnitVector& u, const std::vector<double>& grad_unit,
                              double scale, Matrix<double>& grad_w) {
  const double along = dot64(std::span<const double>(grad_unit), std::span<const double>(u.unit));
  std::vector<double> grad_u(u.unit.size());
  for (std::size_t j = 0; j < grad_u.size(); ++j) grad_u[j] = scale * (grad_unit[j] - along * u.unit[j]) / u.norm;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = static_cast<double>(x[i]);
    if (xi == 0.0) continue;
    auto row = grad_w.row(i);
    for (std::size_t j = 0; j < grad_u.size(); ++j) row[j] += xi * grad_u[j];
  }
}

inline double unit_dot(const UnitVector& a, const UnitVector& b) {
  return dot64(std::span<const double>(a.unit), std::span<const double>(b.unit));
}

// ---- scores ----

template <typename T, typename X>
double devise_score(const DeviseParams<T>& p, std::span<const X> goal, std::span<const X> image) {
  if (goal.size() != p.img_to_goal.cols()) throw Error("devise: goal dimension mismatch");
  return unit_dot(unit_projection(image, p.img_to_goal), unit_vector(goal));
}

namespace detail {

// Softmax over the 2-way head applied to the joint vector; returns alpha[0].
template <typename T>
double simnet_head_probability(const SimNetParams<T>& p, const std::vector<double>& joint) {
  double z0 = static_cast<double>(p.head_bias(0, 0));
  double z1 = static_cast<double>(p.head_bias(0, 1));
  for (std::size_t k = 0; k < joint.size(); ++k) {
    z0 += joint[k] * static_cast<double>(p.head_weight(k, 0));
    z1 += joint[k] * static_cast<double>(p.head_weight(k, 1));
  }
  // alpha0 = 1 / (1 + exp(z1 - z0))
  return 1.0 / (1.0 + std::exp(z1 - z0));
}

inline std::vector<double> hadamard(const UnitVector& a, const UnitVector& b) {
  std::vector<double> j(a.unit.size());
  for (std::size_t k = 0; k < j.size(); ++k) j[k] = a.unit[k] * b.unit[k];
  return j;
}

}  // namespace detail

/// alpha[0] - alpha[1] with alpha the head softmax.
template <typename T, typename X>
double simnet_score(const SimNetParams<T>& p, std::span<const X> goal, std::span<const X> image) {
  const auto a = unit_projection(image, p.img_to_joint);
  const auto b = unit_projection(goal, p.goal_to_joint);
  const double p0 = detail::simnet_head_probability(p, detail::hadamard(a, b));
  return p0 - (1.0 - p0);
}

/// Cosine similarity of the two joint-space unit vectors.
template <typename T, typename X>
double triplet_score(const TripletParams<T>& p, std::span<const X> goal, std::span<const X> image) {
  return unit_dot(unit_projection(goal, p.goal_to_joint), unit_projection(image, p.img_to_joint));
}

// ---- losses and gradients ----

template <typename X>
struct TrainExample {
  std::span<const X> goal;
  std::span<const X> positive;  // the image of a pair for DeViSE / SimNet
  std::span<const X> negative;  // triplet only
  int label = 1;                // SimNet only
};

struct LossOptions {
  double margin = kDefaultMargin;
};

template <typename P>
struct LossGrad {
  double loss = 0.0;
  P grad;
};

// Per-example accumulators: add scale * d(loss_i)/d(params) into grad and
// return loss_i.

/// 1 - cos(L2N(x_I W), L2N(x_G)).
template <typename T, typename X>
double accumulate_loss_grad(const DeviseParams<T>& p, const TrainExample<X>& ex, DeviseParams<double>& grad,
                            double scale, const LossOptions& = {}) {
  if (ex.goal.size() != p.img_to_goal.cols()) throw Error("devise: goal dimension mismatch");
  const auto img = unit_projection(ex.positive, p.img_to_goal);
  const auto goal = unit_vector(ex.goal);
  std::vector<double> g(goal.unit.size());
  for (std::size_t k = 0; k < g.size(); ++k) g[k] = -goal.unit[k];
  backprop_unit_projection(ex.positive, img, g, scale, grad.img_to_goal);
  return 1.0 - unit_dot(img, goal);
}

/// Binary cross-entropy on alpha[0] = P(matched), clamped to
/// [1e-12, 1 - 1e-12] before the log (zero gradient while clamped).
template <typename T, typename X>
double accumulate_loss_grad(const SimNetParams<T>& p, const TrainExample<X>& ex, SimNetParams<double>& grad,
                            double scale, const LossOptions& = {}) {
  if (ex.label != 0 && ex.label != 1) throw Error("simnet label must be 0 or 1");
  const auto a = unit_projection(ex.positive, p.img_to_joint);
  const auto b = unit_projection(ex.goal, p.goal_to_joint);
  const auto joint = detail::hadamard(a, b);
  const double p0 = detail::simnet_head_probability(p, joint);
  const double pc = std::clamp(p0, kProbabilityClamp, 1.0 - kProbabilityClamp);
  const double y = ex.label;
  const double loss = -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
  if (pc != p0) return loss;

  // d loss / d z = (p - y, y - p) for the two logits.
  const double gz0 = p0 - y;
  const double gz1 = y - p0;
  const std::size_t dj = joint.size();
  std::vector<double> g_joint(dj);
  for (std::size_t k = 0; k < dj; ++k) {
    grad.head_weight(k, 0) += scale * joint[k] * gz0;
    grad.head_weight(k, 1) += scale * joint[k] * gz1;
    g_joint[k] = static_cast<double>(p.head_weight(k, 0)) * gz0 + static_cast<double>(p.head_weight(k, 1)) * gz1;
  }
  grad.head_bias(0, 0) += scale * gz0;
  grad.head_bias(0, 1) += scale * gz1;
  std::vector<double> g_a(dj), g_b(dj);
  for (std::size_t k = 0; k < dj; ++k) {
    g_a[k] = g_joint[k] * b.unit[k];
    g_b[k] = g_joint[k] * a.unit[k];
  }
  backprop_unit_projection(ex.positive, a, g_a, scale, grad.img_to_joint);
  backprop_unit_projection(ex.goal, b, g_b, scale, grad.goal_to_joint);
  return loss;
}

/// max(0, d(G, pos) - d(G, neg) + m) with d the cosine distance.
template <typename T, typename X>
double accumulate_loss_grad(const TripletParams<T>& p, const TrainExample<X>& ex, TripletParams<double>& grad,
                            double scale, const LossOptions& opt = {}) {
  if (opt.margin < 0.0) throw Error("triplet margin must be non-negative");
  const auto g = unit_projection(ex.goal, p.goal_to_joint);
  const auto pos = unit_projection(ex.positive, p.img_to_joint);
  const auto neg = unit_projection(ex.negative, p.img_to_joint);
  const double hinge = (1.0 - unit_dot(g, pos)) - (1.0 - unit_dot(g, neg)) + opt.margin;
  if (hinge <= 0.0) return 0.0;
  const std::size_t dj = g.unit.size();
  std::vector<double> g_goal(dj), g_pos(dj), g_neg(dj);
  for (std::size_t k = 0; k < dj; ++k) {
    g_goal[k] = neg.unit[k] - pos.unit[k];
    g_pos[k] = -g.unit[k];
    g_neg[k] = g.unit[k];
  }
  backprop_unit_projection(ex.goal, g, g_goal, scale, grad.goal_to_joint);
  backprop_unit_projection(ex.positive, pos, g_pos, scale, grad.img_to_joint);
  backprop_unit_projection(ex.negative, neg, g_neg, scale, grad.img_to_joint);
  return hinge;
}

/// Mean loss and its gradient over a batch.
template <template <typename> class P, typename T, typename X>
LossGrad<P<double>> loss_grad(const P<T>& params, std::span<const TrainExample<X>> batch, const LossOptions& opt = {}) {
  if (batch.empty()) throw Error("loss_grad needs a non-empty batch");
  LossGrad<P<double>> out{0.0, zeros_like<P, double>(params)};
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) out.loss += accumulate_loss_grad(params, ex, out.grad, scale, opt);
  out.loss *= scale;
  return out;
}

template <typename T, typename X>
LossGrad<DeviseParams<double>> devise_loss_grad(const DeviseParams<T>& p, std::span<const TrainExample<X>> batch) {
  return loss_grad(p, batch);
}

template <typename T, typename X>
LossGrad<SimNetParams<double>> simnet_loss_grad(const SimNetParams<T>& p, std::span<const TrainExample<X>> batch) {
  return loss_grad(p, batch);
}

template <typename T, typename X>
LossGrad<TripletParams<double>> triplet_loss_grad(const TripletParams<T>& p, std::span<const TrainExample<X>> batch,
                                                  double margin = kDefaultMargin) {
  return loss_grad(p, batch, LossOptions{margin});
}

// ---- runtime model ----

using ModelParams = std::variant<DeviseParams<float>, SimNetParams<float>, TripletParams<float>>;

struct Model {
  ModelKind kind = ModelKind::triplet;
  ModelDims dims;
  double margin = kDefaultMargin;
  ModelParams params;

  friend bool operator==(const Model&, const Model&) = default;
};

inline Model init_model(ModelKind kind, const ModelDims& dims, std::uint64_t seed, double margin = kDefaultMargin) {
  if (dims.goal == 0 || dims.image == 0 || dims.joint == 0) throw Error("model dimensions must be positive");
  Model m{kind, dims, margin, {}};
  switch (kind) {
    case ModelKind::devise: m.params = init_devise(dims, seed); break;
    case ModelKind::simnet: m.params = init_simnet(dims, seed); break;
    case ModelKind::triplet: m.params = init_triplet(dims, seed); break;
  }
  return m;
}

/// Goal features mapped to the space where they meet image features.
inline UnitVector embed_goal(const Model& m, std::span<const float> goal) {
  return std::visit(
      [&](const auto& p) -> UnitVector {
        using P = std::decay_t<decltype(p)>;
        if constexpr (P::kind == ModelKind::devise) {
          if (goal.size() != p.img_to_goal.cols()) throw Error("devise: goal dimension mismatch");
          return unit_vector(goal);
        } else {
          return unit_projection(goal, p.goal_to_joint);
        }
      },
      m.params);
}

inline UnitVector embed_image(const Model& m, std::span<const float> image) {
  return std::visit(
      [&](const auto& p) -> UnitVector {
        using P = std::decay_t<decltype(p)>;
        if constexpr (P::kind == ModelKind::devise) {
          return unit_projection(image, p.img_to_goal);
        } else {
          return unit_projection(image, p.img_to_joint);
        }
      },
      m.params);
}

inline double score_embedded(const Model& m, const UnitVector& goal, const UnitVector& image) {
  if (const auto* sp = std::get_if<SimNetParams<float>>(&m.params)) {
    const double p0 = detail::simnet_head_probability(*sp, detail::hadamard(image, goal));
    return p0 - (1.0 - p0);
  }
  return unit_dot(goal, image);
}

/// Matching score of a goal (or any prompt text) against an image.
inline double match(const Model& m, std::span<const float> goal, std::span<const float> image) {
  return score_embedded(m, embed_goal(m, goal), embed_image(m, image));
}

}  // namespace vgsi
