#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vgsi/error.hpp"
#include "vgsi/models.hpp"

namespace vgsi {

enum class OptimizerKind { adam, rmsprop };

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "rmsprop"; }

inline OptimizerKind parse_optimizer_kind(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "rmsprop") return OptimizerKind::rmsprop;
  throw Error("unknown optimizer '" + s + "'");
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double rho = 0.9;
  double rmsprop_epsilon = 1e-7;

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

/// Optimizer and learning rate each model was trained with in the reference
/// setup.
inline OptimizerConfig default_optimizer(ModelKind kind) {
  OptimizerConfig c;
  switch (kind) {
    case ModelKind::devise:
    case ModelKind::simnet:
      c.kind = OptimizerKind::rmsprop;
      c.learning_rate = 5e-6;
      break;
    case ModelKind::triplet:
      c.kind = OptimizerKind::adam;
      c.learning_rate = 1e-5;
      break;
  }
  return c;
}

template <typename T = float>
struct OptimizerState {
  OptimizerConfig config;
  std::uint64_t step = 0;
  // One accumulator per parameter tensor, lazily shaped on the first step.
  // Adam: first and second moments. RMSProp: only `second` is used.
  std::vector<std::vector<T>> first;
  std::vector<std::vector<T>> second;

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

template <typename T, typename G>
void optimizer_step(OptimizerState<T>& st, std::span<const std::span<T>> params,
                    std::span<const std::span<const G>> grads) {
  if (params.size() != grads.size()) throw Error("optimizer: parameter/gradient count mismatch");
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].size() != grads[t].size()) throw Error("optimizer: shape mismatch in tensor " + std::to_string(t));
  }
  if (st.second.empty()) {
    for (const auto& p : params) {
      st.first.emplace_back(st.config.kind == OptimizerKind::adam ? p.size() : 0, T{});
      st.second.emplace_back(p.size(), T{});
    }
  }
  if (st.second.size() != params.size()) throw Error("optimizer: state does not match parameter layout");
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (st.second[t].size() != params[t].size()) throw Error("optimizer: state shape mismatch in tensor " + std::to_string(t));
  }

  ++st.step;
  const auto& c = st.config;
  if (c.kind == OptimizerKind::adam) {
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(st.step));
    for (std::size_t t = 0; t < params.size(); ++t) {
      auto& m = st.first[t];
      auto& v = st.second[t];
      for (std::size_t i = 0; i < params[t].size(); ++i) {
        const double g = static_cast<double>(grads[t][i]);
        const double mi = c.beta1 * static_cast<double>(m[i]) + (1.0 - c.beta1) * g;
        const double vi = c.beta2 * static_cast<double>(v[i]) + (1.0 - c.beta2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double update = c.learning_rate * (mi / bc1) / (std::sqrt(vi / bc2) + c.adam_epsilon);
        params[t][i] = static_cast<T>(static_cast<double>(params[t][i]) - update);
      }
    }
  } else {
    for (std::size_t t = 0; t < params.size(); ++t) {
      auto& v = st.second[t];
      for (std::size_t i = 0; i < params[t].size(); ++i) {
        const double g = static_cast<double>(grads[t][i]);
        const double vi = c.rho * static_cast<double>(v[i]) + (1.0 - c.rho) * g * g;
        v[i] = static_cast<T>(vi);
        const double update = c.learning_rate * g / (std::sqrt(vi) + c.rmsprop_epsilon);
        params[t][i] = static_cast<T>(static_cast<double>(params[t][i]) - update);
      }
    }
  }
}

/// Step over whole parameter structs (gradient struct of the same layout).
template <typename T, typename P, typename G>
void optimizer_step(OptimizerState<T>& st, P& params, const G& grads) {
  std::vector<std::span<T>> ps;
  std::vector<std::span<const double>> gs;
  for (auto* t : params.tensors()) ps.push_back(t->flat());
  for (const auto* t : grads.tensors()) gs.push_back(t->flat());
  optimizer_step<T, double>(st, ps, gs);
}

}  // namespace vgsi
