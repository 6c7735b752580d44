#pragma once

// Binary checkpoint: versioned header, model kind and dims, margin, every
// parameter tensor as little-endian f32, then the optimizer state.
//
//   "VGSC" u32 version u32 kind u32 d_G u32 d_I u32 d_J f64 margin
//   u32 tensors { u32 rows u32 cols f32[rows*cols] }...
//   u32 optimizer f64 lr f64 beta1 f64 beta2 f64 adam_eps f64 rho f64 rms_eps
//   u64 step u32 n { u64 len f32[len] }... (first moments)
//   u32 n { u64 len f32[len] }... (second moments)

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <variant>

#include "vgsi/binary_io.hpp"
#include "vgsi/error.hpp"
#include "vgsi/models.hpp"
#include "vgsi/optimizer.hpp"
#include "vgsi/rng.hpp"

namespace vgsi {

struct Checkpoint {
  Model model;
  OptimizerState<float> optimizer;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr char kCheckpointMagic[4] = {'V', 'G', 'S', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_accumulators(std::ostream& os, const std::vector<std::vector<float>>& acc) {
  binary::put_uint(os, static_cast<std::uint32_t>(acc.size()));
  for (const auto& a : acc) {
    binary::put_uint(os, static_cast<std::uint64_t>(a.size()));
    for (float v : a) binary::put_f32(os, v);
  }
}

inline std::vector<std::vector<float>> get_accumulators(std::istream& is) {
  std::uint32_t n = 0;
  if (!binary::get_uint(is, n)) throw FormatError("truncated checkpoint (optimizer state)");
  std::vector<std::vector<float>> out(n);
  for (auto& a : out) {
    std::uint64_t len = 0;
    if (!binary::get_uint(is, len)) throw FormatError("truncated checkpoint (optimizer state)");
    a.resize(len);
    for (auto& v : a)
      if (!binary::get_f32(is, v)) throw FormatError("truncated checkpoint (optimizer state)");
  }
  return out;
}

}  // namespace detail

inline void write_checkpoint(const Checkpoint& ck, std::ostream& os) {
  const auto& m = ck.model;
  os.write(kCheckpointMagic, 4);
  binary::put_uint(os, kCheckpointVersion);
  binary::put_uint(os, static_cast<std::uint32_t>(m.kind));
  binary::put_uint(os, static_cast<std::uint32_t>(m.dims.goal));
  binary::put_uint(os, static_cast<std::uint32_t>(m.dims.image));
  binary::put_uint(os, static_cast<std::uint32_t>(m.dims.joint));
  binary::put_f64(os, m.margin);
  std::visit(
      [&](const auto& p) {
        const auto ts = p.tensors();
        binary::put_uint(os, static_cast<std::uint32_t>(ts.size()));
        for (const auto* t : ts) {
          binary::put_uint(os, static_cast<std::uint32_t>(t->rows()));
          binary::put_uint(os, static_cast<std::uint32_t>(t->cols()));
          for (float v : t->flat()) binary::put_f32(os, v);
        }
      },
      m.params);
  const auto& c = ck.optimizer.config;
  binary::put_uint(os, static_cast<std::uint32_t>(c.kind));
  for (double v : {c.learning_rate, c.beta1, c.beta2, c.adam_epsilon, c.rho, c.rmsprop_epsilon}) binary::put_f64(os, v);
  binary::put_uint(os, ck.optimizer.step);
  detail::put_accumulators(os, ck.optimizer.first);
  detail::put_accumulators(os, ck.optimizer.second);
}

inline void write_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_checkpoint(ck, os);
  if (!os) throw Error("I/O failure writing '" + path + "'");
}

inline Checkpoint read_checkpoint(std::istream& is) {
  char magic[4] = {};
  if (!is.read(magic, 4) || std::string_view(magic, 4) != std::string_view(kCheckpointMagic, 4)) {
    throw FormatError("bad magic: not a checkpoint file");
  }
  std::uint32_t version = 0, kind = 0, dg = 0, di = 0, dj = 0;
  double margin = 0.0;
  if (!binary::get_uint(is, version) || !binary::get_uint(is, kind) || !binary::get_uint(is, dg) ||
      !binary::get_uint(is, di) || !binary::get_uint(is, dj) || !binary::get_f64(is, margin)) {
    throw FormatError("truncated checkpoint header");
  }
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  if (kind > 2) throw FormatError("unknown model kind tag " + std::to_string(kind));

  Checkpoint ck;
  ck.model = init_model(static_cast<ModelKind>(kind), {dg, di, dj}, 0, margin);
  std::visit(
      [&](auto& p) {
        std::uint32_t n = 0;
        if (!binary::get_uint(is, n)) throw FormatError("truncated checkpoint (tensor count)");
        auto ts = p.tensors();
        if (n != ts.size()) throw FormatError("checkpoint tensor count does not match model kind");
        for (auto* t : ts) {
          std::uint32_t rows = 0, cols = 0;
          if (!binary::get_uint(is, rows) || !binary::get_uint(is, cols)) throw FormatError("truncated checkpoint tensor");
          if (rows != t->rows() || cols != t->cols()) throw FormatError("checkpoint tensor shape does not match dims");
          for (auto& v : t->flat()) {
            if (!binary::get_f32(is, v)) throw FormatError("truncated checkpoint tensor data");
            if (!std::isfinite(v)) throw FormatError("non-finite parameter in checkpoint");
          }
        }
      },
      ck.model.params);

  std::uint32_t okind = 0;
  auto& c = ck.optimizer.config;
  if (!binary::get_uint(is, okind) || okind > 1) throw FormatError("bad optimizer tag in checkpoint");
  c.kind = static_cast<OptimizerKind>(okind);
  for (double* v : {&c.learning_rate, &c.beta1, &c.beta2, &c.adam_epsilon, &c.rho, &c.rmsprop_epsilon})
    if (!binary::get_f64(is, *v)) throw FormatError("truncated checkpoint (optimizer config)");
  if (!binary::get_uint(is, ck.optimizer.step)) throw FormatError("truncated checkpoint (optimizer step)");
  ck.optimizer.first = detail::get_accumulators(is);
  ck.optimizer.second = detail::get_accumulators(is);
  return ck;
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("file not found: " + path);
  return read_checkpoint(is);
}

/// Content hash of the serialized checkpoint, used to tag reports.
inline std::string checkpoint_id(const Checkpoint& ck) {
  std::ostringstream os;
  write_checkpoint(ck, os);
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << fnv1a(os.str());
  return hex.str();
}

}  // namespace vgsi
