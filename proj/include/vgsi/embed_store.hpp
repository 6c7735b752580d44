#pragma once

// Id-indexed dense feature vectors, their binary file format, and the
// normalization / similarity primitives every scorer builds on.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "vgsi/binary_io.hpp"
#include "vgsi/error.hpp"
#include "vgsi/linalg.hpp"

namespace vgsi {

class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  explicit EmbeddingMatrix(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw Error("embedding dimension must be positive");
  }

  std::size_t dim() const { return dim_; }
  std::size_t count() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }

  const std::vector<std::string>& ids() const { return ids_; }
  const std::string& id(std::size_t row) const { return ids_[row]; }
  std::span<const float> row(std::size_t r) const { return {values_.data() + r * dim_, dim_}; }
  std::span<const float> values() const { return values_; }

  std::optional<std::size_t> find(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(const std::string& id) const { return index_.contains(id); }

  std::span<const float> at(const std::string& id) const {
    auto r = find(id);
    if (!r) throw Error("no embedding for id '" + id + "'");
    return row(*r);
  }

  template <typename V>
  void append(const std::string& id, std::span<const V> v) {
    if (v.size() != dim_) {
      throw Error("row '" + id + "' has dimension " + std::to_string(v.size()) + ", expected " + std::to_string(dim_));
    }
    if (index_.contains(id)) throw Error("duplicate embedding id '" + id + "'");
    for (auto x : v) {
      const auto f = static_cast<float>(x);
      if (!std::isfinite(f)) throw Error("non-finite value in row '" + id + "'");
      values_.push_back(f);
    }
    index_.emplace(id, ids_.size());
    ids_.push_back(id);
  }

  void append(const std::string& id, const std::vector<float>& v) { append(id, std::span<const float>(v)); }
  void append(const std::string& id, const std::vector<double>& v) { append(id, std::span<const double>(v)); }

  friend bool operator==(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
    return a.dim_ == b.dim_ && a.ids_ == b.ids_ && a.values_ == b.values_;
  }

 private:
  std::size_t dim_ = 1;
  std::vector<std::string> ids_;
  std::vector<float> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr char kEmbeddingMagic[4] = {'V', 'G', 'S', 'E'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;

/// Serialized size: 20-byte header, id table, then count*dim floats.
inline std::uint64_t embedding_file_size(const EmbeddingMatrix& m) {
  std::uint64_t n = 4 + 4 + 4 + 8;
  for (const auto& id : m.ids()) n += 2 + id.size();
  return n + static_cast<std::uint64_t>(m.count()) * m.dim() * 4;
}

inline void write_embeddings(const EmbeddingMatrix& m, std::ostream& os) {
  os.write(kEmbeddingMagic, 4);
  binary::put_uint(os, kEmbeddingVersion);
  binary::put_uint(os, static_cast<std::uint32_t>(m.dim()));
  binary::put_uint(os, static_cast<std::uint64_t>(m.count()));
  for (const auto& id : m.ids()) binary::put_short_string(os, id);
  for (float v : m.values()) binary::put_f32(os, v);
}

/// Returns the number of bytes written.
inline std::uint64_t write_embeddings(const EmbeddingMatrix& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_embeddings(m, os);
  os.flush();
  if (!os) throw Error("I/O failure writing '" + path + "'");
  return embedding_file_size(m);
}

inline EmbeddingMatrix read_embeddings(std::istream& is) {
  char magic[4] = {};
  if (!is.read(magic, 4) || std::string_view(magic, 4) != std::string_view(kEmbeddingMagic, 4)) {
    throw FormatError("bad magic: not an embedding file");
  }
  std::uint32_t version = 0, dim = 0;
  std::uint64_t count = 0;
  if (!binary::get_uint(is, version) || !binary::get_uint(is, dim) || !binary::get_uint(is, count)) {
    throw FormatError("truncated embedding header");
  }
  if (version != kEmbeddingVersion) throw FormatError("unsupported embedding file version " + std::to_string(version));
  if (dim == 0) throw FormatError("embedding dimension is zero");

  std::vector<std::string> ids;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string id;
    if (!binary::get_short_string(is, id)) throw FormatError("truncated id table at entry " + std::to_string(i));
    ids.push_back(std::move(id));
  }
  EmbeddingMatrix m(dim);
  std::vector<float> row(dim);
  for (std::uint64_t r = 0; r < count; ++r) {
    for (std::uint32_t c = 0; c < dim; ++c) {
      if (!binary::get_f32(is, row[c])) throw FormatError("truncated payload in row " + std::to_string(r));
      if (!std::isfinite(row[c])) throw FormatError("non-finite value in row " + std::to_string(r));
    }
    try {
      m.append(ids[r], std::span<const float>(row));
    } catch (const Error& e) {
      throw FormatError(std::string(e.what()) + " (row " + std::to_string(r) + ")");
    }
  }
  return m;
}

inline EmbeddingMatrix read_embeddings(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("file not found: " + path);
  return read_embeddings(is);
}

/// Unit vector in the direction of v. Zero vectors are rejected: a zero
/// feature means extraction failed upstream.
template <typename T>
std::vector<double> l2_normalize(std::span<const T> v) {
  const double n = norm64(v);
  if (!(n > 0.0)) throw Error("cannot normalize a zero vector");
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<double>(v[i]) / n;
  return out;
}

template <typename T>
std::vector<double> l2_normalize(const std::vector<T>& v) {
  return l2_normalize(std::span<const T>(v));
}

template <typename A, typename B>
double cosine_similarity(std::span<const A> u, std::span<const B> v) {
  if (u.size() != v.size()) {
    throw Error("cosine_similarity dimension mismatch: " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  }
  const double nu = norm64(u);
  const double nv = norm64(v);
  if (!(nu > 0.0) || !(nv > 0.0)) throw Error("cosine_similarity of a zero vector");
  return dot64(u, v) / (nu * nv);
}

template <typename A, typename B>
double cosine_similarity(const std::vector<A>& u, const std::vector<B>& v) {
  return cosine_similarity(std::span<const A>(u), std::span<const B>(v));
}

}  // namespace vgsi
