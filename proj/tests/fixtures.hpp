#pragma once

// Small hand-built corpora and embeddings for unit tests.

#include <filesystem>
#include <string>
#include <vector>

#include "vgsi/corpus.hpp"
#include "vgsi/embed_store.hpp"
#include "vgsi/rng.hpp"

namespace fixture {

inline vgsi::Article article(const std::string& id, const std::string& category, std::size_t steps,
                             std::size_t methods = 1) {
  vgsi::Article a{id, "how to " + id, category, {}};
  for (std::size_t m = 0; m < methods; ++m) {
    vgsi::Method meth{id + "-m" + std::to_string(m), "method " + std::to_string(m), {}};
    for (std::size_t s = 0; s < steps; ++s) {
      const auto sid = meth.method_id + "-s" + std::to_string(s);
      meth.steps.push_back({sid, "do step " + sid, "img-" + sid});
    }
    a.methods.push_back(std::move(meth));
  }
  return a;
}

// `n` articles "a0".."a{n-1}", categories "c{i % categories}".
inline vgsi::Corpus corpus(std::size_t n, std::size_t steps = 2, std::size_t categories = 1) {
  std::vector<vgsi::Article> arts;
  for (std::size_t i = 0; i < n; ++i) arts.push_back(article("a" + std::to_string(i), "c" + std::to_string(i % categories), steps));
  return vgsi::Corpus(std::move(arts));
}

// Gaussian vector per image id.
inline vgsi::EmbeddingMatrix random_images(const vgsi::Corpus& c, std::size_t dim, std::uint64_t seed) {
  vgsi::EmbeddingMatrix m(dim);
  vgsi::Rng rng(seed);
  std::vector<float> v(dim);
  for (const auto& a : c.articles())
    for (const auto& meth : a.methods)
      for (const auto& s : meth.steps) {
        for (auto& x : v) x = static_cast<float>(rng.normal());
        m.append(s.image_id, std::span<const float>(v));
      }
  return m;
}

// Gaussian vectors for every goal, method and step text id.
inline vgsi::EmbeddingMatrix random_texts(const vgsi::Corpus& c, std::size_t dim, std::uint64_t seed) {
  vgsi::EmbeddingMatrix m(dim);
  vgsi::Rng rng(seed);
  std::vector<float> v(dim);
  auto add = [&](const std::string& id) {
    for (auto& x : v) x = static_cast<float>(rng.normal());
    m.append(id, std::span<const float>(v));
  };
  for (const auto& a : c.articles()) {
    add(vgsi::goal_text_id(a));
    for (const auto& meth : a.methods) {
      add(vgsi::method_text_id(meth));
      for (const auto& s : meth.steps) add(vgsi::step_text_id(s));
    }
  }
  return m;
}

// Per-test scratch directory, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / ("vgsi-test-" + name)) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace fixture
