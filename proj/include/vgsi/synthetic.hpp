#pragma once

// Synthetic corpora with known latent structure, for desk-scale tests.
//
// Each cluster owns a latent vector z. Clusters are grouped into categories:
// z = group_center + group_spread * N(0, I), so articles of one category lie
// close together. Fixed random linear maps carry z into the text and image
// feature spaces; goal, method and step features are the mapped center plus
// isotropic noise of scale noise_scale.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "vgsi/corpus.hpp"
#include "vgsi/embed_store.hpp"
#include "vgsi/error.hpp"
#include "vgsi/linalg.hpp"
#include "vgsi/rng.hpp"

namespace vgsi {

struct SynthSpec {
  std::size_t clusters = 20;
  std::size_t categories = 4;
  std::size_t methods_per_article = 1;
  std::size_t steps_per_method = 5;
  std::size_t dim_image = 32;
  std::size_t dim_text = 16;
  std::size_t latent_dim = 8;
  double group_spread = 0.5;
  double noise_scale = 0.1;
  std::uint64_t seed = 1;
  // Centers and maps come from center_seed (defaults to seed); noise always
  // comes from seed. Two specs sharing center_seed describe two domains over
  // the same clusters.
  std::optional<std::uint64_t> center_seed;
  std::string id_prefix;
};

struct SyntheticData {
  Corpus corpus;
  EmbeddingMatrix images;
  EmbeddingMatrix texts;
};

inline void validate(const SynthSpec& s) {
  if (s.clusters < 2) throw Error("synthetic spec needs at least 2 clusters");
  if (s.categories < 1) throw Error("synthetic spec needs at least 1 category");
  if (s.methods_per_article < 1 || s.steps_per_method < 1) throw Error("synthetic spec needs >= 1 method and step");
  if (s.dim_image == 0 || s.dim_text == 0 || s.latent_dim == 0) throw Error("synthetic dimensions must be positive");
  if (!(s.noise_scale >= 0.0)) throw Error("noise_scale must be non-negative");
  if (!(s.group_spread >= 0.0)) throw Error("group_spread must be non-negative");
}

inline SyntheticData generate_synthetic(const SynthSpec& spec) {
  validate(spec);
  const std::uint64_t cseed = spec.center_seed.value_or(spec.seed);
  Rng crng(derive_seed(cseed, "synthetic-centers"));

  auto gaussian_matrix = [&](std::size_t r, std::size_t c, double scale) {
    Matrix<double> m(r, c);
    for (auto& v : m.flat()) v = scale * crng.normal();
    return m;
  };
  const double map_scale = 1.0 / std::sqrt(static_cast<double>(spec.latent_dim));
  const Matrix<double> to_text = gaussian_matrix(spec.latent_dim, spec.dim_text, map_scale);
  const Matrix<double> to_image = gaussian_matrix(spec.latent_dim, spec.dim_image, map_scale);
  const Matrix<double> group_centers = gaussian_matrix(spec.categories, spec.latent_dim, 1.0);

  std::vector<std::vector<double>> text_centers, image_centers;
  for (std::size_t c = 0; c < spec.clusters; ++c) {
    std::vector<double> z(spec.latent_dim);
    const auto g = group_centers.row(c % spec.categories);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = g[i] + spec.group_spread * crng.normal();
    text_centers.push_back(project(std::span<const double>(z), to_text));
    image_centers.push_back(project(std::span<const double>(z), to_image));
  }

  SyntheticData out{Corpus{}, EmbeddingMatrix(spec.dim_image), EmbeddingMatrix(spec.dim_text)};
  auto noisy = [&](Rng& rng, const std::vector<double>& center) {
    std::vector<double> v = center;
    if (spec.noise_scale > 0.0)
      for (auto& x : v) x += spec.noise_scale * rng.normal();
    return v;
  };

  std::vector<Article> articles;
  const std::string& p = spec.id_prefix;
  for (std::size_t c = 0; c < spec.clusters; ++c) {
    Rng rng(derive_seed(spec.seed, c));
    Article a;
    a.article_id = p + "a" + std::to_string(c);
    a.goal_title = "synthetic goal " + std::to_string(c);
    a.category = "cat" + std::to_string(c % spec.categories);
    out.texts.append(goal_text_id(a), noisy(rng, text_centers[c]));
    for (std::size_t m = 0; m < spec.methods_per_article; ++m) {
      Method meth;
      meth.method_id = a.article_id + "m" + std::to_string(m);
      meth.title = "method " + std::to_string(m) + " of goal " + std::to_string(c);
      out.texts.append(method_text_id(meth), noisy(rng, text_centers[c]));
      for (std::size_t s = 0; s < spec.steps_per_method; ++s) {
        Step st;
        st.step_id = meth.method_id + "s" + std::to_string(s);
        st.text = "step " + std::to_string(s) + " of " + meth.title;
        st.image_id = p + "img" + std::to_string(c) + "_" + std::to_string(m) + "_" + std::to_string(s);
        out.texts.append(step_text_id(st), noisy(rng, text_centers[c]));
        out.images.append(st.image_id, noisy(rng, image_centers[c]));
        meth.steps.push_back(std::move(st));
      }
      a.methods.push_back(std::move(meth));
    }
    articles.push_back(std::move(a));
  }
  out.corpus = Corpus(std::move(articles));
  return out;
}

}  // namespace vgsi
