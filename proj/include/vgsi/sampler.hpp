#pragma once

// Four-way multiple-choice question construction under the random,
// similarity and category negative-sampling strategies.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "vgsi/corpus.hpp"
#include "vgsi/embed_store.hpp"
#include "vgsi/error.hpp"
#include "vgsi/rng.hpp"

namespace vgsi {

enum class Strategy { random, similarity, category };
enum class PromptLevel { goal, method, step };

inline const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::random: return "random";
    case Strategy::similarity: return "similarity";
    case Strategy::category: return "category";
  }
  return "?";
}

inline const char* to_string(PromptLevel p) {
  switch (p) {
    case PromptLevel::goal: return "goal";
    case PromptLevel::method: return "method";
    case PromptLevel::step: return "step";
  }
  return "?";
}

inline Strategy parse_strategy(const std::string& s) {
  if (s == "random") return Strategy::random;
  if (s == "similarity") return Strategy::similarity;
  if (s == "category") return Strategy::category;
  throw Error("unknown strategy '" + s + "'");
}

inline PromptLevel parse_prompt_level(const std::string& s) {
  if (s == "goal") return PromptLevel::goal;
  if (s == "method") return PromptLevel::method;
  if (s == "step") return PromptLevel::step;
  throw Error("unknown prompt level '" + s + "'");
}

inline constexpr std::array<Strategy, 3> kAllStrategies = {Strategy::random, Strategy::similarity, Strategy::category};

class InsufficientCandidates : public Error {
 public:
  using Error::Error;
};

struct MCQuestion {
  std::string prompt_text;
  PromptLevel prompt_level = PromptLevel::goal;
  std::string prompt_embedding_id;
  std::string gold_image_id;
  std::array<std::string, 3> distractor_image_ids;
  // Position of the gold image among the four candidates.
  int gold_index = 0;
  Strategy strategy = Strategy::random;
  std::string article_id;
  std::string step_id;
  // What the similarity strategy ranked neighbors against ("gold_image").
  std::string similarity_anchor;

  std::array<std::string, 4> candidates() const {
    std::array<std::string, 4> out;
    std::size_t d = 0;
    for (int i = 0; i < 4; ++i) out[i] = (i == gold_index) ? gold_image_id : distractor_image_ids[d++];
    return out;
  }

  friend bool operator==(const MCQuestion&, const MCQuestion&) = default;
};

// ---- exact nearest-neighbor index ----

struct Neighbor {
  std::string image_id;
  std::size_t article = 0;
  double similarity = 0.0;
};

/// Exact cosine index over image rows, each tagged with its article.
class NNIndex {
 public:
  NNIndex(const EmbeddingMatrix& images, std::vector<std::size_t> rows, std::vector<std::size_t> articles)
      : images_(&images), rows_(std::move(rows)), articles_(std::move(articles)) {
    norms_.reserve(rows_.size());
    for (auto r : rows_) {
      const double n = norm64(images.row(r));
      if (!(n > 0.0)) throw Error("zero feature vector for image '" + images.id(r) + "'");
      norms_.push_back(n);
    }
  }

  std::size_t size() const { return rows_.size(); }
  const EmbeddingMatrix& images() const { return *images_; }
  std::size_t row(std::size_t i) const { return rows_[i]; }
  std::size_t article(std::size_t i) const { return articles_[i]; }

  double similarity(std::size_t i, std::span<const float> query, double query_norm) const {
    return dot64(query, images_->row(rows_[i])) / (query_norm * norms_[i]);
  }

 private:
  const EmbeddingMatrix* images_;
  std::vector<std::size_t> rows_;
  std::vector<std::size_t> articles_;
  std::vector<double> norms_;
};

/// Index over every image row whose article is in `articles` (all when empty).
inline NNIndex build_index(const EmbeddingMatrix& images, const Corpus& corpus,
                           const std::vector<std::size_t>& articles = {}) {
  std::vector<bool> keep(corpus.size(), articles.empty());
  for (auto a : articles) keep.at(a) = true;
  std::vector<std::size_t> rows, tags;
  for (std::size_t r = 0; r < images.count(); ++r) {
    auto loc = corpus.locate_image(images.id(r));
    if (!loc) throw Error("unknown image id '" + images.id(r) + "' (not in corpus)");
    if (!keep[loc->article]) continue;
    rows.push_back(r);
    tags.push_back(loc->article);
  }
  if (rows.empty()) throw Error("cannot build an index over zero images");
  return NNIndex(images, std::move(rows), std::move(tags));
}

/// k most similar images from k distinct, non-excluded articles.
///
/// Equivalent to scanning all images in (similarity desc, image_id asc)
/// order and skipping hits from excluded or already-used articles.
inline std::vector<Neighbor> knn_query(const NNIndex& index, std::span<const float> query, std::size_t k,
                                       const std::set<std::size_t>& exclude_articles = {}) {
  if (k < 1) throw Error("knn_query needs k >= 1");
  const double qn = norm64(query);
  if (!(qn > 0.0)) throw Error("knn_query with a zero query vector");
  if (query.size() != index.images().dim()) throw Error("knn_query dimension mismatch");

  auto better = [](const Neighbor& a, const Neighbor& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.image_id < b.image_id;
  };
  std::unordered_map<std::size_t, Neighbor> best;
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto art = index.article(i);
    if (exclude_articles.contains(art)) continue;
    Neighbor cand{index.images().id(index.row(i)), art, index.similarity(i, query, qn)};
    auto [it, inserted] = best.try_emplace(art, cand);
    if (!inserted && better(cand, it->second)) it->second = std::move(cand);
  }
  if (best.size() < k) throw InsufficientCandidates("insufficient candidates: need " + std::to_string(k) +
                                                    " articles, have " + std::to_string(best.size()));
  std::vector<Neighbor> all;
  all.reserve(best.size());
  for (auto& [_, n] : best) all.push_back(std::move(n));
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), better);
  all.resize(k);
  return all;
}

// ---- question construction ----

/// Everything make_question needs about the distractor pool, built once.
class SamplingContext {
 public:
  /// `pool_articles`: corpus article indices distractors may come from
  /// (every article when empty).
  SamplingContext(const Corpus& corpus, const EmbeddingMatrix& images, std::vector<std::size_t> pool_articles = {})
      : corpus_(&corpus), images_(&images), pool_(std::move(pool_articles)) {
    if (pool_.empty())
      for (std::size_t a = 0; a < corpus.size(); ++a) pool_.push_back(a);
    std::sort(pool_.begin(), pool_.end());
    pool_.erase(std::unique(pool_.begin(), pool_.end()), pool_.end());
    for (auto a : pool_) {
      const auto& art = corpus.article(a);
      by_category_[art.category].push_back(a);
      for (const auto& m : art.methods)
        for (const auto& s : m.steps)
          if (!images.contains(s.image_id)) throw Error("no embedding for image '" + s.image_id + "'");
    }
  }

  const Corpus& corpus() const { return *corpus_; }
  const EmbeddingMatrix& images() const { return *images_; }
  const std::vector<std::size_t>& pool() const { return pool_; }

  const std::vector<std::size_t>& category_pool(const std::string& category) const {
    static const std::vector<std::size_t> kEmpty;
    auto it = by_category_.find(category);
    return it == by_category_.end() ? kEmpty : it->second;
  }

  const NNIndex& index() const {
    if (!index_) index_.emplace(build_index_over_pool());
    return *index_;
  }

 private:
  NNIndex build_index_over_pool() const {
    std::vector<std::size_t> rows, tags;
    for (auto a : pool_)
      for (const auto& m : corpus_->article(a).methods)
        for (const auto& s : m.steps) {
          rows.push_back(*images_->find(s.image_id));
          tags.push_back(a);
        }
    if (rows.empty()) throw Error("cannot build an index over zero images");
    // Row order does not affect results: ties are broken by image id.
    return NNIndex(*images_, std::move(rows), std::move(tags));
  }

  const Corpus* corpus_;
  const EmbeddingMatrix* images_;
  std::vector<std::size_t> pool_;
  std::map<std::string, std::vector<std::size_t>> by_category_;
  mutable std::optional<NNIndex> index_;
};

namespace detail {

inline std::string random_image_of(const Article& a, Rng& rng) {
  const auto n = a.step_count();
  auto pick = static_cast<std::size_t>(rng.below(n));
  for (const auto& m : a.methods) {
    if (pick < m.steps.size()) return m.steps[pick].image_id;
    pick -= m.steps.size();
  }
  return {};  // unreachable
}

inline std::array<std::string, 3> draw_from_articles(const Corpus& corpus, const std::vector<std::size_t>& pool,
                                                     std::size_t gold_article, Rng& rng) {
  std::vector<std::size_t> others;
  for (auto a : pool)
    if (a != gold_article) others.push_back(a);
  if (others.size() < 3) {
    throw InsufficientCandidates("insufficient candidates: " + std::to_string(others.size()) +
                                 " other articles, need 3");
  }
  std::array<std::string, 3> out;
  const auto picks = rng.sample_without_replacement(others.size(), 3);
  for (std::size_t i = 0; i < 3; ++i) out[i] = random_image_of(corpus.article(others[picks[i]]), rng);
  return out;
}

}  // namespace detail

struct PromptRef {
  StepRef step;
  PromptLevel level = PromptLevel::goal;
};

inline MCQuestion make_question(const SamplingContext& ctx, const PromptRef& prompt, Strategy strategy,
                                std::uint64_t seed) {
  const Corpus& corpus = ctx.corpus();
  const Article& art = corpus.article_of(prompt.step);
  const Method& meth = corpus.method_of(prompt.step);
  const Step& step = corpus.step_of(prompt.step);

  MCQuestion q;
  q.prompt_level = prompt.level;
  switch (prompt.level) {
    case PromptLevel::goal:
      q.prompt_text = art.goal_title;
      q.prompt_embedding_id = goal_text_id(art);
      break;
    case PromptLevel::method:
      q.prompt_text = meth.title;
      q.prompt_embedding_id = method_text_id(meth);
      break;
    case PromptLevel::step:
      q.prompt_text = step.text;
      q.prompt_embedding_id = step_text_id(step);
      break;
  }
  q.gold_image_id = step.image_id;
  q.strategy = strategy;
  q.article_id = art.article_id;
  q.step_id = step.step_id;

  Rng rng(seed);
  switch (strategy) {
    case Strategy::random:
      q.distractor_image_ids = detail::draw_from_articles(corpus, ctx.pool(), prompt.step.article, rng);
      break;
    case Strategy::category:
      q.distractor_image_ids =
          detail::draw_from_articles(corpus, ctx.category_pool(art.category), prompt.step.article, rng);
      break;
    case Strategy::similarity: {
      const auto hits = knn_query(ctx.index(), ctx.images().at(step.image_id), 3, {prompt.step.article});
      for (std::size_t i = 0; i < 3; ++i) q.distractor_image_ids[i] = hits[i].image_id;
      q.similarity_anchor = "gold_image";
      break;
    }
  }
  q.gold_index = static_cast<int>(rng.below(4));
  return q;
}

struct QuestionSet {
  std::vector<MCQuestion> questions;
  std::vector<std::string> warnings;
};

/// One question per step of `articles`; distractors come from the same
/// articles. Steps whose candidate pool is too small are skipped with a
/// warning.
inline QuestionSet make_question_set(const Corpus& corpus, const EmbeddingMatrix& images,
                                     const std::vector<std::string>& articles, Strategy strategy, PromptLevel level,
                                     std::uint64_t seed) {
  std::vector<std::size_t> pool;
  for (const auto& id : articles) {
    auto a = corpus.find_article(id);
    if (!a) throw Error("split references unknown article '" + id + "'");
    pool.push_back(*a);
  }
  QuestionSet out;
  if (pool.empty()) {
    out.warnings.push_back("empty split: no questions generated");
    return out;
  }
  SamplingContext ctx(corpus, images, pool);
  for (auto a : ctx.pool()) {
    const auto& art = corpus.article(a);
    for (std::size_t m = 0; m < art.methods.size(); ++m)
      for (std::size_t s = 0; s < art.methods[m].steps.size(); ++s) {
        const auto& step = art.methods[m].steps[s];
        try {
          out.questions.push_back(
              make_question(ctx, {{a, m, s}, level}, strategy, derive_seed(seed, step.step_id)));
        } catch (const InsufficientCandidates& e) {
          out.warnings.push_back("skipped step '" + step.step_id + "': " + e.what());
        }
      }
  }
  return out;
}

inline QuestionSet make_question_set(const Corpus& corpus, const EmbeddingMatrix& images, Strategy strategy,
                                     PromptLevel level, std::uint64_t seed) {
  std::vector<std::string> all;
  for (const auto& a : corpus.articles()) all.push_back(a.article_id);
  return make_question_set(corpus, images, all, strategy, level, seed);
}

// ---- Question Set Format (one JSON question per line) ----

inline nlohmann::json question_to_json(const MCQuestion& q) {
  nlohmann::json j = {{"prompt_text", q.prompt_text},
                      {"prompt_level", to_string(q.prompt_level)},
                      {"prompt_embedding_id", q.prompt_embedding_id},
                      {"gold_image_id", q.gold_image_id},
                      {"distractor_image_ids", q.distractor_image_ids},
                      {"gold_index", q.gold_index},
                      {"strategy", to_string(q.strategy)},
                      {"article_id", q.article_id},
                      {"step_id", q.step_id}};
  if (!q.similarity_anchor.empty()) j["similarity_anchor"] = q.similarity_anchor;
  return j;
}

inline MCQuestion question_from_json(const nlohmann::json& j) {
  MCQuestion q;
  q.prompt_text = j.at("prompt_text").get<std::string>();
  q.prompt_level = parse_prompt_level(j.at("prompt_level").get<std::string>());
  q.prompt_embedding_id = j.at("prompt_embedding_id").get<std::string>();
  q.gold_image_id = j.at("gold_image_id").get<std::string>();
  const auto d = j.at("distractor_image_ids").get<std::vector<std::string>>();
  if (d.size() != 3) throw FormatError("question needs exactly 3 distractors");
  std::copy(d.begin(), d.end(), q.distractor_image_ids.begin());
  q.gold_index = j.value("gold_index", 0);
  if (q.gold_index < 0 || q.gold_index > 3) throw FormatError("gold_index out of range");
  q.strategy = parse_strategy(j.at("strategy").get<std::string>());
  q.article_id = j.value("article_id", std::string{});
  q.step_id = j.value("step_id", std::string{});
  q.similarity_anchor = j.value("similarity_anchor", std::string{});
  return q;
}

inline void write_questions(const std::vector<MCQuestion>& qs, std::ostream& os) {
  for (const auto& q : qs) os << question_to_json(q).dump() << '\n';
}

inline void write_questions(const std::vector<MCQuestion>& qs, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_questions(qs, os);
}

inline std::vector<MCQuestion> read_questions(std::istream& is) {
  std::vector<MCQuestion> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(question_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("malformed question at line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw FormatError("invalid question at line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<MCQuestion> read_questions(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("file not found: " + path);
  return read_questions(is);
}

}  // namespace vgsi
