#pragma once

// Multiple-choice answering and accuracy, and the goal-image retrieval
// protocol (recall@k, median rank).
//
// Scorers are any callable double(span<const float> text, span<const float>
// image). A Model can be passed directly.

#include <algorithm>
#include <array>
#include <cstdint>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vgsi/corpus.hpp"
#include "vgsi/embed_store.hpp"
#include "vgsi/error.hpp"
#include "vgsi/models.hpp"
#include "vgsi/rng.hpp"
#include "vgsi/sampler.hpp"

namespace vgsi {

/// Adapts a Model to the scorer interface.
struct ModelScorer {
  const Model* model;
  double operator()(std::span<const float> text, std::span<const float> image) const {
    return match(*model, text, image);
  }
};

template <typename S>
auto as_scorer(const S& s) -> const S& {
  return s;
}
inline ModelScorer as_scorer(const Model& m) { return ModelScorer{&m}; }

struct MCAnswer {
  int choice = 0;
  std::array<double, 4> scores{};
};

/// Index of the highest score; ties go to the lowest index.
inline int argmax_first(const std::array<double, 4>& scores) {
  int best = 0;
  for (int i = 1; i < 4; ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

template <typename Scorer>
MCAnswer answer_question(const Scorer& scorer, const MCQuestion& q, const EmbeddingMatrix& images,
                         const EmbeddingMatrix& texts) {
  const auto& score = as_scorer(scorer);
  const auto prompt = texts.at(q.prompt_embedding_id);
  const auto cands = q.candidates();
  MCAnswer a;
  for (int i = 0; i < 4; ++i) a.scores[i] = score(prompt, images.at(cands[i]));
  a.choice = argmax_first(a.scores);
  return a;
}

struct AccuracyCell {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
};

struct EvalReport {
  std::string task = "mc";  // "mc" or "retrieval"
  std::string tag;          // e.g. "agg" for step-aggregated runs
  std::string model_id;
  std::uint64_t seed = 0;

  // multiple choice
  double accuracy = 0.0;
  std::size_t question_count = 0;
  std::map<std::string, AccuracyCell> by_strategy;
  std::map<std::string, AccuracyCell> by_prompt_level;

  // retrieval
  std::map<std::size_t, double> recall_at;
  std::size_t median_rank = 0;
  std::size_t pool_size = 0;
  std::size_t query_count = 0;
  std::vector<std::size_t> ranks;
};

template <typename Scorer>
EvalReport evaluate_mc(const Scorer& scorer, const std::vector<MCQuestion>& questions, const EmbeddingMatrix& images,
                       const EmbeddingMatrix& texts) {
  if (questions.empty()) throw Error("evaluate_mc needs at least one question");
  EvalReport r;
  r.task = "mc";
  AccuracyCell all;
  for (const auto& q : questions) {
    const bool ok = answer_question(scorer, q, images, texts).choice == q.gold_index;
    for (auto* cell : {&all, &r.by_strategy[to_string(q.strategy)], &r.by_prompt_level[to_string(q.prompt_level)]}) {
      cell->total += 1;
      cell->correct += ok ? 1 : 0;
    }
  }
  r.accuracy = all.accuracy();
  r.question_count = all.total;
  return r;
}

// ---- retrieval ----

struct RetrievalQuery {
  std::string text_id;
  std::vector<std::string> gold_image_ids;
};

struct RetrievalPool {
  std::vector<std::string> image_ids;
  std::vector<RetrievalQuery> queries;
};

/// `goals` random articles, `images_per_goal` random step images each; every
/// chosen image joins the pool and is a gold for its goal's query.
inline RetrievalPool build_retrieval_pool(const Corpus& corpus, const std::vector<std::string>& articles,
                                          std::size_t goals, std::size_t images_per_goal, std::uint64_t seed) {
  if (goals == 0 || images_per_goal == 0) throw Error("retrieval pool needs goals >= 1 and images_per_goal >= 1");
  Rng rng(derive_seed(seed, "retrieval-pool"));
  const auto pick = rng.sample_without_replacement(articles.size(), std::min(goals, articles.size()));
  RetrievalPool pool;
  for (auto i : pick) {
    auto a = corpus.find_article(articles[i]);
    if (!a) throw Error("unknown article '" + articles[i] + "'");
    const auto& art = corpus.article(*a);
    std::vector<std::string> imgs;
    for (const auto& m : art.methods)
      for (const auto& s : m.steps) imgs.push_back(s.image_id);
    RetrievalQuery q{goal_text_id(art), {}};
    for (auto j : rng.sample_without_replacement(imgs.size(), std::min(images_per_goal, imgs.size()))) {
      q.gold_image_ids.push_back(imgs[j]);
      pool.image_ids.push_back(imgs[j]);
    }
    pool.queries.push_back(std::move(q));
  }
  return pool;
}

inline std::vector<std::size_t> default_recall_ks(std::size_t pool_size) {
  if (pool_size >= 5000) return {10, 25, 50, 100};
  return {1, 5, 10, 25};
}

/// Lower median of an unsorted sample.
inline std::size_t lower_median(std::vector<std::size_t> v) {
  if (v.empty()) throw Error("median of an empty sample");
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

namespace detail {

// `query_scores(q)` returns one score per pool image, in pool order.
template <typename QueryScores>
EvalReport retrieval_from_scores(const RetrievalPool& pool, const std::vector<std::size_t>& ks,
                                 QueryScores&& query_scores) {
  if (pool.image_ids.empty() || pool.queries.empty()) throw Error("retrieval needs a non-empty pool and query list");
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < pool.image_ids.size(); ++i) pos.emplace(pool.image_ids[i], i);
  for (auto k : ks)
    if (k < 1) throw Error("recall@k needs k >= 1");

  EvalReport r;
  r.task = "retrieval";
  r.pool_size = pool.image_ids.size();
  r.query_count = pool.queries.size();
  for (std::size_t qi = 0; qi < pool.queries.size(); ++qi) {
    const auto& q = pool.queries[qi];
    if (q.gold_image_ids.empty()) throw Error("retrieval query '" + q.text_id + "' has no gold image");
    const std::vector<double> scores = query_scores(qi);
    std::size_t best = SIZE_MAX;
    for (const auto& gold : q.gold_image_ids) {
      auto it = pos.find(gold);
      if (it == pos.end()) throw Error("gold image '" + gold + "' missing from pool");
      const double sg = scores[it->second];
      std::size_t rank = 1;
      for (std::size_t j = 0; j < scores.size(); ++j) {
        if (scores[j] > sg || (scores[j] == sg && pool.image_ids[j] < gold)) ++rank;
      }
      best = std::min(best, rank);
    }
    r.ranks.push_back(best);
  }
  for (auto k : ks) {
    std::size_t hit = 0;
    for (auto rank : r.ranks) hit += rank <= k ? 1 : 0;
    r.recall_at[k] = static_cast<double>(hit) / static_cast<double>(r.ranks.size());
  }
  r.median_rank = lower_median(r.ranks);
  return r;
}

}  // namespace detail

/// Ranks the whole pool per query by descending score (ties: ascending image
/// id); a query's rank is the best rank among its gold images.
template <typename Scorer>
EvalReport evaluate_retrieval(const Scorer& scorer, const RetrievalPool& pool, const EmbeddingMatrix& images,
                              const EmbeddingMatrix& texts, const std::vector<std::size_t>& ks) {
  const auto& score = as_scorer(scorer);
  return detail::retrieval_from_scores(pool, ks, [&](std::size_t qi) {
    const auto text = texts.at(pool.queries[qi].text_id);
    std::vector<double> s;
    s.reserve(pool.image_ids.size());
    for (const auto& id : pool.image_ids) s.push_back(score(text, images.at(id)));
    return s;
  });
}

/// Model overload: image projections are computed once per pool.
inline EvalReport evaluate_retrieval(const Model& model, const RetrievalPool& pool, const EmbeddingMatrix& images,
                                     const EmbeddingMatrix& texts, const std::vector<std::size_t>& ks) {
  std::vector<UnitVector> projected;
  projected.reserve(pool.image_ids.size());
  for (const auto& id : pool.image_ids) projected.push_back(embed_image(model, images.at(id)));
  return detail::retrieval_from_scores(pool, ks, [&](std::size_t qi) {
    const auto goal = embed_goal(model, texts.at(pool.queries[qi].text_id));
    std::vector<double> s;
    s.reserve(projected.size());
    for (const auto& img : projected) s.push_back(score_embedded(model, goal, img));
    return s;
  });
}

// ---- reporting ----

inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json j = {{"task", r.task}, {"model_id", r.model_id}, {"seed", r.seed}};
  if (!r.tag.empty()) j["tag"] = r.tag;
  if (r.task == "mc") {
    j["accuracy"] = r.accuracy;
    j["questions"] = r.question_count;
    auto cells = [](const std::map<std::string, AccuracyCell>& m) {
      nlohmann::json o = nlohmann::json::object();
      for (const auto& [k, c] : m) o[k] = {{"accuracy", c.accuracy()}, {"correct", c.correct}, {"total", c.total}};
      return o;
    };
    j["by_strategy"] = cells(r.by_strategy);
    j["by_prompt_level"] = cells(r.by_prompt_level);
  } else {
    nlohmann::json rec = nlohmann::json::object();
    for (const auto& [k, v] : r.recall_at) rec[std::to_string(k)] = v;
    j["recall_at"] = rec;
    j["median_rank"] = r.median_rank;
    j["pool_size"] = r.pool_size;
    j["queries"] = r.query_count;
  }
  return j;
}

/// Accuracy table with one column per sampling strategy.
inline std::string format_mc_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(20) << "Model";
  for (auto s : kAllStrategies) os << std::right << std::setw(12) << to_string(s);
  os << '\n';
  for (const auto& [label, r] : rows) {
    os << std::left << std::setw(20) << (r.tag.empty() ? label : label + " (" + r.tag + ")");
    for (auto s : kAllStrategies) {
      auto it = r.by_strategy.find(to_string(s));
      os << std::right << std::setw(12);
      if (it == r.by_strategy.end()) {
        os << "-";
      } else {
        std::ostringstream cell;
        cell << std::fixed << std::setprecision(4) << it->second.accuracy();
        os << cell.str();
      }
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace vgsi
