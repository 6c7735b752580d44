#pragma once

// Step-aggregation re-scoring: look up the corpus article whose goal title
// is nearest to the prompt, then blend the prompt-image score with the best
// step-image score of that article.

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "vgsi/corpus.hpp"
#include "vgsi/embed_store.hpp"
#include "vgsi/error.hpp"
#include "vgsi/evaluator.hpp"
#include "vgsi/linalg.hpp"

namespace vgsi {

struct AggregationConfig {
  double lambda = 0.5;
  std::size_t neighbors = 1;  // >1 pools steps of several nearest articles
};

inline void validate(const AggregationConfig& c) {
  if (!(c.lambda >= 0.0 && c.lambda <= 1.0)) throw Error("lambda must lie in [0, 1]");
  if (c.neighbors < 1) throw Error("aggregation needs at least one neighbor article");
}

/// Goal-title and step-text embeddings of a reference corpus.
class StepKnowledge {
 public:
  StepKnowledge(const Corpus& corpus, const EmbeddingMatrix& texts) : corpus_(&corpus), texts_(&texts) {
    if (corpus.empty()) throw Error("step knowledge needs a non-empty corpus");
    for (const auto& a : corpus.articles()) {
      const auto g = texts.at(goal_text_id(a));
      const double n = norm64(g);
      if (!(n > 0.0)) throw Error("zero goal embedding for article '" + a.article_id + "'");
      goals_.push_back(g);
      norms_.push_back(n);
      std::vector<std::span<const float>> steps;
      for (const auto& m : a.methods)
        for (const auto& s : m.steps) steps.push_back(texts.at(step_text_id(s)));
      steps_.push_back(std::move(steps));
    }
  }

  const Corpus& corpus() const { return *corpus_; }

  /// The `n` articles with the most similar goal titles (cosine), best
  /// first; ties by ascending article id.
  std::vector<std::size_t> nearest_articles(std::span<const float> query, std::size_t n = 1) const {
    const double qn = norm64(query);
    if (!(qn > 0.0)) throw Error("nearest_article with a zero query");
    if (query.size() != texts_->dim()) throw Error("nearest_article dimension mismatch");
    std::vector<std::pair<double, std::size_t>> sims;
    for (std::size_t a = 0; a < goals_.size(); ++a) sims.emplace_back(dot64(query, goals_[a]) / (qn * norms_[a]), a);
    n = std::min(n, sims.size());
    std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(n), sims.end(),
                      [&](const auto& x, const auto& y) {
                        if (x.first != y.first) return x.first > y.first;
                        return corpus_->article(x.second).article_id < corpus_->article(y.second).article_id;
                      });
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(sims[i].second);
    return out;
  }

  /// Step text embeddings across every method of an article.
  const std::vector<std::span<const float>>& step_embeddings(std::size_t article) const { return steps_[article]; }

 private:
  const Corpus* corpus_;
  const EmbeddingMatrix* texts_;
  std::vector<std::span<const float>> goals_;
  std::vector<double> norms_;
  std::vector<std::vector<std::span<const float>>> steps_;
};

struct NearestArticle {
  std::string article_id;
  std::vector<std::string> step_texts;
};

inline NearestArticle nearest_article(std::span<const float> goal, const StepKnowledge& knowledge) {
  const auto a = knowledge.nearest_articles(goal, 1).front();
  const auto& art = knowledge.corpus().article(a);
  NearestArticle out{art.article_id, {}};
  for (const auto& m : art.methods)
    for (const auto& s : m.steps) out.step_texts.push_back(s.text);
  return out;
}

/// lambda * score(goal, image) + (1 - lambda) * max_i score(step_i, image).
template <typename Scorer>
double aggregate_match(const Scorer& scorer, std::span<const float> goal,
                       const std::vector<std::span<const float>>& steps, std::span<const float> image,
                       const AggregationConfig& cfg) {
  validate(cfg);
  if (steps.empty()) throw Error("aggregate_match needs at least one step");
  const auto& score = as_scorer(scorer);
  const double goal_score = score(goal, image);
  double step_score = score(steps.front(), image);
  for (std::size_t i = 1; i < steps.size(); ++i) step_score = std::max(step_score, score(steps[i], image));
  return cfg.lambda * goal_score + (1.0 - cfg.lambda) * step_score;
}

/// Scorer adapter applying step aggregation on top of a base scorer (or Model).
template <typename Base>
class AggregatedScorer {
 public:
  AggregatedScorer(const Base& base, const StepKnowledge& knowledge, AggregationConfig cfg)
      : base_(&base), knowledge_(&knowledge), cfg_(cfg) {
    validate(cfg_);
  }

  double operator()(std::span<const float> prompt, std::span<const float> image) const {
    if (prompt.data() != cached_query_) {
      cached_steps_.clear();
      for (auto a : knowledge_->nearest_articles(prompt, cfg_.neighbors)) {
        const auto& s = knowledge_->step_embeddings(a);
        cached_steps_.insert(cached_steps_.end(), s.begin(), s.end());
      }
      cached_query_ = prompt.data();
    }
    return aggregate_match(*base_, prompt, cached_steps_, image, cfg_);
  }

 private:
  const Base* base_;
  const StepKnowledge* knowledge_;
  AggregationConfig cfg_;
  mutable const float* cached_query_ = nullptr;
  mutable std::vector<std::span<const float>> cached_steps_;
};

}  // namespace vgsi
