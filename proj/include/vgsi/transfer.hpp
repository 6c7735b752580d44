#pragma once

// Pretrain -> zero-shot / K-shot / budgeted fine-tune protocols and their
// learning curves.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vgsi/checkpoint.hpp"
#include "vgsi/error.hpp"
#include "vgsi/evaluator.hpp"
#include "vgsi/rng.hpp"
#include "vgsi/sampler.hpp"
#include "vgsi/trainer.hpp"

namespace vgsi {

enum class TransferMode {
  kshot_seen_goals,    // budget = questions per goal; test goals also appear in training
  split_unseen_goals,  // budget = total training questions; test goals held out
};

inline TransferMode parse_transfer_mode(const std::string& s) {
  if (s == "kshot") return TransferMode::kshot_seen_goals;
  if (s == "split") return TransferMode::split_unseen_goals;
  throw Error("unknown transfer mode '" + s + "' (expected kshot or split)");
}

struct TransferProtocol {
  TransferMode mode = TransferMode::kshot_seen_goals;
  std::vector<std::size_t> budgets = {0, 5, 10, 15, 20, 25};
  std::array<double, 2> split_ratio = {0.8, 0.2};
  std::uint64_t seed = 0;
};

inline std::map<std::string, std::vector<MCQuestion>> group_by_goal(const std::vector<MCQuestion>& questions) {
  std::map<std::string, std::vector<MCQuestion>> out;
  for (const auto& q : questions) out[q.article_id].push_back(q);
  return out;
}

/// min(K, available) questions per goal: the prefix of a per-goal seeded
/// permutation, so sets for growing K are nested.
inline std::vector<MCQuestion> build_kshot_set(const std::map<std::string, std::vector<MCQuestion>>& by_goal,
                                               std::size_t k, std::uint64_t seed,
                                               std::vector<std::string>* warnings = nullptr) {
  std::vector<MCQuestion> out;
  if (k == 0) return out;
  for (const auto& [goal, qs] : by_goal) {
    if (qs.size() < k && warnings) {
      warnings->push_back("goal '" + goal + "' has only " + std::to_string(qs.size()) + " questions (K = " +
                          std::to_string(k) + ")");
    }
    std::vector<std::size_t> perm(qs.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    Rng rng(derive_seed(seed, "kshot:" + goal));
    rng.shuffle(perm);
    for (std::size_t i = 0; i < std::min(k, perm.size()); ++i) out.push_back(qs[perm[i]]);
  }
  return out;
}

/// Seeded disjoint partition; train size rounds half up.
inline std::pair<std::vector<std::string>, std::vector<std::string>> split_goals(std::vector<std::string> goals,
                                                                                 std::array<double, 2> ratio,
                                                                                 std::uint64_t seed) {
  if (goals.size() < 2) throw Error("split_goals needs at least two goals");
  if (ratio[0] < 0.0 || ratio[1] < 0.0 || std::abs(ratio[0] + ratio[1] - 1.0) > 1e-9) {
    throw Error("split ratio must be two non-negative fractions summing to 1");
  }
  std::sort(goals.begin(), goals.end());
  goals.erase(std::unique(goals.begin(), goals.end()), goals.end());
  Rng rng(derive_seed(seed, "split_goals"));
  rng.shuffle(goals);
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(goals.size()) * ratio[0] + 0.5));
  std::vector<std::string> train(goals.begin(), goals.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::string> test(goals.begin() + static_cast<std::ptrdiff_t>(n_train), goals.end());
  return {std::move(train), std::move(test)};
}

/// Questions whose gold article is in `goals`.
inline std::vector<MCQuestion> filter_by_goals(const std::vector<MCQuestion>& qs, const std::vector<std::string>& goals) {
  const std::set<std::string> keep(goals.begin(), goals.end());
  std::vector<MCQuestion> out;
  for (const auto& q : qs)
    if (keep.contains(q.article_id)) out.push_back(q);
  return out;
}

/// First `n` questions of a seeded permutation (nested in n).
inline std::vector<MCQuestion> budget_prefix(const std::vector<MCQuestion>& qs, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(qs.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  Rng rng(derive_seed(seed, "budget-prefix"));
  rng.shuffle(perm);
  std::vector<MCQuestion> out;
  for (std::size_t i = 0; i < std::min(n, perm.size()); ++i) out.push_back(qs[perm[i]]);
  return out;
}

struct CurveRow {
  std::size_t budget = 0;
  std::size_t train_examples = 0;
  std::string strategy;
  double accuracy = 0.0;

  friend bool operator==(const CurveRow&, const CurveRow&) = default;
};

struct LearningCurve {
  std::vector<CurveRow> rows;
  std::vector<std::string> warnings;
};

/// For each budget (in order): fine-tune the checkpoint (or train from
/// scratch without one) on the budgeted training questions, then report
/// test accuracy per strategy. A zero budget evaluates without training.
inline LearningCurve run_learning_curve(const std::optional<Checkpoint>& pretrained, const TransferProtocol& protocol,
                                        const TrainConfig& cfg, const std::vector<MCQuestion>& train_pool,
                                        const std::vector<MCQuestion>& test_set, const EmbeddingMatrix& images,
                                        const EmbeddingMatrix& texts) {
  if (test_set.empty()) throw Error("learning curve needs a non-empty test set");
  if (pretrained && pretrained->model.kind != cfg.kind) throw Error("model kind mismatch between checkpoint and config");
  LearningCurve curve;
  const auto by_goal = group_by_goal(train_pool);
  for (auto budget : protocol.budgets) {
    std::vector<MCQuestion> train_set = protocol.mode == TransferMode::kshot_seen_goals
                                            ? build_kshot_set(by_goal, budget, protocol.seed, &curve.warnings)
                                            : budget_prefix(train_pool, budget, protocol.seed);
    Model model;
    if (train_set.empty()) {
      model = pretrained ? pretrained->model
                         : init_model(cfg.kind, {texts.dim(), images.dim(), cfg.joint_dim}, cfg.seed, cfg.margin);
    } else if (pretrained) {
      model = fine_tune(*pretrained, cfg, train_set, {}, images, texts).checkpoint.model;
    } else {
      model = train(cfg, train_set, {}, images, texts).checkpoint.model;
    }
    const auto report = evaluate_mc(model, test_set, images, texts);
    for (auto s : kAllStrategies) {
      auto it = report.by_strategy.find(to_string(s));
      if (it == report.by_strategy.end()) continue;
      curve.rows.push_back({budget, train_set.size(), it->first, it->second.accuracy()});
    }
  }
  return curve;
}

/// Tab-separated: budget, examples, strategy, accuracy.
inline std::string format_curve(const LearningCurve& c) {
  std::ostringstream os;
  os << "budget\texamples\tstrategy\taccuracy\n";
  for (const auto& r : c.rows) {
    os << r.budget << '\t' << r.train_examples << '\t' << r.strategy << '\t' << std::fixed << std::setprecision(4)
       << r.accuracy << '\n';
  }
  return os.str();
}

}  // namespace vgsi
