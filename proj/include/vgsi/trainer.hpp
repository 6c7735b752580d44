#pragma once

// Mini-batch training with validation-accuracy early stopping, and
// fine-tuning from a checkpoint.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "vgsi/checkpoint.hpp"
#include "vgsi/embed_store.hpp"
#include "vgsi/error.hpp"
#include "vgsi/evaluator.hpp"
#include "vgsi/models.hpp"
#include "vgsi/optimizer.hpp"
#include "vgsi/rng.hpp"
#include "vgsi/sampler.hpp"

namespace vgsi {

struct TrainConfig {
  ModelKind kind = ModelKind::triplet;
  std::size_t joint_dim = 1024;
  std::size_t batch_size = 1024;
  std::size_t max_epochs = 200;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  double margin = kDefaultMargin;
  std::optional<OptimizerConfig> optimizer;  // defaults per model kind
  std::size_t threads = 1;
  // Each batch is cut into this many fixed blocks whose gradients are summed
  // in block order, so results do not depend on `threads`.
  std::size_t reduction_blocks = 4;

  OptimizerConfig resolved_optimizer() const { return optimizer.value_or(default_optimizer(kind)); }
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_accuracy;  // empty when no validation set
  int best_epoch = -1;

  std::size_t epochs_run() const { return train_loss.size(); }
  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainHistory history;
};

inline void validate(const TrainConfig& c) {
  if (c.batch_size < 1) throw Error("batch size must be >= 1");
  if (c.patience < 1) throw Error("patience must be >= 1");
  if (c.reduction_blocks < 1) throw Error("reduction_blocks must be >= 1");
  if (c.margin < 0.0) throw Error("margin must be non-negative");
}

/// Triplet: 3 triplets per question (gold vs each distractor).
/// SimNet: the positive pair 3 times plus 3 negative pairs.
/// DeViSE: the positive pair only.
inline std::vector<TrainExample<float>> build_examples(ModelKind kind, const std::vector<MCQuestion>& questions,
                                                       const EmbeddingMatrix& images, const EmbeddingMatrix& texts) {
  std::vector<TrainExample<float>> out;
  for (const auto& q : questions) {
    const auto goal = texts.at(q.prompt_embedding_id);
    const auto gold = images.at(q.gold_image_id);
    switch (kind) {
      case ModelKind::devise:
        out.push_back({goal, gold, {}, 1});
        break;
      case ModelKind::simnet:
        for (int i = 0; i < 3; ++i) out.push_back({goal, gold, {}, 1});
        for (const auto& d : q.distractor_image_ids) out.push_back({goal, images.at(d), {}, 0});
        break;
      case ModelKind::triplet:
        for (const auto& d : q.distractor_image_ids) out.push_back({goal, gold, images.at(d), 1});
        break;
    }
  }
  return out;
}

namespace detail {

template <template <typename> class P>
double batch_gradient(const P<float>& params, const std::vector<TrainExample<float>>& examples,
                      std::span<const std::size_t> batch, const LossOptions& opt, std::size_t threads,
                      std::vector<P<double>>& blocks, P<double>& total) {
  const std::size_t nblocks = blocks.size();
  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<double> block_loss(nblocks, 0.0);
  std::vector<std::exception_ptr> errors(nblocks);

  auto run_block = [&](std::size_t b) {
    try {
      for (auto* t : blocks[b].tensors()) std::fill(t->flat().begin(), t->flat().end(), 0.0);
      const std::size_t lo = batch.size() * b / nblocks;
      const std::size_t hi = batch.size() * (b + 1) / nblocks;
      for (std::size_t i = lo; i < hi; ++i)
        block_loss[b] += accumulate_loss_grad(params, examples[batch[i]], blocks[b], scale, opt);
    } catch (...) {
      errors[b] = std::current_exception();
    }
  };

  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), nblocks);
  if (workers == 1) {
    for (std::size_t b = 0; b < nblocks; ++b) run_block(b);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t b = w; b < nblocks; b += workers) run_block(b);
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  auto dst = total.tensors();
  for (auto* t : dst) std::fill(t->flat().begin(), t->flat().end(), 0.0);
  double loss = 0.0;
  for (std::size_t b = 0; b < nblocks; ++b) {
    loss += block_loss[b];
    auto src = blocks[b].tensors();
    for (std::size_t t = 0; t < dst.size(); ++t) {
      auto d = dst[t]->flat();
      auto s = src[t]->flat();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
    }
  }
  return loss;  // sum of per-example losses
}

inline std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(derive_seed(seed, "epoch-shuffle"), epoch));
  rng.shuffle(order);
  return order;
}

inline TrainResult run_training(Checkpoint start, const TrainConfig& cfg, const std::vector<MCQuestion>& train_set,
                                const std::vector<MCQuestion>& val_set, const EmbeddingMatrix& images,
                                const EmbeddingMatrix& texts) {
  validate(cfg);
  if (texts.dim() != start.model.dims.goal || images.dim() != start.model.dims.image) {
    throw Error("dimension mismatch: model expects text " + std::to_string(start.model.dims.goal) + " / image " +
                std::to_string(start.model.dims.image) + ", embeddings have " + std::to_string(texts.dim()) + " / " +
                std::to_string(images.dim()));
  }
  const auto examples = build_examples(start.model.kind, train_set, images, texts);
  const LossOptions opt{start.model.margin};

  TrainResult result{start, {}};
  Checkpoint current = std::move(start);
  double best_acc = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  std::visit(
      [&](auto& params) {
        using G = decltype(zeros_like(params));
        std::vector<G> blocks(cfg.reduction_blocks, zeros_like(params));
        G total = zeros_like(params);

        for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
          const auto order = epoch_order(cfg.seed, epoch, examples.size());
          double loss_sum = 0.0;
          for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
            const std::span<const std::size_t> batch(order.data() + lo, std::min(cfg.batch_size, order.size() - lo));
            const double batch_loss = batch_gradient(params, examples, batch, opt, cfg.threads, blocks, total);
            loss_sum += batch_loss;
            optimizer_step(current.optimizer, params, total);
          }
          result.history.train_loss.push_back(examples.empty() ? 0.0 : loss_sum / static_cast<double>(examples.size()));
          if (!all_finite(params)) throw Error("training diverged: non-finite parameters at epoch " + std::to_string(epoch));

          if (val_set.empty()) {
            result.checkpoint = current;
            result.history.best_epoch = static_cast<int>(epoch);
            continue;
          }
          const double acc = evaluate_mc(current.model, val_set, images, texts).accuracy;
          result.history.val_accuracy.push_back(acc);
          if (acc > best_acc) {
            best_acc = acc;
            since_best = 0;
            result.checkpoint = current;
            result.history.best_epoch = static_cast<int>(epoch);
          } else if (++since_best >= cfg.patience) {
            break;
          }
        }
      },
      current.model.params);
  return result;
}

}  // namespace detail

inline TrainResult train(const TrainConfig& cfg, const std::vector<MCQuestion>& train_set,
                         const std::vector<MCQuestion>& val_set, const EmbeddingMatrix& images,
                         const EmbeddingMatrix& texts) {
  if (train_set.empty()) throw Error("training set is empty");
  const ModelDims dims{texts.dim(), images.dim(), cfg.joint_dim};
  Checkpoint start{init_model(cfg.kind, dims, cfg.seed, cfg.margin), OptimizerState<float>{cfg.resolved_optimizer(), 0, {}, {}}};
  return detail::run_training(std::move(start), cfg, train_set, val_set, images, texts);
}

/// Continues training a checkpoint with a fresh optimizer state. The
/// checkpoint's margin is kept. Zero epochs returns the checkpoint unchanged.
inline TrainResult fine_tune(const Checkpoint& ck, const TrainConfig& cfg, const std::vector<MCQuestion>& train_set,
                             const std::vector<MCQuestion>& val_set, const EmbeddingMatrix& images,
                             const EmbeddingMatrix& texts) {
  if (ck.model.kind != cfg.kind) {
    throw Error(std::string("model kind mismatch: checkpoint is ") + to_string(ck.model.kind) + ", config is " +
                to_string(cfg.kind));
  }
  Checkpoint start{ck.model, OptimizerState<float>{cfg.resolved_optimizer(), 0, {}, {}}};
  if (train_set.empty() || cfg.max_epochs == 0) return {ck, {}};
  return detail::run_training(std::move(start), cfg, train_set, val_set, images, texts);
}

inline nlohmann::json train_report(const TrainConfig& cfg, const TrainResult& r) {
  const auto oc = cfg.resolved_optimizer();
  nlohmann::json config = {{"model", to_string(cfg.kind)},
                           {"joint_dim", cfg.joint_dim},
                           {"batch_size", cfg.batch_size},
                           {"max_epochs", cfg.max_epochs},
                           {"patience", cfg.patience},
                           {"seed", cfg.seed},
                           {"margin", cfg.margin},
                           {"optimizer", to_string(oc.kind)},
                           {"learning_rate", oc.learning_rate}};
  nlohmann::json j = {{"config", config},
                      {"history", {{"train_loss", r.history.train_loss}, {"val_accuracy", r.history.val_accuracy}}},
                      {"epochs_run", r.history.epochs_run()},
                      {"best_epoch", r.history.best_epoch},
                      {"checkpoint_id", checkpoint_id(r.checkpoint)}};
  if (r.history.best_epoch >= 0 && !r.history.val_accuracy.empty()) {
    j["best_val_accuracy"] = r.history.val_accuracy[static_cast<std::size_t>(r.history.best_epoch)];
  }
  return j;
}

}  // namespace vgsi
