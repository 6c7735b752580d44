#pragma once

// Command-line front end. Every subcommand is a thin adapter over the
// library operations: structured results go to `out`, logs to `err`.
// Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <array>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vgsi/aggregator.hpp"
#include "vgsi/checkpoint.hpp"
#include "vgsi/corpus.hpp"
#include "vgsi/embed_store.hpp"
#include "vgsi/evaluator.hpp"
#include "vgsi/keyframes.hpp"
#include "vgsi/quiz.hpp"
#include "vgsi/sampler.hpp"
#include "vgsi/synthetic.hpp"
#include "vgsi/trainer.hpp"
#include "vgsi/transfer.hpp"

namespace vgsi::cli {

class UsageError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline const std::string& need(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing required option ") + flag);
  return value;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  os << text;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("file not found: " + path);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed JSON in '" + path + "': " + e.what());
  }
}

struct TrainFlags {
  std::string model = "triplet";
  std::size_t joint_dim = 1024;
  std::size_t batch = 1024;
  std::size_t epochs = 200;
  std::size_t patience = 10;
  double margin = kDefaultMargin;
  double lr = 0.0;  // 0: model default
  std::string optimizer;  // empty: model default
  std::size_t threads = 1;

  void add_to(CLI::App* app) {
    app->add_option("--model", model, "devise | simnet | triplet");
    app->add_option("--joint-dim", joint_dim, "joint embedding dimension");
    app->add_option("--batch", batch, "batch size");
    app->add_option("--epochs", epochs, "maximum epochs");
    app->add_option("--patience", patience, "early-stopping patience (epochs)");
    app->add_option("--margin", margin, "triplet margin");
    app->add_option("--lr", lr, "learning rate override");
    app->add_option("--optimizer", optimizer, "adam | rmsprop override");
    app->add_option("--threads", threads, "gradient worker threads");
  }

  TrainConfig config(std::uint64_t seed) const {
    TrainConfig c;
    c.kind = parse_model_kind(model);
    c.joint_dim = joint_dim;
    c.batch_size = batch;
    c.max_epochs = epochs;
    c.patience = patience;
    c.margin = margin;
    c.seed = seed;
    c.threads = threads;
    if (lr > 0.0 || !optimizer.empty()) {
      auto oc = default_optimizer(c.kind);
      if (!optimizer.empty()) oc.kind = parse_optimizer_kind(optimizer);
      if (lr > 0.0) oc.learning_rate = lr;
      c.optimizer = oc;
    }
    return c;
  }
};

struct Inputs {
  std::string corpus, images, texts, questions, checkpoint, split, part = "test", out;
  std::uint64_t seed = 0;
};

inline std::vector<std::string> articles_for(const Corpus& corpus, const std::string& split_path,
                                             const std::string& part) {
  if (split_path.empty()) {
    std::vector<std::string> all;
    for (const auto& a : corpus.articles()) all.push_back(a.article_id);
    return all;
  }
  return split_from_json(read_json_file(split_path)).part(part);
}

}  // namespace detail

/// Runs one CLI invocation; `args` excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr,
               std::istream& in = std::cin) {
  CLI::App app{"Visual goal-step inference engine", "vgsi"};
  app.require_subcommand(1);
  detail::Inputs io;
  detail::TrainFlags tf;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "validate a corpus, print statistics, optionally split it");
  std::vector<double> ratios;
  std::string split_out;
  ingest->add_option("--corpus", io.corpus, "corpus records (JSON lines)");
  ingest->add_option("--ratios", ratios, "train,val,test fractions")->delimiter(',');
  ingest->add_option("--seed", io.seed);
  ingest->add_option("--split-out", split_out, "write the goal-level split here");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus with embeddings");
  SynthSpec spec;
  std::uint64_t center_seed = 0;
  synth->add_option("--clusters", spec.clusters);
  synth->add_option("--categories", spec.categories);
  synth->add_option("--methods", spec.methods_per_article);
  synth->add_option("--steps", spec.steps_per_method, "steps per method");
  synth->add_option("--dim-image", spec.dim_image);
  synth->add_option("--dim-text", spec.dim_text);
  synth->add_option("--latent-dim", spec.latent_dim);
  synth->add_option("--noise", spec.noise_scale);
  synth->add_option("--spread", spec.group_spread, "within-category spread of cluster centers");
  synth->add_option("--seed", spec.seed);
  auto* center_opt = synth->add_option("--center-seed", center_seed, "seed for centers (defaults to --seed)");
  synth->add_option("--prefix", spec.id_prefix, "id prefix");
  synth->add_option("--out", io.out, "output directory");

  // index
  auto* index = app.add_subcommand("index", "exact nearest-neighbor query over image features");
  std::string query_id;
  std::size_t k = 3;
  index->add_option("--corpus", io.corpus);
  index->add_option("--images", io.images);
  index->add_option("--query-id", query_id, "image id to query with");
  index->add_option("--k", k);
  bool keep_same = false;
  index->add_flag("--include-same-article", keep_same, "allow hits from the query's own article");

  // sample
  auto* sample = app.add_subcommand("sample", "build multiple-choice questions");
  std::string strategies = "random", prompt_level = "goal";
  sample->add_option("--corpus", io.corpus);
  sample->add_option("--images", io.images);
  sample->add_option("--split", io.split, "split file from ingest");
  sample->add_option("--part", io.part, "train | val | test");
  sample->add_option("--strategy", strategies, "random | similarity | category (comma list allowed)");
  sample->add_option("--prompt-level", prompt_level, "goal | method | step");
  sample->add_option("--seed", io.seed);
  sample->add_option("--out", io.out, "question set output (JSON lines)");

  // train / finetune
  std::string val_path, report_path;
  auto* trainc = app.add_subcommand("train", "train a scoring model");
  auto* finetune = app.add_subcommand("finetune", "fine-tune a checkpoint");
  for (auto* c : {trainc, finetune}) {
    c->add_option("--questions", io.questions, "training questions");
    c->add_option("--val", val_path, "validation questions (enables early stopping)");
    c->add_option("--images", io.images);
    c->add_option("--texts", io.texts);
    c->add_option("--seed", io.seed);
    c->add_option("--out", io.out, "checkpoint output");
    c->add_option("--report", report_path, "run report output (JSON)");
    tf.add_to(c);
  }
  finetune->add_option("--checkpoint", io.checkpoint);

  // eval-mc
  auto* evalmc = app.add_subcommand("eval-mc", "multiple-choice accuracy");
  bool aggregate = false;
  AggregationConfig agg;
  std::string format = "table";
  evalmc->add_option("--checkpoint", io.checkpoint);
  evalmc->add_option("--questions", io.questions);
  evalmc->add_option("--images", io.images);
  evalmc->add_option("--texts", io.texts);
  evalmc->add_option("--out", io.out, "report output (JSON)");
  evalmc->add_option("--format", format, "table | json");

  // eval-retrieval
  auto* evalret = app.add_subcommand("eval-retrieval", "goal-image retrieval recall@k and median rank");
  std::size_t goals = 1000, per_goal = 5;
  std::vector<std::size_t> ks;
  evalret->add_option("--checkpoint", io.checkpoint);
  evalret->add_option("--corpus", io.corpus);
  evalret->add_option("--images", io.images);
  evalret->add_option("--texts", io.texts);
  evalret->add_option("--split", io.split);
  evalret->add_option("--part", io.part);
  evalret->add_option("--goals", goals, "number of query goals");
  evalret->add_option("--per-goal", per_goal, "images per goal in the pool");
  evalret->add_option("--ks", ks, "recall cut-offs (default by pool size)")->delimiter(',');
  evalret->add_option("--seed", io.seed);
  evalret->add_option("--out", io.out, "report output (JSON)");

  for (auto* c : {evalmc, evalret}) {
    c->add_flag("--aggregate", aggregate, "re-score with step aggregation");
    c->add_option("--lambda", agg.lambda, "goal-score weight for aggregation");
    c->add_option("--neighbors", agg.neighbors, "articles retrieved for aggregation");
  }
  evalmc->add_option("--corpus", io.corpus, "reference corpus for --aggregate");

  // keyframes
  auto* keyf = app.add_subcommand("keyframes", "convert frame features into a corpus");
  std::string frames_path, videos_path, mode = "kmeans", metric = "euclidean";
  ConversionConfig conv;
  keyf->add_option("--frames", frames_path, "frame features (ids videoid#frameindex)");
  keyf->add_option("--videos", videos_path, "video records (JSON lines)");
  keyf->add_option("--mode", mode, "kmeans | segments");
  keyf->add_option("--k", conv.k, "keyframes per video (0: one per ten frames)");
  keyf->add_option("--max-per-goal", conv.max_per_goal, "cap on frames per goal (0: none)");
  keyf->add_option("--max-iters", conv.max_iters);
  keyf->add_option("--metric", metric, "euclidean | cosine");
  keyf->add_option("--seed", io.seed);
  keyf->add_option("--out", io.out, "output directory");

  // transfer
  auto* transferc = app.add_subcommand("transfer", "learning curve over fine-tuning budgets");
  std::string test_path, tmode = "kshot";
  std::vector<std::size_t> budgets;
  std::vector<double> goal_ratio;
  transferc->add_option("--checkpoint", io.checkpoint, "pretrained checkpoint (omit to train from scratch)");
  transferc->add_option("--questions", io.questions, "target training question pool");
  transferc->add_option("--test-questions", test_path, "target test questions");
  transferc->add_option("--images", io.images);
  transferc->add_option("--texts", io.texts);
  transferc->add_option("--mode", tmode, "kshot | split");
  transferc->add_option("--budgets", budgets, "K values or example counts")->delimiter(',');
  transferc->add_option("--ratio", goal_ratio, "train,test goal fractions for split mode")->delimiter(',');
  transferc->add_option("--seed", io.seed);
  transferc->add_option("--out", io.out, "curve output (TSV)");
  tf.add_to(transferc);

  // quiz
  auto* quizc = app.add_subcommand("quiz", "human annotation quiz");
  std::size_t quiz_n = kDefaultQuizSize;
  std::string answers_path, image_dir;
  std::vector<std::string> average;
  bool print_key = false;
  quizc->add_option("--questions", io.questions);
  quizc->add_option("--n", quiz_n, "number of questions");
  quizc->add_option("--seed", io.seed);
  quizc->add_option("--answers", answers_path, "scripted answers, one per line (default: interactive)");
  quizc->add_option("--image-dir", image_dir, "directory prefix for displayed image paths");
  quizc->add_flag("--print-key", print_key, "print the answer key instead of quizzing");
  quizc->add_option("--average", average, "average accuracies of session reports")->delimiter(',');
  quizc->add_option("--out", io.out, "session report output (JSON)");

  std::vector<std::string> argv_store{"vgsi"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  using detail::need;
  try {
    if (*ingest) {
      const auto corpus = load_corpus(need(io.corpus, "--corpus"));
      out << stats_to_json(corpus_stats(corpus)).dump(2) << '\n';
      if (!ratios.empty()) {
        if (ratios.size() != 3) throw UsageError("--ratios needs three values");
        const auto split = split_by_goal(corpus, {ratios[0], ratios[1], ratios[2]}, io.seed);
        err << "split: " << split.train.size() << " train, " << split.val.size() << " val, " << split.test.size()
            << " test articles\n";
        if (!split_out.empty()) detail::write_text(split_out, split_to_json(split).dump() + "\n");
      }
    } else if (*synth) {
      if (*center_opt) spec.center_seed = center_seed;
      const auto data = generate_synthetic(spec);
      const std::filesystem::path dir(need(io.out, "--out"));
      std::filesystem::create_directories(dir);
      write_corpus(data.corpus, (dir / "corpus.jsonl").string());
      write_embeddings(data.images, (dir / "images.vgse").string());
      write_embeddings(data.texts, (dir / "texts.vgse").string());
      out << stats_to_json(corpus_stats(data.corpus))["total"].dump() << '\n';
    } else if (*index) {
      const auto corpus = load_corpus(need(io.corpus, "--corpus"));
      const auto images = read_embeddings(need(io.images, "--images"));
      const auto nn = build_index(images, corpus);
      std::set<std::size_t> exclude;
      if (!keep_same) {
        auto loc = corpus.locate_image(need(query_id, "--query-id"));
        if (!loc) throw Error("unknown image id '" + query_id + "'");
        exclude.insert(loc->article);
      }
      for (const auto& h : knn_query(nn, images.at(need(query_id, "--query-id")), k, exclude)) {
        out << nlohmann::json{{"image_id", h.image_id},
                              {"article_id", corpus.article(h.article).article_id},
                              {"similarity", h.similarity}}
                   .dump()
            << '\n';
      }
    } else if (*sample) {
      const auto corpus = load_corpus(need(io.corpus, "--corpus"));
      const auto images = read_embeddings(need(io.images, "--images"));
      const auto articles = detail::articles_for(corpus, io.split, io.part);
      std::vector<MCQuestion> all;
      for (const auto& s : detail::split_list(strategies)) {
        auto qs = make_question_set(corpus, images, articles, parse_strategy(s), parse_prompt_level(prompt_level), io.seed);
        for (const auto& w : qs.warnings) err << "warning: " << w << '\n';
        all.insert(all.end(), qs.questions.begin(), qs.questions.end());
      }
      if (io.out.empty()) {
        write_questions(all, out);
      } else {
        write_questions(all, io.out);
        err << "wrote " << all.size() << " questions to " << io.out << '\n';
      }
    } else if (*trainc || *finetune) {
      const auto questions = read_questions(need(io.questions, "--questions"));
      const auto val = val_path.empty() ? std::vector<MCQuestion>{} : read_questions(val_path);
      const auto images = read_embeddings(need(io.images, "--images"));
      const auto texts = read_embeddings(need(io.texts, "--texts"));
      auto cfg = tf.config(io.seed);
      TrainResult r;
      if (*finetune) {
        const auto ck = read_checkpoint(need(io.checkpoint, "--checkpoint"));
        if (!finetune->count("--model")) cfg.kind = ck.model.kind;
        cfg.margin = ck.model.margin;
        r = fine_tune(ck, cfg, questions, val, images, texts);
      } else {
        r = train(cfg, questions, val, images, texts);
      }
      write_checkpoint(r.checkpoint, need(io.out, "--out"));
      const auto report = train_report(cfg, r);
      if (!report_path.empty()) detail::write_text(report_path, report.dump(2) + "\n");
      out << report.dump() << '\n';
    } else if (*evalmc) {
      const auto questions = read_questions(need(io.questions, "--questions"));
      const auto ck = read_checkpoint(need(io.checkpoint, "--checkpoint"));
      const auto images = read_embeddings(need(io.images, "--images"));
      const auto texts = read_embeddings(need(io.texts, "--texts"));
      EvalReport rep;
      if (aggregate) {
        const auto corpus = load_corpus(need(io.corpus, "--corpus"));
        const StepKnowledge knowledge(corpus, texts);
        rep = evaluate_mc(AggregatedScorer<Model>(ck.model, knowledge, agg), questions, images, texts);
        rep.tag = "agg";
      } else {
        rep = evaluate_mc(ck.model, questions, images, texts);
      }
      rep.model_id = checkpoint_id(ck);
      const auto j = report_to_json(rep);
      if (!io.out.empty()) detail::write_text(io.out, j.dump(2) + "\n");
      if (format == "json") {
        out << j.dump() << '\n';
      } else {
        out << format_mc_table({{to_string(ck.model.kind), rep}});
        out << "overall accuracy: " << rep.accuracy << " over " << rep.question_count << " questions\n";
      }
    } else if (*evalret) {
      const auto ck = read_checkpoint(need(io.checkpoint, "--checkpoint"));
      const auto corpus = load_corpus(need(io.corpus, "--corpus"));
      const auto images = read_embeddings(need(io.images, "--images"));
      const auto texts = read_embeddings(need(io.texts, "--texts"));
      const auto pool = build_retrieval_pool(corpus, detail::articles_for(corpus, io.split, io.part), goals, per_goal, io.seed);
      const auto cut = ks.empty() ? default_recall_ks(pool.image_ids.size()) : ks;
      EvalReport rep;
      if (aggregate) {
        const StepKnowledge knowledge(corpus, texts);
        rep = evaluate_retrieval(AggregatedScorer<Model>(ck.model, knowledge, agg), pool, images, texts, cut);
        rep.tag = "agg";
      } else {
        rep = evaluate_retrieval(ck.model, pool, images, texts, cut);
      }
      rep.model_id = checkpoint_id(ck);
      rep.seed = io.seed;
      const auto j = report_to_json(rep);
      if (!io.out.empty()) detail::write_text(io.out, j.dump(2) + "\n");
      out << j.dump() << '\n';
    } else if (*keyf) {
      const auto frames = read_embeddings(need(frames_path, "--frames"));
      const auto videos = load_videos(need(videos_path, "--videos"), frames);
      conv.mode = mode == "segments" ? KeyframeMode::segments
                  : mode == "kmeans" ? KeyframeMode::kmeans
                                     : throw UsageError("--mode must be kmeans or segments");
      conv.metric = parse_metric(metric);
      conv.seed = io.seed;
      const auto data = convert_videos(videos, conv);
      const std::filesystem::path dir(need(io.out, "--out"));
      std::filesystem::create_directories(dir);
      write_corpus(data.corpus, (dir / "corpus.jsonl").string());
      write_embeddings(data.images, (dir / "images.vgse").string());
      out << stats_to_json(corpus_stats(data.corpus))["total"].dump() << '\n';
    } else if (*transferc) {
      auto pool = read_questions(need(io.questions, "--questions"));
      const auto images = read_embeddings(need(io.images, "--images"));
      const auto texts = read_embeddings(need(io.texts, "--texts"));
      TransferProtocol proto;
      proto.mode = parse_transfer_mode(tmode);
      proto.seed = io.seed;
      if (!budgets.empty()) proto.budgets = budgets;
      if (!goal_ratio.empty()) {
        if (goal_ratio.size() != 2) throw UsageError("--ratio needs two values");
        proto.split_ratio = {goal_ratio[0], goal_ratio[1]};
      }
      std::vector<MCQuestion> test;
      if (!test_path.empty()) {
        test = read_questions(test_path);
      } else if (proto.mode == TransferMode::split_unseen_goals) {
        std::vector<std::string> goal_ids;
        for (const auto& q : pool) goal_ids.push_back(q.article_id);
        const auto [tr, te] = split_goals(goal_ids, proto.split_ratio, proto.seed);
        test = filter_by_goals(pool, te);
        pool = filter_by_goals(pool, tr);
      } else {
        throw UsageError("kshot mode needs --test-questions");
      }
      std::optional<Checkpoint> ck;
      if (!io.checkpoint.empty()) ck = read_checkpoint(io.checkpoint);
      auto cfg = tf.config(io.seed);
      if (ck) {
        if (!transferc->count("--model")) cfg.kind = ck->model.kind;
        cfg.margin = ck->model.margin;
      }
      const auto curve = run_learning_curve(ck, proto, cfg, pool, test, images, texts);
      for (const auto& w : curve.warnings) err << "warning: " << w << '\n';
      const auto table = format_curve(curve);
      if (!io.out.empty()) detail::write_text(io.out, table);
      out << table;
    } else if (*quizc) {
      if (!average.empty()) {
        std::vector<double> accs;
        for (const auto& p : average) accs.push_back(detail::read_json_file(p).at("accuracy").get<double>());
        out << nlohmann::json{{"sessions", accs.size()}, {"accuracy", average_accuracy(accs)}}.dump() << '\n';
        return 0;
      }
      const auto questions = read_questions(need(io.questions, "--questions"));
      auto session = make_quiz(questions, quiz_n, io.seed);
      if (print_key) {
        for (const auto& item : session.items) out << answer_letter(item.displayed_gold()) << '\n';
        return 0;
      }
      if (answers_path.empty()) {
        run_quiz(session, in, err, image_dir);
      } else {
        std::ifstream script(answers_path);
        if (!script) throw Error("file not found: " + answers_path);
        std::ostringstream transcript;
        run_quiz(session, script, transcript, image_dir);
      }
      const auto j = session_to_json(session);
      if (!io.out.empty()) detail::write_text(io.out, j.dump(2) + "\n");
      out << j.dump() << '\n';
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace vgsi::cli
