#pragma once

// Human-annotation quiz over a question set: seeded sample, seeded candidate
// order per question, answers from a terminal or a script.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vgsi/error.hpp"
#include "vgsi/rng.hpp"
#include "vgsi/sampler.hpp"

namespace vgsi {

inline constexpr std::size_t kDefaultQuizSize = 100;

struct QuizItem {
  MCQuestion question;
  // order[d] = candidate index (into question.candidates()) shown at position d
  std::array<int, 4> order{0, 1, 2, 3};

  int displayed_gold() const {
    for (int d = 0; d < 4; ++d)
      if (order[d] == question.gold_index) return d;
    return -1;
  }
};

struct QuizSession {
  std::vector<QuizItem> items;
  std::vector<int> answers;       // displayed positions 0..3
  std::vector<double> seconds;    // time to answer, per answered item
  std::uint64_t seed = 0;

  std::size_t correct() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < answers.size(); ++i) n += answers[i] == items[i].displayed_gold() ? 1 : 0;
    return n;
  }

  /// Fraction correct among answered items.
  double accuracy() const {
    return answers.empty() ? 0.0 : static_cast<double>(correct()) / static_cast<double>(answers.size());
  }
};

inline QuizSession make_quiz(const std::vector<MCQuestion>& questions, std::size_t n, std::uint64_t seed) {
  if (questions.empty()) throw Error("quiz needs at least one question");
  Rng rng(derive_seed(seed, "quiz-sample"));
  QuizSession s;
  s.seed = seed;
  for (auto i : rng.sample_without_replacement(questions.size(), n)) {
    QuizItem item{questions[i], {0, 1, 2, 3}};
    Rng order_rng(derive_seed(seed, "quiz-order:" + questions[i].step_id + ":" + std::to_string(i)));
    std::vector<int> perm{0, 1, 2, 3};
    order_rng.shuffle(perm);
    std::copy(perm.begin(), perm.end(), item.order.begin());
    s.items.push_back(std::move(item));
  }
  return s;
}

/// "A".."D" (any case) or "1".."4" -> displayed position 0..3.
inline std::optional<int> parse_answer(std::string s) {
  s.erase(0, s.find_first_not_of(" \t\r\n"));
  s.erase(s.find_last_not_of(" \t\r\n") + 1);
  if (s.size() != 1) return std::nullopt;
  const char c = s[0];
  if (c >= 'A' && c <= 'D') return c - 'A';
  if (c >= 'a' && c <= 'd') return c - 'a';
  if (c >= '1' && c <= '4') return c - '1';
  return std::nullopt;
}

inline char answer_letter(int position) { return static_cast<char>('A' + position); }

inline void present(const QuizItem& item, std::size_t index, std::size_t total, const std::string& image_dir,
                    std::ostream& out) {
  const auto cands = item.question.candidates();
  out << "[" << index + 1 << "/" << total << "] Goal: " << item.question.prompt_text << '\n';
  for (int d = 0; d < 4; ++d) {
    const auto& id = cands[static_cast<std::size_t>(item.order[d])];
    out << "  " << answer_letter(d) << ") " << (image_dir.empty() ? id : image_dir + "/" + id) << '\n';
  }
  out << "Answer (A-D): " << std::flush;
}

/// Reads one answer line per item from `in`; invalid lines re-prompt. Stops
/// early at end of input.
inline void run_quiz(QuizSession& s, std::istream& in, std::ostream& out, const std::string& image_dir = {}) {
  s.answers.clear();
  s.seconds.clear();
  for (std::size_t i = 0; i < s.items.size(); ++i) {
    present(s.items[i], i, s.items.size(), image_dir, out);
    const auto t0 = std::chrono::steady_clock::now();
    std::optional<int> ans;
    std::string line;
    while (!ans && std::getline(in, line)) {
      ans = parse_answer(line);
      if (!ans) out << "Please answer A, B, C or D: " << std::flush;
    }
    if (!ans) break;
    s.answers.push_back(*ans);
    s.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  out << '\n';
}

/// Mean accuracy of several annotators' sessions.
inline double average_accuracy(const std::vector<double>& accuracies) {
  if (accuracies.empty()) throw Error("nothing to average");
  double s = 0.0;
  for (double a : accuracies) s += a;
  return s / static_cast<double>(accuracies.size());
}

inline nlohmann::json session_to_json(const QuizSession& s) {
  std::vector<std::string> steps;
  for (const auto& it : s.items) steps.push_back(it.question.step_id);
  return {{"seed", s.seed},          {"questions", s.items.size()}, {"answered", s.answers.size()},
          {"correct", s.correct()},  {"accuracy", s.accuracy()},    {"answers", s.answers},
          {"seconds", s.seconds},    {"step_ids", steps}};
}

}  // namespace vgsi
