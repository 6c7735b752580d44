#pragma once

// Goal -> method -> step hierarchy, its line-delimited record format, and
// goal-level dataset splits.

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "vgsi/error.hpp"
#include "vgsi/rng.hpp"

namespace vgsi {

struct Step {
  std::string step_id;
  std::string text;
  std::string image_id;
};

struct Method {
  std::string method_id;
  std::string title;
  std::vector<Step> steps;
};

struct Article {
  std::string article_id;
  std::string goal_title;
  std::string category;
  std::vector<Method> methods;

  std::size_t step_count() const {
    std::size_t n = 0;
    for (const auto& m : methods) n += m.steps.size();
    return n;
  }
};

/// Position of a step inside a corpus.
struct StepRef {
  std::size_t article = 0;
  std::size_t method = 0;
  std::size_t step = 0;

  friend bool operator==(const StepRef&, const StepRef&) = default;
};

// Text embedding ids for the three prompt levels. The feature extractor
// writes text vectors under these ids.
inline std::string goal_text_id(const Article& a) { return "goal:" + a.article_id; }
inline std::string method_text_id(const Method& m) { return "method:" + m.method_id; }
inline std::string step_text_id(const Step& s) { return "step:" + s.step_id; }

class Corpus {
 public:
  Corpus() = default;

  /// Validates and indexes. Throws FormatError on any violated invariant.
  explicit Corpus(std::vector<Article> articles) : articles_(std::move(articles)) { build_index(); }

  const std::vector<Article>& articles() const { return articles_; }
  const Article& article(std::size_t i) const { return articles_[i]; }
  std::size_t size() const { return articles_.size(); }
  bool empty() const { return articles_.empty(); }

  const Article& article_of(const StepRef& r) const { return articles_[r.article]; }
  const Method& method_of(const StepRef& r) const { return articles_[r.article].methods[r.method]; }
  const Step& step_of(const StepRef& r) const { return articles_[r.article].methods[r.method].steps[r.step]; }

  std::optional<StepRef> locate_image(const std::string& image_id) const {
    auto it = by_image_.find(image_id);
    if (it == by_image_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<std::size_t> find_article(const std::string& article_id) const {
    auto it = by_article_.find(article_id);
    if (it == by_article_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t image_count() const { return by_image_.size(); }

  /// All steps in corpus order.
  std::vector<StepRef> step_refs() const {
    std::vector<StepRef> out;
    for (std::size_t a = 0; a < articles_.size(); ++a)
      for (std::size_t m = 0; m < articles_[a].methods.size(); ++m)
        for (std::size_t s = 0; s < articles_[a].methods[m].steps.size(); ++s) out.push_back({a, m, s});
    return out;
  }

 private:
  void build_index() {
    std::unordered_set<std::string> method_ids, step_ids;
    for (std::size_t a = 0; a < articles_.size(); ++a) {
      const auto& art = articles_[a];
      const std::string where = "article '" + art.article_id + "'";
      if (art.article_id.empty()) throw FormatError("article with empty article_id");
      if (art.goal_title.empty()) throw FormatError("empty goal title in " + where);
      if (art.methods.empty()) throw FormatError(where + " has no methods");
      if (!by_article_.emplace(art.article_id, a).second) throw FormatError("duplicate article_id '" + art.article_id + "'");
      for (std::size_t m = 0; m < art.methods.size(); ++m) {
        const auto& meth = art.methods[m];
        if (!method_ids.insert(meth.method_id).second) throw FormatError("duplicate method_id '" + meth.method_id + "'");
        if (meth.steps.empty()) throw FormatError("method '" + meth.method_id + "' in " + where + " has no steps");
        for (std::size_t s = 0; s < meth.steps.size(); ++s) {
          const auto& st = meth.steps[s];
          if (st.text.empty()) throw FormatError("empty text for step '" + st.step_id + "' in " + where);
          if (st.image_id.empty()) throw FormatError("missing image_id for step '" + st.step_id + "'");
          if (!step_ids.insert(st.step_id).second) throw FormatError("duplicate step_id '" + st.step_id + "'");
          if (!by_image_.emplace(st.image_id, StepRef{a, m, s}).second) {
            throw FormatError("duplicate image_id '" + st.image_id + "'");
          }
        }
      }
    }
  }

  std::vector<Article> articles_;
  std::unordered_map<std::string, StepRef> by_image_;
  std::unordered_map<std::string, std::size_t> by_article_;
};

// ---- Corpus Record Format (one JSON article per line) ----

inline nlohmann::json article_to_json(const Article& a) {
  nlohmann::json methods = nlohmann::json::array();
  for (const auto& m : a.methods) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : m.steps) steps.push_back({{"step_id", s.step_id}, {"text", s.text}, {"image_id", s.image_id}});
    methods.push_back({{"method_id", m.method_id}, {"title", m.title}, {"steps", std::move(steps)}});
  }
  return {{"article_id", a.article_id}, {"goal_title", a.goal_title}, {"category", a.category}, {"methods", std::move(methods)}};
}

inline Article article_from_json(const nlohmann::json& j) {
  Article a;
  a.article_id = j.at("article_id").get<std::string>();
  a.goal_title = j.at("goal_title").get<std::string>();
  a.category = j.value("category", std::string{});
  for (const auto& jm : j.at("methods")) {
    Method m;
    m.method_id = jm.at("method_id").get<std::string>();
    m.title = jm.value("title", std::string{});
    for (const auto& js : jm.at("steps")) {
      m.steps.push_back({js.at("step_id").get<std::string>(), js.at("text").get<std::string>(),
                         js.at("image_id").get<std::string>()});
    }
    a.methods.push_back(std::move(m));
  }
  return a;
}

inline Corpus parse_corpus(std::istream& is) {
  std::vector<Article> articles;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      articles.push_back(article_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("malformed record at line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (articles.empty()) throw FormatError("no articles");
  return Corpus(std::move(articles));
}

inline Corpus load_corpus(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("file not found: " + path);
  return parse_corpus(is);
}

inline void write_corpus(const Corpus& c, std::ostream& os) {
  for (const auto& a : c.articles()) os << article_to_json(a).dump() << '\n';
}

inline void write_corpus(const Corpus& c, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  write_corpus(c, os);
}

// ---- statistics ----

struct HierarchyCounts {
  std::size_t goals = 0;
  std::size_t methods = 0;
  std::size_t steps = 0;
  std::size_t images = 0;

  friend bool operator==(const HierarchyCounts&, const HierarchyCounts&) = default;
};

struct CorpusStats {
  HierarchyCounts total;
  std::map<std::string, HierarchyCounts> per_category;

  HierarchyCounts category(const std::string& name) const {
    auto it = per_category.find(name);
    return it == per_category.end() ? HierarchyCounts{} : it->second;
  }
};

inline CorpusStats corpus_stats(const Corpus& c) {
  CorpusStats st;
  for (const auto& a : c.articles()) {
    auto& row = st.per_category[a.category];
    row.goals += 1;
    row.methods += a.methods.size();
    row.steps += a.step_count();
    row.images += a.step_count();  // one image per step
  }
  for (const auto& [_, row] : st.per_category) {
    st.total.goals += row.goals;
    st.total.methods += row.methods;
    st.total.steps += row.steps;
    st.total.images += row.images;
  }
  return st;
}

inline nlohmann::json stats_to_json(const CorpusStats& st) {
  auto counts = [](const HierarchyCounts& c) {
    return nlohmann::json{{"goals", c.goals}, {"methods", c.methods}, {"steps", c.steps}, {"images", c.images}};
  };
  nlohmann::json cats = nlohmann::json::object();
  for (const auto& [name, row] : st.per_category) cats[name] = counts(row);
  return {{"total", counts(st.total)}, {"per_category", cats}};
}

// ---- splits ----

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  std::uint64_t seed = 0;

  const std::vector<std::string>& part(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw Error("unknown split part '" + name + "' (expected train, val or test)");
  }

  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

/// Shuffles articles by seed and cuts at rounded cumulative ratios, so the
/// three parts always cover the corpus exactly.
inline DatasetSplit split_by_goal(const Corpus& c, std::array<double, 3> ratios, std::uint64_t seed) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw Error("split ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error("split ratios must sum to 1");

  std::vector<std::string> ids;
  for (const auto& a : c.articles()) ids.push_back(a.article_id);
  Rng rng(derive_seed(seed, "split_by_goal"));
  rng.shuffle(ids);

  const auto n = static_cast<double>(ids.size());
  const auto cut1 = static_cast<std::size_t>(std::floor(n * ratios[0] + 0.5));
  const auto cut2 = std::min(ids.size(), static_cast<std::size_t>(std::floor(n * (ratios[0] + ratios[1]) + 0.5)));

  DatasetSplit s;
  s.seed = seed;
  s.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(cut1));
  s.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(cut1), ids.begin() + static_cast<std::ptrdiff_t>(cut2));
  s.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(cut2), ids.end());
  return s;
}

inline nlohmann::json split_to_json(const DatasetSplit& s) {
  return {{"seed", s.seed}, {"train", s.train}, {"val", s.val}, {"test", s.test}};
}

inline DatasetSplit split_from_json(const nlohmann::json& j) {
  DatasetSplit s;
  s.seed = j.value("seed", std::uint64_t{0});
  s.train = j.at("train").get<std::vector<std::string>>();
  s.val = j.at("val").get<std::vector<std::string>>();
  s.test = j.at("test").get<std::vector<std::string>>();
  return s;
}

}  // namespace vgsi
