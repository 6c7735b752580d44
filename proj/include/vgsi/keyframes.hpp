#pragma once

// Conversion of frame-feature videos into goal/step corpora: k-means
// keyframes for untrimmed videos, one random frame per annotated segment
// for segment-labelled videos.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "vgsi/corpus.hpp"
#include "vgsi/embed_store.hpp"
#include "vgsi/error.hpp"
#include "vgsi/linalg.hpp"
#include "vgsi/rng.hpp"

namespace vgsi {

enum class DistanceMetric { euclidean, cosine };

inline DistanceMetric parse_metric(const std::string& s) {
  if (s == "euclidean") return DistanceMetric::euclidean;
  if (s == "cosine") return DistanceMetric::cosine;
  throw Error("unknown distance metric '" + s + "'");
}

struct KMeansResult {
  Matrix<double> centroids;              // k x dim
  std::vector<std::size_t> assignment;   // per frame
  double objective = 0.0;                // sum of point-to-centroid distances
  std::vector<double> objective_history; // after every assignment step
  std::size_t iterations = 0;
};

namespace detail {

// Squared Euclidean distance, or 1 - cos for the cosine metric (both inputs
// already unit length in that case).
inline double frame_distance(std::span<const double> a, std::span<const double> b, DistanceMetric metric) {
  if (metric == DistanceMetric::cosine) return 1.0 - dot64(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline Matrix<double> prepare_points(const Matrix<float>& frames, DistanceMetric metric) {
  Matrix<double> pts = frames.cast<double>();
  if (metric == DistanceMetric::cosine) {
    for (std::size_t r = 0; r < pts.rows(); ++r) {
      const double n = norm64(std::span<const double>(pts.row(r)));
      if (!(n > 0.0)) throw Error("cosine k-means: frame " + std::to_string(r) + " is a zero vector");
      for (auto& v : pts.row(r)) v /= n;
    }
  }
  return pts;
}

// Nearest centroid per point (ties: lowest centroid index); returns objective.
inline double assign_points(const Matrix<double>& pts, const Matrix<double>& cents, DistanceMetric metric,
                            std::vector<std::size_t>& assignment) {
  assignment.assign(pts.rows(), 0);
  double obj = 0.0;
  for (std::size_t i = 0; i < pts.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cents.rows(); ++c) {
      const double d = frame_distance(pts.row(i), cents.row(c), metric);
      if (d < best) {
        best = d;
        assignment[i] = c;
      }
    }
    obj += best;
  }
  return obj;
}

// Members' mean (re-normalized for cosine); empty clusters keep their centroid.
inline void update_centroids(const Matrix<double>& pts, const std::vector<std::size_t>& assignment,
                             DistanceMetric metric, Matrix<double>& cents) {
  Matrix<double> sums(cents.rows(), cents.cols());
  std::vector<std::size_t> counts(cents.rows(), 0);
  for (std::size_t i = 0; i < pts.rows(); ++i) {
    auto s = sums.row(assignment[i]);
    auto p = pts.row(i);
    for (std::size_t j = 0; j < s.size(); ++j) s[j] += p[j];
    counts[assignment[i]] += 1;
  }
  for (std::size_t c = 0; c < cents.rows(); ++c) {
    if (counts[c] == 0) continue;
    auto s = sums.row(c);
    if (metric == DistanceMetric::cosine) {
      const double n = norm64(std::span<const double>(s));
      if (!(n > 0.0)) continue;
      for (std::size_t j = 0; j < s.size(); ++j) cents(c, j) = s[j] / n;
    } else {
      for (std::size_t j = 0; j < s.size(); ++j) cents(c, j) = s[j] / static_cast<double>(counts[c]);
    }
  }
}

inline Matrix<double> kmeanspp_seed(const Matrix<double>& pts, std::size_t k, DistanceMetric metric, Rng& rng) {
  const std::size_t n = pts.rows();
  Matrix<double> cents(k, pts.cols());
  std::vector<bool> chosen(n, false);
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  auto take = [&](std::size_t c, std::size_t i) {
    chosen[i] = true;
    std::copy(pts.row(i).begin(), pts.row(i).end(), cents.row(c).begin());
    for (std::size_t j = 0; j < n; ++j) dist[j] = std::min(dist[j], frame_distance(pts.row(j), cents.row(c), metric));
  };
  take(0, static_cast<std::size_t>(rng.below(n)));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += chosen[j] ? 0.0 : std::max(dist[j], 0.0);
    std::size_t pick = n;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (std::size_t j = 0; j < n; ++j) {
        if (chosen[j]) continue;
        const double w = std::max(dist[j], 0.0);
        if (w <= 0.0) continue;
        pick = j;
        if (u < w) break;
        u -= w;
      }
    }
    if (pick == n) {
      // Every remaining point coincides with a centroid: choose uniformly.
      std::vector<std::size_t> rest;
      for (std::size_t j = 0; j < n; ++j)
        if (!chosen[j]) rest.push_back(j);
      pick = rest[static_cast<std::size_t>(rng.below(rest.size()))];
    }
    take(c, pick);
  }
  return cents;
}

}  // namespace detail

/// Lloyd's algorithm from k-means++ seeding. Stops at an assignment fixpoint
/// or after max_iters update steps. The objective is recorded after every
/// assignment and never increases.
inline KMeansResult kmeans_cluster(const Matrix<float>& frames, std::size_t k, std::uint64_t seed,
                                   std::size_t max_iters = 100, DistanceMetric metric = DistanceMetric::euclidean) {
  if (k < 1) throw Error("k-means needs k >= 1");
  if (k > frames.rows()) {
    throw Error("k-means: k = " + std::to_string(k) + " exceeds frame count " + std::to_string(frames.rows()));
  }
  const auto pts = detail::prepare_points(frames, metric);
  Rng rng(derive_seed(seed, "kmeans++"));
  KMeansResult r;
  r.centroids = detail::kmeanspp_seed(pts, k, metric, rng);
  r.objective = detail::assign_points(pts, r.centroids, metric, r.assignment);
  r.objective_history.push_back(r.objective);
  std::vector<std::size_t> next;
  for (std::size_t it = 0; it < max_iters; ++it) {
    detail::update_centroids(pts, r.assignment, metric, r.centroids);
    r.objective = detail::assign_points(pts, r.centroids, metric, next);
    r.objective_history.push_back(r.objective);
    r.iterations = it + 1;
    const bool changed = next != r.assignment;
    r.assignment.swap(next);
    if (!changed) break;
  }
  return r;
}

/// Frame count default: one keyframe per ten frames, at least one.
inline std::size_t default_keyframe_count(std::size_t frames) {
  return std::min(frames, std::max<std::size_t>(1, (frames + 9) / 10));
}

/// Index of the frame nearest each centroid (ties: lowest index), with
/// duplicates collapsed; ascending.
inline std::vector<std::size_t> nearest_frames(const Matrix<float>& frames, const KMeansResult& km,
                                               DistanceMetric metric = DistanceMetric::euclidean) {
  const auto pts = detail::prepare_points(frames, metric);
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < km.centroids.rows(); ++c) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pts.rows(); ++i) {
      const double d = detail::frame_distance(pts.row(i), km.centroids.row(c), metric);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    out.push_back(best);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline std::vector<std::size_t> select_keyframes(const Matrix<float>& frames, std::size_t k, std::uint64_t seed,
                                                 std::size_t max_iters = 100,
                                                 DistanceMetric metric = DistanceMetric::euclidean) {
  return nearest_frames(frames, kmeans_cluster(frames, k, seed, max_iters, metric), metric);
}

// ---- segment sampling ----

struct Segment {
  std::size_t start = 0;  // inclusive frame index
  std::size_t end = 0;    // inclusive frame index
  std::string text;
};

struct FrameSequence {
  std::string video_id;
  std::string goal;
  std::string category;
  Matrix<float> frames;  // one row per frame, row index = frame index
  std::vector<Segment> segments;
};

inline void validate_segments(const FrameSequence& seq) {
  std::size_t prev_end = 0;
  for (std::size_t i = 0; i < seq.segments.size(); ++i) {
    const auto& s = seq.segments[i];
    if (s.end < s.start) throw Error("empty segment " + std::to_string(i) + " in video '" + seq.video_id + "'");
    if (s.end >= seq.frames.rows()) throw Error("segment " + std::to_string(i) + " out of bounds in video '" + seq.video_id + "'");
    if (i > 0 && s.start <= prev_end) throw Error("overlapping segments in video '" + seq.video_id + "'");
    prev_end = s.end;
  }
}

/// One uniformly drawn frame per segment, seeded per video.
inline std::vector<std::size_t> sample_segment_frames(const FrameSequence& seq, std::uint64_t seed) {
  if (seq.segments.empty()) throw Error("video '" + seq.video_id + "' has no segments");
  validate_segments(seq);
  Rng rng(derive_seed(seed, seq.video_id));
  std::vector<std::size_t> out;
  for (const auto& s : seq.segments) out.push_back(s.start + static_cast<std::size_t>(rng.below(s.end - s.start + 1)));
  return out;
}

// ---- dataset conversion ----

enum class KeyframeMode { kmeans, segments };

struct ConversionConfig {
  KeyframeMode mode = KeyframeMode::kmeans;
  std::size_t k = 0;               // 0: default_keyframe_count
  std::size_t max_per_goal = 0;    // 0: no cap
  std::size_t max_iters = 100;
  DistanceMetric metric = DistanceMetric::euclidean;
  std::uint64_t seed = 0;
};

struct ConvertedDataset {
  Corpus corpus;
  EmbeddingMatrix images;
};

/// Frame ids look like "videoid#frameindex".
inline std::pair<std::string, std::size_t> parse_frame_id(const std::string& id) {
  const auto hash = id.rfind('#');
  if (hash == std::string::npos || hash == 0 || hash + 1 == id.size()) {
    throw FormatError("frame id '" + id + "' is not of the form videoid#frameindex");
  }
  std::size_t idx = 0;
  const char* b = id.data() + hash + 1;
  const char* e = id.data() + id.size();
  auto [ptr, ec] = std::from_chars(b, e, idx);
  if (ec != std::errc{} || ptr != e) throw FormatError("bad frame index in '" + id + "'");
  return {id.substr(0, hash), idx};
}

inline std::string frame_id(const std::string& video, std::size_t index) { return video + "#" + std::to_string(index); }

/// Video records, one JSON object per line:
/// {"video_id", "goal", "category"?, "segments"?: [{"start", "end", "text"}]}.
inline std::vector<FrameSequence> load_videos(std::istream& is, const EmbeddingMatrix& frames) {
  std::map<std::string, std::map<std::size_t, std::size_t>> rows_by_video;
  for (std::size_t r = 0; r < frames.count(); ++r) {
    auto [vid, idx] = parse_frame_id(frames.id(r));
    rows_by_video[vid][idx] = r;
  }
  std::vector<FrameSequence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    FrameSequence seq;
    try {
      const auto j = nlohmann::json::parse(line);
      seq.video_id = j.at("video_id").get<std::string>();
      seq.goal = j.at("goal").get<std::string>();
      seq.category = j.value("category", std::string{});
      if (j.contains("segments"))
        for (const auto& s : j.at("segments"))
          seq.segments.push_back({s.at("start").get<std::size_t>(), s.at("end").get<std::size_t>(),
                                  s.value("text", std::string{})});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("malformed video record at line " + std::to_string(lineno) + ": " + e.what());
    }
    auto it = rows_by_video.find(seq.video_id);
    if (it == rows_by_video.end()) throw FormatError("no frames for video '" + seq.video_id + "'");
    seq.frames = Matrix<float>(it->second.size(), frames.dim());
    std::size_t expect = 0;
    for (const auto& [idx, row] : it->second) {
      if (idx != expect) throw FormatError("video '" + seq.video_id + "' is missing frame " + std::to_string(expect));
      std::copy(frames.row(row).begin(), frames.row(row).end(), seq.frames.row(idx).begin());
      ++expect;
    }
    out.push_back(std::move(seq));
  }
  return out;
}

inline std::vector<FrameSequence> load_videos(const std::string& path, const EmbeddingMatrix& frames) {
  std::ifstream is(path);
  if (!is) throw Error("file not found: " + path);
  return load_videos(is, frames);
}

/// One pseudo-article per video with a single method whose steps are the
/// selected frames. Step text is the segment text, or the goal when the
/// frame carries no text of its own.
inline ConvertedDataset convert_videos(const std::vector<FrameSequence>& videos, const ConversionConfig& cfg) {
  if (videos.empty()) throw Error("no videos to convert");
  const std::size_t dim = videos.front().frames.cols();
  ConvertedDataset out{Corpus{}, EmbeddingMatrix(dim)};
  std::vector<Article> articles;
  for (const auto& v : videos) {
    if (v.goal.empty()) throw Error("video '" + v.video_id + "' has an empty goal");
    std::vector<std::size_t> picks;
    std::vector<std::string> texts;
    if (cfg.mode == KeyframeMode::segments) {
      picks = sample_segment_frames(v, cfg.seed);
      for (const auto& s : v.segments) texts.push_back(s.text.empty() ? v.goal : s.text);
    } else {
      std::size_t k = cfg.k == 0 ? default_keyframe_count(v.frames.rows()) : std::min(cfg.k, v.frames.rows());
      if (cfg.max_per_goal > 0) k = std::min(k, cfg.max_per_goal);
      picks = select_keyframes(v.frames, k, derive_seed(cfg.seed, v.video_id), cfg.max_iters, cfg.metric);
      texts.assign(picks.size(), v.goal);
    }
    if (cfg.max_per_goal > 0 && picks.size() > cfg.max_per_goal) {
      picks.resize(cfg.max_per_goal);
      texts.resize(cfg.max_per_goal);
    }
    Article a{v.video_id, v.goal, v.category, {}};
    Method m{v.video_id + "/m0", v.goal, {}};
    for (std::size_t i = 0; i < picks.size(); ++i) {
      const auto id = frame_id(v.video_id, picks[i]);
      m.steps.push_back({id, texts[i], id});
      out.images.append(id, v.frames.row(picks[i]));
    }
    a.methods.push_back(std::move(m));
    articles.push_back(std::move(a));
  }
  out.corpus = Corpus(std::move(articles));
  return out;
}

}  // namespace vgsi
