#pragma once

#include <algorithm>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "agrimuse/metrics.hpp"
#include "agrimuse/model/hierarchical.hpp"

namespace agrimuse {

// ---------------------------------------------------------------------------
// Zero-shot aggregation

enum class Aggregation { kNone, kMean, kMedian };

inline std::string to_string(Aggregation a) {
  switch (a) {
    case Aggregation::kNone: return "-";
    case Aggregation::kMean: return "Mean";
    case Aggregation::kMedian: return "Median";
  }
  return "?";
}

/// How frames, videos and rooms are pooled. frames == kNone means the
/// source already holds one vector per video.
struct AggregationSpec {
  Aggregation frames = Aggregation::kMean;
  Aggregation videos = Aggregation::kMean;
  Aggregation rooms = Aggregation::kMean;

  bool video_level() const { return frames == Aggregation::kNone; }
  std::string label() const {
    return to_string(frames) + " / " + to_string(videos) + " / " + to_string(rooms);
  }
  bool operator==(const AggregationSpec&) const = default;
};

inline void validate(const AggregationSpec& s) {
  if (s.videos == Aggregation::kNone || s.rooms == Aggregation::kNone) {
    throw ConfigError("only frame aggregation may be skipped");
  }
}

/// Rows of the zero-shot comparison: three image-level (frame) cells and
/// two video-level cells, each distinct spec once.
inline std::vector<AggregationSpec> zero_shot_grid() {
  using A = Aggregation;
  return {{A::kMean, A::kMean, A::kMean},
          {A::kMedian, A::kMean, A::kMean},
          {A::kMean, A::kMedian, A::kMean},
          {A::kNone, A::kMean, A::kMean},
          {A::kNone, A::kMedian, A::kMean}};
}

/// Column-wise mean or median of the rows. The median of an even count is
/// the lower of the two middle values.
inline nn::RowVec<double> aggregate_rows(const nn::Mat<double>& rows, Aggregation how) {
  if (rows.rows() < 1) throw InputError("cannot aggregate an empty set");
  if (how == Aggregation::kMean) return rows.colwise().mean();
  if (how != Aggregation::kMedian) throw ConfigError("aggregation must be mean or median");
  nn::RowVec<double> out(rows.cols());
  std::vector<double> col(static_cast<std::size_t>(rows.rows()));
  const std::size_t mid = (col.size() - 1) / 2;
  for (nn::Index c = 0; c < rows.cols(); ++c) {
    for (nn::Index r = 0; r < rows.rows(); ++r) col[static_cast<std::size_t>(r)] = rows(r, c);
    std::nth_element(col.begin(), col.begin() + static_cast<std::ptrdiff_t>(mid), col.end());
    out[c] = col[mid];
  }
  return out;
}

namespace detail {

inline nn::RowVec<double> unit(const nn::RowVec<double>& v) {
  const double n = v.norm();
  if (!(n > 0)) throw NumericError("aggregated embedding has zero norm");
  return v / n;
}

}  // namespace detail

/// Training-free museum vector (unit norm).
inline nn::RowVec<double> zero_shot_encode(const model::MuseumFeatures& f, const AggregationSpec& spec) {
  validate(spec);
  const bool video_level = spec.video_level();
  const auto& source = video_level ? f.video_vectors : f.frames;
  if (source.empty()) {
    throw ConfigError(std::string("museum ") + f.museum_id + " lacks " +
                      (video_level ? "video-level" : "frame-level") + " features for " + spec.label());
  }
  nn::Mat<double> rooms(static_cast<nn::Index>(source.size()), 0);
  for (std::size_t r = 0; r < source.size(); ++r) {
    const auto& videos = source[r];
    if (videos.empty()) throw InputError("museum " + f.museum_id + " has an empty room");
    nn::Mat<double> vids(static_cast<nn::Index>(videos.size()), videos.front().dim);
    for (std::size_t v = 0; v < videos.size(); ++v) {
      const auto frames = model::to_matrix<double>(videos[v]);
      vids.row(static_cast<nn::Index>(v)) = video_level ? nn::RowVec<double>(frames.row(0)) : aggregate_rows(frames, spec.frames);
    }
    const auto room = aggregate_rows(vids, spec.videos);
    if (rooms.cols() == 0) rooms.resize(rooms.rows(), room.size());
    rooms.row(static_cast<nn::Index>(r)) = room;
  }
  return detail::unit(aggregate_rows(rooms, spec.rooms));
}

/// Mean of the sentence embeddings, renormalised.
inline nn::RowVec<double> zero_shot_text(const model::FeatureView& sentences) {
  if (sentences.rows < 1) throw InputError("description without sentence embeddings");
  return detail::unit(model::to_matrix<double>(sentences).colwise().mean());
}

inline std::vector<std::size_t> zero_shot_ranks(std::span<const model::MuseumFeatures> items,
                                                const AggregationSpec& spec) {
  const auto n = static_cast<nn::Index>(items.size());
  if (n < 1) throw InputError("zero-shot evaluation needs at least one museum");
  nn::Mat<double> text(n, items[0].sentences.dim);
  nn::Mat<double> museums;
  for (nn::Index i = 0; i < n; ++i) {
    const auto& f = items[static_cast<std::size_t>(i)];
    text.row(i) = zero_shot_text(f.sentences);
    const auto m = zero_shot_encode(f, spec);
    if (museums.size() == 0) museums.resize(n, m.size());
    museums.row(i) = m;
  }
  if (museums.cols() != text.cols()) throw ShapeError("zero-shot: visual and text embeddings differ in width");
  std::vector<std::size_t> truth(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = i;
  return rank_museums(text, museums, truth);
}

// ---------------------------------------------------------------------------
// Reports

struct ReportRow {
  std::string label;
  RetrievalMetrics metrics;
  nlohmann::json extra = nlohmann::json::object();
};

struct Report {
  std::string title;
  std::string split;
  std::vector<ReportRow> rows;
};

inline std::string format_table(const Report& r) {
  std::size_t w = 5;
  for (const auto& row : r.rows) w = std::max(w, row.label.size());
  std::string out;
  if (!r.title.empty()) out += r.title + (r.split.empty() ? "" : " (" + r.split + ")") + "\n";
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %7s %7s %7s %7s %8s %7s\n", static_cast<int>(w), "Model", "R@1", "R@5", "R@10",
                "MedR", "MeanR", "MRR");
  out += buf;
  out += std::string(w + 2 + 7 * 5 + 8 + 5, '-') + "\n";
  for (const auto& row : r.rows) {
    const auto& m = row.metrics;
    std::snprintf(buf, sizeof buf, "%-*s  %7.2f %7.2f %7.2f %7.0f %8.2f %7.2f\n", static_cast<int>(w),
                  row.label.c_str(), m.r1, m.r5, m.r10, m.median_rank, m.mean_rank, m.mrr);
    out += buf;
  }
  return out;
}

inline nlohmann::json to_json(const RetrievalMetrics& m) {
  return {{"R@1", m.r1},          {"R@5", m.r5},   {"R@10", m.r10},       {"MedR", m.median_rank},
          {"MeanR", m.mean_rank}, {"MRR", m.mrr}, {"queries", m.queries}};
}

inline nlohmann::json to_json(const Report& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    auto j = to_json(row.metrics);
    j["label"] = row.label;
    for (const auto& [k, v] : row.extra.items()) j[k] = v;
    rows.push_back(j);
  }
  return {{"title", r.title}, {"split", r.split}, {"rows", rows}};
}

/// Zero-shot comparison over the standard grid. Video-level rows need
/// video vectors on every museum.
inline Report zero_shot_report(std::span<const model::MuseumFeatures> items, const std::string& split) {
  Report r{"Zero-shot aggregation (frames / videos / rooms)", split, {}};
  for (const auto& spec : zero_shot_grid()) {
    const auto ranks = zero_shot_ranks(items, spec);
    ReportRow row{(spec.video_level() ? "video: " : "image: ") + spec.label(), compute_metrics(ranks), {}};
    row.extra["source"] = spec.video_level() ? "video" : "image";
    r.rows.push_back(std::move(row));
  }
  return r;
}

}  // namespace agrimuse
