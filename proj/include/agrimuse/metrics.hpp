#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "agrimuse/error.hpp"
#include "agrimuse/neural/tensor.hpp"

namespace agrimuse {

struct RetrievalMetrics {
  double r1 = 0;
  double r5 = 0;
  double r10 = 0;
  double median_rank = 0;
  double mean_rank = 0;
  double mrr = 0;
  std::size_t queries = 0;
};

/// 1-based rank of the ground-truth gallery item for every query. Items with
/// a strictly higher score rank ahead; equal scores are ordered by gallery
/// index.
template <typename S>
std::vector<std::size_t> rank_museums(const nn::Mat<S>& queries, const nn::Mat<S>& gallery,
                                      std::span<const std::size_t> truth) {
  if (queries.cols() != gallery.cols()) throw ShapeError("rank_museums: embedding widths differ");
  if (static_cast<std::size_t>(queries.rows()) != truth.size()) {
    throw InputError("rank_museums: one truth index per query required");
  }
  const std::size_t g = static_cast<std::size_t>(gallery.rows());
  nn::Mat<S> sims(queries.rows(), gallery.rows());
  sims.noalias() = queries * gallery.transpose();
  std::vector<std::size_t> ranks(truth.size());
  for (std::size_t q = 0; q < truth.size(); ++q) {
    const std::size_t t = truth[q];
    if (t >= g) {
      throw InputError("rank_museums: truth index " + std::to_string(t) + " outside gallery of " + std::to_string(g));
    }
    const auto row = sims.row(static_cast<nn::Index>(q));
    const S target = row(static_cast<nn::Index>(t));
    std::size_t rank = 1;
    for (std::size_t j = 0; j < g; ++j) {
      const S s = row(static_cast<nn::Index>(j));
      if (s > target || (s == target && j < t)) ++rank;
    }
    ranks[q] = rank;
  }
  return ranks;
}

inline RetrievalMetrics compute_metrics(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw InputError("compute_metrics: no queries");
  RetrievalMetrics m;
  m.queries = ranks.size();
  const double q = static_cast<double>(ranks.size());
  std::size_t hit1 = 0, hit5 = 0, hit10 = 0;
  double sum = 0;
  double rr = 0;
  for (std::size_t r : ranks) {
    if (r < 1) throw InputError("compute_metrics: ranks are 1-based");
    hit1 += r <= 1;
    hit5 += r <= 5;
    hit10 += r <= 10;
    sum += static_cast<double>(r);
    rr += 1.0 / static_cast<double>(r);
  }
  m.r1 = 100.0 * static_cast<double>(hit1) / q;
  m.r5 = 100.0 * static_cast<double>(hit5) / q;
  m.r10 = 100.0 * static_cast<double>(hit10) / q;
  m.mean_rank = sum / q;
  m.mrr = 100.0 * rr / q;
  std::vector<std::size_t> sorted(ranks.begin(), ranks.end());
  const std::size_t mid = (sorted.size() - 1) / 2;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(mid), sorted.end());
  m.median_rank = static_cast<double>(sorted[mid]);
  return m;
}

}  // namespace agrimuse
