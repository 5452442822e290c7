#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agrimuse/error.hpp"

namespace agrimuse::nn {

using Index = Eigen::Index;

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

enum class Mode { kTrain, kEval };

/// A learnable tensor and its accumulated gradient. Vectors are stored as
/// 1 x n rows so they broadcast over row-major activations.
template <typename S>
struct Param {
  std::string name;
  Mat<S> value;
  Mat<S> grad;

  Param() = default;
  Param(std::string n, Index rows, Index cols)
      : name(std::move(n)), value(Mat<S>::Zero(rows, cols)), grad(Mat<S>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
  Index size() const { return value.size(); }
};

/// Ragged batch layout: sequence i occupies rows [offsets[i], offsets[i+1])
/// of a stacked activation matrix.
struct Segments {
  std::vector<Index> offsets{0};

  static Segments from_lengths(const std::vector<Index>& lengths) {
    Segments s;
    s.offsets.reserve(lengths.size() + 1);
    for (Index n : lengths) s.offsets.push_back(s.offsets.back() + n);
    return s;
  }

  static Segments single(Index length) { return from_lengths({length}); }

  void push(Index length) { offsets.push_back(offsets.back() + length); }
  Index count() const { return static_cast<Index>(offsets.size()) - 1; }
  Index total() const { return offsets.back(); }
  Index begin(Index i) const { return offsets[static_cast<std::size_t>(i)]; }
  Index end(Index i) const { return offsets[static_cast<std::size_t>(i) + 1]; }
  Index length(Index i) const { return end(i) - begin(i); }
};

/// PyTorch-style fan-in uniform initialisation.
template <typename S, typename Rng>
void uniform_init(Mat<S>& m, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(u(rng));
}

template <typename S>
bool all_finite(const Mat<S>& m) {
  return m.allFinite();
}

/// Row-wise segment mean: one output row per segment.
template <typename S>
Mat<S> segment_mean(const Mat<S>& x, const Segments& seg) {
  Mat<S> out(seg.count(), x.cols());
  for (Index i = 0; i < seg.count(); ++i) {
    const Index n = seg.length(i);
    if (n < 1) throw InputError("segment_mean: empty segment");
    out.row(i) = x.middleRows(seg.begin(i), n).colwise().sum() / static_cast<S>(n);
  }
  return out;
}

template <typename S>
Mat<S> segment_mean_backward(const Mat<S>& grad_out, const Segments& seg) {
  Mat<S> g(seg.total(), grad_out.cols());
  for (Index i = 0; i < seg.count(); ++i) {
    const Index n = seg.length(i);
    g.middleRows(seg.begin(i), n).rowwise() = grad_out.row(i) / static_cast<S>(n);
  }
  return g;
}

/// Row-wise L2 normalisation. `norms` receives the pre-normalisation norms.
template <typename S>
Mat<S> l2_normalize_rows(const Mat<S>& x, RowVec<S>* norms = nullptr) {
  Mat<S> y(x.rows(), x.cols());
  if (norms) norms->resize(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    const S n = x.row(i).norm();
    if (!(n > S(0))) throw NumericError("cannot normalise a zero vector");
    y.row(i) = x.row(i) / n;
    if (norms) (*norms)[i] = n;
  }
  return y;
}

/// Backward of y = x / |x| given y and the stored norms.
template <typename S>
Mat<S> l2_normalize_rows_backward(const Mat<S>& y, const RowVec<S>& norms, const Mat<S>& grad_y) {
  Mat<S> g(y.rows(), y.cols());
  for (Index i = 0; i < y.rows(); ++i) {
    const S dot = y.row(i).dot(grad_y.row(i));
    g.row(i) = (grad_y.row(i) - dot * y.row(i)) / norms[i];
  }
  return g;
}

template <typename S>
S cosine_similarity(const RowVec<S>& a, const RowVec<S>& b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: length mismatch");
  const S na = a.norm();
  const S nb = b.norm();
  if (!(na > S(0)) || !(nb > S(0))) throw InputError("cosine_similarity: zero vector");
  const S c = a.dot(b) / (na * nb);
  return std::clamp(c, S(-1), S(1));
}

}  // namespace agrimuse::nn
