#pragma once

#include <cmath>
#include <string>

#include "agrimuse/neural/tensor.hpp"

namespace agrimuse::nn {

// ---------------------------------------------------------------------------
// Conv1d: stride 1, zero "same" padding, applied independently to every
// sequence of a ragged batch (padding never crosses a segment boundary).

template <typename S>
struct Conv1d {
  Index in_ch = 0;
  Index out_ch = 0;
  Index kernel = 3;
  /// Tap-major kernel: rows [j*out_ch, (j+1)*out_ch) hold tap j as an
  /// out_ch x in_ch matrix.
  Param<S> weight;
  Param<S> bias;  // 1 x out_ch

  Conv1d() = default;
  Conv1d(const std::string& prefix, Index in, Index out, Index k = 3)
      : in_ch(in),
        out_ch(out),
        kernel(k),
        weight(prefix + ".weight", k * out, in),
        bias(prefix + ".bias", 1, out) {
    if (k < 1 || k % 2 == 0) throw ConfigError("conv1d kernel size must be odd");
  }

  /// kernel[o, i, j] in the conventional out x in x k indexing.
  S& at(Index o, Index i, Index j) { return weight.value(j * out_ch + o, i); }
  S at(Index o, Index i, Index j) const { return weight.value(j * out_ch + o, i); }

  template <typename Rng>
  void init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch * kernel));
    uniform_init(weight.value, bound, rng);
    bias.value.setZero();
  }

  template <typename F>
  void for_each_param(F&& f) {
    f(weight);
    f(bias);
  }
};

namespace detail {

/// Calls f(t0, n, shift) for every tap: output rows [t0, t0+n) read input
/// rows shifted by `shift`, clipped to the segment.
template <typename F>
void for_each_tap_range(const Segments& seg, Index kernel, F&& f) {
  const Index pad = (kernel - 1) / 2;
  for (Index s = 0; s < seg.count(); ++s) {
    const Index b = seg.begin(s);
    const Index e = seg.end(s);
    for (Index j = 0; j < kernel; ++j) {
      const Index shift = j - pad;
      const Index t0 = std::max(b, b - shift);
      const Index t1 = std::min(e, e - shift);
      if (t1 > t0) f(j, t0, t1 - t0, shift);
    }
  }
}

}  // namespace detail

/// out[o, t] = bias[o] + sum_{i,j} kernel[o, i, j] * padded[i, t + j].
/// Activations are positions x channels.
template <typename S>
Mat<S> conv1d_forward(const Conv1d<S>& c, const Mat<S>& x, const Segments& seg) {
  if (x.cols() != c.in_ch) {
    throw ShapeError("conv1d: input has " + std::to_string(x.cols()) + " channels, expected " +
                     std::to_string(c.in_ch));
  }
  if (x.rows() != seg.total()) throw ShapeError("conv1d: segments do not cover the input");
  const Index out = c.out_ch;
  Mat<S> taps;
  taps.noalias() = x * c.weight.value.transpose();
  Mat<S> y(x.rows(), out);
  y.rowwise() = c.bias.value.row(0);
  detail::for_each_tap_range(seg, c.kernel, [&](Index j, Index t0, Index n, Index shift) {
    y.middleRows(t0, n) += taps.block(t0 + shift, j * out, n, out);
  });
  return y;
}

/// Accumulates weight/bias gradients; writes the input gradient when asked.
template <typename S>
void conv1d_backward(Conv1d<S>& c, const Mat<S>& x, const Segments& seg, const Mat<S>& grad_out,
                     Mat<S>* grad_input) {
  const Index out = c.out_ch;
  Mat<S> grad_taps = Mat<S>::Zero(x.rows(), c.kernel * out);
  detail::for_each_tap_range(seg, c.kernel, [&](Index j, Index t0, Index n, Index shift) {
    grad_taps.block(t0 + shift, j * out, n, out) += grad_out.middleRows(t0, n);
  });
  c.weight.grad.noalias() += grad_taps.transpose() * x;
  c.bias.grad += grad_out.colwise().sum();
  if (grad_input) grad_input->noalias() = grad_taps * c.weight.value;
}

// ---------------------------------------------------------------------------
// BatchNorm over all positions of a (ragged) batch, per channel.

template <typename S>
struct BatchNorm {
  Index channels = 0;
  double eps = 1e-5;
  double momentum = 0.1;
  Param<S> gamma;
  Param<S> beta;
  Param<S> running_mean;  // buffers, not optimised
  Param<S> running_var;

  BatchNorm() = default;
  BatchNorm(const std::string& prefix, Index ch, double epsilon = 1e-5, double m = 0.1)
      : channels(ch),
        eps(epsilon),
        momentum(m),
        gamma(prefix + ".gamma", 1, ch),
        beta(prefix + ".beta", 1, ch),
        running_mean(prefix + ".running_mean", 1, ch),
        running_var(prefix + ".running_var", 1, ch) {
    gamma.value.setOnes();
    running_var.value.setOnes();
  }

  template <typename F>
  void for_each_param(F&& f) {
    f(gamma);
    f(beta);
  }

  template <typename F>
  void for_each_buffer(F&& f) {
    f(running_mean);
    f(running_var);
  }
};

template <typename S>
struct BatchNormTrace {
  Mode mode = Mode::kEval;
  Mat<S> xhat;
  RowVec<S> inv_std;
  RowVec<S> batch_mean;
  RowVec<S> batch_var_unbiased;
};

template <typename S>
Mat<S> batchnorm_forward(const BatchNorm<S>& bn, const Mat<S>& x, Mode mode,
                         BatchNormTrace<S>* trace = nullptr) {
  if (x.cols() != bn.channels) throw ShapeError("batchnorm: channel mismatch");
  const Index n = x.rows();
  RowVec<S> mean;
  RowVec<S> var;
  if (mode == Mode::kTrain) {
    if (n < 2) {
      throw InputError("batchnorm: train mode needs at least 2 positions, got " +
                       std::to_string(n));
    }
    mean = x.colwise().mean();
    var = (x.rowwise() - mean).array().square().colwise().sum() / static_cast<S>(n);
  } else {
    mean = bn.running_mean.value.row(0);
    var = bn.running_var.value.row(0);
  }
  RowVec<S> inv_std = (var.array() + static_cast<S>(bn.eps)).rsqrt().matrix();
  Mat<S> xhat = (x.rowwise() - mean).array().rowwise() * inv_std.array();
  Mat<S> y = (xhat.array().rowwise() * bn.gamma.value.row(0).array()).rowwise() +
             bn.beta.value.row(0).array();
  if (trace) {
    trace->mode = mode;
    trace->inv_std = inv_std;
    if (mode == Mode::kTrain) {
      trace->batch_mean = mean;
      trace->batch_var_unbiased = var * (static_cast<S>(n) / static_cast<S>(n - 1));
    }
    trace->xhat = std::move(xhat);
  }
  return y;
}

/// running = (1 - m) * running + m * batch, with the unbiased batch variance.
template <typename S>
void batchnorm_update_running(BatchNorm<S>& bn, const BatchNormTrace<S>& trace) {
  if (trace.mode != Mode::kTrain) return;
  const S m = static_cast<S>(bn.momentum);
  bn.running_mean.value.row(0) = (S(1) - m) * bn.running_mean.value.row(0) + m * trace.batch_mean;
  bn.running_var.value.row(0) =
      (S(1) - m) * bn.running_var.value.row(0) + m * trace.batch_var_unbiased;
}

template <typename S>
Mat<S> batchnorm_backward(BatchNorm<S>& bn, const BatchNormTrace<S>& trace, const Mat<S>& grad_out) {
  bn.gamma.grad.row(0) += (grad_out.array() * trace.xhat.array()).colwise().sum().matrix();
  bn.beta.grad.row(0) += grad_out.colwise().sum();
  Mat<S> gxhat = grad_out.array().rowwise() * bn.gamma.value.row(0).array();
  if (trace.mode == Mode::kEval) {
    return gxhat.array().rowwise() * trace.inv_std.array();
  }
  const S n = static_cast<S>(grad_out.rows());
  const RowVec<S> sum_g = gxhat.colwise().sum();
  const RowVec<S> sum_gx = (gxhat.array() * trace.xhat.array()).colwise().sum().matrix();
  Mat<S> gx = (n * gxhat.array()).rowwise() - sum_g.array();
  gx.array() -= trace.xhat.array().rowwise() * sum_gx.array();
  gx.array().rowwise() *= (trace.inv_std.array() / n);
  return gx;
}

// ---------------------------------------------------------------------------
// ReLU and Linear

template <typename S>
Mat<S> relu_forward(const Mat<S>& x) {
  return x.cwiseMax(S(0));
}

/// `y` is the forward output; positions where it is zero pass no gradient.
template <typename S>
Mat<S> relu_backward(const Mat<S>& y, const Mat<S>& grad_out) {
  return (y.array() > S(0)).select(grad_out, S(0));
}

template <typename S>
struct Linear {
  Index in_dim = 0;
  Index out_dim = 0;
  Param<S> weight;  // out x in
  Param<S> bias;    // 1 x out

  Linear() = default;
  Linear(const std::string& prefix, Index in, Index out)
      : in_dim(in), out_dim(out), weight(prefix + ".weight", out, in), bias(prefix + ".bias", 1, out) {}

  template <typename Rng>
  void init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    uniform_init(weight.value, bound, rng);
    bias.value.setZero();
  }

  template <typename F>
  void for_each_param(F&& f) {
    f(weight);
    f(bias);
  }
};

template <typename S>
Mat<S> linear_forward(const Linear<S>& l, const Mat<S>& x) {
  if (x.cols() != l.in_dim) {
    throw ShapeError("linear: input width " + std::to_string(x.cols()) + ", expected " +
                     std::to_string(l.in_dim));
  }
  Mat<S> y(x.rows(), l.out_dim);
  y.noalias() = x * l.weight.value.transpose();
  y.rowwise() += l.bias.value.row(0);
  return y;
}

template <typename S>
void linear_backward(Linear<S>& l, const Mat<S>& x, const Mat<S>& grad_out, Mat<S>* grad_input) {
  l.weight.grad.noalias() += grad_out.transpose() * x;
  l.bias.grad += grad_out.colwise().sum();
  if (grad_input) grad_input->noalias() = grad_out * l.weight.value;
}

}  // namespace agrimuse::nn
