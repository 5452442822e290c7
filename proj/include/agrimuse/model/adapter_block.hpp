#pragma once

#include <string>

#include "agrimuse/neural/layers.hpp"
#include "agrimuse/neural/tensor.hpp"

namespace agrimuse::model {

using nn::Index;
using nn::Mat;
using nn::Mode;
using nn::RowVec;
using nn::Segments;

/// Conv1D -> BatchNorm -> ReLU -> temporal mean-pool -> Linear, applied to
/// every sequence of a ragged batch. Used for the in-domain adapter and the
/// room and museum encoders.
template <typename S>
struct AdapterBlock {
  nn::Conv1d<S> conv;
  nn::BatchNorm<S> bn;
  nn::Linear<S> proj;

  AdapterBlock() = default;
  AdapterBlock(const std::string& prefix, Index in, Index hidden, Index out, Index kernel = 3,
               double bn_eps = 1e-5, double bn_momentum = 0.1)
      : conv(prefix + ".conv", in, hidden, kernel),
        bn(prefix + ".bn", hidden, bn_eps, bn_momentum),
        proj(prefix + ".linear", hidden, out) {}

  Index input_dim() const { return conv.in_ch; }
  Index output_dim() const { return proj.out_dim; }

  template <typename Rng>
  void init(Rng& rng) {
    conv.init(rng);
    proj.init(rng);
  }

  template <typename F>
  void for_each_param(F&& f) {
    conv.for_each_param(f);
    bn.for_each_param(f);
    proj.for_each_param(f);
  }

  template <typename F>
  void for_each_buffer(F&& f) {
    bn.for_each_buffer(f);
  }
};

template <typename S>
struct AdapterTrace {
  Mat<S> x;
  Segments seg;
  nn::BatchNormTrace<S> bn;
  Mat<S> act;     // ReLU output, positions x hidden
  Mat<S> pooled;  // sequences x hidden
};

/// One output row per sequence. In train mode batch statistics are taken
/// over every position of the ragged batch; running statistics are left
/// untouched (see adapter_update_running).
template <typename S>
Mat<S> adapter_forward(const AdapterBlock<S>& block, Mat<S> x, const Segments& seg, Mode mode,
                       AdapterTrace<S>* trace = nullptr) {
  Mat<S> z = nn::conv1d_forward(block.conv, x, seg);
  nn::BatchNormTrace<S> bn_trace;
  Mat<S> act = nn::relu_forward(nn::batchnorm_forward(block.bn, z, mode, trace ? &bn_trace : nullptr));
  Mat<S> pooled = nn::segment_mean(act, seg);
  Mat<S> out = nn::linear_forward(block.proj, pooled);
  if (trace) {
    trace->x = std::move(x);
    trace->seg = seg;
    trace->bn = std::move(bn_trace);
    trace->act = std::move(act);
    trace->pooled = std::move(pooled);
  }
  return out;
}

template <typename S>
void adapter_update_running(AdapterBlock<S>& block, const AdapterTrace<S>& trace) {
  nn::batchnorm_update_running(block.bn, trace.bn);
}

template <typename S>
void adapter_backward(AdapterBlock<S>& block, const AdapterTrace<S>& trace, const Mat<S>& grad_out,
                      Mat<S>* grad_input) {
  Mat<S> g_pooled;
  nn::linear_backward(block.proj, trace.pooled, grad_out, &g_pooled);
  Mat<S> g_act = nn::segment_mean_backward(g_pooled, trace.seg);
  Mat<S> g_bn = nn::relu_backward(trace.act, g_act);
  Mat<S> g_conv = nn::batchnorm_backward(block.bn, trace.bn, g_bn);
  nn::conv1d_backward(block.conv, trace.x, trace.seg, g_conv, grad_input);
}

}  // namespace agrimuse::model
