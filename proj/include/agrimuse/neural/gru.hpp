#pragma once

#include <cmath>
#include <string>

#include "agrimuse/neural/layers.hpp"
#include "agrimuse/neural/tensor.hpp"

namespace agrimuse::nn {

enum class Direction { kForward, kBackward };

/// One GRU direction. Gate blocks are stacked as [reset; update; candidate]:
///   r  = sigmoid(W_r x + U_r h + b_r)
///   z  = sigmoid(W_z x + U_z h + b_z)
///   h~ = tanh(W_h x + U_h (r * h) + b_h)
///   h' = (1 - z) * h + z * h~
template <typename S>
struct GruCell {
  Index input = 0;
  Index hidden = 0;
  Param<S> w;  // 3H x in
  Param<S> u;  // 3H x H
  Param<S> b;  // 1 x 3H

  GruCell() = default;
  GruCell(const std::string& prefix, Index in, Index h)
      : input(in), hidden(h), w(prefix + ".W", 3 * h, in), u(prefix + ".U", 3 * h, h), b(prefix + ".b", 1, 3 * h) {}

  template <typename Rng>
  void init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    uniform_init(w.value, bound, rng);
    uniform_init(u.value, bound, rng);
    b.value.setZero();
  }

  template <typename F>
  void for_each_param(F&& f) {
    f(w);
    f(u);
    f(b);
  }
};

/// Per-step activations, stored at the row of the input position each step
/// consumed.
template <typename S>
struct GruTrace {
  Direction direction = Direction::kForward;
  Mat<S> x;
  Mat<S> h_prev;
  Mat<S> r;
  Mat<S> z;
  Mat<S> cand;
};

namespace detail {

template <typename S>
S sigmoid(S a) {
  return S(1) / (S(1) + std::exp(-a));
}

}  // namespace detail

/// Runs the cell over `inputs` (T x in) from h_0 = 0 and returns the final
/// hidden state (1 x H). Direction::kBackward consumes rows T-1 .. 0.
template <typename S>
RowVec<S> gru_sequence(const GruCell<S>& cell, const Mat<S>& inputs, Direction dir,
                       GruTrace<S>* trace = nullptr) {
  const Index steps = inputs.rows();
  const Index H = cell.hidden;
  if (steps < 1) throw InputError("gru_sequence: empty input sequence");
  if (inputs.cols() != cell.input) throw ShapeError("gru_sequence: input width mismatch");

  Mat<S> xp(steps, 3 * H);
  xp.noalias() = inputs * cell.w.value.transpose();
  xp.rowwise() += cell.b.value.row(0);

  if (trace) {
    trace->direction = dir;
    trace->x = inputs;
    trace->h_prev.resize(steps, H);
    trace->r.resize(steps, H);
    trace->z.resize(steps, H);
    trace->cand.resize(steps, H);
  }

  const auto u_rz = cell.u.value.topRows(2 * H);
  const auto u_h = cell.u.value.bottomRows(H);
  RowVec<S> h = RowVec<S>::Zero(H);
  RowVec<S> rz(2 * H);
  RowVec<S> ah(H);
  for (Index t = 0; t < steps; ++t) {
    const Index idx = dir == Direction::kForward ? t : steps - 1 - t;
    rz.noalias() = h * u_rz.transpose();
    rz += xp.row(idx).head(2 * H);
    const RowVec<S> r = rz.head(H).unaryExpr([](S a) { return detail::sigmoid(a); });
    const RowVec<S> z = rz.tail(H).unaryExpr([](S a) { return detail::sigmoid(a); });
    const RowVec<S> rh = r.cwiseProduct(h);
    ah.noalias() = rh * u_h.transpose();
    ah += xp.row(idx).tail(H);
    const RowVec<S> cand = ah.array().tanh().matrix();
    if (trace) {
      trace->h_prev.row(idx) = h;
      trace->r.row(idx) = r;
      trace->z.row(idx) = z;
      trace->cand.row(idx) = cand;
    }
    h = (RowVec<S>::Ones(H) - z).cwiseProduct(h) + z.cwiseProduct(cand);
  }
  return h;
}

/// Backpropagation through time from dL/dh_T. Accumulates parameter
/// gradients and optionally writes dL/dinputs.
template <typename S>
void gru_sequence_backward(GruCell<S>& cell, const GruTrace<S>& trace, const RowVec<S>& grad_h,
                           Mat<S>* grad_input) {
  const Index steps = trace.x.rows();
  const Index H = cell.hidden;
  const auto u_rz = cell.u.value.topRows(2 * H);
  const auto u_h = cell.u.value.bottomRows(H);

  Mat<S> grad_xp(steps, 3 * H);
  Mat<S> rh_prev(steps, H);
  RowVec<S> dh = grad_h;
  for (Index t = steps - 1; t >= 0; --t) {
    const Index idx = trace.direction == Direction::kForward ? t : steps - 1 - t;
    const auto h_prev = trace.h_prev.row(idx);
    const auto r = trace.r.row(idx);
    const auto z = trace.z.row(idx);
    const auto cand = trace.cand.row(idx);

    const RowVec<S> dz = dh.cwiseProduct(cand - h_prev);
    const RowVec<S> dah = dh.cwiseProduct(z).array() * (S(1) - cand.array().square());
    RowVec<S> dh_prev = dh.cwiseProduct(RowVec<S>::Ones(H) - z);

    const RowVec<S> drh = dah * u_h;
    const RowVec<S> dr = drh.cwiseProduct(h_prev);
    dh_prev += drh.cwiseProduct(r);

    grad_xp.row(idx).head(H) = dr.array() * r.array() * (S(1) - r.array());
    grad_xp.row(idx).segment(H, H) = dz.array() * z.array() * (S(1) - z.array());
    grad_xp.row(idx).tail(H) = dah;
    dh_prev.noalias() += grad_xp.row(idx).head(2 * H) * u_rz;

    rh_prev.row(idx) = r.cwiseProduct(h_prev);
    dh = dh_prev;
  }

  cell.u.grad.topRows(2 * H).noalias() += grad_xp.leftCols(2 * H).transpose() * trace.h_prev;
  cell.u.grad.bottomRows(H).noalias() += grad_xp.rightCols(H).transpose() * rh_prev;
  cell.w.grad.noalias() += grad_xp.transpose() * trace.x;
  cell.b.grad += grad_xp.colwise().sum();
  if (grad_input) grad_input->noalias() = grad_xp * cell.w.value;
}

/// Bidirectional GRU summarising a sequence into one vector: the final
/// forward and backward states are concatenated and projected.
template <typename S>
struct BiGru {
  GruCell<S> fwd;
  GruCell<S> bwd;
  Linear<S> proj;

  BiGru() = default;
  BiGru(const std::string& prefix, Index in, Index hidden, Index out)
      : fwd(prefix + ".fwd", in, hidden), bwd(prefix + ".bwd", in, hidden), proj(prefix + ".proj", 2 * hidden, out) {}

  Index input() const { return fwd.input; }
  Index hidden() const { return fwd.hidden; }
  Index output() const { return proj.out_dim; }

  template <typename Rng>
  void init(Rng& rng) {
    fwd.init(rng);
    bwd.init(rng);
    proj.init(rng);
  }

  template <typename F>
  void for_each_param(F&& f) {
    fwd.for_each_param(f);
    bwd.for_each_param(f);
    proj.for_each_param(f);
  }
};

template <typename S>
struct BiGruTrace {
  GruTrace<S> fwd;
  GruTrace<S> bwd;
  Mat<S> joined;  // 1 x 2H
};

template <typename S>
RowVec<S> bigru_encode(const BiGru<S>& net, const Mat<S>& inputs, BiGruTrace<S>* trace = nullptr) {
  const Index H = net.hidden();
  Mat<S> joined(1, 2 * H);
  joined.row(0).head(H) =
      gru_sequence(net.fwd, inputs, Direction::kForward, trace ? &trace->fwd : nullptr);
  joined.row(0).tail(H) =
      gru_sequence(net.bwd, inputs, Direction::kBackward, trace ? &trace->bwd : nullptr);
  Mat<S> out = linear_forward(net.proj, joined);
  if (trace) trace->joined = std::move(joined);
  return out.row(0);
}

template <typename S>
void bigru_encode_backward(BiGru<S>& net, const BiGruTrace<S>& trace, const RowVec<S>& grad_out,
                           Mat<S>* grad_input) {
  const Index H = net.hidden();
  Mat<S> g_out(1, grad_out.size());
  g_out.row(0) = grad_out;
  Mat<S> g_joined;
  linear_backward(net.proj, trace.joined, g_out, &g_joined);
  Mat<S> gx_f;
  Mat<S> gx_b;
  gru_sequence_backward(net.fwd, trace.fwd, RowVec<S>(g_joined.row(0).head(H)),
                        grad_input ? &gx_f : nullptr);
  gru_sequence_backward(net.bwd, trace.bwd, RowVec<S>(g_joined.row(0).tail(H)),
                        grad_input ? &gx_b : nullptr);
  if (grad_input) *grad_input = gx_f + gx_b;
}

}  // namespace agrimuse::nn
