#pragma once

// Finite-difference gradient cases shared by the unit tests and the
// acceptance binary. Each case builds a small random problem in double
// precision, runs the analytic backward pass, and compares it with central
// differences over every parameter and input coordinate.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "agrimuse/model/adapter_block.hpp"
#include "agrimuse/model/hierarchical.hpp"
#include "agrimuse/neural/gradcheck.hpp"
#include "agrimuse/neural/gru.hpp"
#include "agrimuse/neural/layers.hpp"
#include "agrimuse/training.hpp"

namespace agrimuse::testing {

using nn::GradCheckResult;
using nn::Index;
using MatD = nn::Mat<double>;
using ParamD = nn::Param<double>;

inline constexpr double kGradEps = 1e-6;

inline MatD random_mat(std::mt19937_64& rng, Index r, Index c, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  MatD m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

/// Loss = sum(weights .* y) with fixed random weights, so dL/dy = weights.
struct Projection {
  MatD weights;
  double operator()(const MatD& y) const { return (weights.array() * y.array()).sum(); }
};

inline nn::Segments random_segments(std::mt19937_64& rng, int count, int lo, int hi) {
  std::uniform_int_distribution<int> len(lo, hi);
  nn::Segments s;
  for (int i = 0; i < count; ++i) s.push(len(rng));
  return s;
}

inline GradCheckResult merge(GradCheckResult a, const GradCheckResult& b) {
  if (b.max_rel_error > a.max_rel_error) {
    const auto checked = a.checked + b.checked;
    a = b;
    a.checked = checked;
  } else {
    a.checked += b.checked;
  }
  return a;
}

inline GradCheckResult grad_case_conv1d(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Index in = 3, out = 4;
  const auto seg = random_segments(rng, 3, 1, 5);
  nn::Conv1d<double> conv("conv", in, out, 3);
  conv.init(rng);
  ParamD x("input", seg.total(), in);
  x.value = random_mat(rng, seg.total(), in);
  const Projection proj{random_mat(rng, seg.total(), out)};
  auto loss = [&] { return proj(nn::conv1d_forward(conv, x.value, seg)); };
  MatD gx;
  nn::conv1d_backward(conv, x.value, seg, proj.weights, &gx);
  x.grad = gx;
  std::vector<ParamD*> ps{&conv.weight, &conv.bias, &x};
  return nn::gradient_check(loss, ps, kGradEps);
}

inline GradCheckResult grad_case_batchnorm(std::uint64_t seed, nn::Mode mode) {
  std::mt19937_64 rng(seed);
  const Index n = 7, ch = 4;
  nn::BatchNorm<double> bn("bn", ch);
  bn.gamma.value = random_mat(rng, 1, ch).array() + 1.5;
  bn.beta.value = random_mat(rng, 1, ch);
  bn.running_mean.value = random_mat(rng, 1, ch, 0.3);
  bn.running_var.value = random_mat(rng, 1, ch, 0.3).array().abs() + 0.5;
  ParamD x("input", n, ch);
  x.value = random_mat(rng, n, ch, 2.0);
  const Projection proj{random_mat(rng, n, ch)};
  auto loss = [&] { return proj(nn::batchnorm_forward(bn, x.value, mode)); };
  nn::BatchNormTrace<double> tr;
  nn::batchnorm_forward(bn, x.value, mode, &tr);
  x.grad = nn::batchnorm_backward(bn, tr, proj.weights);
  std::vector<ParamD*> ps{&bn.gamma, &bn.beta, &x};
  return nn::gradient_check(loss, ps, kGradEps);
}

inline GradCheckResult grad_case_relu(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamD x("input", 6, 5);
  x.value = random_mat(rng, 6, 5);
  // Keep every coordinate well clear of the kink.
  for (Index i = 0; i < x.value.size(); ++i) {
    double& v = x.value.data()[i];
    v = (v < 0 ? -1.0 : 1.0) * (0.1 + std::abs(v));
  }
  const Projection proj{random_mat(rng, 6, 5)};
  auto loss = [&] { return proj(nn::relu_forward(x.value)); };
  x.grad = nn::relu_backward(nn::relu_forward(x.value), proj.weights);
  std::vector<ParamD*> ps{&x};
  return nn::gradient_check(loss, ps, kGradEps);
}

inline GradCheckResult grad_case_linear(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  nn::Linear<double> lin("linear", 5, 3);
  lin.init(rng);
  ParamD x("input", 4, 5);
  x.value = random_mat(rng, 4, 5);
  const Projection proj{random_mat(rng, 4, 3)};
  auto loss = [&] { return proj(nn::linear_forward(lin, x.value)); };
  MatD gx;
  nn::linear_backward(lin, x.value, proj.weights, &gx);
  x.grad = gx;
  std::vector<ParamD*> ps{&lin.weight, &lin.bias, &x};
  return nn::gradient_check(loss, ps, kGradEps);
}

inline GradCheckResult grad_case_gru(std::uint64_t seed, nn::Direction dir = nn::Direction::kForward) {
  std::mt19937_64 rng(seed);
  const Index in = 3, h = 4;
  std::uniform_int_distribution<int> len(1, 6);
  const Index steps = len(rng);
  nn::GruCell<double> cell("gru", in, h);
  cell.init(rng);
  ParamD x("input", steps, in);
  x.value = random_mat(rng, steps, in);
  const nn::RowVec<double> w = random_mat(rng, 1, h).row(0);
  auto loss = [&] { return w.dot(nn::gru_sequence(cell, x.value, dir)); };
  nn::GruTrace<double> tr;
  nn::gru_sequence(cell, x.value, dir, &tr);
  MatD gx;
  nn::gru_sequence_backward(cell, tr, w, &gx);
  x.grad = gx;
  std::vector<ParamD*> ps{&cell.w, &cell.u, &cell.b, &x};
  return nn::gradient_check(loss, ps, kGradEps);
}

inline GradCheckResult grad_case_bigru(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Index in = 3, h = 4, out = 3;
  std::uniform_int_distribution<int> len(1, 6);
  const Index steps = len(rng);
  nn::BiGru<double> net("bigru", in, h, out);
  net.init(rng);
  ParamD x("input", steps, in);
  x.value = random_mat(rng, steps, in);
  const nn::RowVec<double> w = random_mat(rng, 1, out).row(0);
  auto loss = [&] { return w.dot(nn::bigru_encode(net, x.value)); };
  nn::BiGruTrace<double> tr;
  nn::bigru_encode(net, x.value, &tr);
  MatD gx;
  nn::bigru_encode_backward(net, tr, w, &gx);
  x.grad = gx;
  std::vector<ParamD*> ps;
  net.for_each_param([&](ParamD& p) { ps.push_back(&p); });
  ps.push_back(&x);
  return nn::gradient_check(loss, ps, kGradEps);
}

inline GradCheckResult grad_case_adapter(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Index in = 3, hidden = 5, out = 2;
  const auto seg = random_segments(rng, 3, 1, 4);
  model::AdapterBlock<double> block("block", in, hidden, out);
  block.init(rng);
  ParamD x("input", seg.total(), in);
  x.value = random_mat(rng, seg.total(), in);
  const Projection proj{random_mat(rng, seg.count(), out)};
  auto loss = [&] { return proj(model::adapter_forward(block, x.value, seg, nn::Mode::kTrain)); };
  model::AdapterTrace<double> tr;
  model::adapter_forward(block, x.value, seg, nn::Mode::kTrain, &tr);
  MatD gx;
  model::adapter_backward(block, tr, proj.weights, &gx);
  x.grad = gx;
  std::vector<ParamD*> ps;
  block.for_each_param([&](ParamD& p) { ps.push_back(&p); });
  ps.push_back(&x);
  return nn::gradient_check(loss, ps, kGradEps);
}

inline GradCheckResult grad_case_l2_normalize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamD x("input", 4, 5);
  x.value = random_mat(rng, 4, 5);
  const Projection proj{random_mat(rng, 4, 5)};
  auto loss = [&] { return proj(nn::l2_normalize_rows(x.value)); };
  nn::RowVec<double> norms;
  const MatD y = nn::l2_normalize_rows(x.value, &norms);
  x.grad = nn::l2_normalize_rows_backward(y, norms, proj.weights);
  std::vector<ParamD*> ps{&x};
  return nn::gradient_check(loss, ps, kGradEps);
}

inline GradCheckResult grad_case_triplet(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Index B = 5, J = 4;
  ParamD t("text", B, J);
  ParamD m("museums", B, J);
  t.value = nn::l2_normalize_rows(MatD(random_mat(rng, B, J)));
  m.value = nn::l2_normalize_rows(MatD(random_mat(rng, B, J)));
  // Margin large enough that every hinge is active; rows need not stay unit
  // for the derivative of the bilinear similarity.
  const double margin = 3.0;
  auto loss = [&] { return triplet_loss(t.value, m.value, margin); };
  MatD gt, gm;
  triplet_loss(t.value, m.value, margin, &gt, &gm);
  t.grad = gt;
  m.grad = gm;
  std::vector<ParamD*> ps{&t, &m};
  return nn::gradient_check(loss, ps, kGradEps);
}

// ---------------------------------------------------------------------------
// End-to-end: triplet loss of a small model on a random batch of museums.

struct TinyBatch {
  std::vector<std::vector<std::vector<std::vector<float>>>> frames;  // museum, room, video, flat frames
  std::vector<std::vector<std::vector<float>>> videos;               // museum, room, flat video vectors
  std::vector<std::vector<float>> sentences;                         // museum, flat sentences
  std::vector<int> sentence_rows;
  std::vector<model::MuseumFeatures> features;
};

inline TinyBatch make_tiny_batch(std::mt19937_64& rng, int museums, Index frame_dim, Index video_dim, Index text_dim) {
  TinyBatch b;
  std::uniform_int_distribution<int> rooms_d(1, 3), videos_d(1, 3), frames_d(1, 4), sent_d(1, 4);
  std::normal_distribution<float> nd(0.0f, 1.0f);
  b.frames.resize(static_cast<std::size_t>(museums));
  b.videos.resize(static_cast<std::size_t>(museums));
  b.sentences.resize(static_cast<std::size_t>(museums));
  b.sentence_rows.resize(static_cast<std::size_t>(museums));
  for (int m = 0; m < museums; ++m) {
    const int rooms = rooms_d(rng);
    for (int r = 0; r < rooms; ++r) {
      b.frames[m].emplace_back();
      b.videos[m].emplace_back();
      const int vids = videos_d(rng);
      for (int v = 0; v < vids; ++v) {
        std::vector<float> f(static_cast<std::size_t>(frames_d(rng) * frame_dim));
        for (auto& x : f) x = nd(rng);
        b.frames[m][r].push_back(std::move(f));
        for (Index k = 0; k < video_dim; ++k) b.videos[m][r].push_back(nd(rng));
      }
    }
    b.sentence_rows[m] = sent_d(rng);
    b.sentences[m].resize(static_cast<std::size_t>(b.sentence_rows[m] * text_dim));
    for (auto& x : b.sentences[m]) x = nd(rng);
  }
  for (int m = 0; m < museums; ++m) {
    model::MuseumFeatures f;
    f.museum_id = "m" + std::to_string(m);
    for (std::size_t r = 0; r < b.frames[m].size(); ++r) {
      f.frames.emplace_back();
      f.video_vectors.emplace_back();
      for (std::size_t v = 0; v < b.frames[m][r].size(); ++v) {
        const auto& fr = b.frames[m][r][v];
        f.frames.back().push_back({fr.data(), static_cast<Index>(fr.size()) / frame_dim, frame_dim});
        f.video_vectors.back().push_back({b.videos[m][r].data() + v * video_dim, 1, video_dim});
      }
    }
    f.sentences = {b.sentences[m].data(), b.sentence_rows[m], text_dim};
    b.features.push_back(std::move(f));
  }
  return b;
}

inline model::ModelConfig tiny_model_config(model::Variant v) {
  model::ModelConfig c;
  c.variant = v;
  c.frame_dim = 3;
  c.video_dim = 2;
  c.text_dim = 3;
  c.hidden = 4;
  c.joint = 3;
  c.text_hidden = 3;
  return c;
}

inline GradCheckResult grad_case_end_to_end(std::uint64_t seed, model::Variant v = model::Variant::kHL) {
  std::mt19937_64 rng(seed);
  const auto cfg = tiny_model_config(v);
  model::HierarchicalModel<double> m(cfg);
  m.init(rng);
  // Distinct, slightly perturbed batchnorm affine parameters, and nonzero
  // biases: the zero init puts many gradients at exactly zero, where the
  // relative error only measures finite-difference roundoff.
  m.for_each_param([&](ParamD& p) {
    if (p.name.ends_with(".gamma")) p.value.array() += random_mat(rng, 1, p.value.cols(), 0.2).array();
    if (p.name.ends_with(".beta") || p.name.ends_with(".bias") || p.name.ends_with(".b"))
      p.value = random_mat(rng, p.value.rows(), p.value.cols(), 0.2);
  });
  auto batch = make_tiny_batch(rng, 4, cfg.frame_dim, cfg.video_dim, cfg.text_dim);
  std::vector<const model::MuseumFeatures*> items;
  for (const auto& f : batch.features) items.push_back(&f);
  const std::span<const model::MuseumFeatures* const> span(items);
  // A large margin keeps every hinge active so the loss is smooth in the
  // neighbourhood of the check.
  const double margin = 3.0;
  auto loss = [&] {
    const auto enc = encode_pairs(m, span, nn::Mode::kTrain);
    return triplet_loss(enc.text, enc.museums, margin);
  };
  m.zero_grad();
  const auto vb = model::gather_visual<double>(span, model::uses_frames(v), model::uses_video_vectors(v));
  const auto sentences = model::gather_sentences<double>(span);
  model::VisualTrace<double> vtr;
  model::TextTrace<double> ttr;
  const MatD museums = model::encode_visual(m, vb, nn::Mode::kTrain, &vtr);
  const MatD text = model::encode_text(m, std::span<const MatD>(sentences), &ttr);
  MatD gt, gm;
  triplet_loss(text, museums, margin, &gt, &gm);
  model::encode_visual_backward(m, vtr, gm);
  model::encode_text_backward(m, ttr, gt);
  // A conv bias feeding train-mode batchnorm is cancelled by the batch mean:
  // its true gradient is zero, the analytic one is rounding residue and the
  // finite difference is pure roundoff. Both are held to absolute bounds.
  std::vector<ParamD*> ps;
  for (auto* p : m.parameters()) {
    if (!p->name.ends_with(".conv.bias")) {
      ps.push_back(p);
      continue;
    }
    for (Index i = 0; i < p->grad.size(); ++i) {
      double& theta = p->value.data()[i];
      const double saved = theta;
      theta = saved + kGradEps;
      const double up = loss();
      theta = saved - kGradEps;
      const double down = loss();
      theta = saved;
      const double numeric = (up - down) / (2.0 * kGradEps);
      const double analytic = p->grad.data()[i];
      if (std::abs(analytic) > 1e-12 || std::abs(numeric) > 1e-7) {
        GradCheckResult bad;
        bad.max_rel_error = std::numeric_limits<double>::infinity();
        bad.worst_param = p->name;
        bad.worst_index = i;
        bad.analytic = analytic;
        bad.numeric = numeric;
        return bad;
      }
    }
  }
  return nn::gradient_check(loss, ps, kGradEps);
}

}  // namespace agrimuse::testing
