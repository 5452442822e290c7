#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "agrimuse/embedstore.hpp"
#include "agrimuse/metrics.hpp"
#include "agrimuse/model/hierarchical.hpp"
#include "agrimuse/neural/adam.hpp"

namespace agrimuse {

using model::MuseumFeatures;

// ---------------------------------------------------------------------------
// Triplet loss

/// Which in-batch negatives enter the hinge: only the hardest one per
/// anchor and direction, or every one of them (summed).
enum class Negatives { kHardest, kAll };

/// Mean over the batch of the text->museum and museum->text hinge terms.
/// Similarities are dot products of unit rows. Gradients w.r.t. both
/// inputs are written when requested.
template <typename S>
double triplet_loss(const nn::Mat<S>& text, const nn::Mat<S>& museums, double margin,
                    nn::Mat<S>* grad_text = nullptr, nn::Mat<S>* grad_museums = nullptr,
                    Negatives negatives = Negatives::kHardest) {
  const nn::Index B = text.rows();
  if (B < 2) throw InputError("triplet_loss: batch of " + std::to_string(B) + " is too small (need >= 2)");
  if (museums.rows() != B || museums.cols() != text.cols()) throw ShapeError("triplet_loss: shape mismatch");

  nn::Mat<S> sims(B, B);
  sims.noalias() = text * museums.transpose();
  nn::Mat<S> g_sims = nn::Mat<S>::Zero(B, B);
  const bool want_grad = grad_text || grad_museums;
  double total = 0;
  // Hinge for anchor i against the negative similarity at (r, c).
  auto hinge = [&](nn::Index i, nn::Index r, nn::Index c) {
    const double h = margin - static_cast<double>(sims(i, i)) + static_cast<double>(sims(r, c));
    if (h <= 0) return;
    total += h;
    if (want_grad) {
      g_sims(i, i) -= S(1);
      g_sims(r, c) += S(1);
    }
  };
  for (nn::Index i = 0; i < B; ++i) {
    if (negatives == Negatives::kAll) {
      for (nn::Index j = 0; j < B; ++j) {
        if (j == i) continue;
        hinge(i, i, j);
        hinge(i, j, i);
      }
      continue;
    }
    nn::Index j_star = -1;
    nn::Index k_star = -1;
    for (nn::Index j = 0; j < B; ++j) {
      if (j == i) continue;
      if (j_star < 0 || sims(i, j) > sims(i, j_star)) j_star = j;
      if (k_star < 0 || sims(j, i) > sims(k_star, i)) k_star = j;
    }
    hinge(i, i, j_star);
    hinge(i, k_star, i);
  }
  const double loss = total / static_cast<double>(B);
  if (want_grad) {
    g_sims /= static_cast<S>(B);
    if (grad_text) grad_text->noalias() = g_sims * museums;
    if (grad_museums) grad_museums->noalias() = g_sims.transpose() * text;
  }
  return loss;
}

template <typename S>
double triplet_loss(const nn::Mat<S>& text, const nn::Mat<S>& museums, double margin, Negatives negatives) {
  return triplet_loss<S>(text, museums, margin, nullptr, nullptr, negatives);
}

// ---------------------------------------------------------------------------
// Early stopping

enum class StopDecision { kContinue, kStop };

struct EarlyStopState {
  double best = std::numeric_limits<double>::infinity();
  int since_improvement = 0;

  /// Returns true when `loss` beats the running best by more than min_delta.
  bool observe(double loss, double min_delta) {
    if (best - loss > min_delta) {
      best = loss;
      since_improvement = 0;
      return true;
    }
    ++since_improvement;
    return false;
  }
};

/// Stop iff each of the last `patience` losses failed to improve the
/// running best by more than min_delta.
inline StopDecision early_stop_check(std::span<const double> val_losses, int patience, double min_delta) {
  if (patience < 1) throw ConfigError("patience must be >= 1");
  EarlyStopState st;
  for (double l : val_losses) st.observe(l, min_delta);
  return st.since_improvement >= patience ? StopDecision::kStop : StopDecision::kContinue;
}

// ---------------------------------------------------------------------------
// Configuration and history

struct TrainConfig {
  double lr = 0.0007;
  int batch_size = 64;
  int max_epochs = 50;
  int patience = 25;
  double min_delta = 0.0001;
  double margin = 0.2;
  // Epochs trained against all in-batch negatives before switching to the
  // hardest one. Hardest-only from random init can fall into the collapsed
  // state where every embedding coincides. Checkpoint selection and early
  // stopping restart when the warm-up ends.
  int warmup_epochs = 5;
  std::uint64_t seed = 0;
  model::ModelConfig model;
};

inline void validate(const TrainConfig& c) {
  if (!(c.lr > 0)) throw ConfigError("lr must be > 0");
  if (c.batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (c.max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (c.patience < 1) throw ConfigError("patience must be >= 1");
  if (c.patience > c.max_epochs) throw ConfigError("patience must not exceed max_epochs");
  if (!(c.min_delta > 0)) throw ConfigError("min_delta must be > 0");
  if (!(c.margin > 0)) throw ConfigError("margin must be > 0");
  if (c.warmup_epochs < 0) throw ConfigError("warmup_epochs must be >= 0");
  if (c.model.hidden < 1 || c.model.joint < 1 || c.model.text_hidden < 1) {
    throw ConfigError("model widths must be positive");
  }
}

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0;
  double val_loss = 0;
  double val_mrr = 0;
  double wall_seconds = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  int stop_epoch = 0;
  bool early_stopped = false;
};

/// One JSON object per epoch. Wall time is left out so that the file is
/// reproducible bit for bit; it goes to the companion timing file.
inline void write_history(const std::string& path, const TrainHistory& h) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  for (const auto& e : h.epochs) {
    nlohmann::json j{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"val_mrr", e.val_mrr}};
    out << j.dump() << '\n';
  }
}

inline void write_timing(const std::string& path, const TrainHistory& h) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  for (const auto& e : h.epochs) out << nlohmann::json{{"epoch", e.epoch}, {"wall_seconds", e.wall_seconds}}.dump() << '\n';
}

// ---------------------------------------------------------------------------
// Batched encoding helpers

template <typename S>
struct EncodedPair {
  nn::Mat<S> text;
  nn::Mat<S> museums;
};

template <typename S>
EncodedPair<S> encode_pairs(const model::HierarchicalModel<S>& m, std::span<const MuseumFeatures* const> items,
                            nn::Mode mode = nn::Mode::kEval) {
  const auto v = m.cfg.variant;
  const auto batch = model::gather_visual<S>(items, model::uses_frames(v), model::uses_video_vectors(v));
  const auto sentences = model::gather_sentences<S>(items);
  return {model::encode_text(m, std::span<const nn::Mat<S>>(sentences)), model::encode_visual(m, batch, mode)};
}

template <typename S>
EncodedPair<S> encode_pairs(const model::HierarchicalModel<S>& m, std::span<const MuseumFeatures> items,
                            nn::Mode mode = nn::Mode::kEval) {
  std::vector<const MuseumFeatures*> ptrs;
  for (const auto& it : items) ptrs.push_back(&it);
  return encode_pairs(m, std::span<const MuseumFeatures* const>(ptrs), mode);
}

/// Text-to-museum ranks where query i's ground truth is gallery item i.
template <typename S>
std::vector<std::size_t> diagonal_ranks(const EncodedPair<S>& enc) {
  std::vector<std::size_t> truth(static_cast<std::size_t>(enc.text.rows()));
  std::iota(truth.begin(), truth.end(), std::size_t{0});
  return rank_museums(enc.text, enc.museums, truth);
}

/// Forward + backward on one mini-batch; gradients are accumulated into the
/// model (callers zero them) and batchnorm running statistics are updated.
template <typename S>
double train_step_gradients(model::HierarchicalModel<S>& m, std::span<const MuseumFeatures* const> items,
                            double margin, Negatives negatives = Negatives::kHardest) {
  const auto v = m.cfg.variant;
  const auto batch = model::gather_visual<S>(items, model::uses_frames(v), model::uses_video_vectors(v));
  const auto sentences = model::gather_sentences<S>(items);
  model::VisualTrace<S> vtr;
  model::TextTrace<S> ttr;
  const nn::Mat<S> museums = model::encode_visual(m, batch, nn::Mode::kTrain, &vtr);
  const nn::Mat<S> text = model::encode_text(m, std::span<const nn::Mat<S>>(sentences), &ttr);
  nn::Mat<S> g_text;
  nn::Mat<S> g_museums;
  const double loss = triplet_loss(text, museums, margin, &g_text, &g_museums, negatives);
  if (!std::isfinite(loss)) throw NumericError("non-finite training loss");
  model::encode_visual_backward(m, vtr, g_museums);
  model::encode_text_backward(m, ttr, g_text);
  model::update_running_stats(m, vtr);
  return loss;
}

template <typename S>
double train_step(model::HierarchicalModel<S>& m, nn::Adam<S>& opt, std::span<const MuseumFeatures* const> items,
                  double margin, Negatives negatives = Negatives::kHardest) {
  opt.zero_grad();
  const double loss = train_step_gradients(m, items, margin, negatives);
  opt.step();
  return loss;
}

// ---------------------------------------------------------------------------
// Training loop

template <typename S>
struct TrainHooks {
  /// Replaces the computed validation loss for an epoch (1-based).
  std::function<double(int epoch, double computed)> validation_loss;
  /// Called after each epoch; returning true ends training.
  std::function<bool(int epoch, const model::HierarchicalModel<S>&, const EpochRecord&)> on_epoch;
  /// Progress sink, one line per epoch.
  std::function<void(const std::string&)> log;
};

template <typename S>
struct TrainResult {
  model::HierarchicalModel<S> model;
  TrainHistory history;
};

namespace detail {

template <typename S>
std::vector<nn::Mat<S>> snapshot(model::HierarchicalModel<S>& m) {
  std::vector<nn::Mat<S>> out;
  m.for_each_param([&](nn::Param<S>& p) { out.push_back(p.value); });
  m.for_each_buffer([&](nn::Param<S>& p) { out.push_back(p.value); });
  return out;
}

template <typename S>
void restore(model::HierarchicalModel<S>& m, const std::vector<nn::Mat<S>>& snap) {
  std::size_t i = 0;
  m.for_each_param([&](nn::Param<S>& p) { p.value = snap[i++]; });
  m.for_each_buffer([&](nn::Param<S>& p) { p.value = snap[i++]; });
}

}  // namespace detail

template <typename S = float>
TrainResult<S> train(std::span<const MuseumFeatures> train_items, std::span<const MuseumFeatures> val_items,
                     const TrainConfig& cfg, const TrainHooks<S>& hooks = {}) {
  validate(cfg);
  if (train_items.size() < 2) throw ConfigError("training split needs at least 2 museums");
  if (val_items.size() < 2) throw ConfigError("validation split needs at least 2 museums");

  TrainResult<S> result{model::HierarchicalModel<S>(cfg.model), {}};
  auto& m = result.model;
  auto init_rng = detail::stream_rng(cfg.seed, "init");
  m.init(init_rng);
  nn::Adam<S> opt(m.parameters(), nn::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  auto shuffle_rng = detail::stream_rng(cfg.seed, "shuffle");

  std::vector<std::size_t> order(train_items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<const MuseumFeatures*> batch;

  EarlyStopState stop;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<nn::Mat<S>> best = detail::snapshot(m);
  auto& hist = result.history;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const Negatives negatives = epoch <= cfg.warmup_epochs ? Negatives::kAll : Negatives::kHardest;
    double loss_sum = 0;
    std::size_t loss_n = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      if (end - start < 2) break;
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(&train_items[order[k]]);
      loss_sum += train_step(m, opt, std::span<const MuseumFeatures* const>(batch), cfg.margin, negatives) *
                  static_cast<double>(end - start);
      loss_n += end - start;
    }

    const auto enc = encode_pairs(m, val_items);
    double val_loss = triplet_loss(enc.text, enc.museums, cfg.margin);
    const double val_mrr = compute_metrics(diagonal_ranks(enc)).mrr;
    if (!std::isfinite(val_loss)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    if (hooks.validation_loss) val_loss = hooks.validation_loss(epoch, val_loss);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(loss_n);
    rec.val_loss = val_loss;
    rec.val_mrr = val_mrr;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    hist.epochs.push_back(rec);
    hist.stop_epoch = epoch;

    // Warm-up epochs optimise a different objective; selection and patience
    // start over on the first hardest-negative epoch.
    if (epoch == cfg.warmup_epochs + 1) {
      best_val = std::numeric_limits<double>::infinity();
      stop = EarlyStopState{};
    }
    if (val_loss < best_val) {
      best_val = val_loss;
      hist.best_epoch = epoch;
      best = detail::snapshot(m);
    }
    stop.observe(val_loss, cfg.min_delta);

    if (hooks.log) {
      char line[160];
      std::snprintf(line, sizeof line, "epoch %3d  train %.5f  val %.5f  val_mrr %6.2f  %.1fs", epoch,
                    rec.train_loss, rec.val_loss, rec.val_mrr, rec.wall_seconds);
      hooks.log(line);
    }
    if (hooks.on_epoch && hooks.on_epoch(epoch, m, rec)) break;
    if (stop.since_improvement >= cfg.patience) {
      hist.early_stopped = true;
      break;
    }
  }
  detail::restore(m, best);
  return result;
}

// ---------------------------------------------------------------------------
// JSON for configs

inline nlohmann::json to_json(const model::ModelConfig& c) {
  return {{"variant", model::to_string(c.variant)},
          {"frame_dim", c.frame_dim},
          {"video_dim", c.video_dim},
          {"text_dim", c.text_dim},
          {"hidden", c.hidden},
          {"joint", c.joint},
          {"text_hidden", c.text_hidden},
          {"kernel", c.kernel},
          {"bn_eps", c.bn_eps},
          {"bn_momentum", c.bn_momentum}};
}

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* n : known) ok = ok || k == n;
    if (!ok) throw ConfigError(std::string("unknown key '") + k + "' in " + where);
  }
}

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline model::ModelConfig model_config_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j,
                         {"variant", "frame_dim", "video_dim", "text_dim", "hidden", "joint", "text_hidden", "kernel",
                          "bn_eps", "bn_momentum"},
                         "model config");
  model::ModelConfig c;
  if (j.contains("variant")) {
    std::string v;
    detail::read_key(j, "variant", v);
    c.variant = model::parse_variant(v);
  }
  detail::read_key(j, "frame_dim", c.frame_dim);
  detail::read_key(j, "video_dim", c.video_dim);
  detail::read_key(j, "text_dim", c.text_dim);
  detail::read_key(j, "hidden", c.hidden);
  detail::read_key(j, "joint", c.joint);
  detail::read_key(j, "text_hidden", c.text_hidden);
  detail::read_key(j, "kernel", c.kernel);
  detail::read_key(j, "bn_eps", c.bn_eps);
  detail::read_key(j, "bn_momentum", c.bn_momentum);
  return c;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},         {"batch_size", c.batch_size}, {"max_epochs", c.max_epochs},
          {"patience", c.patience}, {"min_delta", c.min_delta},  {"margin", c.margin},
          {"warmup_epochs", c.warmup_epochs}, {"seed", c.seed}, {"model", to_json(c.model)}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j, {"lr", "batch_size", "max_epochs", "patience", "min_delta", "margin", "warmup_epochs", "seed", "model"},
                         "training config");
  TrainConfig c;
  detail::read_key(j, "lr", c.lr);
  detail::read_key(j, "batch_size", c.batch_size);
  detail::read_key(j, "max_epochs", c.max_epochs);
  detail::read_key(j, "patience", c.patience);
  detail::read_key(j, "min_delta", c.min_delta);
  detail::read_key(j, "margin", c.margin);
  detail::read_key(j, "warmup_epochs", c.warmup_epochs);
  detail::read_key(j, "seed", c.seed);
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  return c;
}

}  // namespace agrimuse
