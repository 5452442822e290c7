#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "agrimuse/checkpoint.hpp"
#include "agrimuse/corpus.hpp"
#include "agrimuse/embedstore.hpp"
#include "agrimuse/evaluation.hpp"
#include "agrimuse/training.hpp"

namespace agrimuse {

// ---------------------------------------------------------------------------
// Datasets

/// A corpus, its split and the embedding sets that describe it. `videos`
/// may be empty when only frame-level features exist; `synth` is set when
/// the embeddings came from the synthetic generator.
struct Dataset {
  Corpus corpus;
  CorpusSplit split;
  EmbeddingSet frames;
  EmbeddingSet videos;
  EmbeddingSet text;
  std::optional<SynthConfig> synth;

  const std::vector<std::string>& split_ids(const std::string& name) const {
    if (name == "train") return split.train;
    if (name == "validation" || name == "val") return split.validation;
    if (name == "test") return split.test;
    throw ConfigError("unknown split '" + name + "' (expected train, validation or test)");
  }
};

inline std::vector<Description> render_descriptions(const Corpus& c, DescriptionStyle style) {
  std::vector<Description> out;
  out.reserve(c.museums.size());
  for (const auto& m : c.museums) {
    out.push_back(style == DescriptionStyle::kLong ? render_description(m) : render_brief_description(m, c.vocabulary));
  }
  return out;
}

inline Dataset make_synthetic_dataset(Corpus corpus, const SynthConfig& synth, std::uint64_t split_seed = 0,
                                      DescriptionStyle style = DescriptionStyle::kLong) {
  Dataset d;
  d.corpus = std::move(corpus);
  d.split = split_corpus(d.corpus.museums, {0.70, 0.15, 0.15}, split_seed);
  d.frames = synth_visual_embeddings(d.corpus, synth);
  d.videos = video_level_embeddings(d.frames);
  const auto descs = render_descriptions(d.corpus, style);
  d.text = synth_text_embeddings(d.corpus, descs, synth);
  d.synth = synth;
  return d;
}

// File names inside an embeddings directory.
inline constexpr const char* kFramesFile = "visual.emb";
inline constexpr const char* kVideosFile = "video.emb";
inline constexpr const char* kTextFile = "text.emb";
inline constexpr const char* kSynthFile = "synth.json";

inline nlohmann::json to_json(const SynthConfig& s) {
  return {{"dim", s.dim},         {"frames_per_video", s.frames_per_video}, {"sigma_v", s.sigma_v},
          {"sigma_t", s.sigma_t}, {"gamma", s.gamma},                       {"text_offset", s.text_offset},
          {"seed", s.seed}};
}

inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j, {"dim", "frames_per_video", "sigma_v", "sigma_t", "gamma", "text_offset", "seed"},
                         "synthetic embedding config");
  SynthConfig s;
  detail::read_key(j, "dim", s.dim);
  detail::read_key(j, "frames_per_video", s.frames_per_video);
  detail::read_key(j, "sigma_v", s.sigma_v);
  detail::read_key(j, "sigma_t", s.sigma_t);
  detail::read_key(j, "gamma", s.gamma);
  detail::read_key(j, "text_offset", s.text_offset);
  detail::read_key(j, "seed", s.seed);
  validate(s);
  return s;
}

/// Loads corpus.json plus an embeddings directory. The frame and text sets
/// are required; video-level features and synth.json are optional.
inline Dataset load_dataset(const std::filesystem::path& corpus_path, const std::filesystem::path& emb_dir,
                            std::uint64_t split_seed = 0) {
  Dataset d;
  d.corpus = read_corpus(corpus_path.string());
  d.split = split_corpus(d.corpus.museums, {0.70, 0.15, 0.15}, split_seed);
  d.frames = read_embeddings((emb_dir / kFramesFile).string(), "frames");
  d.text = read_embeddings((emb_dir / kTextFile).string(), "text");
  if (std::filesystem::exists(emb_dir / kVideosFile)) {
    d.videos = read_embeddings((emb_dir / kVideosFile).string(), "videos");
  }
  if (std::filesystem::exists(emb_dir / kSynthFile)) {
    std::ifstream in(emb_dir / kSynthFile);
    try {
      d.synth = synth_config_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw InputError("malformed " + (emb_dir / kSynthFile).string() + ": " + e.what());
    }
  }
  return d;
}

/// Feature bundles for the given museum ids. They point into `d`, which
/// must outlive them.
inline std::vector<model::MuseumFeatures> features_for(const Dataset& d, const std::vector<std::string>& ids) {
  std::unordered_map<std::string, const Museum*> by_id;
  for (const auto& m : d.corpus.museums) by_id.emplace(m.id, &m);
  std::vector<model::MuseumFeatures> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw InputError("museum '" + id + "' is not in the corpus");
    out.push_back(model::make_features(*it->second, d.frames.empty() ? nullptr : &d.frames,
                                       d.videos.empty() ? nullptr : &d.videos, &d.text));
  }
  return out;
}

inline std::vector<model::MuseumFeatures> features_for(const Dataset& d, const std::string& split) {
  return features_for(d, d.split_ids(split));
}

inline std::vector<std::string> all_ids(const Corpus& c) {
  std::vector<std::string> ids;
  for (const auto& m : c.museums) ids.push_back(m.id);
  return ids;
}

/// Copies the embedding widths of `d` into the model config.
inline model::ModelConfig fit_dims(model::ModelConfig cfg, const Dataset& d) {
  if (d.frames.dim() > 0) cfg.frame_dim = d.frames.dim();
  if (!d.videos.empty()) cfg.video_dim = d.videos.dim();
  else if (d.frames.dim() > 0) cfg.video_dim = d.frames.dim();
  cfg.text_dim = d.text.dim();
  if (model::uses_video_vectors(cfg.variant) && d.videos.empty()) {
    throw ConfigError(model::to_string(cfg.variant) + " needs a video-level embedding source");
  }
  return cfg;
}

/// Held-out corpus described in brief style, embedded with the same
/// synthetic encoders as `base`.
struct TransferConfig {
  int museum_count = 83;
  std::uint64_t corpus_seed = 1009;
  std::string id_prefix = "T";
};

inline Dataset make_transfer_dataset(const Dataset& base, const TransferConfig& t) {
  if (!base.synth) throw ConfigError("transfer evaluation needs synthetic encoder settings (synth.json)");
  CorpusConfig cc;
  cc.museum_count = t.museum_count;
  cc.id_prefix = t.id_prefix;
  cc.frames_per_video = static_cast<int>(base.synth->frames_per_video);
  Corpus corpus = generate_corpus(t.corpus_seed, cc, base.corpus.vocabulary);
  Dataset d;
  d.corpus = std::move(corpus);
  d.split.test = all_ids(d.corpus);
  d.frames = synth_visual_embeddings(d.corpus, *base.synth);
  d.videos = video_level_embeddings(d.frames);
  d.text = synth_text_embeddings(d.corpus, render_descriptions(d.corpus, DescriptionStyle::kBrief), *base.synth);
  d.synth = base.synth;
  return d;
}

// ---------------------------------------------------------------------------
// Evaluation of trained models

template <typename S>
RetrievalMetrics evaluate_model(const model::HierarchicalModel<S>& m, std::span<const model::MuseumFeatures> items) {
  return compute_metrics(diagonal_ranks(encode_pairs(m, items)));
}

/// Per-metric median across runs (lower middle for even counts).
inline RetrievalMetrics median_metrics(std::span<const RetrievalMetrics> runs) {
  if (runs.empty()) throw InputError("median_metrics: no runs");
  auto med = [&](double RetrievalMetrics::*f) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(r.*f);
    std::sort(v.begin(), v.end());
    return v[(v.size() - 1) / 2];
  };
  RetrievalMetrics m;
  m.r1 = med(&RetrievalMetrics::r1);
  m.r5 = med(&RetrievalMetrics::r5);
  m.r10 = med(&RetrievalMetrics::r10);
  m.median_rank = med(&RetrievalMetrics::median_rank);
  m.mean_rank = med(&RetrievalMetrics::mean_rank);
  m.mrr = med(&RetrievalMetrics::mrr);
  m.queries = runs.front().queries;
  return m;
}

// ---------------------------------------------------------------------------
// Experiments

enum class ExperimentKind { kTrained, kVariant, kZeroShot, kFusion, kTransfer };

inline ExperimentKind parse_experiment_kind(const std::string& s) {
  if (s == "trained") return ExperimentKind::kTrained;
  if (s == "variant") return ExperimentKind::kVariant;
  if (s == "zeroshot") return ExperimentKind::kZeroShot;
  if (s == "fusion") return ExperimentKind::kFusion;
  if (s == "transfer") return ExperimentKind::kTransfer;
  throw ConfigError("unknown experiment kind '" + s + "'");
}

struct ExperimentSpec {
  std::string id;
  ExperimentKind kind = ExperimentKind::kTrained;
  std::vector<model::Variant> variants;  // empty: the kind's default set
  std::vector<std::uint64_t> seeds{0};
  std::string split = "test";
  TransferConfig transfer;
};

inline std::vector<model::Variant> default_variants(ExperimentKind k) {
  using model::Variant;
  switch (k) {
    case ExperimentKind::kTrained:
    case ExperimentKind::kTransfer: return {Variant::kHL};
    case ExperimentKind::kVariant:
      return {Variant::kHL, Variant::kNHLMuseum, Variant::kNHLVideoMuseum, Variant::kNHLRoomMuseum,
              Variant::kHLSkipAdapter};
    case ExperimentKind::kFusion: return {Variant::kHLEarlyFusion, Variant::kHLLateFusion};
    case ExperimentKind::kZeroShot: return {};
  }
  return {};
}

inline ExperimentSpec experiment_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j, {"id", "kind", "variants", "seeds", "split", "transfer"}, "experiment");
  ExperimentSpec e;
  if (!j.contains("id")) throw ConfigError("experiment without an id");
  detail::read_key(j, "id", e.id);
  if (e.id.empty() || e.id.find('/') != std::string::npos) throw ConfigError("bad experiment id '" + e.id + "'");
  std::string kind = "trained";
  detail::read_key(j, "kind", kind);
  e.kind = parse_experiment_kind(kind);
  if (j.contains("variants")) {
    std::vector<std::string> names;
    detail::read_key(j, "variants", names);
    for (const auto& n : names) e.variants.push_back(model::parse_variant(n));
  }
  detail::read_key(j, "seeds", e.seeds);
  if (e.seeds.empty()) throw ConfigError("experiment '" + e.id + "' has no seeds");
  detail::read_key(j, "split", e.split);
  if (j.contains("transfer")) {
    const auto& t = j.at("transfer");
    detail::reject_unknown(t, {"museum_count", "corpus_seed", "id_prefix"}, "transfer config");
    detail::read_key(t, "museum_count", e.transfer.museum_count);
    detail::read_key(t, "corpus_seed", e.transfer.corpus_seed);
    detail::read_key(t, "id_prefix", e.transfer.id_prefix);
  }
  return e;
}

inline nlohmann::json to_json(const ExperimentSpec& e) {
  static const char* kinds[] = {"trained", "variant", "zeroshot", "fusion", "transfer"};
  nlohmann::json variants = nlohmann::json::array();
  for (auto v : e.variants.empty() ? default_variants(e.kind) : e.variants) variants.push_back(model::to_string(v));
  return {{"id", e.id},
          {"kind", kinds[static_cast<int>(e.kind)]},
          {"variants", variants},
          {"seeds", e.seeds},
          {"split", e.split},
          {"transfer",
           {{"museum_count", e.transfer.museum_count},
            {"corpus_seed", e.transfer.corpus_seed},
            {"id_prefix", e.transfer.id_prefix}}}};
}

struct ExperimentContext {
  std::filesystem::path out_dir;  // empty: nothing written
  std::function<void(const std::string&)> log;
};

struct TrainedRun {
  model::Variant variant;
  std::uint64_t seed = 0;
  TrainHistory history;
  RetrievalMetrics metrics;
};

/// Trains `cfg` on the dataset's train split, selects on validation, and
/// writes checkpoint + history under `dir` when it is non-empty.
inline TrainResult<float> train_on(const Dataset& d, TrainConfig cfg, const std::filesystem::path& dir,
                                   const TrainHooks<float>& hooks = {}) {
  cfg.model = fit_dims(cfg.model, d);
  const auto train_items = features_for(d, "train");
  const auto val_items = features_for(d, "validation");
  auto result = train<float>(train_items, val_items, cfg, hooks);
  if (!dir.empty()) {
    std::filesystem::create_directories(dir);
    save_checkpoint(dir, result.model,
                    {{"training", to_json(cfg)},
                     {"best_epoch", result.history.best_epoch},
                     {"stop_epoch", result.history.stop_epoch}});
    write_history((dir / "history.jsonl").string(), result.history);
    write_timing((dir / "timing.jsonl").string(), result.history);
  }
  return result;
}

inline void write_report(const std::filesystem::path& dir, const Report& r) {
  std::filesystem::create_directories(dir);
  std::ofstream txt(dir / "report.txt");
  txt << format_table(r);
  std::ofstream js(dir / "metrics.json");
  js << to_json(r).dump(2) << '\n';
  if (!txt || !js) throw InputError("cannot write report files under " + dir.string());
}

/// Runs one experiment and returns its table. Trained rows are per seed,
/// followed by a median row when there is more than one seed.
inline Report run_experiment(const ExperimentSpec& spec, const Dataset& d, const TrainConfig& base,
                             const ExperimentContext& ctx = {}, std::vector<TrainedRun>* runs_out = nullptr) {
  Report report;
  report.split = spec.split;
  const auto variants = spec.variants.empty() ? default_variants(spec.kind) : spec.variants;
  if (spec.kind == ExperimentKind::kZeroShot) {
    report = zero_shot_report(features_for(d, spec.split), spec.split);
    report.title = spec.id + ": " + report.title;
    if (!ctx.out_dir.empty()) write_report(ctx.out_dir, report);
    return report;
  }
  if (spec.kind == ExperimentKind::kFusion) {
    for (auto v : variants) {
      if (!model::is_fusion(v)) throw ConfigError("fusion experiment with non-fusion variant " + model::to_string(v));
    }
  }

  std::optional<Dataset> transfer;
  std::vector<model::MuseumFeatures> eval_items;
  if (spec.kind == ExperimentKind::kTransfer) {
    transfer = make_transfer_dataset(d, spec.transfer);
    eval_items = features_for(*transfer, all_ids(transfer->corpus));
    report.split = "transfer-brief";
  } else {
    eval_items = features_for(d, spec.split);
  }

  report.title = spec.id;
  for (auto v : variants) {
    std::vector<RetrievalMetrics> per_seed;
    for (auto seed : spec.seeds) {
      TrainConfig cfg = base;
      cfg.seed = seed;
      cfg.model.variant = v;
      const std::string name = model::to_string(v) + "-seed" + std::to_string(seed);
      if (ctx.log) ctx.log("[" + spec.id + "] training " + name);
      TrainHooks<float> hooks;
      hooks.log = ctx.log;
      auto result = train_on(d, cfg, ctx.out_dir.empty() ? std::filesystem::path{} : ctx.out_dir / name, hooks);
      const auto metrics = evaluate_model(result.model, eval_items);
      per_seed.push_back(metrics);
      ReportRow row{model::to_string(v) + " (seed " + std::to_string(seed) + ")", metrics, {}};
      row.extra["variant"] = model::to_string(v);
      row.extra["seed"] = seed;
      row.extra["best_epoch"] = result.history.best_epoch;
      row.extra["stop_epoch"] = result.history.stop_epoch;
      report.rows.push_back(std::move(row));
      if (runs_out) runs_out->push_back({v, seed, result.history, metrics});
    }
    if (per_seed.size() > 1) {
      ReportRow row{model::to_string(v) + " (median)", median_metrics(per_seed), {}};
      row.extra["variant"] = model::to_string(v);
      row.extra["aggregate"] = "median";
      report.rows.push_back(std::move(row));
    }
  }
  if (spec.kind == ExperimentKind::kTransfer) {
    Report zs = zero_shot_report(eval_items, report.split);
    ReportRow row = zs.rows.front();
    row.label = "zero-shot " + row.label;
    report.rows.push_back(std::move(row));
  }
  if (!ctx.out_dir.empty()) write_report(ctx.out_dir, report);
  return report;
}

}  // namespace agrimuse
