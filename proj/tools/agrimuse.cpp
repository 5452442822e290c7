// agrimuse: corpus generation, embedding synthesis, training and evaluation.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "agrimuse/checkpoint.hpp"
#include "agrimuse/corpus.hpp"
#include "agrimuse/embedstore.hpp"
#include "agrimuse/evaluation.hpp"
#include "agrimuse/experiment.hpp"
#include "agrimuse/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace agrimuse;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

fs::path runs_root() {
  if (const char* env = std::getenv("AGRIMUSE_RUNS_DIR"); env && *env) return env;
  return "runs";
}

void log_line(const std::string& s) { std::cerr << s << '\n'; }

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot open config " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& p, const json& j) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p);
  out << j.dump(2) << '\n';
  if (!out) throw InputError("cannot write " + p.string());
}

// ---------------------------------------------------------------------------
// Run configuration: data paths, training settings, experiment list.

struct RunConfig {
  fs::path corpus;
  fs::path embeddings;
  std::uint64_t split_seed = 0;
  TrainConfig training;
  json experiments = json::array();
};

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
  detail::reject_unknown(j, {"corpus", "embeddings", "split_seed", "training", "experiments"}, "run config");
  RunConfig rc;
  std::string corpus, emb;
  detail::read_key(j, "corpus", corpus);
  detail::read_key(j, "embeddings", emb);
  if (corpus.empty()) throw ConfigError("run config needs 'corpus'");
  if (emb.empty()) throw ConfigError("run config needs 'embeddings'");
  auto resolve = [&](const std::string& p) { return fs::absolute(fs::path(p).is_absolute() ? fs::path(p) : base_dir / p); };
  rc.corpus = resolve(corpus).lexically_normal();
  rc.embeddings = resolve(emb).lexically_normal();
  detail::read_key(j, "split_seed", rc.split_seed);
  if (j.contains("training")) rc.training = train_config_from_json(j.at("training"));
  if (j.contains("experiments")) {
    rc.experiments = j.at("experiments");
    if (!rc.experiments.is_array()) throw ConfigError("'experiments' must be an array");
  }
  return rc;
}

json to_json(const RunConfig& rc) {
  return {{"corpus", rc.corpus.string()},
          {"embeddings", rc.embeddings.string()},
          {"split_seed", rc.split_seed},
          {"training", agrimuse::to_json(rc.training)},
          {"experiments", rc.experiments}};
}

RunConfig load_run_config(const fs::path& path) {
  return parse_run_config(read_json_file(path), fs::absolute(path).parent_path());
}

struct TrainOverrides {
  std::optional<std::string> variant;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_epochs;
  std::optional<int> batch_size;
  std::optional<int> patience;
  std::optional<double> lr;
  std::optional<int> warmup_epochs;
};

void apply(const TrainOverrides& o, TrainConfig& t) {
  if (o.variant) t.model.variant = model::parse_variant(*o.variant);
  if (o.seed) t.seed = *o.seed;
  if (o.max_epochs) t.max_epochs = *o.max_epochs;
  if (o.batch_size) t.batch_size = *o.batch_size;
  if (o.patience) t.patience = *o.patience;
  if (o.lr) t.lr = *o.lr;
  if (o.warmup_epochs) t.warmup_epochs = *o.warmup_epochs;
  validate(t);
}

fs::path run_dir(const std::string& name) {
  if (name.empty() || name.find('/') != std::string::npos || name == "." || name == "..") {
    throw ConfigError("bad run name '" + name + "'");
  }
  return runs_root() / name;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_gen_corpus(std::uint64_t seed, int count, const fs::path& out) {
  CorpusConfig cc;
  cc.museum_count = count;
  const Corpus corpus = generate_corpus(seed, cc);
  fs::create_directories(out);
  write_corpus((out / "corpus.json").string(), corpus);
  const auto long_descs = render_descriptions(corpus, DescriptionStyle::kLong);
  const auto brief_descs = render_descriptions(corpus, DescriptionStyle::kBrief);
  write_descriptions((out / "descriptions.jsonl").string(), long_descs);
  write_descriptions((out / "descriptions_brief.jsonl").string(), brief_descs);
  std::cout << corpus_stats(corpus.museums).to_string() << '\n';
  const auto split = split_corpus(corpus.museums);
  std::cout << "split train=" << split.train.size() << " validation=" << split.validation.size()
            << " test=" << split.test.size() << '\n';
  return kExitOk;
}

int cmd_gen_embeddings(const fs::path& corpus_path, const std::string& descriptions, const SynthConfig& cfg,
                       const fs::path& out) {
  validate(cfg);
  const Corpus corpus = read_corpus(corpus_path.string());
  fs::path desc_path = descriptions.empty() ? corpus_path.parent_path() / "descriptions.jsonl" : fs::path(descriptions);
  std::vector<Description> descs;
  if (fs::exists(desc_path)) {
    descs = read_descriptions(desc_path.string());
  } else if (descriptions.empty()) {
    descs = render_descriptions(corpus, DescriptionStyle::kLong);
  } else {
    throw InputError("descriptions file not found: " + desc_path.string());
  }
  fs::create_directories(out);
  const auto frames = synth_visual_embeddings(corpus, cfg);
  write_embeddings((out / kFramesFile).string(), frames);
  write_embeddings((out / kVideosFile).string(), video_level_embeddings(frames));
  write_embeddings((out / kTextFile).string(), synth_text_embeddings(corpus, descs, cfg));
  write_json_file(out / kSynthFile, agrimuse::to_json(cfg));
  std::cout << "wrote " << frames.size() << " videos and " << descs.size() << " descriptions (dim " << cfg.dim
            << ") to " << out.string() << '\n';
  return kExitOk;
}

int cmd_train(const fs::path& config_path, const TrainOverrides& o, const std::string& run_name) {
  RunConfig rc = load_run_config(config_path);
  apply(o, rc.training);
  const fs::path dir = run_dir(run_name);
  write_json_file(dir / "config.json", to_json(rc));
  const Dataset data = load_dataset(rc.corpus, rc.embeddings, rc.split_seed);
  TrainHooks<float> hooks;
  hooks.log = log_line;
  const auto result = train_on(data, rc.training, dir, hooks);
  std::cout << "best epoch " << result.history.best_epoch << ", stopped at " << result.history.stop_epoch
            << (result.history.early_stopped ? " (early stop)" : "") << "; checkpoint in " << dir.string() << '\n';
  return kExitOk;
}

int cmd_eval(const std::string& run_name, const std::string& split, const std::string& mode) {
  const fs::path dir = run_dir(run_name);
  if (!fs::exists(dir / "config.json")) throw InputError("no run config at " + (dir / "config.json").string());
  const RunConfig rc = parse_run_config(read_json_file(dir / "config.json"), dir);
  const Dataset data = load_dataset(rc.corpus, rc.embeddings, rc.split_seed);
  Report report;
  report.split = split;
  if (mode == "zeroshot") {
    report = zero_shot_report(features_for(data, split), split);
  } else {
    const auto m = load_checkpoint<float>(dir);
    if (mode == "fusion" && !model::is_fusion(m.cfg.variant)) {
      throw ConfigError("run '" + run_name + "' holds a " + model::to_string(m.cfg.variant) + " model, not a fusion variant");
    }
    if (mode == "trained" || mode == "fusion") {
      report.title = run_name;
      report.rows.push_back({model::to_string(m.cfg.variant), evaluate_model(m, features_for(data, split)), {}});
    } else if (mode == "transfer") {
      const Dataset held_out = make_transfer_dataset(data, TransferConfig{});
      const auto items = features_for(held_out, all_ids(held_out.corpus));
      report.title = run_name + ": brief descriptions, held-out corpus";
      report.split = "transfer-brief";
      report.rows.push_back({model::to_string(m.cfg.variant), evaluate_model(m, items), {}});
      ReportRow zs = zero_shot_report(items, report.split).rows.front();
      zs.label = "zero-shot " + zs.label;
      report.rows.push_back(std::move(zs));
    } else {
      throw ConfigError("unknown eval mode '" + mode + "'");
    }
  }
  const fs::path out = mode == "trained" && split == "test" ? dir : dir / ("eval-" + mode + "-" + report.split);
  write_report(out, report);
  std::cout << format_table(report);
  return kExitOk;
}

int cmd_run(const fs::path& config_path, const std::string& run_name, const TrainOverrides& o) {
  RunConfig rc = load_run_config(config_path);
  apply(o, rc.training);
  std::vector<ExperimentSpec> specs;
  for (const auto& e : rc.experiments) specs.push_back(experiment_from_json(e));
  if (specs.empty()) throw ConfigError("config lists no experiments");
  const fs::path dir = run_dir(run_name);
  json resolved = to_json(rc);
  resolved["experiments"] = json::array();
  for (const auto& s : specs) resolved["experiments"].push_back(agrimuse::to_json(s));
  write_json_file(dir / "config.json", resolved);
  const Dataset data = load_dataset(rc.corpus, rc.embeddings, rc.split_seed);
  json all = json::array();
  for (const auto& s : specs) {
    const Report r = run_experiment(s, data, rc.training, {dir / s.id, log_line});
    std::cout << format_table(r) << '\n';
    all.push_back(agrimuse::to_json(r));
  }
  write_json_file(dir / "metrics.json", {{"experiments", all}});
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"agrimuse: hierarchical text-to-museum retrieval"};
  app.require_subcommand(1);

  std::uint64_t corpus_seed = 7;
  int count = 457;
  std::string corpus_out = "data";
  auto* gen_corpus = app.add_subcommand("gen-corpus", "generate a synthetic corpus and its descriptions");
  gen_corpus->add_option("--seed", corpus_seed, "corpus seed")->capture_default_str();
  gen_corpus->add_option("--count", count, "number of museums")->capture_default_str();
  gen_corpus->add_option("--out", corpus_out, "output directory")->capture_default_str();

  SynthConfig synth;
  std::string emb_corpus;
  std::string emb_descs;
  std::string emb_out = "data/emb";
  auto* gen_emb = app.add_subcommand("gen-embeddings", "synthesise frame, video and sentence embeddings");
  gen_emb->add_option("--corpus", emb_corpus, "corpus.json")->required();
  gen_emb->add_option("--descriptions", emb_descs, "descriptions JSONL (default: next to the corpus)");
  gen_emb->add_option("--dim", synth.dim)->capture_default_str();
  gen_emb->add_option("--gamma", synth.gamma)->capture_default_str();
  gen_emb->add_option("--sigma-v", synth.sigma_v)->capture_default_str();
  gen_emb->add_option("--sigma-t", synth.sigma_t)->capture_default_str();
  gen_emb->add_option("--text-offset", synth.text_offset, "shared text-modality shift")->capture_default_str();
  gen_emb->add_option("--frames", synth.frames_per_video)->capture_default_str();
  gen_emb->add_option("--seed", synth.seed)->capture_default_str();
  gen_emb->add_option("--out", emb_out, "output directory")->capture_default_str();

  TrainOverrides over;
  auto add_overrides = [&](CLI::App* c) {
    c->add_option("--variant", over.variant, "model variant");
    c->add_option("--seed", over.seed, "training seed");
    c->add_option("--epochs", over.max_epochs, "maximum epochs");
    c->add_option("--batch-size", over.batch_size);
    c->add_option("--patience", over.patience);
    c->add_option("--lr", over.lr);
    c->add_option("--warmup", over.warmup_epochs, "epochs trained against all negatives first");
  };

  std::string config_path;
  std::string run_name;
  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  train_cmd->add_option("--config", config_path, "run config JSON")->required();
  train_cmd->add_option("--run-name", run_name)->required();
  add_overrides(train_cmd);

  std::string split = "test";
  std::string mode = "trained";
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained run");
  eval_cmd->add_option("--run-name", run_name)->required();
  eval_cmd->add_option("--split", split)->capture_default_str();
  eval_cmd->add_option("--mode", mode)
      ->check(CLI::IsMember({"trained", "zeroshot", "transfer", "fusion"}))
      ->capture_default_str();

  auto* run_cmd = app.add_subcommand("run", "run every experiment listed in a config");
  run_cmd->add_option("--config", config_path, "run config JSON")->required();
  run_cmd->add_option("--run-name", run_name)->required();
  add_overrides(run_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*gen_corpus) return cmd_gen_corpus(corpus_seed, count, corpus_out);
    if (*gen_emb) return cmd_gen_embeddings(emb_corpus, emb_descs, synth, emb_out);
    if (*train_cmd) return cmd_train(config_path, over, run_name);
    if (*eval_cmd) return cmd_eval(run_name, split, mode);
    if (*run_cmd) return cmd_run(config_path, run_name, over);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitConfig;
}
