#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "agrimuse/embedstore.hpp"
#include "agrimuse/model/hierarchical.hpp"
#include "agrimuse/training.hpp"

namespace agrimuse {

// A checkpoint is a pair of files in one directory:
//   checkpoint.emb   the embedding container, one entry per tensor
//                    (dim 1, rows = element count, row-major values)
//   checkpoint.json  model config plus every tensor's shape
// Parameters and batchnorm running statistics are both stored.

inline constexpr const char* kCheckpointTensors = "checkpoint.emb";
inline constexpr const char* kCheckpointMeta = "checkpoint.json";

template <typename S>
void save_checkpoint(const std::filesystem::path& dir, model::HierarchicalModel<S>& m,
                     const nlohmann::json& extra = nlohmann::json::object()) {
  std::filesystem::create_directories(dir);
  EmbeddingSet set("checkpoint", 1);
  nlohmann::json shapes = nlohmann::json::array();
  auto put = [&](nn::Param<S>& p) {
    EmbeddingEntry e;
    e.entity_id = p.name;
    e.rows = static_cast<std::uint32_t>(p.value.size());
    e.values.resize(static_cast<std::size_t>(p.value.size()));
    for (nn::Index i = 0; i < p.value.size(); ++i) e.values[static_cast<std::size_t>(i)] = static_cast<float>(p.value.data()[i]);
    set.add(std::move(e));
    shapes.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  };
  m.for_each_param(put);
  m.for_each_buffer(put);
  write_embeddings((dir / kCheckpointTensors).string(), set);

  nlohmann::json meta{{"model", to_json(m.cfg)}, {"tensors", shapes}};
  for (const auto& [k, v] : extra.items()) meta[k] = v;
  std::ofstream out(dir / kCheckpointMeta);
  if (!out) throw InputError("cannot write " + (dir / kCheckpointMeta).string());
  out << meta.dump(2) << '\n';
}

inline nlohmann::json read_checkpoint_meta(const std::filesystem::path& dir) {
  const auto path = dir / kCheckpointMeta;
  std::ifstream in(path);
  if (!in) throw InputError("no checkpoint at " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed " + path.string() + ": " + e.what());
  }
}

template <typename S = float>
model::HierarchicalModel<S> load_checkpoint(const std::filesystem::path& dir) {
  const auto meta = read_checkpoint_meta(dir);
  if (!meta.contains("model")) throw InputError("checkpoint metadata lacks the model config");
  model::HierarchicalModel<S> m(model_config_from_json(meta.at("model")));
  const auto set = read_embeddings((dir / kCheckpointTensors).string(), "checkpoint");
  if (set.dim() != 1) throw InputError("checkpoint tensors must be stored with dim 1");
  std::size_t loaded = 0;
  auto take = [&](nn::Param<S>& p) {
    const auto& e = set.at(p.name);
    if (e.rows != static_cast<std::uint32_t>(p.value.size())) {
      throw ShapeError("checkpoint tensor '" + p.name + "' has " + std::to_string(e.rows) + " values, model expects " +
                       std::to_string(p.value.size()));
    }
    for (nn::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<S>(e.values[static_cast<std::size_t>(i)]);
    ++loaded;
  };
  m.for_each_param(take);
  m.for_each_buffer(take);
  if (loaded != set.size()) throw InputError("checkpoint holds tensors the model does not use");
  return m;
}

}  // namespace agrimuse
