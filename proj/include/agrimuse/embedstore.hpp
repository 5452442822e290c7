#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <zlib.h>
#include <Eigen/Dense>

#include "agrimuse/corpus.hpp"
#include "agrimuse/error.hpp"

namespace agrimuse {

struct EmbeddingEntry {
  std::string entity_id;
  std::uint32_t rows = 0;
  std::vector<float> values;  // rows x dim, row-major

  std::span<const float> row(std::size_t r, std::size_t dim) const {
    return {values.data() + r * dim, dim};
  }
};

/// Id-keyed collection of fixed-width embedding matrices. Entry order is
/// significant and preserved by the file format.
class EmbeddingSet {
 public:
  EmbeddingSet() = default;
  EmbeddingSet(std::string source_tag, std::uint32_t dim)
      : source_tag_(std::move(source_tag)), dim_(dim) {}

  const std::string& source_tag() const { return source_tag_; }
  void set_source_tag(std::string tag) { source_tag_ = std::move(tag); }
  std::uint32_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<EmbeddingEntry>& entries() const { return entries_; }

  void add(EmbeddingEntry e) {
    if (e.rows == 0) throw InputError("embedding entry '" + e.entity_id + "' has no rows");
    if (e.values.size() != static_cast<std::size_t>(e.rows) * dim_) {
      throw ShapeError("embedding entry '" + e.entity_id + "' has " +
                       std::to_string(e.values.size()) + " values, expected rows*dim = " +
                       std::to_string(static_cast<std::size_t>(e.rows) * dim_));
    }
    if (index_.count(e.entity_id)) throw InputError("duplicate embedding id '" + e.entity_id + "'");
    index_.emplace(e.entity_id, entries_.size());
    entries_.push_back(std::move(e));
  }

  const EmbeddingEntry* find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &entries_[it->second];
  }

  const EmbeddingEntry& at(const std::string& id) const {
    if (const auto* e = find(id)) return *e;
    throw InputError("no embedding for '" + id + "' in set '" + source_tag_ + "'");
  }

  /// Content equality (dim, ids, rows, and value bits). The source tag is
  /// not part of the persisted content.
  bool same_content(const EmbeddingSet& o) const {
    if (dim_ != o.dim_ || entries_.size() != o.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& a = entries_[i];
      const auto& b = o.entries_[i];
      if (a.entity_id != b.entity_id || a.rows != b.rows || a.values.size() != b.values.size()) {
        return false;
      }
      if (std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(float)) != 0) {
        return false;
      }
    }
    return true;
  }

 private:
  std::string source_tag_;
  std::uint32_t dim_ = 0;
  std::vector<EmbeddingEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Binary container
//
//   magic "AGRIEMB\0" | version u32 | dim u32 | count u32
//   index: count x (id_len u16, id bytes, rows u32)
//   payload: float32 rows, entries in index order
//   crc32 u32 over the payload
//
// All integers and floats little-endian.

inline constexpr std::string_view kEmbeddingMagic{"AGRIEMB\0", 8};
inline constexpr std::uint32_t kEmbeddingVersion = 1;

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large payloads in chunks.
  constexpr std::size_t kChunk = 1u << 30;
  while (n > 0) {
    const std::size_t take = n < kChunk ? n : kChunk;
    crc = ::crc32(crc, data, static_cast<uInt>(take));
    data += take;
    n -= take;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_embeddings(const EmbeddingSet& set) {
  if (set.dim() == 0) throw InputError("embedding set dim must be positive");
  std::vector<std::uint8_t> out(kEmbeddingMagic.begin(), kEmbeddingMagic.end());
  detail::put_u32(out, kEmbeddingVersion);
  detail::put_u32(out, set.dim());
  detail::put_u32(out, static_cast<std::uint32_t>(set.size()));
  for (const auto& e : set.entries()) {
    if (e.entity_id.size() > 0xffff) throw InputError("entity id too long: " + e.entity_id);
    detail::put_u16(out, static_cast<std::uint16_t>(e.entity_id.size()));
    out.insert(out.end(), e.entity_id.begin(), e.entity_id.end());
    detail::put_u32(out, e.rows);
  }
  const std::size_t payload_start = out.size();
  for (const auto& e : set.entries()) {
    for (float v : e.values) {
      if (!std::isfinite(v)) throw NumericError("non-finite value in entry '" + e.entity_id + "'");
      detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
  }
  detail::put_u32(out, detail::crc32_of(out.data() + payload_start, out.size() - payload_start));
  return out;
}

inline EmbeddingSet decode_embeddings(std::span<const std::uint8_t> bytes,
                                      std::string source_tag = {}) {
  std::size_t pos = 0;
  auto need = [&](std::size_t n, const char* what) {
    if (bytes.size() - pos < n) {
      throw FormatError(std::string("truncated file while reading ") + what, pos);
    }
  };

  need(8, "magic");
  if (std::memcmp(bytes.data(), kEmbeddingMagic.data(), 8) != 0) {
    throw FormatError("bad magic, not an AGRIEMB file", 0);
  }
  pos = 8;
  need(12, "header");
  const auto version = detail::get_u32(bytes.data() + pos);
  if (version != kEmbeddingVersion) {
    throw FormatError("unsupported version " + std::to_string(version), pos);
  }
  const auto dim = detail::get_u32(bytes.data() + pos + 4);
  const auto count = detail::get_u32(bytes.data() + pos + 8);
  if (dim == 0) throw FormatError("dim must be positive", pos + 4);
  pos += 12;

  struct IndexItem {
    std::string id;
    std::uint32_t rows;
  };
  std::vector<IndexItem> index;
  index.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    need(2, "index id length");
    const auto len = detail::get_u16(bytes.data() + pos);
    pos += 2;
    need(len, "index id");
    std::string id(reinterpret_cast<const char*>(bytes.data() + pos), len);
    pos += len;
    need(4, "index rows");
    const auto rows = detail::get_u32(bytes.data() + pos);
    if (rows == 0) throw FormatError("entry '" + id + "' has zero rows", pos);
    pos += 4;
    index.push_back({std::move(id), rows});
  }

  const std::size_t payload_start = pos;
  std::size_t payload_floats = 0;
  for (const auto& it : index) payload_floats += static_cast<std::size_t>(it.rows) * dim;
  need(payload_floats * 4, "payload");
  pos += payload_floats * 4;
  need(4, "checksum");
  const auto stored_crc = detail::get_u32(bytes.data() + pos);
  const auto actual_crc = detail::crc32_of(bytes.data() + payload_start, payload_floats * 4);
  if (stored_crc != actual_crc) throw FormatError("payload checksum mismatch", pos);
  if (pos + 4 != bytes.size()) throw FormatError("trailing bytes after checksum", pos + 4);

  EmbeddingSet set(std::move(source_tag), dim);
  std::size_t off = payload_start;
  for (auto& it : index) {
    EmbeddingEntry e;
    e.entity_id = std::move(it.id);
    e.rows = it.rows;
    e.values.resize(static_cast<std::size_t>(it.rows) * dim);
    for (auto& v : e.values) {
      v = std::bit_cast<float>(detail::get_u32(bytes.data() + off));
      if (!std::isfinite(v)) throw FormatError("non-finite payload value", off);
      off += 4;
    }
    try {
      set.add(std::move(e));
    } catch (const InputError& err) {
      throw FormatError(err.what(), payload_start);
    }
  }
  return set;
}

inline void write_embeddings(const std::string& path, const EmbeddingSet& set) {
  const auto bytes = encode_embeddings(set);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed for " + path);
}

/// Reads a container file. The source tag is not persisted; callers pass
/// the tag their configuration associates with the path.
inline EmbeddingSet read_embeddings(const std::string& path, std::string source_tag = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open embedding file " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_embeddings(bytes, std::move(source_tag));
}

// ---------------------------------------------------------------------------
// Synthetic embeddings

/// Parameters for the stand-in pretrained encoders. Every text row also gets
/// `text_offset` times a shared unit direction before normalization, a
/// modality offset that the visual rows never see.
struct SynthConfig {
  std::uint32_t dim = 512;
  std::uint32_t frames_per_video = 32;
  double sigma_v = 0.05;
  double sigma_t = 0.02;
  double gamma = 0.5;
  double text_offset = 5.0;
  std::uint64_t seed = 0;
};

inline void validate(const SynthConfig& cfg) {
  if (cfg.dim < 8) throw ConfigError("synthetic embedding dim must be >= 8");
  if (cfg.frames_per_video < 1) throw ConfigError("frames_per_video must be >= 1");
  if (!(cfg.sigma_v > 0.0)) throw ConfigError("sigma_v must be > 0");
  if (!(cfg.sigma_t > 0.0)) throw ConfigError("sigma_t must be > 0");
  if (!(cfg.gamma >= 0.0 && cfg.gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (!(cfg.text_offset >= 0.0)) throw ConfigError("text_offset must be >= 0");
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Independent stream per (seed, stream label).
inline std::mt19937_64 stream_rng(std::uint64_t seed, std::string_view label) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(fnv1a(label))));
}

inline Eigen::VectorXd gaussian(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = nd(rng);
  return v;
}

inline Eigen::VectorXd unit_gaussian(std::mt19937_64& rng, Eigen::Index n) {
  Eigen::VectorXd v = gaussian(rng, n);
  return v / v.norm();
}

inline void append_unit_row(std::vector<float>& out, const Eigen::VectorXd& v) {
  const double norm = v.norm();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(static_cast<float>(v[i] / norm));
}

}  // namespace detail

/// Topic and structure centers shared by the visual and textual generators.
/// Everything is a pure function of (vocabulary size, cfg).
struct SynthCenters {
  Eigen::MatrixXd visual;        // topics x dim, unit rows
  Eigen::MatrixXd text;          // topics x dim, unit rows
  Eigen::MatrixXd museum_count;  // 9 x dim, row n for "n rooms"
  Eigen::MatrixXd room_count;    // 9 x dim, row n for "n videos"
  Eigen::VectorXd text_shift;    // unit, shared by all text rows

  SynthCenters(std::size_t topics, const SynthConfig& cfg) {
    validate(cfg);
    const Eigen::Index d = cfg.dim;
    auto rng = detail::stream_rng(cfg.seed, "centers");
    auto fill = [&](Eigen::MatrixXd& m, Eigen::Index rows) {
      m.resize(rows, d);
      for (Eigen::Index r = 0; r < rows; ++r) m.row(r) = detail::unit_gaussian(rng, d).transpose();
    };
    fill(visual, static_cast<Eigen::Index>(topics));
    fill(text, static_cast<Eigen::Index>(topics));
    fill(museum_count, 9);
    fill(room_count, 9);
    text_shift = detail::unit_gaussian(rng, d);
  }

  Eigen::VectorXd text_noise(std::mt19937_64& rng, const SynthConfig& cfg) const {
    return cfg.text_offset * text_shift + cfg.sigma_t * detail::gaussian(rng, cfg.dim);
  }
};

/// One entry per video (rows = frames_per_video); each frame is
/// normalize(c_topic + N(0, sigma_v^2 I)).
inline EmbeddingSet synth_visual_embeddings(const Corpus& corpus, const SynthConfig& cfg) {
  const SynthCenters centers(corpus.vocabulary.size(), cfg);
  EmbeddingSet set("synthetic-visual", cfg.dim);
  for (const auto& m : corpus.museums) {
    for (const auto& room : m.rooms) {
      for (const auto& video : room.videos) {
        if (video.topic_id < 0 || static_cast<std::size_t>(video.topic_id) >= corpus.vocabulary.size()) {
          throw InputError("video " + video.id + " has a topic outside the vocabulary");
        }
        auto rng = detail::stream_rng(cfg.seed, "frames:" + video.id);
        EmbeddingEntry e;
        e.entity_id = video.id;
        e.rows = cfg.frames_per_video;
        e.values.reserve(static_cast<std::size_t>(e.rows) * cfg.dim);
        const Eigen::VectorXd c = centers.visual.row(video.topic_id).transpose();
        for (std::uint32_t f = 0; f < cfg.frames_per_video; ++f) {
          detail::append_unit_row(e.values, c + cfg.sigma_v * detail::gaussian(rng, cfg.dim));
        }
        set.add(std::move(e));
      }
    }
  }
  return set;
}

/// Video-level features: temporal mean of each entry's rows, renormalized.
inline EmbeddingSet video_level_embeddings(const EmbeddingSet& frames,
                                           std::string source_tag = "synthetic-video") {
  const std::size_t dim = frames.dim();
  EmbeddingSet set(std::move(source_tag), frames.dim());
  for (const auto& e : frames.entries()) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    for (std::uint32_t r = 0; r < e.rows; ++r) {
      for (std::size_t k = 0; k < dim; ++k) mean[static_cast<Eigen::Index>(k)] += e.values[r * dim + k];
    }
    EmbeddingEntry out;
    out.entity_id = e.entity_id;
    out.rows = 1;
    out.values.reserve(dim);
    detail::append_unit_row(out.values, mean);
    set.add(std::move(out));
  }
  return set;
}

inline std::string description_entity_id(const std::string& museum_id) {
  return museum_id + "#desc";
}

/// One entry per description (rows = sentence count). Topic sentences map to
/// normalize(gamma c_t + (1 - gamma) g_t + offset + noise); structure
/// sentences map to normalize(s_count + offset + noise).
inline EmbeddingSet synth_text_embeddings(const Corpus& corpus,
                                          std::span<const Description> descriptions,
                                          const SynthConfig& cfg) {
  const SynthCenters centers(corpus.vocabulary.size(), cfg);
  const SentenceTagger tagger(corpus.vocabulary);
  EmbeddingSet set("synthetic-text", cfg.dim);
  for (const auto& d : descriptions) {
    const auto sentences = d.sentences.empty() ? split_sentences(d.text) : d.sentences;
    if (sentences.empty()) throw InputError("description of " + d.museum_id + " has no sentences");
    const std::string id = description_entity_id(d.museum_id);
    auto rng = detail::stream_rng(cfg.seed, "text:" + to_string(d.style) + ":" + id);
    EmbeddingEntry e;
    e.entity_id = id;
    e.rows = static_cast<std::uint32_t>(sentences.size());
    e.values.reserve(sentences.size() * cfg.dim);
    for (const auto& s : sentences) {
      const auto tag = tagger.tag(s);
      Eigen::VectorXd base;
      switch (tag.kind) {
        case SentenceKind::kMuseumCount:
          base = centers.museum_count.row(tag.value).transpose();
          break;
        case SentenceKind::kRoomCount:
          base = centers.room_count.row(tag.value).transpose();
          break;
        case SentenceKind::kTopic:
          base = cfg.gamma * centers.visual.row(tag.value).transpose() +
                 (1.0 - cfg.gamma) * centers.text.row(tag.value).transpose();
          break;
      }
      detail::append_unit_row(e.values, base + centers.text_noise(rng, cfg));
    }
    set.add(std::move(e));
  }
  return set;
}

}  // namespace agrimuse
