#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agrimuse/corpus.hpp"
#include "agrimuse/embedstore.hpp"
#include "agrimuse/model/adapter_block.hpp"
#include "agrimuse/neural/gru.hpp"

namespace agrimuse::model {

enum class Variant {
  kHL,
  kNHLMuseum,
  kNHLVideoMuseum,
  kNHLRoomMuseum,
  kHLSkipAdapter,
  kHLEarlyFusion,
  kHLLateFusion,
};

inline constexpr std::array<Variant, 7> kAllVariants{
    Variant::kHL,          Variant::kNHLMuseum,     Variant::kNHLVideoMuseum, Variant::kNHLRoomMuseum,
    Variant::kHLSkipAdapter, Variant::kHLEarlyFusion, Variant::kHLLateFusion};

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::kHL: return "HL";
    case Variant::kNHLMuseum: return "NHL_museum";
    case Variant::kNHLVideoMuseum: return "NHL_video_museum";
    case Variant::kNHLRoomMuseum: return "NHL_room_museum";
    case Variant::kHLSkipAdapter: return "HL_skip_adapter";
    case Variant::kHLEarlyFusion: return "HL_early_fusion";
    case Variant::kHLLateFusion: return "HL_late_fusion";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  for (auto v : kAllVariants) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown variant '" + s + "'");
}

inline bool uses_frames(Variant v) { return v != Variant::kHLSkipAdapter; }

inline bool uses_video_vectors(Variant v) {
  return v == Variant::kHLSkipAdapter || v == Variant::kHLEarlyFusion || v == Variant::kHLLateFusion;
}

inline bool is_fusion(Variant v) { return v == Variant::kHLEarlyFusion || v == Variant::kHLLateFusion; }

struct ModelConfig {
  Variant variant = Variant::kHL;
  Index frame_dim = 512;  // frame-level visual source
  Index video_dim = 512;  // video-level visual source
  Index text_dim = 512;
  Index hidden = 512;
  Index joint = 256;
  Index text_hidden = 256;
  Index kernel = 3;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
};

// ---------------------------------------------------------------------------
// Feature bundles: views into loaded embedding sets, shaped like the museum.

struct FeatureView {
  const float* data = nullptr;
  Index rows = 0;
  Index dim = 0;

  static FeatureView of(const EmbeddingEntry& e, std::uint32_t dim) {
    return {e.values.data(), static_cast<Index>(e.rows), static_cast<Index>(dim)};
  }
};

struct MuseumFeatures {
  std::string museum_id;
  std::vector<std::vector<FeatureView>> frames;         // room -> video -> frames x D
  std::vector<std::vector<FeatureView>> video_vectors;  // room -> video -> 1 x D'
  FeatureView sentences;                                // S x D_text

  std::size_t room_count() const { return std::max(frames.size(), video_vectors.size()); }
};

/// Binds a museum to its embeddings. Either visual source may be null when
/// the variant does not need it; missing entities raise InputError.
inline MuseumFeatures make_features(const Museum& museum, const EmbeddingSet* frames,
                                    const EmbeddingSet* videos, const EmbeddingSet* text) {
  MuseumFeatures f;
  f.museum_id = museum.id;
  for (const auto& room : museum.rooms) {
    if (frames) f.frames.emplace_back();
    if (videos) f.video_vectors.emplace_back();
    for (const auto& v : room.videos) {
      if (frames) f.frames.back().push_back(FeatureView::of(frames->at(v.id), frames->dim()));
      if (videos) {
        const auto& e = videos->at(v.id);
        if (e.rows != 1) throw InputError("video-level entry '" + v.id + "' must have exactly 1 row");
        f.video_vectors.back().push_back(FeatureView::of(e, videos->dim()));
      }
    }
  }
  if (text) f.sentences = FeatureView::of(text->at(description_entity_id(museum.id)), text->dim());
  return f;
}

template <typename S>
Mat<S> to_matrix(const FeatureView& v) {
  Mat<S> m(v.rows, v.dim);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(v.data[i]);
  return m;
}

/// All visual inputs of a mini-batch stacked in museum -> room -> video
/// order, with the segmentations each hierarchy level needs.
template <typename S>
struct VisualBatch {
  Index museums = 0;
  Mat<S> frames;
  Mat<S> videos;
  Segments video_frames;   // frames per video
  Segments room_frames;    // frames per room
  Segments museum_frames;  // frames per museum
  Segments room_videos;    // videos per room
  Segments museum_videos;  // videos per museum
  Segments museum_rooms;   // rooms per museum
};

template <typename S>
VisualBatch<S> gather_visual(std::span<const MuseumFeatures* const> items, bool need_frames,
                             bool need_videos) {
  VisualBatch<S> b;
  b.museums = static_cast<Index>(items.size());
  Index frame_rows = 0;
  Index video_rows = 0;
  Index frame_dim = 0;
  Index video_dim = 0;
  for (const auto* it : items) {
    const auto rooms = it->room_count();
    if (need_frames && it->frames.size() != rooms) throw InputError("museum " + it->museum_id + " lacks frame features");
    if (need_videos && it->video_vectors.size() != rooms) {
      throw InputError("museum " + it->museum_id + " lacks video-level features");
    }
    if (rooms == 0) throw InputError("museum " + it->museum_id + " has no rooms");
    Index m_frames = 0;
    Index m_videos = 0;
    for (std::size_t r = 0; r < rooms; ++r) {
      const std::size_t n_videos = need_frames ? it->frames[r].size() : it->video_vectors[r].size();
      if (n_videos == 0) throw InputError("museum " + it->museum_id + " has an empty room");
      Index r_frames = 0;
      for (std::size_t v = 0; v < n_videos; ++v) {
        if (need_frames) {
          const auto& fv = it->frames[r][v];
          if (frame_dim == 0) frame_dim = fv.dim;
          if (fv.dim != frame_dim) throw ShapeError("inconsistent frame dims in batch");
          b.video_frames.push(fv.rows);
          r_frames += fv.rows;
          frame_rows += fv.rows;
        }
        if (need_videos) {
          const auto& vv = it->video_vectors[r][v];
          if (video_dim == 0) video_dim = vv.dim;
          if (vv.dim != video_dim) throw ShapeError("inconsistent video dims in batch");
          ++video_rows;
        }
      }
      if (need_frames) b.room_frames.push(r_frames);
      b.room_videos.push(static_cast<Index>(n_videos));
      m_frames += r_frames;
      m_videos += static_cast<Index>(n_videos);
    }
    if (need_frames) b.museum_frames.push(m_frames);
    b.museum_videos.push(m_videos);
    b.museum_rooms.push(static_cast<Index>(rooms));
  }

  if (need_frames) {
    b.frames.resize(frame_rows, frame_dim);
    Index row = 0;
    for (const auto* it : items) {
      for (const auto& room : it->frames) {
        for (const auto& fv : room) {
          for (Index i = 0; i < fv.rows * fv.dim; ++i) b.frames.data()[row * frame_dim + i] = static_cast<S>(fv.data[i]);
          row += fv.rows;
        }
      }
    }
  }
  if (need_videos) {
    b.videos.resize(video_rows, video_dim);
    Index row = 0;
    for (const auto* it : items) {
      for (const auto& room : it->video_vectors) {
        for (const auto& vv : room) {
          for (Index k = 0; k < video_dim; ++k) b.videos(row, k) = static_cast<S>(vv.data[k]);
          ++row;
        }
      }
    }
  }
  return b;
}

// ---------------------------------------------------------------------------
// Model

/// Parameters of the hierarchical museum encoder and the description
/// encoder. Which blocks exist depends on the variant.
template <typename S>
struct HierarchicalModel {
  ModelConfig cfg;
  std::optional<AdapterBlock<S>> video_adapter;
  std::optional<AdapterBlock<S>> room_encoder;
  std::optional<AdapterBlock<S>> room_encoder_b;  // video-level path of late fusion
  std::optional<AdapterBlock<S>> museum_encoder;
  std::optional<nn::Linear<S>> fusion;
  nn::BiGru<S> text;

  explicit HierarchicalModel(const ModelConfig& c) : cfg(c) {
    const Index D = c.frame_dim;
    const Index Dv = c.video_dim;
    const Index H = c.hidden;
    const Index J = c.joint;
    auto block = [&](const char* name, Index in) {
      return AdapterBlock<S>(name, in, H, J, c.kernel, c.bn_eps, c.bn_momentum);
    };
    switch (c.variant) {
      case Variant::kHL:
        video_adapter = block("video_adapter", D);
        room_encoder = block("room_encoder", J);
        museum_encoder = block("museum_encoder", J);
        break;
      case Variant::kNHLMuseum:
        museum_encoder = block("museum_encoder", D);
        break;
      case Variant::kNHLVideoMuseum:
        video_adapter = block("video_adapter", D);
        museum_encoder = block("museum_encoder", J);
        break;
      case Variant::kNHLRoomMuseum:
        room_encoder = block("room_encoder", D);
        museum_encoder = block("museum_encoder", J);
        break;
      case Variant::kHLSkipAdapter:
        room_encoder = block("room_encoder", Dv);
        museum_encoder = block("museum_encoder", J);
        break;
      case Variant::kHLEarlyFusion:
        video_adapter = block("video_adapter", D);
        fusion = nn::Linear<S>("fusion", J + Dv, J);
        room_encoder = block("room_encoder", J);
        museum_encoder = block("museum_encoder", J);
        break;
      case Variant::kHLLateFusion:
        video_adapter = block("video_adapter", D);
        room_encoder = block("room_encoder", J);
        room_encoder_b = block("room_encoder_b", Dv);
        fusion = nn::Linear<S>("fusion", 2 * J, J);
        museum_encoder = block("museum_encoder", J);
        break;
    }
    text = nn::BiGru<S>("text", c.text_dim, c.text_hidden, J);
  }

  template <typename Rng>
  void init(Rng& rng) {
    for (auto* b : {&video_adapter, &room_encoder, &room_encoder_b, &museum_encoder}) {
      if (*b) (*b)->init(rng);
    }
    if (fusion) fusion->init(rng);
    text.init(rng);
  }

  template <typename F>
  void for_each_param(F&& f) {
    for (auto* b : {&video_adapter, &room_encoder, &room_encoder_b, &museum_encoder}) {
      if (*b) (*b)->for_each_param(f);
    }
    if (fusion) fusion->for_each_param(f);
    text.for_each_param(f);
  }

  template <typename F>
  void for_each_buffer(F&& f) {
    for (auto* b : {&video_adapter, &room_encoder, &room_encoder_b, &museum_encoder}) {
      if (*b) (*b)->for_each_buffer(f);
    }
  }

  std::vector<nn::Param<S>*> parameters() {
    std::vector<nn::Param<S>*> out;
    for_each_param([&](nn::Param<S>& p) { out.push_back(&p); });
    return out;
  }

  void zero_grad() {
    for_each_param([](nn::Param<S>& p) { p.zero_grad(); });
  }

  Index parameter_count() {
    Index n = 0;
    for_each_param([&](nn::Param<S>& p) { n += p.size(); });
    return n;
  }
};

// ---------------------------------------------------------------------------
// Single-sequence encoders

template <typename S>
RowVec<S> encode_video(const AdapterBlock<S>& adapter, const Mat<S>& frames, Mode mode) {
  if (frames.rows() < 1) throw InputError("encode_video: no frames");
  return adapter_forward(adapter, frames, Segments::single(frames.rows()), mode).row(0);
}

template <typename S>
RowVec<S> encode_room(const AdapterBlock<S>& encoder, const Mat<S>& video_vectors, Mode mode) {
  if (video_vectors.rows() < 1) throw InputError("encode_room: no videos");
  return adapter_forward(encoder, video_vectors, Segments::single(video_vectors.rows()), mode).row(0);
}

/// L2-normalised museum vector from room vectors.
template <typename S>
RowVec<S> encode_museum(const AdapterBlock<S>& encoder, const Mat<S>& room_vectors, Mode mode) {
  if (room_vectors.rows() < 1) throw InputError("encode_museum: no rooms");
  Mat<S> out = adapter_forward(encoder, room_vectors, Segments::single(room_vectors.rows()), mode);
  return nn::l2_normalize_rows(out).row(0);
}

template <typename S>
RowVec<S> encode_description(const nn::BiGru<S>& text, const Mat<S>& sentences) {
  if (sentences.rows() < 1) throw InputError("encode_description: no sentences");
  Mat<S> out(1, text.output());
  out.row(0) = nn::bigru_encode(text, sentences);
  return nn::l2_normalize_rows(out).row(0);
}

// ---------------------------------------------------------------------------
// Batched visual path

template <typename S>
struct VisualTrace {
  AdapterTrace<S> video;
  AdapterTrace<S> room;
  AdapterTrace<S> room_b;
  AdapterTrace<S> museum;
  Mat<S> fusion_in;
  Mat<S> out;
  RowVec<S> norms;
};

namespace detail {

template <typename S>
const AdapterBlock<S>& need(const std::optional<AdapterBlock<S>>& b, const char* name) {
  if (!b) throw ConfigError(std::string("model has no ") + name + " block for this variant");
  return *b;
}

template <typename S>
Mat<S> hcat(const Mat<S>& a, const Mat<S>& b) {
  if (a.rows() != b.rows()) throw ShapeError("fusion: row mismatch between sources");
  Mat<S> out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a;
  out.rightCols(b.cols()) = b;
  return out;
}

}  // namespace detail

/// f_museum for every museum in the batch (B x J, unit rows).
template <typename S>
Mat<S> encode_visual(const HierarchicalModel<S>& m, const VisualBatch<S>& b, Mode mode,
                     VisualTrace<S>* tr = nullptr) {
  using detail::need;
  const auto v = m.cfg.variant;
  if (uses_frames(v) && b.frames.rows() == 0) throw ConfigError(to_string(v) + " requires frame-level features");
  if (uses_video_vectors(v) && b.videos.rows() == 0) {
    throw ConfigError(to_string(v) + " requires a video-level feature source");
  }
  auto fwd = [&](const std::optional<AdapterBlock<S>>& blk, const char* name, Mat<S> x, const Segments& seg,
                 AdapterTrace<S>* t) { return adapter_forward(need(blk, name), std::move(x), seg, mode, t); };

  Mat<S> rooms;
  Mat<S> museums;
  switch (v) {
    case Variant::kHL: {
      Mat<S> videos = fwd(m.video_adapter, "video_adapter", b.frames, b.video_frames, tr ? &tr->video : nullptr);
      rooms = fwd(m.room_encoder, "room_encoder", std::move(videos), b.room_videos, tr ? &tr->room : nullptr);
      break;
    }
    case Variant::kHLSkipAdapter:
      rooms = fwd(m.room_encoder, "room_encoder", b.videos, b.room_videos, tr ? &tr->room : nullptr);
      break;
    case Variant::kNHLMuseum:
      museums = fwd(m.museum_encoder, "museum_encoder", b.frames, b.museum_frames, tr ? &tr->museum : nullptr);
      break;
    case Variant::kNHLVideoMuseum: {
      Mat<S> videos = fwd(m.video_adapter, "video_adapter", b.frames, b.video_frames, tr ? &tr->video : nullptr);
      museums = fwd(m.museum_encoder, "museum_encoder", std::move(videos), b.museum_videos, tr ? &tr->museum : nullptr);
      break;
    }
    case Variant::kNHLRoomMuseum:
      rooms = fwd(m.room_encoder, "room_encoder", b.frames, b.room_frames, tr ? &tr->room : nullptr);
      break;
    case Variant::kHLEarlyFusion: {
      if (!m.fusion) throw ConfigError("early fusion model lacks its projection");
      Mat<S> va = fwd(m.video_adapter, "video_adapter", b.frames, b.video_frames, tr ? &tr->video : nullptr);
      Mat<S> joined = detail::hcat(va, b.videos);
      Mat<S> videos = nn::linear_forward(*m.fusion, joined);
      if (tr) tr->fusion_in = std::move(joined);
      rooms = fwd(m.room_encoder, "room_encoder", std::move(videos), b.room_videos, tr ? &tr->room : nullptr);
      break;
    }
    case Variant::kHLLateFusion: {
      if (!m.fusion) throw ConfigError("late fusion model lacks its projection");
      Mat<S> va = fwd(m.video_adapter, "video_adapter", b.frames, b.video_frames, tr ? &tr->video : nullptr);
      Mat<S> ra = fwd(m.room_encoder, "room_encoder", std::move(va), b.room_videos, tr ? &tr->room : nullptr);
      Mat<S> rb = fwd(m.room_encoder_b, "room_encoder_b", b.videos, b.room_videos, tr ? &tr->room_b : nullptr);
      Mat<S> joined = detail::hcat(ra, rb);
      rooms = nn::linear_forward(*m.fusion, joined);
      if (tr) tr->fusion_in = std::move(joined);
      break;
    }
  }
  if (museums.size() == 0) {
    museums = fwd(m.museum_encoder, "museum_encoder", std::move(rooms), b.museum_rooms, tr ? &tr->museum : nullptr);
  }
  if (!tr) return nn::l2_normalize_rows(museums);
  tr->out = nn::l2_normalize_rows(museums, &tr->norms);
  return tr->out;
}

/// Folds train-mode batch statistics of a traced forward pass into the
/// running statistics.
template <typename S>
void update_running_stats(HierarchicalModel<S>& m, const VisualTrace<S>& tr) {
  if (m.video_adapter) adapter_update_running(*m.video_adapter, tr.video);
  if (m.room_encoder) adapter_update_running(*m.room_encoder, tr.room);
  if (m.room_encoder_b) adapter_update_running(*m.room_encoder_b, tr.room_b);
  if (m.museum_encoder) adapter_update_running(*m.museum_encoder, tr.museum);
}

/// Backward from dL/d(normalised museum rows). Visual inputs are frozen, so
/// no gradient is formed for them.
template <typename S>
void encode_visual_backward(HierarchicalModel<S>& m, const VisualTrace<S>& tr, const Mat<S>& grad_out) {
  const Mat<S> g_museums = nn::l2_normalize_rows_backward(tr.out, tr.norms, grad_out);
  Mat<S>* const no_grad = nullptr;
  const auto v = m.cfg.variant;
  Mat<S> g_rooms;
  Mat<S> g_videos;
  const bool museum_takes_raw = v == Variant::kNHLMuseum;
  adapter_backward(*m.museum_encoder, tr.museum, g_museums, museum_takes_raw ? nullptr : &g_rooms);

  switch (v) {
    case Variant::kHL:
      adapter_backward(*m.room_encoder, tr.room, g_rooms, &g_videos);
      adapter_backward(*m.video_adapter, tr.video, g_videos, no_grad);
      break;
    case Variant::kHLSkipAdapter:
    case Variant::kNHLRoomMuseum:
      adapter_backward(*m.room_encoder, tr.room, g_rooms, no_grad);
      break;
    case Variant::kNHLMuseum:
      break;
    case Variant::kNHLVideoMuseum:
      // g_rooms holds the gradient w.r.t. the video vectors here.
      adapter_backward(*m.video_adapter, tr.video, g_rooms, no_grad);
      break;
    case Variant::kHLEarlyFusion: {
      adapter_backward(*m.room_encoder, tr.room, g_rooms, &g_videos);
      Mat<S> g_joined;
      nn::linear_backward(*m.fusion, tr.fusion_in, g_videos, &g_joined);
      const Mat<S> g_va = g_joined.leftCols(m.cfg.joint);
      adapter_backward(*m.video_adapter, tr.video, g_va, no_grad);
      break;
    }
    case Variant::kHLLateFusion: {
      Mat<S> g_joined;
      nn::linear_backward(*m.fusion, tr.fusion_in, g_rooms, &g_joined);
      const Mat<S> g_ra = g_joined.leftCols(m.cfg.joint);
      const Mat<S> g_rb = g_joined.rightCols(m.cfg.joint);
      adapter_backward(*m.room_encoder_b, tr.room_b, g_rb, no_grad);
      Mat<S> g_va;
      adapter_backward(*m.room_encoder, tr.room, g_ra, &g_va);
      adapter_backward(*m.video_adapter, tr.video, g_va, no_grad);
      break;
    }
  }
}

// ---------------------------------------------------------------------------
// Batched text path

template <typename S>
struct TextTrace {
  std::vector<nn::BiGruTrace<S>> seqs;
  Mat<S> out;
  RowVec<S> norms;
};

/// f_text for every description (B x J, unit rows).
template <typename S>
Mat<S> encode_text(const HierarchicalModel<S>& m, std::span<const Mat<S>> sentences, TextTrace<S>* tr = nullptr) {
  Mat<S> raw(static_cast<Index>(sentences.size()), m.cfg.joint);
  if (tr) tr->seqs.resize(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (sentences[i].rows() < 1) throw InputError("encode_text: description without sentences");
    raw.row(static_cast<Index>(i)) = nn::bigru_encode(m.text, sentences[i], tr ? &tr->seqs[i] : nullptr);
  }
  if (!tr) return nn::l2_normalize_rows(raw);
  tr->out = nn::l2_normalize_rows(raw, &tr->norms);
  return tr->out;
}

template <typename S>
void encode_text_backward(HierarchicalModel<S>& m, const TextTrace<S>& tr, const Mat<S>& grad_out) {
  const Mat<S> g_raw = nn::l2_normalize_rows_backward(tr.out, tr.norms, grad_out);
  for (std::size_t i = 0; i < tr.seqs.size(); ++i) {
    nn::bigru_encode_backward(m.text, tr.seqs[i], RowVec<S>(g_raw.row(static_cast<Index>(i))), static_cast<Mat<S>*>(nullptr));
  }
}

template <typename S>
std::vector<Mat<S>> gather_sentences(std::span<const MuseumFeatures* const> items) {
  std::vector<Mat<S>> out;
  out.reserve(items.size());
  for (const auto* it : items) {
    if (it->sentences.rows < 1) throw InputError("museum " + it->museum_id + " has no description embedding");
    out.push_back(to_matrix<S>(it->sentences));
  }
  return out;
}

/// f_museum for one museum.
template <typename S>
RowVec<S> encode_museum_full(const HierarchicalModel<S>& m, const MuseumFeatures& features, Mode mode) {
  const MuseumFeatures* items[] = {&features};
  const auto batch = gather_visual<S>(items, uses_frames(m.cfg.variant), uses_video_vectors(m.cfg.variant));
  return encode_visual(m, batch, mode).row(0);
}

}  // namespace agrimuse::model
