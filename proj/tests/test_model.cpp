#include <random>

#include <gtest/gtest.h>

#include "agrimuse/model/adapter_block.hpp"
#include "agrimuse/model/hierarchical.hpp"
#include "gradient_cases.hpp"

using namespace agrimuse;
using namespace agrimuse::testing;
using model::Variant;
using nn::Mode;

namespace {

std::vector<const model::MuseumFeatures*> pointers(const std::vector<model::MuseumFeatures>& v) {
  std::vector<const model::MuseumFeatures*> out;
  for (const auto& f : v) out.push_back(&f);
  return out;
}

}  // namespace

TEST(Variant, NamesRoundTrip) {
  for (auto v : model::kAllVariants) EXPECT_EQ(model::parse_variant(model::to_string(v)), v);
  EXPECT_THROW(model::parse_variant("HL_deep"), ConfigError);
}

TEST(Variant, SourceRequirements) {
  EXPECT_TRUE(model::uses_frames(Variant::kHL));
  EXPECT_FALSE(model::uses_video_vectors(Variant::kHL));
  EXPECT_FALSE(model::uses_frames(Variant::kHLSkipAdapter));
  EXPECT_TRUE(model::uses_frames(Variant::kHLEarlyFusion) && model::uses_video_vectors(Variant::kHLEarlyFusion));
  EXPECT_TRUE(model::uses_frames(Variant::kHLLateFusion) && model::uses_video_vectors(Variant::kHLLateFusion));
}

TEST(AdapterBlock, SinglePositionReducesToPointwiseBlock) {
  std::mt19937_64 rng(4);
  model::AdapterBlock<double> block("b", 3, 5, 2);
  block.init(rng);
  block.bn.running_mean.value = random_mat(rng, 1, 5, 0.1);
  const MatD x = random_mat(rng, 1, 3);
  const auto got = model::adapter_forward(block, x, nn::Segments::single(1), Mode::kEval);
  // With one position only the centre tap sees data and the pool is the identity.
  MatD z(1, 5);
  for (Index o = 0; o < 5; ++o) {
    double acc = block.conv.bias.value(0, o);
    for (Index i = 0; i < 3; ++i) acc += block.conv.at(o, i, 1) * x(0, i);
    z(0, o) = acc;
  }
  const MatD act = nn::relu_forward(nn::batchnorm_forward(block.bn, z, Mode::kEval));
  const MatD want = nn::linear_forward(block.proj, act);
  EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(AdapterBlock, OrderSensitive) {
  std::mt19937_64 rng(9);
  model::AdapterBlock<double> block("b", 3, 6, 2);
  block.init(rng);
  const MatD x = random_mat(rng, 4, 3);
  MatD perm(4, 3);
  perm << x.row(2), x.row(0), x.row(3), x.row(1);
  const auto a = model::adapter_forward(block, x, nn::Segments::single(4), Mode::kEval);
  const auto b = model::adapter_forward(block, perm, nn::Segments::single(4), Mode::kEval);
  EXPECT_GT((a - b).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(AdapterBlock, RaggedBatchMatchesPerSequenceInEvalMode) {
  std::mt19937_64 rng(10);
  model::AdapterBlock<double> block("b", 3, 4, 2);
  block.init(rng);
  const auto seg = random_segments(rng, 5, 1, 6);
  const MatD x = random_mat(rng, seg.total(), 3);
  const auto batch = model::adapter_forward(block, x, seg, Mode::kEval);
  for (Index s = 0; s < seg.count(); ++s) {
    const MatD xs = x.middleRows(seg.begin(s), seg.length(s));
    const auto one = model::adapter_forward(block, xs, nn::Segments::single(seg.length(s)), Mode::kEval);
    EXPECT_LT((batch.row(s) - one.row(0)).cwiseAbs().maxCoeff(), 1e-13);
  }
}

class AdapterGradients : public ::testing::TestWithParam<int> {};
TEST_P(AdapterGradients, MatchFiniteDifferences) {
  EXPECT_LT(grad_case_adapter(GetParam()).max_rel_error, 1e-4);
}
INSTANTIATE_TEST_SUITE_P(Seeds, AdapterGradients, ::testing::Range(0, 5));

class EndToEndGradients : public ::testing::TestWithParam<std::tuple<Variant, int>> {};
TEST_P(EndToEndGradients, MatchFiniteDifferences) {
  const auto [variant, seed] = GetParam();
  const auto r = grad_case_end_to_end(seed, variant);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "] analytic " << r.analytic
                                   << " numeric " << r.numeric;
  EXPECT_GT(r.checked, 100);
}
INSTANTIATE_TEST_SUITE_P(AllVariants, EndToEndGradients,
                         ::testing::Combine(::testing::ValuesIn(model::kAllVariants), ::testing::Values(0, 1)),
                         [](const auto& info) {
                           return model::to_string(std::get<0>(info.param)) + "_" +
                                  std::to_string(std::get<1>(info.param));
                         });

TEST(HierarchicalModel, BlocksPresentPerVariant) {
  auto blocks = [](Variant v) {
    model::HierarchicalModel<float> m(tiny_model_config(v));
    return std::array<bool, 5>{m.video_adapter.has_value(), m.room_encoder.has_value(), m.room_encoder_b.has_value(),
                               m.museum_encoder.has_value(), m.fusion.has_value()};
  };
  EXPECT_EQ(blocks(Variant::kHL), (std::array<bool, 5>{true, true, false, true, false}));
  EXPECT_EQ(blocks(Variant::kNHLMuseum), (std::array<bool, 5>{false, false, false, true, false}));
  EXPECT_EQ(blocks(Variant::kNHLVideoMuseum), (std::array<bool, 5>{true, false, false, true, false}));
  EXPECT_EQ(blocks(Variant::kNHLRoomMuseum), (std::array<bool, 5>{false, true, false, true, false}));
  EXPECT_EQ(blocks(Variant::kHLSkipAdapter), (std::array<bool, 5>{false, true, false, true, false}));
  EXPECT_EQ(blocks(Variant::kHLEarlyFusion), (std::array<bool, 5>{true, true, false, true, true}));
  EXPECT_EQ(blocks(Variant::kHLLateFusion), (std::array<bool, 5>{true, true, true, true, true}));
}

TEST(HierarchicalModel, InputWidthsFollowVariant) {
  auto cfg = tiny_model_config(Variant::kHLSkipAdapter);
  model::HierarchicalModel<float> skip(cfg);
  EXPECT_EQ(skip.room_encoder->input_dim(), cfg.video_dim);
  cfg.variant = Variant::kNHLMuseum;
  model::HierarchicalModel<float> flat(cfg);
  EXPECT_EQ(flat.museum_encoder->input_dim(), cfg.frame_dim);
  cfg.variant = Variant::kHLEarlyFusion;
  model::HierarchicalModel<float> early(cfg);
  EXPECT_EQ(early.fusion->in_dim, cfg.joint + cfg.video_dim);
  cfg.variant = Variant::kHLLateFusion;
  model::HierarchicalModel<float> late(cfg);
  EXPECT_EQ(late.fusion->in_dim, 2 * cfg.joint);
  EXPECT_EQ(late.room_encoder_b->input_dim(), cfg.video_dim);
}

TEST(HierarchicalModel, OutputsAreUnitRowsAndBatchIndependentInEval) {
  std::mt19937_64 rng(3);
  for (auto v : model::kAllVariants) {
    const auto cfg = tiny_model_config(v);
    model::HierarchicalModel<double> m(cfg);
    m.init(rng);
    auto batch = make_tiny_batch(rng, 5, cfg.frame_dim, cfg.video_dim, cfg.text_dim);
    const auto ptrs = pointers(batch.features);
    const auto vb = model::gather_visual<double>(ptrs, model::uses_frames(v), model::uses_video_vectors(v));
    const MatD out = model::encode_visual(m, vb, Mode::kEval);
    ASSERT_EQ(out.rows(), 5);
    for (Index i = 0; i < 5; ++i) {
      EXPECT_NEAR(out.row(i).norm(), 1.0, 1e-12);
      const auto one = model::encode_museum_full(m, batch.features[static_cast<std::size_t>(i)], Mode::kEval);
      EXPECT_LT((one - out.row(i)).cwiseAbs().maxCoeff(), 1e-12) << model::to_string(v);
    }
    const auto sentences = model::gather_sentences<double>(ptrs);
    const MatD text = model::encode_text(m, std::span<const MatD>(sentences));
    for (Index i = 0; i < 5; ++i) {
      EXPECT_NEAR(text.row(i).norm(), 1.0, 1e-12);
      const auto one = model::encode_description(m.text, sentences[static_cast<std::size_t>(i)]);
      EXPECT_LT((one - text.row(i)).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(HierarchicalModel, HierarchyMatchesManualComposition) {
  std::mt19937_64 rng(12);
  const auto cfg = tiny_model_config(Variant::kHL);
  model::HierarchicalModel<double> m(cfg);
  m.init(rng);
  auto batch = make_tiny_batch(rng, 1, cfg.frame_dim, cfg.video_dim, cfg.text_dim);
  const auto& f = batch.features[0];
  MatD rooms(static_cast<Index>(f.frames.size()), cfg.joint);
  for (std::size_t r = 0; r < f.frames.size(); ++r) {
    MatD vids(static_cast<Index>(f.frames[r].size()), cfg.joint);
    for (std::size_t v = 0; v < f.frames[r].size(); ++v) {
      vids.row(static_cast<Index>(v)) =
          model::encode_video(*m.video_adapter, model::to_matrix<double>(f.frames[r][v]), Mode::kEval);
    }
    rooms.row(static_cast<Index>(r)) = model::encode_room(*m.room_encoder, vids, Mode::kEval);
  }
  const auto want = model::encode_museum(*m.museum_encoder, rooms, Mode::kEval);
  const auto got = model::encode_museum_full(m, f, Mode::kEval);
  EXPECT_LT((want - got).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(HierarchicalModel, FusionWithoutSecondSourceIsAConfigError) {
  std::mt19937_64 rng(1);
  for (auto v : {Variant::kHLEarlyFusion, Variant::kHLLateFusion, Variant::kHLSkipAdapter}) {
    const auto cfg = tiny_model_config(v);
    model::HierarchicalModel<double> m(cfg);
    m.init(rng);
    auto batch = make_tiny_batch(rng, 2, cfg.frame_dim, cfg.video_dim, cfg.text_dim);
    const auto ptrs = pointers(batch.features);
    const auto frames_only = model::gather_visual<double>(ptrs, true, false);
    EXPECT_THROW(model::encode_visual(m, frames_only, Mode::kEval), ConfigError) << model::to_string(v);
  }
}

TEST(HierarchicalModel, TrainModeNeedsBatchOfTwoPositionsPerLevel) {
  std::mt19937_64 rng(2);
  auto cfg = tiny_model_config(Variant::kHL);
  model::HierarchicalModel<double> m(cfg);
  m.init(rng);
  // One museum with one room holding one single-frame video.
  std::vector<float> frame{0.1f, 0.2f, 0.3f};
  model::MuseumFeatures f;
  f.museum_id = "solo";
  f.frames = {{model::FeatureView{frame.data(), 1, 3}}};
  const model::MuseumFeatures* items[] = {&f};
  const auto vb = model::gather_visual<double>(items, true, false);
  EXPECT_THROW(model::encode_visual(m, vb, Mode::kTrain), InputError);
  EXPECT_NO_THROW(model::encode_visual(m, vb, Mode::kEval));
}

TEST(GatherVisual, SegmentLayout) {
  std::mt19937_64 rng(5);
  auto batch = make_tiny_batch(rng, 3, 3, 2, 3);
  const auto ptrs = pointers(batch.features);
  const auto vb = model::gather_visual<float>(ptrs, true, true);
  EXPECT_EQ(vb.museums, 3);
  EXPECT_EQ(vb.museum_rooms.count(), 3);
  EXPECT_EQ(vb.room_videos.count(), vb.museum_rooms.total());
  EXPECT_EQ(vb.video_frames.count(), vb.room_videos.total());
  EXPECT_EQ(vb.frames.rows(), vb.video_frames.total());
  EXPECT_EQ(vb.videos.rows(), vb.room_videos.total());
  EXPECT_EQ(vb.room_frames.total(), vb.frames.rows());
  EXPECT_EQ(vb.museum_frames.total(), vb.frames.rows());
  EXPECT_EQ(vb.museum_videos.total(), vb.videos.rows());
  // First frame row equals the first museum's first frame.
  EXPECT_FLOAT_EQ(vb.frames(0, 0), batch.frames[0][0][0][0]);
}

TEST(MakeFeatures, MissingEntityNamed) {
  Museum m;
  m.id = "M0001";
  m.rooms.push_back({1, 0, {{"M0001-R1-V1", "t", 0, 2}}});
  EmbeddingSet frames("f", 2);
  EmbeddingSet text("t", 2);
  text.add({"M0001#desc", 1, {1.0f, 0.0f}});
  try {
    model::make_features(m, &frames, nullptr, &text);
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("M0001-R1-V1"), std::string::npos);
  }
  frames.add({"M0001-R1-V1", 2, {1, 0, 0, 1}});
  const auto f = model::make_features(m, &frames, nullptr, &text);
  EXPECT_EQ(f.frames.size(), 1u);
  EXPECT_EQ(f.frames[0][0].rows, 2);
  EXPECT_EQ(f.sentences.rows, 1);
}
