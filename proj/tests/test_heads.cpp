#include <gtest/gtest.h>

#include "firemae/heads/seg_model.hpp"
#include "testing.hpp"

using namespace firemae;
using namespace firemae::heads;
using firemae::testing::random_tensor;

namespace {
HeadSpec spec(HeadKind k, std::size_t d, bool refine = false) {
  HeadSpec s;
  s.kind = k;
  s.emb_dim = d;
  s.with_hr_refine = refine;
  return s;
}

struct Empty {
  void visit(StateVisitor<float>&, const std::string&) {}
};
}  // namespace

TEST(Heads, LinearShapeAndCount) {
  SegHead<float> h(spec(HeadKind::linear, 64), 1);
  Rng rng(1);
  NoGradGuard ng;
  EXPECT_EQ(h(Var<float>(random_tensor<float>({1, 64, 112, 112}, rng)), NormMode::train).shape(), (Shape{1, 1, 112, 112}));
  EXPECT_EQ(count_params_and_footprint<float>(h).params, 65u);
}

TEST(Heads, TrtParameterCount) {
  SegHead<float> h64(spec(HeadKind::trt, 64), 1);
  EXPECT_EQ(count_parameters<float>(h64), 64u * 32 + 32 + 3 * (32 * 32 * 9 + 32 + 2 * 32) + 32 * 1 + 1);
  EXPECT_EQ(count_parameters<float>(h64), trt_head_parameter_count(64));
  SegHead<float> h32(spec(HeadKind::trt, 32), 1);
  EXPECT_EQ(count_parameters<float>(h32), 29025u);
}

TEST(Heads, DwresParameterCount) {
  SegHead<float> h(spec(HeadKind::dwres, 64), 1);
  // proj + 3 x (depthwise 3x3 + pointwise + GN affine) + out
  const std::size_t block = (32 * 9 + 32) + (32 * 32 + 32) + 2 * 32;
  EXPECT_EQ(count_parameters<float>(h), 64u * 32 + 32 + 3 * block + 33);
}

TEST(Heads, ChannelMismatchRejected) {
  SegHead<float> h(spec(HeadKind::trt, 64), 1);
  EXPECT_THROW(h(Var<float>(Tensor<float>({1, 32, 8, 8})), NormMode::train), ShapeError);
  EXPECT_THROW(SegModel<float>(mae::EncoderSpec{32, 8}, spec(HeadKind::trt, 64), 1), ConfigError);
}

TEST(Heads, DwresZeroResidualIsIdentity) {
  SegHead<double> h(spec(HeadKind::dwres, 8), 3);
  for (auto& b : h.dwres_blocks()) b.zero_convs();
  Rng rng(4);
  const auto z = random_tensor({2, 8, 6, 6}, rng);
  NoGradGuard ng;
  const auto got = h(Var<double>(z), NormMode::train);
  const auto expect = h.output()(h.projection()(Var<double>(z)));
  for (std::size_t i = 0; i < got.value().size(); ++i) EXPECT_NEAR(got.value()[i], expect.value()[i], 1e-12);
}

TEST(Heads, L2NormalizedInputIgnoresPixelScale) {
  for (HeadKind k : {HeadKind::linear, HeadKind::dwres}) {
    auto s = spec(k, 16);
    s.l2_normalize_input = true;
    SegHead<double> h(s, 5);
    Rng rng(6);
    auto z = random_tensor({1, 16, 5, 5}, rng);
    NoGradGuard ng;
    const auto a = h(Var<double>(z), NormMode::train).value();
    for (std::size_t p = 0; p < 25; ++p) {
      const double k2 = rng.uniform(0.2, 5.0);
      for (std::size_t c = 0; c < 16; ++c) z[c * 25 + p] *= k2;
    }
    const auto b = h(Var<double>(z), NormMode::train).value();
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  }
}

// Content sits inside a zero border wider than the receptive field plus the
// shift, so shifting permutes activations and leaves GroupNorm/BatchNorm
// statistics unchanged.
TEST(Heads, TranslationEquivariant) {
  for (HeadKind k : {HeadKind::linear, HeadKind::trt, HeadKind::dwres}) {
    SegHead<double> h(spec(k, 8), 7);
    Rng rng(8);
    const std::size_t n = 60, border = 18, dy = 2, dx = 3;
    Tensor<double> z({1, 8, n, n});
    for (std::size_t c = 0; c < 8; ++c)
      for (std::size_t y = border; y < n - border; ++y)
        for (std::size_t x = border; x < n - border; ++x) z.at(0, c, y, x) = rng.uniform(-1, 1);
    Tensor<double> shifted({1, 8, n, n});
    for (std::size_t c = 0; c < 8; ++c)
      for (std::size_t y = dy; y < n; ++y)
        for (std::size_t x = dx; x < n; ++x) shifted.at(0, c, y, x) = z.at(0, c, y - dy, x - dx);
    NoGradGuard ng;
    const auto a = h(Var<double>(z), NormMode::train).value();
    const auto b = h(Var<double>(shifted), NormMode::train).value();
    const std::size_t margin = 8;  // receptive-field radius of the deepest head is 7
    for (std::size_t y = dy + margin; y < n - margin; ++y)
      for (std::size_t x = dx + margin; x < n - margin; ++x)
        ASSERT_NEAR(b.at(0, 0, y, x), a.at(0, 0, y - dy, x - dx), 1e-9) << to_string(k);
  }
}

TEST(Heads, TrtEvalModeIsDeterministic) {
  SegHead<float> h(spec(HeadKind::trt, 16), 9);
  Rng rng(10);
  const auto z = random_tensor<float>({2, 16, 8, 8}, rng);
  {
    NoGradGuard ng;
    h(Var<float>(z), NormMode::train);  // one update of the running statistics
  }
  NoGradGuard ng;
  const auto a = h(Var<float>(z), NormMode::eval).value();
  const auto b = h(Var<float>(z), NormMode::eval).value();
  EXPECT_TRUE(a == b);
}

TEST(Refine, ShapesAndCount) {
  HrRefine<float> r(16, 1);
  Rng rng(2);
  NoGradGuard ng;
  const auto out = r(Var<float>(random_tensor<float>({1, 32, 224, 224}, rng)), Var<float>(random_tensor<float>({1, 1, 112, 112}, rng)));
  EXPECT_EQ(out.shape(), (Shape{1, 1, 224, 224}));
  EXPECT_EQ(count_parameters<float>(r), 33u * 16 * 9 + 16 + 16 * 1 + 1 + 2 * 16);
  EXPECT_EQ(count_parameters<float>(r), refine_parameter_count(16));
  EXPECT_THROW(r(Var<float>(Tensor<float>({1, 32, 16, 16})), Var<float>(Tensor<float>({1, 1, 6, 8}))), ShapeError);
}

TEST(Refine, ZeroStemWeightsLeaveFunctionOfCoarseOnly) {
  HrRefine<double> r(16, 3);
  auto& w = r.first_conv().weight().mutable_value();
  for (std::size_t o = 0; o < 16; ++o)
    for (std::size_t c = 0; c < 32; ++c)
      for (std::size_t k = 0; k < 9; ++k) w[(o * 33 + c) * 9 + k] = 0.0;
  Rng rng(4);
  const auto lc = random_tensor({1, 1, 6, 6}, rng);
  NoGradGuard ng;
  const auto a = r(Var<double>(random_tensor({1, 32, 12, 12}, rng)), Var<double>(lc)).value();
  const auto b = r(Var<double>(random_tensor({1, 32, 12, 12}, rng, -50, 50)), Var<double>(lc)).value();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Footprint, EmptyAndDeploymentModel) {
  Empty e;
  const auto f0 = count_params_and_footprint<float>(e);
  EXPECT_EQ(f0.params, 0u);
  EXPECT_EQ(f0.fp16_bytes, 0u);
  SegModel<float> m(mae::EncoderSpec{32, 8}, spec(HeadKind::trt, 32), 1);
  const auto f = count_params_and_footprint<float>(m);
  EXPECT_EQ(f.params, mae::encoder_parameter_count(32) + trt_head_parameter_count(32));
  EXPECT_EQ(f.params, 486721u);
  EXPECT_EQ(f.fp16_bytes, 2 * f.params);
  EXPECT_LT(f.fp16_bytes, 1'000'000u);
}

TEST(SegModel, SurfaceResolutionAndCheckpoint) {
  for (bool refine : {false, true}) {
    SegModel<float> m(mae::EncoderSpec{32, 8}, spec(HeadKind::dwres, 32, refine), 2);
    Rng rng(3);
    const auto out = m.forward(Var<float>(random_tensor<float>({2, 1, 16, 16}, rng)), NormMode::train);
    EXPECT_EQ(out.coarse.shape(), (Shape{2, 1, 8, 8}));
    EXPECT_EQ(out.surface.shape(), (Shape{2, 1, 16, 16}));
    EXPECT_EQ(out.refined.has_value(), refine);
    Checkpoint ck;
    m.save(ck);
    auto m2 = SegModel<float>::from_checkpoint(ck);
    EXPECT_EQ(parameter_digest<float>(m2), parameter_digest<float>(m));
  }
}
