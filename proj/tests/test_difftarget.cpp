#include "kpdisc/difftarget.hpp"
#include "kpdisc/error.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <vector>

using namespace kpdisc;
using oracles::brute_force_dissimilarity;

namespace {

FramePair make_pair(torch::Tensor a, torch::Tensor b) {
  return FramePair::make(Frame::make(std::move(a), 0), Frame::make(std::move(b), 1));
}

}  // namespace

TEST(Ssim, IdenticalFramesGiveZero) {
  torch::manual_seed(0);
  auto a = torch::rand({3, 32, 32});
  auto t = ssim_dissimilarity(make_pair(a, a.clone()));
  EXPECT_EQ(t.kind, TargetKind::ssim);
  EXPECT_LT(t.map.abs().max().item<double>(), 1e-7);
  EXPECT_EQ(t.value_range.first, 0.0);
}

TEST(Ssim, ConstantFramesClosedForm) {
  const double m1 = 0.3, m2 = 0.7;
  SsimParams p;
  auto s = local_ssim(torch::full({3, 20, 20}, m1), torch::full({3, 20, 20}, m2), p);
  const double expect = (2 * m1 * m2 + p.c1) / (m1 * m1 + m2 * m2 + p.c1);
  EXPECT_NEAR(s.min().item<double>(), expect, 1e-6);
  EXPECT_NEAR(s.max().item<double>(), expect, 1e-6);
}

TEST(Ssim, MatchesBruteForce) {
  torch::manual_seed(1);
  for (int trial = 0; trial < 3; ++trial) {
    auto a = torch::rand({3, 64, 64});
    auto b = (a + 0.3 * torch::randn({3, 64, 64})).clamp(0, 1);
    SsimParams p;
    p.window = trial == 2 ? 7 : 11;
    auto got = ssim_dissimilarity(make_pair(a, b), p).map.to(torch::kFloat64);
    auto want = brute_force_dissimilarity(a, b, p.window, p.c1, p.c2);
    auto acc = got.accessor<double, 3>();
    double worst = 0.0;
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 64; ++i)
        for (int j = 0; j < 64; ++j)
          worst = std::max(worst, std::abs(acc[c][i][j] - want[static_cast<std::size_t>(i * 64 + j)]));
    EXPECT_LT(worst, 1e-6);
  }
}

TEST(Ssim, RangeAndReplication) {
  torch::manual_seed(2);
  auto a = torch::rand({3, 24, 24});
  auto b = torch::rand({3, 24, 24});
  auto m = ssim_dissimilarity(make_pair(a, b)).map;
  EXPECT_GE(m.min().item<double>(), 0.0);
  EXPECT_LE(m.max().item<double>(), 1.0);
  EXPECT_TRUE(torch::equal(m[0], m[1]));
  EXPECT_TRUE(torch::equal(m[0], m[2]));
}

TEST(Ssim, SignNegationVariant) {
  torch::manual_seed(3);
  auto a = torch::rand({3, 24, 24});
  auto b = torch::rand({3, 24, 24});
  SsimParams affine, sign;
  sign.negation = SsimNegation::sign;
  auto ma = ssim_dissimilarity(make_pair(a, b), affine).map;
  auto ms = ssim_dissimilarity(make_pair(a, b), sign);
  EXPECT_EQ(ms.value_range.first, -1.0);
  EXPECT_TRUE(torch::allclose(ma, (1.0 + ms.map) / 2.0, 1e-6, 1e-6));
}

TEST(Ssim, WindowErrors) {
  auto a = torch::rand({3, 8, 8});
  SsimParams p;
  EXPECT_THROW(ssim_dissimilarity(make_pair(a, a.clone()), p), InvalidArgument);
  p.window = 4;
  EXPECT_THROW(ssim_dissimilarity(make_pair(a, a.clone()), p), InvalidArgument);
  p.window = 1;
  EXPECT_THROW(ssim_dissimilarity(make_pair(a, a.clone()), p), InvalidArgument);
}

TEST(AbsDiff, Examples) {
  auto zeros = torch::zeros({3, 4, 4});
  auto ones = torch::ones({3, 4, 4});
  EXPECT_TRUE(torch::equal(abs_difference(make_pair(zeros, zeros.clone())).map, zeros));
  EXPECT_TRUE(torch::equal(abs_difference(make_pair(zeros, ones)).map, ones));
  auto a = torch::full({3, 2, 2}, 0.3f);
  auto b = torch::full({3, 2, 2}, 0.1f);
  EXPECT_NEAR(abs_difference(make_pair(a, b)).map[0][0][0].item<double>(), 0.2, 1e-7);
}

TEST(AbsDiff, Symmetric) {
  torch::manual_seed(4);
  auto a = torch::rand({3, 16, 16});
  auto b = torch::rand({3, 16, 16});
  EXPECT_TRUE(torch::equal(abs_difference(make_pair(a, b)).map, abs_difference(make_pair(b, a)).map));
}

TEST(RawDiff, Examples) {
  auto a = torch::rand({3, 4, 4});
  auto t = raw_difference(make_pair(a, a.clone()));
  EXPECT_TRUE(torch::allclose(t.map, torch::full({3, 4, 4}, 0.5f)));
  auto lo = torch::full({3, 1, 1}, 0.1f);
  auto hi = torch::full({3, 1, 1}, 0.9f);
  EXPECT_NEAR(raw_difference(make_pair(lo, hi)).map[0][0][0].item<double>(), 0.9, 1e-7);
}

TEST(RawDiff, Antisymmetric) {
  torch::manual_seed(5);
  auto a = torch::rand({3, 16, 16});
  auto b = torch::rand({3, 16, 16});
  auto ab = raw_difference(make_pair(a, b)).map;
  auto ba = raw_difference(make_pair(b, a)).map;
  EXPECT_TRUE(torch::allclose(ab - 0.5, 0.5 - ba, 0, 1e-6));
}

TEST(Targets, ShapeMismatch) {
  TargetParams p;
  for (auto kind : {TargetKind::ssim, TargetKind::abs_diff, TargetKind::raw_diff}) {
    p.kind = kind;
    EXPECT_THROW(compute_target(torch::zeros({1, 3, 16, 16}), torch::zeros({1, 3, 16, 15}), p), ShapeError);
  }
}

TEST(Targets, CommuteWithCropping) {
  torch::manual_seed(6);
  auto a = torch::rand({3, 48, 48});
  auto b = torch::rand({3, 48, 48});
  auto crop = [](const torch::Tensor& t, int y, int x, int s) { return t.slice(-2, y, y + s).slice(-1, x, x + s); };
  for (auto kind : {TargetKind::abs_diff, TargetKind::raw_diff}) {
    TargetParams p{kind, {}};
    EXPECT_TRUE(torch::equal(crop(compute_target(a, b, p), 5, 9, 30),
                             compute_target(crop(a, 5, 9, 30), crop(b, 5, 9, 30), p)));
  }
  // SSIM uses a window, so agreement holds where the window stays inside the crop.
  TargetParams p;
  p.ssim.window = 7;
  auto full = crop(compute_target(a, b, p), 5, 9, 30);
  auto cropped = compute_target(crop(a, 5, 9, 30), crop(b, 5, 9, 30), p);
  EXPECT_TRUE(torch::allclose(crop(full, 3, 3, 24), crop(cropped, 3, 3, 24), 0, 1e-6));
}

TEST(Targets, BatchedMatchesSingle) {
  torch::manual_seed(7);
  auto a = torch::rand({2, 3, 20, 20});
  auto b = torch::rand({2, 3, 20, 20});
  TargetParams p;
  p.ssim.window = 5;
  auto batched = compute_target(a, b, p);
  EXPECT_TRUE(torch::allclose(batched[1], compute_target(a[1], b[1], p), 0, 1e-7));
}

TEST(Targets, KindNames) {
  for (auto k : {TargetKind::ssim, TargetKind::abs_diff, TargetKind::raw_diff, TargetKind::image})
    EXPECT_EQ(target_kind_from_string(to_string(k)), k);
  EXPECT_THROW(target_kind_from_string("flow"), InvalidArgument);
}
