#include "kpdisc/bottleneck.hpp"
#include "kpdisc/error.hpp"
#include "kpdisc/heatfeat.hpp"
#include "kpdisc/tracks.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace kpdisc;
namespace fs = std::filesystem;
using oracles::brute_force;

namespace {

torch::Tensor random_normalized(std::int64_t h, std::int64_t w, double scale) {
  return torch::softmax((torch::randn({h * w}, torch::kFloat64) * scale), 0).view({h, w});
}

torch::Tensor two_peaks(std::int64_t n, double u1, double v1, double u2, double v2, double amp = 12.0) {
  auto a = render_gaussians(torch::tensor({{u1, v1}, {u2, v2}}, torch::kFloat64), 0.04, n, n);
  return amp * torch::maximum(a[0], 0.9 * a[1]);
}

}  // namespace

TEST(Confidence, Examples) {
  auto one_hot = torch::zeros({16, 16}, torch::kFloat64);
  one_hot[3][4] = 1.0;
  EXPECT_EQ(confidence(one_hot), 1.0);
  EXPECT_NEAR(confidence(torch::full({16, 20}, 1.0 / 320, torch::kFloat64)), 1.0 / 320, 1e-15);
  auto g = render_gaussians(torch::tensor({0.4, 0.55}, torch::kFloat64), 0.05, 64, 64);
  auto p = g / g.sum();
  EXPECT_NEAR(confidence(p), brute_force(p, 0.4, 0.55).conf, 1e-15);
}

TEST(Confidence, RejectsUnnormalized) {
  EXPECT_THROW(confidence(torch::ones({4, 4}, torch::kFloat64)), InvalidArgument);
  auto neg = torch::full({2, 2}, 0.25, torch::kFloat64);
  neg[0][0] = 0.75;
  neg[0][1] = -0.25;
  EXPECT_THROW(confidence(neg), InvalidArgument);
  EXPECT_THROW(covariance(torch::ones({4, 4}, torch::kFloat64), 0.5, 0.5), InvalidArgument);
}

TEST(Covariance, Examples) {
  auto one_hot = torch::zeros({8, 8}, torch::kFloat64);
  one_hot[2][5] = 1.0;
  auto c = covariance(one_hot, 5.0 / 7, 2.0 / 7);
  EXPECT_NEAR(c.sxx, 0.0, 1e-30);
  EXPECT_NEAR(c.syy, 0.0, 1e-30);
  EXPECT_NEAR(c.sxy, 0.0, 1e-30);

  auto row = torch::full({1, 2}, 0.5, torch::kFloat64);
  auto r = covariance(row, 0.5, 0.5);
  EXPECT_DOUBLE_EQ(r.sxx, 0.25);
  EXPECT_EQ(r.syy, 0.0);
  EXPECT_EQ(r.sxy, 0.0);
}

TEST(Covariance, IsotropicGaussian) {
  const double s = 0.05;
  auto g = render_gaussians(torch::tensor({0.5, 0.5}, torch::kFloat64), s, 64, 64);
  auto p = g / g.sum();
  auto kp = soft_argmax(torch::log(p)).keypoints;
  auto c = covariance(p, kp[0].item<double>(), kp[1].item<double>());
  EXPECT_NEAR(c.sxx / (s * s), 1.0, 0.02);
  EXPECT_NEAR(c.syy / (s * s), 1.0, 0.02);
  EXPECT_NEAR(c.sxy / (s * s), 0.0, 0.02);
}

TEST(HeatmapFeatures, MatchBruteForce) {
  torch::manual_seed(0);
  for (int t = 0; t < 100; ++t) {
    auto raw = torch::randn({20, 24}, torch::kFloat64) * (0.5 + 0.1 * t);
    auto sa = soft_argmax(raw);
    const double u = sa.keypoints[0].item<double>(), v = sa.keypoints[1].item<double>();
    auto want = brute_force(sa.normalized, u, v);
    auto f = heatmap_features(sa.normalized, sa.keypoints);
    EXPECT_NEAR(f.confidence.item<double>(), want.conf, 1e-9);
    EXPECT_NEAR(f.sigma2_x.item<double>(), want.sxx, 1e-9);
    EXPECT_NEAR(f.sigma2_y.item<double>(), want.syy, 1e-9);
    EXPECT_NEAR(f.sigma2_xy.item<double>(), want.sxy, 1e-9);
    auto c = covariance(sa.normalized, u, v);
    EXPECT_NEAR(c.sxx, want.sxx, 1e-9);
    EXPECT_NEAR(c.sxy, want.sxy, 1e-9);
    EXPECT_NEAR(confidence(sa.normalized), want.conf, 1e-9);
    EXPECT_GE(c.sxx, 0.0);
    EXPECT_GE(c.syy, 0.0);
    EXPECT_LE(c.sxy * c.sxy, c.sxx * c.syy + 1e-9);
  }
}

TEST(HeatmapFeatures, Batched) {
  torch::manual_seed(1);
  auto sa = soft_argmax(torch::randn({3, 5, 16, 16}, torch::kFloat64) * 3);
  auto f = heatmap_features(sa.normalized, sa.keypoints);
  EXPECT_EQ(f.confidence.sizes(), (std::vector<int64_t>{3, 5}));
  EXPECT_EQ(f.confidence.scalar_type(), torch::kFloat64);
  auto c = covariance(sa.normalized[2][4], sa.keypoints[2][4][0].item<double>(), sa.keypoints[2][4][1].item<double>());
  EXPECT_NEAR(f.sigma2_y[2][4].item<double>(), c.syy, 1e-12);
}

TEST(HeatmapFeatures, CauchySchwarzOnRandomMaps) {
  torch::manual_seed(2);
  for (int t = 0; t < 200; ++t) {
    auto raw = torch::randn({12, 12}, torch::kFloat64) * 4;
    raw[t % 12] += 3.0;  // correlated structure
    auto sa = soft_argmax(raw);
    auto c = covariance(sa.normalized, sa.keypoints[0].item<double>(), sa.keypoints[1].item<double>());
    EXPECT_LE(std::abs(c.sxy), std::sqrt(c.sxx * c.syy) + 1e-9);
  }
}

TEST(HeatmapFeatures, BlurNeverRaisesConfidence) {
  torch::manual_seed(3);
  namespace F = torch::nn::functional;
  auto kernel = torch::tensor({{1.0, 2.0, 1.0}, {2.0, 4.0, 2.0}, {1.0, 2.0, 1.0}}, torch::kFloat64) / 16.0;
  for (int t = 0; t < 50; ++t) {
    auto p = random_normalized(16, 16, 2.0 + t * 0.1);
    auto padded = F::pad(p.view({1, 1, 16, 16}), F::PadFuncOptions({1, 1, 1, 1}).mode(torch::kCircular));
    auto blurred = F::conv2d(padded, kernel.view({1, 1, 3, 3})).view({16, 16});
    EXPECT_LE(confidence(blurred), confidence(p) + 1e-15);
  }
}

TEST(HeatmapFeatures, TranslationCovariant) {
  torch::manual_seed(4);
  for (int t = 0; t < 20; ++t) {
    auto patch = random_normalized(8, 8, 1.5);
    auto a = torch::zeros({40, 40}, torch::kFloat64);
    auto b = torch::zeros({40, 40}, torch::kFloat64);
    a.slice(0, 10, 18).slice(1, 12, 20).copy_(patch);
    const int dy = t % 7, dx = (3 * t) % 11;
    b.slice(0, 10 + dy, 18 + dy).slice(1, 12 + dx, 20 + dx).copy_(patch);
    auto ka = soft_argmax(torch::log(a + 1e-300)).keypoints;
    auto kb = soft_argmax(torch::log(b + 1e-300)).keypoints;
    auto ca = covariance(a, ka[0].item<double>(), ka[1].item<double>());
    auto cb = covariance(b, kb[0].item<double>(), kb[1].item<double>());
    EXPECT_NEAR(ca.sxx, cb.sxx, 1e-12);
    EXPECT_NEAR(ca.syy, cb.syy, 1e-12);
    EXPECT_NEAR(ca.sxy, cb.sxy, 1e-12);
  }
}

TEST(MultiPeak, RecoversTwoSeparatedPeaks) {
  const std::int64_t n = 64;
  auto raw = two_peaks(n, 0.3, 0.7, 0.75, 0.2);
  auto peaks = extract_multi_peak(raw, 2, default_region(0.05, n));
  ASSERT_EQ(peaks.size(), 2u);
  const double cell = 1.0 / (n - 1);
  // Ordered by v: the peak with smaller v comes first.
  EXPECT_NEAR(peaks[0].u, 0.75, 0.5 * cell);
  EXPECT_NEAR(peaks[0].v, 0.2, 0.5 * cell);
  EXPECT_NEAR(peaks[1].u, 0.3, 0.5 * cell);
  EXPECT_NEAR(peaks[1].v, 0.7, 0.5 * cell);
  EXPECT_FALSE(peaks[0].duplicate);
  EXPECT_FALSE(peaks[1].duplicate);
  EXPECT_LE(peaks[0].v, peaks[1].v);
  for (const auto& p : peaks) {
    EXPECT_GT(p.confidence, 0.0);
    EXPECT_LE(p.confidence, 1.0);
    EXPECT_LE(p.cov.sxy * p.cov.sxy, p.cov.sxx * p.cov.syy + 1e-12);
  }
}

TEST(MultiPeak, SingleAgentIsGlobalSoftArgmax) {
  torch::manual_seed(5);
  auto raw = torch::randn({16, 16}, torch::kFloat64) * 2;
  auto peaks = extract_multi_peak(raw, 1, 3);
  ASSERT_EQ(peaks.size(), 1u);
  auto sa = soft_argmax(raw);
  EXPECT_NEAR(peaks[0].u, sa.keypoints[0].item<double>(), 1e-12);
  EXPECT_NEAR(peaks[0].v, sa.keypoints[1].item<double>(), 1e-12);
  auto f = heatmap_features(sa.normalized, sa.keypoints);
  EXPECT_NEAR(peaks[0].confidence, f.confidence.item<double>(), 1e-12);
  EXPECT_NEAR(peaks[0].cov.sxx, f.sigma2_x.item<double>(), 1e-12);
}

TEST(MultiPeak, MergedPeaksFallBackToDuplicates) {
  auto raw = render_gaussians(torch::tensor({0.5, 0.5}, torch::kFloat64), 0.05, 32, 32) * 10.0;
  auto peaks = extract_multi_peak(raw, 2, 6);
  ASSERT_EQ(peaks.size(), 2u);
  EXPECT_FALSE(peaks[0].duplicate);
  EXPECT_TRUE(peaks[1].duplicate);
  EXPECT_EQ(peaks[0].u, peaks[1].u);
  EXPECT_EQ(peaks[0].v, peaks[1].v);
}

TEST(MultiPeak, Errors) {
  auto raw = torch::zeros({8, 8});
  EXPECT_THROW(extract_multi_peak(raw, 0, 2), InvalidArgument);
  EXPECT_THROW(extract_multi_peak(raw, 2, 0), InvalidArgument);
  EXPECT_THROW(extract_multi_peak(torch::zeros({8}), 1, 2), ShapeError);
}

TEST(MultiPeak, DefaultRegion) {
  EXPECT_EQ(default_region(0.05, 64), 13);
  EXPECT_EQ(default_region(0.05, 16), 3);
  EXPECT_GE(default_region(0.001, 8), 1);
}

TEST(BackgroundKeypoints, FlagsLowConfidence) {
  auto conf = torch::tensor({{0.5, 0.01, 0.4, 0.02}, {0.6, 0.02, 0.5, 0.01}}, torch::kFloat64);
  auto flags = background_keypoints(conf, 0.5);
  EXPECT_EQ(flags, (std::vector<bool>{false, true, false, true}));
}

namespace {

std::vector<KeypointRecord> sample_records(int frames, int k) {
  std::vector<KeypointRecord> out;
  for (int f = 0; f < frames; ++f)
    for (int j = 0; j < k; ++j)
      out.push_back({f + 10, j, 0.1 * j + 1e-3 * f, 1.0 / 3.0 + f, 0.2, 1e-4, 2e-4 / 3.0, -1e-5});
  return out;
}

}  // namespace

TEST(Tracks, CsvRoundTripExact) {
  auto rec = sample_records(5, 3);
  auto path = fs::temp_directory_path() / "kpdisc_tracks.csv";
  write_tracks_csv(path, rec);
  EXPECT_EQ(read_tracks_csv(path), rec);
  EXPECT_EQ(read_tracks(path), rec);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "frame,kp_id,u,v,confidence,sigma2_x,sigma2_y,sigma2_xy");
  fs::remove(path);
}

TEST(Tracks, BinaryRoundTripExact) {
  auto rec = sample_records(4, 5);
  auto path = fs::temp_directory_path() / "kpdisc_tracks.kpt";
  write_tracks_binary(path, rec);
  EXPECT_EQ(read_tracks_binary(path), rec);
  EXPECT_EQ(read_tracks(path), rec);
  EXPECT_EQ(fs::file_size(path), 8u + 4u + 8u + rec.size() * 64u);
  fs::remove(path);
}

TEST(Tracks, DenseTensorRoundTrip) {
  auto rec = sample_records(6, 4);
  auto t = to_tensor(rec);
  EXPECT_EQ(t.frames.front(), 10);
  EXPECT_EQ(t.k(), 4);
  EXPECT_EQ(t.coords.sizes(), (std::vector<int64_t>{6, 4, 2}));
  EXPECT_EQ(from_tensor(t), rec);
}

TEST(Tracks, MissingFrameIsError) {
  auto rec = sample_records(6, 2);
  std::vector<KeypointRecord> gap;
  for (const auto& r : rec)
    if (r.frame != 12) gap.push_back(r);
  EXPECT_THROW(to_tensor(gap), InvalidArgument);
  auto missing_kp = rec;
  missing_kp.pop_back();
  EXPECT_THROW(to_tensor(missing_kp), InvalidArgument);
  auto dup = rec;
  dup.push_back(rec.front());
  EXPECT_THROW(to_tensor(dup), InvalidArgument);
}
