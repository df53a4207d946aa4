#include "kpdisc/heatfeat.hpp"

#include "kpdisc/bottleneck.hpp"
#include "kpdisc/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace kpdisc {

namespace {

torch::Tensor checked_normalized(const torch::Tensor& m) {
  if (m.dim() != 2) throw ShapeError("heatmap must be [H, W]");
  auto d = m.to(torch::kFloat64).contiguous();
  if (!torch::isfinite(d).all().item<bool>()) throw NumericalError("heatmap has non-finite cells");
  if ((d < 0).any().item<bool>()) throw InvalidArgument("heatmap has negative cells");
  if (std::abs(d.sum().item<double>() - 1.0) > 1e-4) throw InvalidArgument("heatmap is not normalized");
  return d;
}

double coord(std::int64_t i, std::int64_t n) { return n == 1 ? 0.5 : static_cast<double>(i) / (n - 1); }

struct Window {
  std::int64_t r0, r1, c0, c1;  // inclusive
};

Peak local_peak(const torch::Tensor& raw, const Window& w) {
  const auto h = raw.size(0), wd = raw.size(1);
  auto sub = raw.index({torch::indexing::Slice(w.r0, w.r1 + 1), torch::indexing::Slice(w.c0, w.c1 + 1)});
  auto norm = torch::softmax(sub.reshape({-1}), 0).reshape(sub.sizes());
  auto a = norm.accessor<double, 2>();
  double u = 0, v = 0, conf = 0;
  for (std::int64_t r = 0; r < a.size(0); ++r)
    for (std::int64_t c = 0; c < a.size(1); ++c) {
      const double p = a[r][c];
      u += p * coord(w.c0 + c, wd);
      v += p * coord(w.r0 + r, h);
      conf = std::max(conf, p);
    }
  Covariance cov;
  for (std::int64_t r = 0; r < a.size(0); ++r)
    for (std::int64_t c = 0; c < a.size(1); ++c) {
      const double p = a[r][c];
      const double dx = coord(w.c0 + c, wd) - u, dy = coord(w.r0 + r, h) - v;
      cov.sxx += p * dx * dx;
      cov.syy += p * dy * dy;
      cov.sxy += p * dx * dy;
    }
  return {u, v, conf, cov, false};
}

}  // namespace

double confidence(const torch::Tensor& normalized) { return checked_normalized(normalized).max().item<double>(); }

Covariance covariance(const torch::Tensor& normalized, double u, double v) {
  auto d = checked_normalized(normalized);
  auto a = d.accessor<double, 2>();
  const auto h = d.size(0), w = d.size(1);
  Covariance c;
  for (std::int64_t r = 0; r < h; ++r)
    for (std::int64_t col = 0; col < w; ++col) {
      const double p = a[r][col];
      const double dx = coord(col, w) - u, dy = coord(r, h) - v;
      c.sxx += p * dx * dx;
      c.syy += p * dy * dy;
      c.sxy += p * dx * dy;
    }
  return c;
}

HeatmapFeatures heatmap_features(const torch::Tensor& normalized, const torch::Tensor& keypoints) {
  if (normalized.dim() < 2) throw ShapeError("heatmaps must be [..., H, W]");
  if (keypoints.size(-1) != 2 || keypoints.dim() != normalized.dim() - 1)
    throw ShapeError("keypoints must be [..., 2] matching the heatmaps");
  auto p = normalized.to(torch::kFloat64);
  auto kp = keypoints.to(torch::kFloat64);
  const auto h = p.size(-2), w = p.size(-1);
  auto xs = cell_coordinates(w, torch::kFloat64);
  auto ys = cell_coordinates(h, torch::kFloat64);
  auto dx = xs.view({1, w}) - kp.select(-1, 0).unsqueeze(-1).unsqueeze(-1);  // [..., 1, W]
  auto dy = ys.view({h, 1}) - kp.select(-1, 1).unsqueeze(-1).unsqueeze(-1);  // [..., H, 1]
  HeatmapFeatures f;
  f.confidence = p.flatten(-2).amax(-1);
  f.sigma2_x = (p * dx * dx).sum({-2, -1});
  f.sigma2_y = (p * dy * dy).sum({-2, -1});
  f.sigma2_xy = (p * dx * dy).sum({-2, -1});
  return f;
}

std::vector<Peak> extract_multi_peak(const torch::Tensor& raw_in, int n_agents, int region) {
  if (raw_in.dim() != 2) throw ShapeError("raw heatmap must be [H, W]");
  if (n_agents < 1) throw InvalidArgument("n_agents must be >= 1");
  if (region < 1) throw InvalidArgument("region must be >= 1");
  auto raw = raw_in.to(torch::kFloat64).contiguous();
  if (!torch::isfinite(raw).all().item<bool>()) throw NumericalError("raw heatmap has non-finite cells");
  const auto h = raw.size(0), w = raw.size(1);

  if (n_agents == 1) return {local_peak(raw, {0, h - 1, 0, w - 1})};

  auto a = raw.accessor<double, 2>();
  auto is_local_max = [&](std::int64_t r, std::int64_t c) {
    for (std::int64_t dr = -1; dr <= 1; ++dr)
      for (std::int64_t dc = -1; dc <= 1; ++dc) {
        const auto rr = r + dr, cc = c + dc;
        if ((dr || dc) && rr >= 0 && rr < h && cc >= 0 && cc < w && a[rr][cc] > a[r][c]) return false;
      }
    return true;
  };

  std::vector<char> suppressed(static_cast<std::size_t>(h * w), 0);
  std::vector<Peak> peaks;
  for (int n = 0; n < n_agents; ++n) {
    std::int64_t best = -1;
    for (std::int64_t i = 0; i < h * w; ++i)
      if (!suppressed[static_cast<std::size_t>(i)] && (best < 0 || a[i / w][i % w] > a[best / w][best % w])) best = i;
    if (best < 0 || !is_local_max(best / w, best % w)) break;
    const auto r = best / w, c = best % w;
    Window win{std::max<std::int64_t>(0, r - region), std::min(h - 1, r + region),
               std::max<std::int64_t>(0, c - region), std::min(w - 1, c + region)};
    peaks.push_back(local_peak(raw, win));
    for (auto rr = win.r0; rr <= win.r1; ++rr)
      for (auto cc = win.c0; cc <= win.c1; ++cc) suppressed[static_cast<std::size_t>(rr * w + cc)] = 1;
  }
  const Peak strongest = peaks.front();
  std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& x, const Peak& y) { return x.v < y.v; });
  while (static_cast<int>(peaks.size()) < n_agents) {
    Peak d = strongest;
    d.duplicate = true;
    peaks.push_back(d);
  }
  return peaks;
}

int default_region(double sigma, std::int64_t heatmap_size) {
  const double cell = heatmap_size > 1 ? 1.0 / static_cast<double>(heatmap_size - 1) : 1.0;
  return std::max(1, static_cast<int>(std::lround(4.0 * sigma / cell)));
}

std::vector<bool> background_keypoints(const torch::Tensor& confidence, double quantile) {
  if (confidence.dim() != 2) throw ShapeError("confidence must be [N, K]");
  if (quantile < 0.0 || quantile > 1.0) throw InvalidArgument("quantile must be in [0, 1]");
  auto mean = confidence.to(torch::kFloat64).mean(0);
  const double threshold = torch::quantile(mean, quantile).item<double>();
  std::vector<bool> out;
  for (std::int64_t k = 0; k < mean.size(0); ++k) out.push_back(mean[k].item<double>() < threshold);
  return out;
}

}  // namespace kpdisc
