#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

namespace kpdisc {

/// Second moments of a normalized heatmap about its keypoint, normalized units^2.
struct Covariance {
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
};

/// Per-keypoint features; every tensor has the leading shape of the input maps
/// without the two spatial dims (e.g. `[B, K]`), dtype float64.
struct HeatmapFeatures {
  torch::Tensor confidence;
  torch::Tensor sigma2_x;
  torch::Tensor sigma2_y;
  torch::Tensor sigma2_xy;
};

/// Maximum of a normalized `[H, W]` map. Throws InvalidArgument if the map does
/// not sum to 1 (tolerance 1e-4) or has negative cells.
double confidence(const torch::Tensor& normalized);

/// Weighted second moments about (u, v). Same normalization check as `confidence`.
Covariance covariance(const torch::Tensor& normalized, double u, double v);

/// Batched confidence and covariance for `normalized` `[..., H, W]` and
/// `keypoints` `[..., 2]`, computed in double precision.
HeatmapFeatures heatmap_features(const torch::Tensor& normalized, const torch::Tensor& keypoints);

struct Peak {
  double u = 0.0;
  double v = 0.0;
  double confidence = 0.0;
  Covariance cov;
  bool duplicate = false;  // fewer distinct peaks than agents: copy of the strongest one
};

/// Finds up to `n_agents` peaks in one raw `[H, W]` heatmap by greedy maximum
/// picking with square suppression of half-width `region` cells. Each peak is
/// refined by a soft-argmax restricted to its window. Peaks are returned
/// ordered by v (smaller first). With `n_agents == 1` the whole map is used,
/// which is exactly the global soft-argmax.
std::vector<Peak> extract_multi_peak(const torch::Tensor& raw, int n_agents, int region);

/// Default suppression half-width: 4 sigma expressed in cells.
int default_region(double sigma, std::int64_t heatmap_size);

/// Marks keypoints whose mean confidence falls below the given quantile of all
/// keypoints' mean confidences. `confidence` is `[N, K]`. Reporting aid only.
std::vector<bool> background_keypoints(const torch::Tensor& confidence, double quantile);

}  // namespace kpdisc
