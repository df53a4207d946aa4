#include "kpdisc/bottleneck.hpp"

#include "kpdisc/error.hpp"

namespace kpdisc {

torch::Tensor cell_coordinates(std::int64_t n, const torch::TensorOptions& options) {
  if (n <= 0) throw InvalidArgument("axis length must be positive");
  if (n == 1) return torch::full({1}, 0.5, options);
  return torch::linspace(0.0, 1.0, n, options);
}

SoftArgmax soft_argmax(const torch::Tensor& raw) {
  if (raw.dim() < 2) throw ShapeError("soft_argmax expects at least [H, W]");
  if (!torch::isfinite(raw).all().item<bool>()) throw NumericalError("non-finite heatmap values");
  const auto h = raw.size(-2);
  const auto w = raw.size(-1);
  auto flat = raw.flatten(-2);
  auto normalized = torch::softmax(flat, -1).view(raw.sizes());
  auto opts = raw.options();
  auto u = (normalized.sum(-2) * cell_coordinates(w, opts)).sum(-1);
  auto v = (normalized.sum(-1) * cell_coordinates(h, opts)).sum(-1);
  return {normalized, torch::stack({u, v}, -1)};
}

torch::Tensor render_gaussians(const torch::Tensor& keypoints, double std_dev, std::int64_t height,
                               std::int64_t width) {
  if (!(std_dev > 0.0)) throw InvalidArgument("Gaussian std must be positive");
  if (keypoints.dim() < 1 || keypoints.size(-1) != 2) throw ShapeError("keypoints must be [..., 2]");
  auto opts = keypoints.options();
  auto u = keypoints.select(-1, 0).unsqueeze(-1).unsqueeze(-1);
  auto v = keypoints.select(-1, 1).unsqueeze(-1).unsqueeze(-1);
  auto gx = cell_coordinates(width, opts).view({1, width});
  auto gy = cell_coordinates(height, opts).view({height, 1});
  auto d2 = (gx - u).pow(2) + (gy - v).pow(2);
  return torch::exp(-d2 / (2.0 * std_dev * std_dev));
}

torch::Tensor rotate_maps(const torch::Tensor& maps, int quarter_turns) {
  if (maps.dim() < 2) throw ShapeError("rotate_maps expects at least [H, W]");
  const int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return maps;
  return torch::rot90(maps, k, {maps.dim() - 2, maps.dim() - 1});
}

torch::Tensor rotate_keypoints(const torch::Tensor& keypoints, int quarter_turns) {
  if (keypoints.dim() < 1 || keypoints.size(-1) != 2) throw ShapeError("keypoints must be [..., 2]");
  const int k = ((quarter_turns % 4) + 4) % 4;
  auto u = keypoints.select(-1, 0);
  auto v = keypoints.select(-1, 1);
  for (int i = 0; i < k; ++i) {
    // One quarter turn sends cell (row r, col c) to (row W-1-c, col r).
    auto nu = v;
    auto nv = 1.0 - u;
    u = nu;
    v = nv;
  }
  return torch::stack({u, v}, -1);
}

}  // namespace kpdisc
