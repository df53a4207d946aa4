#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace kpdisc {

// Normalized coordinates: (u, v) in [0, 1]^2 with u horizontal. Cell j of an
// n-cell axis sits at j / (n - 1) (or 0.5 when n == 1), so the first and last
// cells lie exactly on the borders at every resolution and quarter-turn
// rotations map cells onto cells.

/// Coordinates of the n cells along one axis.
torch::Tensor cell_coordinates(std::int64_t n, const torch::TensorOptions& options = torch::kFloat32);

struct SoftArgmax {
  torch::Tensor normalized;  // same shape as the input, sums to 1 over the last two dims
  torch::Tensor keypoints;   // [..., 2] as (u, v)
};

/// Spatial softmax (temperature 1) over the last two dims of `raw`
/// (`[H,W]`, `[K,H,W]` or `[B,K,H,W]`) followed by the expected coordinate.
/// Differentiable. Throws NumericalError on non-finite input.
SoftArgmax soft_argmax(const torch::Tensor& raw);

/// Gaussian maps exp(-|c - p|^2 / (2 std^2)) for keypoints `[..., 2]`,
/// returned as `[..., H, W]`. Differentiable in the keypoints.
torch::Tensor render_gaussians(const torch::Tensor& keypoints, double std_dev, std::int64_t height,
                               std::int64_t width);

/// Rotates the last two dims by `quarter_turns` * 90 degrees
/// (counter-clockwise as displayed, i.e. torch.rot90 over dims (-2, -1)).
torch::Tensor rotate_maps(const torch::Tensor& maps, int quarter_turns);

/// Maps normalized keypoints `[..., 2]` through the same rotation as `rotate_maps`.
torch::Tensor rotate_keypoints(const torch::Tensor& keypoints, int quarter_turns);

}  // namespace kpdisc
