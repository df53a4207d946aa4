#pragma once

#include "kpdisc/data.hpp"

#include <string>
#include <utility>

namespace kpdisc {

/// Reconstruction targets. `image` (the future frame itself) is the classic
/// image-reconstruction baseline and is only used for ablations.
enum class TargetKind { ssim, abs_diff, raw_diff, image };

std::string to_string(TargetKind kind);
TargetKind target_kind_from_string(const std::string& name);

/// How the SSIM similarity in [-1, 1] becomes a dissimilarity.
enum class SsimNegation {
  affine,  // (1 - SSIM) / 2, range [0, 1]
  sign,    // -SSIM, range [-1, 1]
};

struct SsimParams {
  int window = 11;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
  bool gaussian = false;  // uniform averaging unless set
  double gaussian_sigma = 1.5;
  SsimNegation negation = SsimNegation::affine;
};

struct TargetParams {
  TargetKind kind = TargetKind::ssim;
  SsimParams ssim;
};

struct DifferenceTarget {
  torch::Tensor map;  // [3, H, W] (or [B, 3, H, W] for batches)
  TargetKind kind = TargetKind::ssim;
  std::pair<double, double> value_range{0.0, 1.0};
};

/// Per-channel local SSIM between `a` and `b` (`[3,H,W]` or `[B,3,H,W]`),
/// computed in double precision over a sliding window with reflected borders.
/// Returns the similarity map with the input's shape.
torch::Tensor local_ssim(const torch::Tensor& a, const torch::Tensor& b, const SsimParams& params);

DifferenceTarget ssim_dissimilarity(const FramePair& pair, const SsimParams& params = {});
DifferenceTarget abs_difference(const FramePair& pair);
DifferenceTarget raw_difference(const FramePair& pair);

/// Batched target computation used by training: `reference` and `future` are
/// float `[B, 3, H, W]`. Returns a float `[B, 3, H, W]` target.
torch::Tensor compute_target(const torch::Tensor& reference, const torch::Tensor& future,
                             const TargetParams& params);

std::pair<double, double> target_range(const TargetParams& params);

}  // namespace kpdisc
