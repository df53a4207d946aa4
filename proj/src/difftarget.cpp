#include "kpdisc/difftarget.hpp"

#include "kpdisc/error.hpp"

#include <cmath>

namespace kpdisc {

namespace F = torch::nn::functional;

std::string to_string(TargetKind kind) {
  switch (kind) {
    case TargetKind::ssim: return "ssim";
    case TargetKind::abs_diff: return "abs_diff";
    case TargetKind::raw_diff: return "raw_diff";
    case TargetKind::image: return "image";
  }
  return "?";
}

TargetKind target_kind_from_string(const std::string& name) {
  if (name == "ssim") return TargetKind::ssim;
  if (name == "abs_diff") return TargetKind::abs_diff;
  if (name == "raw_diff") return TargetKind::raw_diff;
  if (name == "image") return TargetKind::image;
  throw InvalidArgument("unknown target kind '" + name + "'");
}

namespace {

torch::Tensor window_kernel(const SsimParams& p, std::int64_t channels) {
  auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  torch::Tensor k1;
  if (p.gaussian) {
    auto x = torch::arange(p.window, opts) - static_cast<double>(p.window / 2);
    k1 = torch::exp(-(x * x) / (2.0 * p.gaussian_sigma * p.gaussian_sigma));
    k1 = k1 / k1.sum();
  } else {
    k1 = torch::full({p.window}, 1.0 / p.window, opts);
  }
  auto k2 = torch::outer(k1, k1);
  return k2.expand({channels, 1, p.window, p.window}).contiguous();
}

void check_pair_shapes(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) throw ShapeError("frames must have the same shape");
}

}  // namespace

torch::Tensor local_ssim(const torch::Tensor& a, const torch::Tensor& b, const SsimParams& p) {
  check_pair_shapes(a, b);
  if (p.window < 3 || p.window % 2 == 0) throw InvalidArgument("SSIM window must be odd and >= 3");
  const bool single = a.dim() == 3;
  auto x = (single ? a.unsqueeze(0) : a).to(torch::kFloat64);
  auto y = (single ? b.unsqueeze(0) : b).to(torch::kFloat64);
  if (x.dim() != 4) throw ShapeError("SSIM expects [C,H,W] or [B,C,H,W]");
  if (p.window > x.size(2) || p.window > x.size(3)) throw InvalidArgument("SSIM window larger than frame");

  const auto channels = x.size(1);
  const auto kernel = window_kernel(p, channels);
  const auto pad = p.window / 2;
  auto filt = [&](const torch::Tensor& t) {
    auto padded = F::pad(t, F::PadFuncOptions({pad, pad, pad, pad}).mode(torch::kReflect));
    return F::conv2d(padded, kernel, F::Conv2dFuncOptions().groups(channels));
  };
  auto mx = filt(x);
  auto my = filt(y);
  auto vx = filt(x * x) - mx * mx;
  auto vy = filt(y * y) - my * my;
  auto cxy = filt(x * y) - mx * my;
  auto s = ((2.0 * mx * my + p.c1) * (2.0 * cxy + p.c2)) /
           ((mx * mx + my * my + p.c1) * (vx + vy + p.c2));
  return single ? s.squeeze(0) : s;
}

std::pair<double, double> target_range(const TargetParams& params) {
  if (params.kind == TargetKind::ssim && params.ssim.negation == SsimNegation::sign) return {-1.0, 1.0};
  return {0.0, 1.0};
}

torch::Tensor compute_target(const torch::Tensor& reference, const torch::Tensor& future,
                             const TargetParams& params) {
  check_pair_shapes(reference, future);
  switch (params.kind) {
    case TargetKind::ssim: {
      auto s = local_ssim(reference, future, params.ssim);
      const auto cdim = s.dim() - 3;
      auto mean = s.mean(cdim, /*keepdim=*/true).clamp(-1.0, 1.0);
      auto d = params.ssim.negation == SsimNegation::affine ? (1.0 - mean) / 2.0 : -mean;
      std::vector<int64_t> reps(static_cast<std::size_t>(s.dim()), 1);
      reps[static_cast<std::size_t>(cdim)] = s.size(cdim);
      return d.repeat(reps).to(reference.scalar_type());
    }
    case TargetKind::abs_diff:
      return (future - reference).abs();
    case TargetKind::raw_diff:
      return (future - reference + 1.0) / 2.0;
    case TargetKind::image:
      return future.clone();
  }
  throw InvalidArgument("unknown target kind");
}

DifferenceTarget ssim_dissimilarity(const FramePair& pair, const SsimParams& params) {
  TargetParams tp{TargetKind::ssim, params};
  return {compute_target(pair.reference().pixels(), pair.future().pixels(), tp), TargetKind::ssim,
          target_range(tp)};
}

DifferenceTarget abs_difference(const FramePair& pair) {
  TargetParams tp{TargetKind::abs_diff, {}};
  return {compute_target(pair.reference().pixels(), pair.future().pixels(), tp), TargetKind::abs_diff,
          {0.0, 1.0}};
}

DifferenceTarget raw_difference(const FramePair& pair) {
  TargetParams tp{TargetKind::raw_diff, {}};
  return {compute_target(pair.reference().pixels(), pair.future().pixels(), tp), TargetKind::raw_diff,
          {0.0, 1.0}};
}

}  // namespace kpdisc
