#include "kpdisc/objectives.hpp"

#include "kpdisc/bottleneck.hpp"
#include "kpdisc/checkpoint.hpp"
#include "kpdisc/error.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>

namespace kpdisc {

namespace nn = torch::nn;

PerceptualExtractorImpl::PerceptualExtractorImpl(const PerceptualConfig& c) {
  if (c.blocks < 1 || static_cast<std::size_t>(c.blocks) > c.widths.size())
    throw InvalidArgument("perceptual block count must be in [1, number of widths]");
  if (c.convs_per_block < 1) throw InvalidArgument("convs_per_block must be >= 1");
  std::int64_t in = 3;
  for (int b = 0; b < c.blocks; ++b) {
    nn::Sequential block;
    if (b > 0) block->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2).stride(2)));
    for (int i = 0; i < c.convs_per_block; ++i) {
      const auto out = c.widths[static_cast<std::size_t>(b)];
      block->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1)));
      block->push_back(nn::ReLU());
      in = out;
    }
    blocks_.push_back(register_module("block" + std::to_string(b), block));
  }

  if (!c.weights.empty()) {
    import_module(*this, "perceptual/", TensorArchive::load(c.weights));
  } else {
    // He-normal init from a private generator so the global RNG is untouched.
    auto gen = at::make_generator<at::CPUGeneratorImpl>(c.seed);
    torch::NoGradGuard ng;
    for (auto& p : named_parameters(true)) {
      auto& t = p.value();
      if (t.dim() == 4) {
        const double fan_in = static_cast<double>(t.size(1) * t.size(2) * t.size(3));
        t.copy_(at::normal(0.0, std::sqrt(2.0 / fan_in), t.sizes(), gen));
      } else {
        t.zero_();
      }
    }
  }
  for (auto& p : parameters()) p.set_requires_grad(false);
  eval();

  weights_ = c.block_weights.empty() ? std::vector<double>(static_cast<std::size_t>(c.blocks), 1.0) : c.block_weights;
  if (weights_.size() != static_cast<std::size_t>(c.blocks))
    throw InvalidArgument("one perceptual weight per tapped block is required");
}

std::vector<torch::Tensor> PerceptualExtractorImpl::forward(const torch::Tensor& images) {
  std::vector<torch::Tensor> taps;
  auto x = images;
  for (auto& b : blocks_) {
    x = b->forward(x);
    taps.push_back(x);
  }
  return taps;
}

void LossWeights::validate() const {
  if (w_r < 0.0 || w_s < 0.0) throw InvalidArgument("loss weights must be nonnegative");
  if (!(sigma_s > 0.0)) throw InvalidArgument("sigma_s must be positive");
  if (curriculum_epoch < 0) throw InvalidArgument("curriculum epoch must be >= 0");
}

torch::Tensor reconstruction_loss(const torch::Tensor& target, const torch::Tensor& prediction,
                                  PerceptualExtractor& extractor) {
  if (target.sizes() != prediction.sizes()) throw ShapeError("target and prediction shapes differ");
  auto dtype = extractor->parameters().front().scalar_type();
  auto ft = extractor->forward(target.to(dtype));
  auto fp = extractor->forward(prediction.to(dtype));
  const auto& w = extractor->block_weights();
  auto loss = torch::zeros({}, prediction.options().dtype(dtype));
  for (std::size_t i = 0; i < ft.size(); ++i) loss = loss + w[i] * (fp[i] - ft[i].detach()).pow(2).mean();
  return loss;
}

torch::Tensor rotation_loss(const torch::Tensor& pseudo_labels, const torch::Tensor& predicted) {
  if (pseudo_labels.sizes() != predicted.sizes()) throw ShapeError("pseudo labels and predictions differ in shape");
  return (predicted - pseudo_labels.detach()).pow(2).mean();
}

torch::Tensor separation_loss(const torch::Tensor& keypoints, double sigma_s) {
  if (!(sigma_s > 0.0)) throw InvalidArgument("sigma_s must be positive");
  if (keypoints.dim() < 2 || keypoints.size(-1) != 2) throw ShapeError("keypoints must be [..., K, 2]");
  const auto k = keypoints.size(-2);
  if (k < 1) throw InvalidArgument("need at least one keypoint");
  auto diff = keypoints.unsqueeze(-2) - keypoints.unsqueeze(-3);  // [..., K, K, 2]
  auto d2 = diff.pow(2).sum(-1);
  auto off_diag = 1.0 - torch::eye(k, keypoints.options());
  auto per_set = (torch::exp(-d2 / (2.0 * sigma_s * sigma_s)) * off_diag).sum({-2, -1});
  return per_set.dim() == 0 ? per_set : per_set.mean();
}

torch::Tensor supervised_keypoint_loss(const torch::Tensor& predicted_keypoints, const torch::Tensor& annotated,
                                       const std::vector<int>& channel_of, double std_dev, std::int64_t height,
                                       std::int64_t width) {
  if (annotated.dim() != 3 || annotated.size(-1) != 2) throw ShapeError("annotations must be [B, M, 2]");
  if (predicted_keypoints.dim() != 3 || predicted_keypoints.size(0) != annotated.size(0))
    throw ShapeError("predicted keypoints must be [B, K, 2] with the annotation batch size");
  if (static_cast<std::int64_t>(channel_of.size()) != annotated.size(1))
    throw InvalidArgument("one channel mapping per annotation is required");
  std::vector<std::int64_t> idx;
  for (std::size_t m = 0; m < channel_of.size(); ++m) {
    if (channel_of[m] < 0 || channel_of[m] >= predicted_keypoints.size(1))
      throw InvalidArgument("annotation " + std::to_string(m) + " is not mapped to a predicted channel");
    idx.push_back(channel_of[m]);
  }
  auto chosen = predicted_keypoints.index_select(1, torch::tensor(idx, torch::kLong));
  auto pred = render_gaussians(chosen, std_dev, height, width);
  auto target = render_gaussians(annotated.to(predicted_keypoints.scalar_type()), std_dev, height, width);
  return (pred - target.detach()).pow(2).mean();
}

torch::Tensor total_loss(const LossParts& parts, const LossWeights& weights, int epoch) {
  if (epoch < 0) throw InvalidArgument("epoch must be >= 0");
  if (epoch <= weights.curriculum_epoch) return parts.recon;
  auto total = parts.recon;
  if (parts.rot.defined()) total = total + weights.w_r * parts.rot;
  if (parts.sep.defined()) total = total + weights.w_s * parts.sep;
  return total;
}

double total_loss(double recon, double rot, double sep, const LossWeights& weights, int epoch) {
  if (epoch < 0) throw InvalidArgument("epoch must be >= 0");
  if (epoch <= weights.curriculum_epoch) return recon;
  return recon + weights.w_r * rot + weights.w_s * sep;
}

}  // namespace kpdisc
