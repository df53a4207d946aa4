#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace kpdisc {

struct PerceptualConfig {
  /// Output channels of each convolutional block; the first `blocks` are tapped.
  std::vector<std::int64_t> widths{64, 128, 256, 512};
  int convs_per_block = 2;
  int blocks = 4;
  std::vector<double> block_weights;  // empty: equal weights of 1
  std::uint64_t seed = 1234;          // initialization when no weights file is given
  std::filesystem::path weights;      // optional TensorArchive with "perceptual/..." tensors
};

/// Frozen VGG-style feature network (3x3 conv + ReLU blocks separated by 2x2
/// max pooling). Returns the output of every tapped block.
class PerceptualExtractorImpl : public torch::nn::Module {
public:
  explicit PerceptualExtractorImpl(const PerceptualConfig& config);
  std::vector<torch::Tensor> forward(const torch::Tensor& images);
  const std::vector<double>& block_weights() const noexcept { return weights_; }

private:
  std::vector<torch::nn::Sequential> blocks_;
  std::vector<double> weights_;
};
TORCH_MODULE(PerceptualExtractor);

struct LossWeights {
  double w_r = 1.0;
  double w_s = 0.02;
  int curriculum_epoch = 5;  // n: equivariance and separation switch on when epoch > n
  double sigma_s = 0.05;

  void validate() const;
};

/// Sum over tapped blocks of the mean squared feature difference.
torch::Tensor reconstruction_loss(const torch::Tensor& target, const torch::Tensor& prediction,
                                  PerceptualExtractor& extractor);

/// Mean squared error between rotated pseudo labels (treated as constants) and
/// the maps predicted from the rotated image.
torch::Tensor rotation_loss(const torch::Tensor& pseudo_labels, const torch::Tensor& predicted);

/// Sum over ordered pairs i != j of exp(-|p_i - p_j|^2 / (2 sigma_s^2)) for
/// keypoints `[K, 2]`; for `[B, K, 2]` the batch mean of that sum.
torch::Tensor separation_loss(const torch::Tensor& keypoints, double sigma_s);

/// MSE between Gaussians rendered at annotated points and at the predicted
/// keypoints of the mapped channels. `annotated` is `[B, M, 2]`, `channel_of[m]`
/// the predicted channel for annotation m (-1 = unmapped, which is an error).
torch::Tensor supervised_keypoint_loss(const torch::Tensor& predicted_keypoints, const torch::Tensor& annotated,
                                       const std::vector<int>& channel_of, double std_dev, std::int64_t height,
                                       std::int64_t width);

struct LossParts {
  torch::Tensor recon;
  torch::Tensor rot;
  torch::Tensor sep;
};

/// L_recon + 1[epoch > n] (w_r L_r + w_s L_s).
torch::Tensor total_loss(const LossParts& parts, const LossWeights& weights, int epoch);
double total_loss(double recon, double rot, double sep, const LossWeights& weights, int epoch);

}  // namespace kpdisc
