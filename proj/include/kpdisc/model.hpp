#pragma once

#include "kpdisc/bottleneck.hpp"
#include "kpdisc/data.hpp"
#include "kpdisc/difftarget.hpp"

#include <torch/torch.h>

#include <array>
#include <string>
#include <vector>

namespace kpdisc {

enum class EncoderArch {
  resnet50,  // bottleneck residual network, 2048 output channels
  compact,   // basic residual blocks with configurable widths, for CPU-scale runs
};

std::string to_string(EncoderArch arch);
EncoderArch encoder_arch_from_string(const std::string& name);

struct ModelConfig {
  int k = 10;                      // number of keypoints
  double sigma = 0.05;             // rendering std, normalized units
  bool single_branch = false;      // decoder sees only the future frame's geometry
  std::int64_t resolution = 256;   // square input side, multiple of 32
  EncoderArch encoder = EncoderArch::resnet50;
  /// compact encoder only: channels of the /2, /4, /8, /16 and /32 stages.
  std::vector<std::int64_t> encoder_widths{16, 32, 64, 64, 128};
  std::int64_t pose_channels = 256;
  /// Output channels of the five reconstruction-decoder blocks.
  std::vector<std::int64_t> decoder_channels{1024, 512, 256, 128, 64};
  bool batchnorm = true;           // normalization inside encoder and pose decoder blocks
  TargetParams target;             // recorded with the weights

  std::int64_t appearance_channels() const;
  std::int64_t heatmap_size() const { return resolution / 4; }
  int geometry_channels() const { return single_branch ? k : 2 * k; }
  void validate() const;
};

/// Encoder outputs at strides 4, 8, 16 and 32. The last level is the appearance feature h_a.
using FeaturePyramid = std::array<torch::Tensor, 4>;

class EncoderImpl : public torch::nn::Module {
public:
  explicit EncoderImpl(const ModelConfig& config);
  FeaturePyramid forward(const torch::Tensor& images);
  std::array<std::int64_t, 4> channels() const { return channels_; }

private:
  torch::nn::Sequential stem_{nullptr};
  std::array<torch::nn::Sequential, 4> stages_;
  std::array<std::int64_t, 4> channels_{};
};
TORCH_MODULE(Encoder);

/// Feature-pyramid head producing K raw heatmaps at 1/4 of the input resolution.
class PoseDecoderImpl : public torch::nn::Module {
public:
  PoseDecoderImpl(const std::array<std::int64_t, 4>& in_channels, std::int64_t width, int k, bool batchnorm);
  torch::Tensor forward(const FeaturePyramid& pyramid);

private:
  std::array<torch::nn::Conv2d, 4> lateral_{nullptr, nullptr, nullptr, nullptr};
  torch::nn::Sequential head_{nullptr};
};
TORCH_MODULE(PoseDecoder);

/// Five upsample + conv-block stages; before each block the rendered keypoint
/// Gaussians are drawn at the block's resolution and concatenated.
class ReconstructionDecoderImpl : public torch::nn::Module {
public:
  ReconstructionDecoderImpl(std::int64_t appearance_channels, const std::vector<std::int64_t>& channels,
                            int geometry_channels, double sigma);
  /// `keypoints`: [B, G, 2] with G = geometry channels (reference then future).
  torch::Tensor forward(const torch::Tensor& appearance, const torch::Tensor& keypoints);

  /// Channel count entering each block (features + geometry).
  std::vector<std::int64_t> block_input_channels() const { return block_inputs_; }

private:
  std::vector<torch::nn::Sequential> blocks_;
  torch::nn::Conv2d out_{nullptr};
  std::vector<std::int64_t> block_inputs_;
  int geometry_channels_ = 0;
  double sigma_ = 0.05;
};
TORCH_MODULE(ReconstructionDecoder);

/// The bottleneck for one batch of frames.
struct GeometryBottleneck {
  torch::Tensor raw;         // [B, K, H', W']
  torch::Tensor normalized;  // [B, K, H', W'], each map sums to 1
  torch::Tensor keypoints;   // [B, K, 2]
  torch::Tensor rendered;    // [B, K, H', W']
};

struct ForwardOutput {
  torch::Tensor reconstruction;  // [B, 3, H, W]
  GeometryBottleneck geom_ref;
  GeometryBottleneck geom_fut;
};

class KeypointModelImpl : public torch::nn::Module {
public:
  explicit KeypointModelImpl(const ModelConfig& config);

  const ModelConfig& config() const noexcept { return config_; }

  FeaturePyramid encode(const torch::Tensor& images);
  torch::Tensor pose_decode(const FeaturePyramid& pyramid);
  GeometryBottleneck geometry_from(const FeaturePyramid& pyramid);
  GeometryBottleneck geometry(const torch::Tensor& images);
  torch::Tensor reconstruct(const torch::Tensor& appearance, const GeometryBottleneck& ref,
                            const GeometryBottleneck& fut);
  /// Appearance from the reference only; geometry from both frames.
  ForwardOutput forward(const torch::Tensor& reference, const torch::Tensor& future);

  Encoder encoder{nullptr};
  PoseDecoder pose{nullptr};
  ReconstructionDecoder decoder{nullptr};

private:
  void check_input(const torch::Tensor& images) const;
  ModelConfig config_;
};
TORCH_MODULE(KeypointModel);

/// Everything needed to resume or run a model.
struct ModelState {
  ModelConfig config;
  KeypointModel net{nullptr};
  std::int64_t step = 0;

  static ModelState create(const ModelConfig& config, std::uint64_t seed);
};

// Single-frame convenience wrappers around the batched model (evaluation mode).
// The appearance feature is the last pyramid level; the pose decoder also reads the finer levels.
FeaturePyramid encode(const Frame& frame, ModelState& state);
torch::Tensor pose_decode(const FeaturePyramid& features, ModelState& state);
ForwardOutput forward(const FramePair& pair, ModelState& state);

/// Converts a frame batch to the model's dtype and checks its resolution.
torch::Tensor as_model_input(const torch::Tensor& images, const KeypointModel& net);

}  // namespace kpdisc
