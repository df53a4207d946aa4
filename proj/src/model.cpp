#include "kpdisc/model.hpp"

#include "kpdisc/error.hpp"

namespace kpdisc {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

std::string to_string(EncoderArch arch) {
  return arch == EncoderArch::resnet50 ? "resnet50" : "compact";
}

EncoderArch encoder_arch_from_string(const std::string& name) {
  if (name == "resnet50") return EncoderArch::resnet50;
  if (name == "compact") return EncoderArch::compact;
  throw InvalidArgument("unknown encoder '" + name + "'");
}

std::int64_t ModelConfig::appearance_channels() const {
  return encoder == EncoderArch::resnet50 ? 2048 : encoder_widths.back();
}

void ModelConfig::validate() const {
  if (k < 1) throw InvalidArgument("model.k must be >= 1");
  if (!(sigma > 0.0)) throw InvalidArgument("model.sigma must be positive");
  if (resolution < 32 || resolution % 32 != 0) throw InvalidArgument("resolution must be a positive multiple of 32");
  if (encoder == EncoderArch::compact && encoder_widths.size() != 5)
    throw InvalidArgument("compact encoder needs five stage widths");
  if (decoder_channels.size() != 5) throw InvalidArgument("decoder needs five block widths");
  if (pose_channels < 1) throw InvalidArgument("pose_channels must be positive");
}

namespace {

nn::Conv2d conv(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride, bool bias) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2).bias(bias));
}

// BatchNorm, or an identity when normalization is disabled.
nn::AnyModule norm(std::int64_t channels, bool batchnorm) {
  if (batchnorm) return nn::AnyModule(nn::BatchNorm2d(channels));
  return nn::AnyModule(nn::Identity());
}

class ResidualBlockImpl : public nn::Module {
public:
  // bottleneck_width > 0 selects the 1x1-3x3-1x1 form, otherwise two 3x3 convs.
  ResidualBlockImpl(std::int64_t in, std::int64_t out, std::int64_t stride, std::int64_t bottleneck_width,
                    bool batchnorm) {
    const bool bias = !batchnorm;
    if (bottleneck_width > 0) {
      body_ = register_module("body", nn::Sequential(conv(in, bottleneck_width, 1, 1, bias),
                                                     norm(bottleneck_width, batchnorm), nn::ReLU(),
                                                     conv(bottleneck_width, bottleneck_width, 3, stride, bias),
                                                     norm(bottleneck_width, batchnorm), nn::ReLU(),
                                                     conv(bottleneck_width, out, 1, 1, bias), norm(out, batchnorm)));
    } else {
      body_ = register_module("body", nn::Sequential(conv(in, out, 3, stride, bias), norm(out, batchnorm),
                                                     nn::ReLU(), conv(out, out, 3, 1, bias), norm(out, batchnorm)));
    }
    if (stride != 1 || in != out)
      shortcut_ = register_module("shortcut", nn::Sequential(conv(in, out, 1, stride, bias), norm(out, batchnorm)));
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto y = body_->forward(x);
    return torch::relu(y + (shortcut_ ? shortcut_->forward(x) : x));
  }

private:
  nn::Sequential body_{nullptr};
  nn::Sequential shortcut_{nullptr};
};
TORCH_MODULE(ResidualBlock);

}  // namespace

EncoderImpl::EncoderImpl(const ModelConfig& c) {
  const bool bn = c.batchnorm;
  if (c.encoder == EncoderArch::resnet50) {
    stem_ = register_module("stem", nn::Sequential(conv(3, 64, 7, 2, !bn), norm(64, bn), nn::ReLU(),
                                                   nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2).padding(1))));
    const std::array<int, 4> depth{3, 4, 6, 3};
    const std::array<std::int64_t, 4> width{64, 128, 256, 512};
    std::int64_t in = 64;
    for (std::size_t s = 0; s < 4; ++s) {
      nn::Sequential stage;
      for (int b = 0; b < depth[s]; ++b) {
        const std::int64_t stride = (b == 0 && s > 0) ? 2 : 1;
        stage->push_back(ResidualBlock(in, width[s] * 4, stride, width[s], bn));
        in = width[s] * 4;
      }
      stages_[s] = register_module("stage" + std::to_string(s + 1), stage);
      channels_[s] = in;
    }
  } else {
    const auto& w = c.encoder_widths;
    stem_ = register_module("stem", nn::Sequential(conv(3, w[0], 3, 1, !bn), norm(w[0], bn), nn::ReLU(),
                                                   conv(w[0], w[0], 3, 2, !bn), norm(w[0], bn), nn::ReLU()));
    for (std::size_t s = 0; s < 4; ++s) {
      stages_[s] = register_module("stage" + std::to_string(s + 1),
                                   nn::Sequential(ResidualBlock(w[s], w[s + 1], 2, 0, bn)));
      channels_[s] = w[s + 1];
    }
  }
}

FeaturePyramid EncoderImpl::forward(const torch::Tensor& images) {
  FeaturePyramid out;
  auto x = stem_->forward(images);
  for (std::size_t s = 0; s < 4; ++s) {
    x = stages_[s]->forward(x);
    out[s] = x;
  }
  return out;
}

PoseDecoderImpl::PoseDecoderImpl(const std::array<std::int64_t, 4>& in_channels, std::int64_t width, int k,
                                 bool batchnorm) {
  for (std::size_t i = 0; i < 4; ++i)
    lateral_[i] = register_module("lateral" + std::to_string(i), conv(in_channels[i], width, 1, 1, true));
  auto last = conv(width, k, 1, 1, true);
  // Zero logits: every heatmap starts uniform with its keypoint at the centre.
  torch::nn::init::zeros_(last->weight);
  torch::nn::init::zeros_(last->bias);
  head_ = register_module("head", nn::Sequential(conv(width, width, 3, 1, !batchnorm), norm(width, batchnorm),
                                                 nn::ReLU(), last));
}

torch::Tensor PoseDecoderImpl::forward(const FeaturePyramid& pyramid) {
  auto x = lateral_[3]->forward(pyramid[3]);
  for (int i = 2; i >= 0; --i) {
    const auto& lvl = pyramid[static_cast<std::size_t>(i)];
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .size(std::vector<int64_t>{lvl.size(2), lvl.size(3)})
                              .mode(torch::kBilinear)
                              .align_corners(false)) +
        lateral_[static_cast<std::size_t>(i)]->forward(lvl);
  }
  return head_->forward(x);
}

ReconstructionDecoderImpl::ReconstructionDecoderImpl(std::int64_t appearance_channels,
                                                     const std::vector<std::int64_t>& channels,
                                                     int geometry_channels, double sigma)
    : geometry_channels_(geometry_channels), sigma_(sigma) {
  std::int64_t in = appearance_channels;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    const auto block_in = in + geometry_channels;
    block_inputs_.push_back(block_in);
    blocks_.push_back(register_module(
        "block" + std::to_string(i),
        nn::Sequential(conv(block_in, channels[i], 3, 1, false), nn::BatchNorm2d(channels[i]), nn::ReLU())));
    in = channels[i];
  }
  out_ = register_module("out", conv(in, 3, 3, 1, true));
}

torch::Tensor ReconstructionDecoderImpl::forward(const torch::Tensor& appearance, const torch::Tensor& keypoints) {
  if (keypoints.size(1) != geometry_channels_)
    throw ShapeError("decoder expects " + std::to_string(geometry_channels_) + " keypoint maps, got " +
                     std::to_string(keypoints.size(1)));
  auto x = appearance;
  for (auto& block : blocks_) {
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .scale_factor(std::vector<double>{2.0, 2.0})
                              .mode(torch::kBilinear)
                              .align_corners(false));
    auto maps = render_gaussians(keypoints, sigma_, x.size(2), x.size(3));
    x = block->forward(torch::cat({x, maps}, 1));
  }
  return out_->forward(x);
}

KeypointModelImpl::KeypointModelImpl(const ModelConfig& config) : config_(config) {
  config_.validate();
  encoder = register_module("encoder", Encoder(config_));
  pose = register_module("pose", PoseDecoder(encoder->channels(), config_.pose_channels, config_.k,
                                             config_.batchnorm));
  decoder = register_module("decoder", ReconstructionDecoder(config_.appearance_channels(),
                                                             config_.decoder_channels,
                                                             config_.geometry_channels(), config_.sigma));
}

void KeypointModelImpl::check_input(const torch::Tensor& images) const {
  if (images.dim() != 4 || images.size(1) != 3) throw ShapeError("model input must be [B, 3, H, W]");
  if (images.size(2) != config_.resolution || images.size(3) != config_.resolution)
    throw ShapeError("model input must be " + std::to_string(config_.resolution) + "x" +
                     std::to_string(config_.resolution) + ", got " + std::to_string(images.size(2)) + "x" +
                     std::to_string(images.size(3)));
}

FeaturePyramid KeypointModelImpl::encode(const torch::Tensor& images) {
  check_input(images);
  return encoder->forward(images);
}

torch::Tensor KeypointModelImpl::pose_decode(const FeaturePyramid& pyramid) { return pose->forward(pyramid); }

GeometryBottleneck KeypointModelImpl::geometry_from(const FeaturePyramid& pyramid) {
  GeometryBottleneck g;
  g.raw = pose_decode(pyramid);
  auto sa = soft_argmax(g.raw);
  g.normalized = sa.normalized;
  g.keypoints = sa.keypoints;
  g.rendered = render_gaussians(g.keypoints, config_.sigma, g.raw.size(2), g.raw.size(3));
  return g;
}

GeometryBottleneck KeypointModelImpl::geometry(const torch::Tensor& images) { return geometry_from(encode(images)); }

torch::Tensor KeypointModelImpl::reconstruct(const torch::Tensor& appearance, const GeometryBottleneck& ref,
                                             const GeometryBottleneck& fut) {
  if (fut.keypoints.size(1) != config_.k || (!config_.single_branch && ref.keypoints.size(1) != config_.k))
    throw ShapeError("keypoint count does not match the model");
  auto kps = config_.single_branch ? fut.keypoints : torch::cat({ref.keypoints, fut.keypoints}, 1);
  return decoder->forward(appearance, kps);
}

ForwardOutput KeypointModelImpl::forward(const torch::Tensor& reference, const torch::Tensor& future) {
  auto feat_ref = encode(reference);
  auto feat_fut = encode(future);
  ForwardOutput out;
  out.geom_ref = geometry_from(feat_ref);
  out.geom_fut = geometry_from(feat_fut);
  out.reconstruction = reconstruct(feat_ref[3], out.geom_ref, out.geom_fut);
  return out;
}

ModelState ModelState::create(const ModelConfig& config, std::uint64_t seed) {
  torch::manual_seed(seed);
  ModelState s;
  s.config = config;
  s.net = KeypointModel(config);
  return s;
}

torch::Tensor as_model_input(const torch::Tensor& images, const KeypointModel& net) {
  auto dtype = net->parameters().front().scalar_type();
  return images.dim() == 3 ? images.unsqueeze(0).to(dtype) : images.to(dtype);
}

FeaturePyramid encode(const Frame& frame, ModelState& state) {
  torch::NoGradGuard ng;
  state.net->eval();
  return state.net->encode(as_model_input(frame.pixels(), state.net));
}

torch::Tensor pose_decode(const FeaturePyramid& features, ModelState& state) {
  torch::NoGradGuard ng;
  state.net->eval();
  return state.net->pose_decode(features);
}

ForwardOutput forward(const FramePair& pair, ModelState& state) {
  torch::NoGradGuard ng;
  state.net->eval();
  return state.net->forward(as_model_input(pair.reference().pixels(), state.net),
                            as_model_input(pair.future().pixels(), state.net));
}

}  // namespace kpdisc
