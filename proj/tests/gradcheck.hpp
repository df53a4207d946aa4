#pragma once

#include "kpdisc/bottleneck.hpp"
#include "kpdisc/objectives.hpp"

#include <torch/torch.h>

#include <functional>
#include <string>
#include <vector>

namespace gradcheck {

// Relative error ||analytic - numeric|| / max(||analytic||, ||numeric||) over
// every parameter entry, with central differences of step h.
inline double relative_error(torch::nn::Module& net, const std::function<torch::Tensor()>& loss_fn,
                             double h = 1e-6) {
  auto params = net.parameters();
  for (auto& p : params)
    if (p.grad().defined()) p.grad().zero_();
  loss_fn().backward();
  std::vector<double> analytic, numeric;
  torch::NoGradGuard ng;
  for (auto& p : params) {
    auto flat = p.view(-1);
    auto g = p.grad().defined() ? p.grad().view(-1) : torch::zeros_like(flat);
    for (std::int64_t i = 0; i < flat.size(0); ++i) {
      const double orig = flat[i].item<double>();
      flat[i] = orig + h;
      const double up = loss_fn().item<double>();
      flat[i] = orig - h;
      const double down = loss_fn().item<double>();
      flat[i] = orig;
      numeric.push_back((up - down) / (2 * h));
      analytic.push_back(g[i].item<double>());
    }
  }
  double diff = 0, na = 0, nn = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double denom = std::sqrt(std::max(na, nn));
  return denom > 0 ? std::sqrt(diff) / denom : std::sqrt(diff);
}

inline std::int64_t parameter_count(torch::nn::Module& net) {
  std::int64_t n = 0;
  for (auto& p : net.parameters()) n += p.numel();
  return n;
}

// Two-layer conv net producing K raw heatmaps from a small image.
struct ToyPoseImpl : torch::nn::Module {
  explicit ToyPoseImpl(int k) {
    c1 = register_module("c1", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, 4, 3).padding(1)));
    c2 = register_module("c2", torch::nn::Conv2d(torch::nn::Conv2dOptions(4, k, 3).padding(1)));
  }
  torch::Tensor forward(const torch::Tensor& x) { return c2->forward(torch::tanh(c1->forward(x))) * 3.0; }
  torch::nn::Conv2d c1{nullptr}, c2{nullptr};
};
TORCH_MODULE(ToyPose);

// Image-to-image toy net with outputs in (0, 1).
struct ToyDecoderImpl : torch::nn::Module {
  ToyDecoderImpl() {
    c1 = register_module("c1", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, 6, 3).padding(1)));
    c2 = register_module("c2", torch::nn::Conv2d(torch::nn::Conv2dOptions(6, 3, 3).padding(1)));
  }
  torch::Tensor forward(const torch::Tensor& x) { return torch::sigmoid(c2->forward(torch::tanh(c1->forward(x)))); }
  torch::nn::Conv2d c1{nullptr}, c2{nullptr};
};
TORCH_MODULE(ToyDecoder);

struct Result {
  std::string name;
  double error = 0.0;
  std::int64_t parameters = 0;
};

// Gradient checks of the four trainable losses on toy networks in double precision.
inline std::vector<Result> run_all() {
  torch::manual_seed(0);
  const auto dbl = torch::kFloat64;
  std::vector<Result> out;
  const int k = 4;
  const double sigma = 0.1;
  auto images = torch::rand({2, 3, 12, 12}, dbl);

  {
    ToyDecoder dec;
    dec->to(dbl);
    kpdisc::PerceptualConfig pc;
    pc.widths = {4, 6, 8};
    pc.convs_per_block = 1;
    pc.blocks = 3;
    kpdisc::PerceptualExtractor ex(pc);
    ex->to(dbl);
    auto target = torch::rand({2, 3, 12, 12}, dbl);
    auto e = relative_error(*dec, [&] { return kpdisc::reconstruction_loss(target, dec->forward(images), ex); });
    out.push_back({"reconstruction", e, parameter_count(*dec)});
  }
  {
    ToyPose pose(k);
    pose->to(dbl);
    auto rendered = [&](const torch::Tensor& x) {
      auto kp = kpdisc::soft_argmax(pose->forward(x)).keypoints;
      return kpdisc::render_gaussians(kp, sigma, 12, 12);
    };
    // Pseudo labels are constants of the loss, so they are fixed before differencing.
    auto pseudo = kpdisc::rotate_maps(rendered(images), 1).detach();
    auto e = relative_error(*pose, [&] {
      return kpdisc::rotation_loss(pseudo, rendered(kpdisc::rotate_maps(images, 1)));
    });
    out.push_back({"rotation", e, parameter_count(*pose)});
  }
  {
    ToyPose pose(k);
    pose->to(dbl);
    auto e = relative_error(*pose, [&] {
      return kpdisc::separation_loss(kpdisc::soft_argmax(pose->forward(images)).keypoints, 0.1);
    });
    out.push_back({"separation", e, parameter_count(*pose)});
  }
  {
    ToyPose pose(k);
    pose->to(dbl);
    auto annotated = torch::rand({2, 2, 2}, dbl);
    auto e = relative_error(*pose, [&] {
      auto kp = kpdisc::soft_argmax(pose->forward(images)).keypoints;
      return kpdisc::supervised_keypoint_loss(kp, annotated, {2, 0}, sigma, 12, 12);
    });
    out.push_back({"supervised", e, parameter_count(*pose)});
  }
  return out;
}

}  // namespace gradcheck
