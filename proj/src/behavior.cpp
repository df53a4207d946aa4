#include "kpdisc/behavior.hpp"

#include "kpdisc/error.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

namespace kpdisc {

namespace nn = torch::nn;

std::int64_t feature_dimension(std::int64_t k, const FeatureFlags& flags, int agents) {
  const std::int64_t per = (flags.pose ? 2 * k : 0) + (flags.conf ? k : 0) + (flags.cov ? 3 * k : 0) + 2 * k +
                           k * (k - 1) / 2 + k * (k - 1) * (k - 2) / 6;
  return agents * per + static_cast<std::int64_t>(agents) * (agents - 1) / 2 * k * k;
}

namespace {

torch::Tensor speed_of(const torch::Tensor& p) {  // p: [F, K, 2]
  const auto f = p.size(0);
  if (f < 2) return torch::zeros({f, p.size(1)}, p.options());
  auto d = (p.slice(0, 1) - p.slice(0, 0, f - 1)).norm(2, -1);  // [F-1, K]
  return torch::cat({d.slice(0, 0, 1), d});
}

torch::Tensor accel_of(const torch::Tensor& p) {
  const auto f = p.size(0);
  if (f < 3) return torch::zeros({f, p.size(1)}, p.options());
  auto a = (p.slice(0, 2) - 2 * p.slice(0, 1, f - 1) + p.slice(0, 0, f - 2)).norm(2, -1);  // [F-2, K]
  return torch::cat({a.slice(0, 0, 1), a.slice(0, 0, 1), a});
}

}  // namespace

FeatureSequence generic_features(const TrackTensor& tracks, const FeatureFlags& flags, int agents) {
  if (agents < 1) throw InvalidArgument("agents must be >= 1");
  const auto total = tracks.k();
  if (total % agents != 0) throw InvalidArgument("keypoint count is not divisible by the agent count");
  const auto k = total / agents;
  std::vector<torch::Tensor> cols;
  FeatureSequence out;
  out.frames = tracks.frames;
  auto name = [&](int a, const std::string& s) { out.names.push_back("a" + std::to_string(a) + "_" + s); };

  for (int a = 0; a < agents; ++a) {
    auto p = tracks.coords.slice(1, a * k, (a + 1) * k).to(torch::kFloat64);
    if (flags.pose) {
      cols.push_back(p.reshape({p.size(0), 2 * k}));
      for (std::int64_t i = 0; i < k; ++i) {
        name(a, "kp" + std::to_string(i) + "_u");
        name(a, "kp" + std::to_string(i) + "_v");
      }
    }
    if (flags.conf) {
      cols.push_back(tracks.confidence.slice(1, a * k, (a + 1) * k).to(torch::kFloat64));
      for (std::int64_t i = 0; i < k; ++i) name(a, "kp" + std::to_string(i) + "_conf");
    }
    if (flags.cov) {
      auto c = tracks.cov.slice(1, a * k, (a + 1) * k).to(torch::kFloat64);
      cols.push_back(c.reshape({c.size(0), 3 * k}));
      for (std::int64_t i = 0; i < k; ++i)
        for (const char* s : {"_s2x", "_s2y", "_s2xy"}) name(a, "kp" + std::to_string(i) + s);
    }
    cols.push_back(speed_of(p));
    for (std::int64_t i = 0; i < k; ++i) name(a, "kp" + std::to_string(i) + "_speed");
    cols.push_back(accel_of(p));
    for (std::int64_t i = 0; i < k; ++i) name(a, "kp" + std::to_string(i) + "_accel");

    std::vector<torch::Tensor> dist, ang;
    for (std::int64_t i = 0; i < k; ++i)
      for (std::int64_t j = i + 1; j < k; ++j) {
        dist.push_back((p.select(1, i) - p.select(1, j)).norm(2, -1));
        name(a, "dist_" + std::to_string(i) + "_" + std::to_string(j));
      }
    for (std::int64_t i = 0; i < k; ++i)
      for (std::int64_t j = i + 1; j < k; ++j)
        for (std::int64_t m = j + 1; m < k; ++m) {
          auto e1 = p.select(1, i) - p.select(1, j);
          auto e2 = p.select(1, m) - p.select(1, j);
          auto cross = e1.select(1, 0) * e2.select(1, 1) - e1.select(1, 1) * e2.select(1, 0);
          auto dot = (e1 * e2).sum(-1);
          ang.push_back(torch::atan2(cross.abs(), dot));
          name(a, "angle_" + std::to_string(i) + "_" + std::to_string(j) + "_" + std::to_string(m));
        }
    if (!dist.empty()) cols.push_back(torch::stack(dist, 1));
    if (!ang.empty()) cols.push_back(torch::stack(ang, 1));
  }

  for (int a = 0; a < agents; ++a)
    for (int b = a + 1; b < agents; ++b) {
      auto pa = tracks.coords.slice(1, a * k, (a + 1) * k).to(torch::kFloat64);
      auto pb = tracks.coords.slice(1, b * k, (b + 1) * k).to(torch::kFloat64);
      auto d = (pa.unsqueeze(2) - pb.unsqueeze(1)).norm(2, -1);  // [F, K, K]
      cols.push_back(d.reshape({d.size(0), k * k}));
      for (std::int64_t i = 0; i < k; ++i)
        for (std::int64_t j = 0; j < k; ++j)
          out.names.push_back("cross_a" + std::to_string(a) + "kp" + std::to_string(i) + "_a" + std::to_string(b) +
                              "kp" + std::to_string(j));
    }

  out.values = torch::cat(cols, 1);
  if (!torch::isfinite(out.values).all().item<bool>()) throw NumericalError("non-finite behavior features");
  return out;
}

void ClassifierConfig::validate() const {
  if (window < 3 || window % 2 == 0) throw InvalidArgument("classifier window must be odd and >= 3");
  if (dilation < 1) throw InvalidArgument("classifier dilation must be >= 1");
  if (hidden < 1 || epochs < 1 || batch_size < 1) throw InvalidArgument("classifier sizes must be positive");
  if (!(learning_rate > 0.0)) throw InvalidArgument("classifier learning rate must be positive");
}

TemporalConvNetImpl::TemporalConvNetImpl(std::int64_t features, std::int64_t classes, const ClassifierConfig& c) {
  const int k1 = (c.window + 1) / 2;
  const int k2 = c.window - k1 + 1;
  body_ = register_module("body", nn::Sequential(nn::Conv1d(nn::Conv1dOptions(features, c.hidden, k1)), nn::ReLU(),
                                                 nn::Dropout(0.1),
                                                 nn::Conv1d(nn::Conv1dOptions(c.hidden, c.hidden, k2)), nn::ReLU()));
  head_ = register_module("head", nn::Linear(c.hidden, classes));
}

torch::Tensor TemporalConvNetImpl::forward(const torch::Tensor& windows) {
  return head_->forward(body_->forward(windows).squeeze(-1));
}

torch::Tensor gather_windows(const torch::Tensor& features, const std::vector<std::int64_t>& centers, int window,
                             int dilation) {
  const auto f = features.size(0);
  const int half = window / 2;
  std::vector<std::int64_t> idx;
  idx.reserve(centers.size() * static_cast<std::size_t>(window));
  for (auto c : centers)
    for (int o = -half; o <= half; ++o) idx.push_back(std::clamp<std::int64_t>(c + o * dilation, 0, f - 1));
  auto w = features.index_select(0, torch::tensor(idx, torch::kLong));
  return w.view({static_cast<std::int64_t>(centers.size()), window, features.size(1)}).transpose(1, 2).contiguous();
}

Classifier train_classifier(const torch::Tensor& features, const std::vector<int>& labels, std::int64_t classes,
                            const std::vector<std::int64_t>& train_frames, const ClassifierConfig& config) {
  config.validate();
  if (features.dim() != 2) throw ShapeError("features must be [F, D]");
  if (static_cast<std::int64_t>(labels.size()) != features.size(0))
    throw InvalidArgument("label count " + std::to_string(labels.size()) + " does not match frame count " +
                          std::to_string(features.size(0)));
  if (train_frames.empty()) throw EmptyResult("no training frames");
  for (int l : labels)
    if (l < 0 || l >= classes) throw InvalidArgument("label out of range");

  torch::manual_seed(config.seed);
  Classifier c;
  c.config = config;
  c.classes = classes;
  auto x = features.to(torch::kFloat32);
  auto train_x = x.index_select(0, torch::tensor(train_frames, torch::kLong));
  c.mean = train_x.mean(0);
  auto sd = train_x.std(0, /*unbiased=*/false);
  c.scale = torch::where(sd > 1e-8, sd, torch::ones_like(sd));
  auto z = (x - c.mean) / c.scale;
  c.net = TemporalConvNet(features.size(1), classes, config);

  std::vector<std::int64_t> y_all(labels.begin(), labels.end());
  auto y = torch::tensor(y_all, torch::kLong);
  torch::optim::Adam opt(c.net->parameters(), torch::optim::AdamOptions(config.learning_rate));
  std::mt19937_64 rng(config.seed);
  std::vector<std::int64_t> order = train_frames;
  c.net->train();
  for (int e = 0; e < config.epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(config.batch_size)) {
      std::vector<std::int64_t> batch(order.begin() + static_cast<std::ptrdiff_t>(s),
                                      order.begin() + static_cast<std::ptrdiff_t>(
                                                          std::min(order.size(), s + config.batch_size)));
      auto w = gather_windows(z, batch, config.window, config.dilation);
      auto loss = torch::nn::functional::cross_entropy(c.net->forward(w),
                                                       y.index_select(0, torch::tensor(batch, torch::kLong)));
      opt.zero_grad();
      loss.backward();
      opt.step();
    }
  }
  c.net->eval();
  return c;
}

torch::Tensor predict_proba(Classifier& c, const torch::Tensor& features) {
  torch::NoGradGuard ng;
  c.net->eval();
  auto z = (features.to(torch::kFloat32) - c.mean) / c.scale;
  std::vector<torch::Tensor> out;
  const auto f = features.size(0);
  for (std::int64_t s = 0; s < f; s += 512) {
    std::vector<std::int64_t> centers;
    for (auto i = s; i < std::min<std::int64_t>(f, s + 512); ++i) centers.push_back(i);
    out.push_back(torch::softmax(c.net->forward(gather_windows(z, centers, c.config.window, c.config.dilation)), 1));
  }
  return torch::cat(out).to(torch::kFloat64);
}

double average_precision(const std::vector<double>& scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw InvalidArgument("scores and labels differ in length");
  const auto total_pos = std::count(positive.begin(), positive.end(), true);
  if (total_pos == 0) throw EmptyResult("no positive samples");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  double ap = 0.0;
  std::int64_t tp = 0, fp = 0, prev_tp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) (positive[order[i]] ? tp : fp)++;
    ap += static_cast<double>(tp - prev_tp) * (static_cast<double>(tp) / static_cast<double>(tp + fp));
    prev_tp = tp;
  }
  return ap / static_cast<double>(total_pos);
}

MapResult evaluate_map(const torch::Tensor& proba, const std::vector<int>& labels, std::vector<int> classes,
                       int background) {
  if (proba.dim() != 2 || proba.size(0) != static_cast<std::int64_t>(labels.size()))
    throw ShapeError("probabilities must be [F, C] with one label per frame");
  auto p = proba.to(torch::kFloat64).contiguous();
  if ((p < 0).any().item<bool>() || (p > 1).any().item<bool>()) throw InvalidArgument("probabilities must be in [0, 1]");
  if (classes.empty())
    for (int c = 0; c < p.size(1); ++c)
      if (c != background) classes.push_back(c);
  MapResult r;
  auto a = p.accessor<double, 2>();
  for (int c : classes) {
    if (c < 0 || c >= p.size(1)) throw InvalidArgument("class " + std::to_string(c) + " has no probability column");
    std::vector<double> s(labels.size());
    std::vector<bool> pos(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      s[i] = a[static_cast<std::int64_t>(i)][c];
      pos[i] = labels[i] == c;
    }
    if (std::none_of(pos.begin(), pos.end(), [](bool b) { return b; })) {
      std::cerr << "warning: class " << c << " is absent from the labels and excluded from MAP\n";
      r.excluded.push_back(c);
      continue;
    }
    r.ap[c] = average_precision(s, pos);
  }
  if (r.ap.empty()) throw EmptyResult("no class of interest is present in the labels");
  double sum = 0.0;
  for (const auto& [_, v] : r.ap) sum += v;
  r.map = sum / static_cast<double>(r.ap.size());
  return r;
}

SeedSummary classify_over_seeds(const torch::Tensor& features, const std::vector<int>& labels, std::int64_t classes,
                                const std::vector<std::int64_t>& train_frames,
                                const std::vector<std::int64_t>& test_frames, ClassifierConfig config, int seeds,
                                const std::vector<int>& classes_of_interest, int background) {
  if (seeds < 1) throw InvalidArgument("seeds must be >= 1");
  if (test_frames.empty()) throw EmptyResult("no test frames");
  SeedSummary out;
  const auto base = config.seed;
  auto test_idx = torch::tensor(test_frames, torch::kLong);
  std::vector<int> test_labels;
  for (auto i : test_frames) test_labels.push_back(labels.at(static_cast<std::size_t>(i)));
  for (int s = 0; s < seeds; ++s) {
    config.seed = base + static_cast<std::uint64_t>(s);
    auto clf = train_classifier(features, labels, classes, train_frames, config);
    auto proba = predict_proba(clf, features).index_select(0, test_idx);
    out.runs.push_back(evaluate_map(proba, test_labels, classes_of_interest, background));
  }
  for (const auto& r : out.runs) out.mean += r.map;
  out.mean /= seeds;
  if (seeds > 1) {
    double v = 0.0;
    for (const auto& r : out.runs) v += (r.map - out.mean) * (r.map - out.mean);
    out.std = std::sqrt(v / (seeds - 1));
  }
  return out;
}

}  // namespace kpdisc
