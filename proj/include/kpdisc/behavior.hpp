#pragma once

#include "kpdisc/tracks.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace kpdisc {

struct FeatureFlags {
  bool pose = true;  // keypoint coordinates
  bool conf = true;  // heatmap confidence
  bool cov = true;   // covariance triple
};

struct FeatureSequence {
  torch::Tensor values;            // [F, D] float64
  std::vector<std::string> names;  // D entries
  std::vector<std::int64_t> frames;
};

/// Per-agent dimensionality:
///   2K (pose) + K (conf) + 3K (cov) + K speed + K acceleration + C(K,2) + C(K,3),
/// plus K*K cross-agent distances for every pair of agents.
std::int64_t feature_dimension(std::int64_t k, const FeatureFlags& flags, int agents = 1);

/// Generic trajectory features from dense tracks. Keypoint ids are split into
/// `agents` consecutive blocks of K. Speed is the length of the backward
/// difference, acceleration the length of the second difference; the first
/// frames repeat the first available value. Each unordered triplet i<j<k
/// contributes the angle at vertex j, in [0, pi].
FeatureSequence generic_features(const TrackTensor& tracks, const FeatureFlags& flags, int agents = 1);

struct ClassifierConfig {
  int window = 13;      // temporal positions seen per prediction (odd)
  int dilation = 2;     // frames between neighbouring positions
  int hidden = 64;
  int epochs = 30;
  int batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Two valid temporal convolutions that reduce the window to one position,
/// followed by a linear layer over classes.
class TemporalConvNetImpl : public torch::nn::Module {
public:
  TemporalConvNetImpl(std::int64_t features, std::int64_t classes, const ClassifierConfig& config);
  /// `windows`: [B, D, window] -> logits [B, C].
  torch::Tensor forward(const torch::Tensor& windows);

private:
  torch::nn::Sequential body_{nullptr};
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(TemporalConvNet);

struct Classifier {
  ClassifierConfig config;
  std::int64_t classes = 0;
  torch::Tensor mean, scale;  // feature standardization fitted on the training frames
  TemporalConvNet net{nullptr};
};

/// Windows `[N, D, window]` centred on `centers`, edge frames repeated.
torch::Tensor gather_windows(const torch::Tensor& features, const std::vector<std::int64_t>& centers, int window,
                             int dilation);

/// Trains on the frames listed in `train_frames`; labels are class ids in [0, classes).
Classifier train_classifier(const torch::Tensor& features, const std::vector<int>& labels, std::int64_t classes,
                            const std::vector<std::int64_t>& train_frames, const ClassifierConfig& config);

/// Class probabilities `[F, C]` for every frame.
torch::Tensor predict_proba(Classifier& classifier, const torch::Tensor& features);

/// Area under the precision-recall step curve with tied scores grouped.
double average_precision(const std::vector<double>& scores, const std::vector<bool>& positive);

struct MapResult {
  double map = 0.0;
  std::map<int, double> ap;   // per evaluated class
  std::vector<int> excluded;  // classes of interest absent from the labels
};

/// Mean AP over `classes` (empty: every class except `background`). Classes
/// with no positive frame are excluded and listed.
MapResult evaluate_map(const torch::Tensor& proba, const std::vector<int>& labels, std::vector<int> classes = {},
                       int background = 0);

struct SeedSummary {
  double mean = 0.0;
  double std = 0.0;  // sample std over seeds (0 for one seed)
  std::vector<MapResult> runs;
};

/// Trains one classifier per seed and evaluates on `test_frames`.
SeedSummary classify_over_seeds(const torch::Tensor& features, const std::vector<int>& labels, std::int64_t classes,
                                const std::vector<std::int64_t>& train_frames,
                                const std::vector<std::int64_t>& test_frames, ClassifierConfig config, int seeds,
                                const std::vector<int>& classes_of_interest = {}, int background = 0);

}  // namespace kpdisc
