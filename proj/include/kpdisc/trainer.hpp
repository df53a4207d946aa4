#pragma once

#include "kpdisc/checkpoint.hpp"
#include "kpdisc/data.hpp"
#include "kpdisc/model.hpp"
#include "kpdisc/objectives.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace kpdisc {

enum class TrainMode { self_supervised, semi_supervised };

struct TrainConfig {
  int batch_size = 5;
  double learning_rate = 1e-3;
  int epochs = 50;                  // hard cap
  std::int64_t max_steps = 0;       // 0: no step cap
  std::int64_t steps_per_epoch = 0; // 0: one pass over all pairs
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::self_supervised;
  LossWeights loss;
  PerceptualConfig perceptual;
  bool all_rotation_angles = false; // default: one random quarter turn per batch
  double supervised_weight = 1.0;
  // Stop when the epoch-mean reconstruction loss improves by less than
  // `convergence_tol` (relative) over `convergence_window` epochs.
  double convergence_tol = 0.01;
  int convergence_window = 5;
  std::int64_t checkpoint_every = 0;  // steps; 0: only at the end
  std::filesystem::path out_dir;      // empty: nothing written
  int workers = 0;                    // >0: batches are prepared on a background thread
  std::int64_t log_every = 0;

  void validate() const;
};

/// Annotated frames for semi-supervised training.
struct LabeledSet {
  FrameStore frames;
  torch::Tensor points;         // [N, M, 2] normalized (u, v)
  std::vector<int> channel_of;  // annotation m -> keypoint channel
};

struct LossRecord {
  std::int64_t step = 0;
  int epoch = 0;
  double recon = 0.0;
  double rot = 0.0;
  double sep = 0.0;
  double supervised = 0.0;
  double total = 0.0;
};

struct TrainResult {
  std::vector<LossRecord> curve;
  std::int64_t final_step = 0;
  bool converged = false;
};

/// Loss-curve CSV: step,recon,rot,sep,total.
void write_loss_curve(const std::filesystem::path& path, const std::vector<LossRecord>& curve);

/// Equivariance term for one batch of reference images: for each quarter turn,
/// the unrotated bottleneck is rotated into pseudo labels (no gradient) and
/// compared with the bottleneck predicted from the rotated images.
torch::Tensor rotation_step(const torch::Tensor& reference_images, const GeometryBottleneck& reference_geometry,
                            KeypointModel& net, const std::vector<int>& quarter_turns);
/// Convenience overload that computes the unrotated bottleneck itself.
torch::Tensor rotation_step(const torch::Tensor& reference_images, KeypointModel& net,
                            const std::vector<int>& quarter_turns);

/// Quarter turn (1, 2 or 3) used at `step` for a given seed.
int sampled_quarter_turn(std::uint64_t seed, std::int64_t step);

class Trainer {
public:
  Trainer(TrainConfig config, ModelState& state, const FrameStore& frames, std::vector<PairIndex> pairs,
          const LabeledSet* labeled = nullptr);
  ~Trainer();

  /// Restores optimizer moments saved in a checkpoint; the model weights and
  /// step are expected to have been restored into the ModelState already.
  void restore_optimizer(const TensorArchive& optimizer);
  TensorArchive optimizer_state() const;

  std::int64_t steps_per_epoch() const noexcept { return steps_per_epoch_; }
  int epoch_of(std::int64_t step) const { return static_cast<int>(step / steps_per_epoch_); }

  /// Runs one optimization step at `state.step` and advances it.
  LossRecord step();
  TrainResult run(const std::function<void(const LossRecord&)>& on_step = {});

  void save(const std::filesystem::path& path) const;

private:
  struct Batch {
    std::int64_t step = 0;
    torch::Tensor reference, future, target;
  };
  Batch make_batch(std::int64_t step) const;
  std::vector<std::int64_t> batch_pairs(std::int64_t step) const;

  TrainConfig config_;
  ModelState& state_;
  const FrameStore& frames_;
  std::vector<PairIndex> pairs_;
  const LabeledSet* labeled_;
  PerceptualExtractor extractor_{nullptr};
  std::unique_ptr<torch::optim::Adam> optimizer_;
  std::int64_t steps_per_epoch_ = 1;

  class Prefetcher;
  std::unique_ptr<Prefetcher> prefetch_;
};

/// Convenience wrapper: constructs a Trainer and runs it to completion.
TrainResult train(const FrameStore& frames, const std::vector<PairIndex>& pairs, const TrainConfig& config,
                  ModelState& state, const LabeledSet* labeled = nullptr);

}  // namespace kpdisc
