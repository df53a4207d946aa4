#include "kpdisc/trainer.hpp"

#include "kpdisc/error.hpp"
#include "kpdisc/io.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

namespace kpdisc {

namespace {

// Independent streams per (seed, purpose, index) so that any step can be
// regenerated without replaying earlier ones.
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

enum : std::uint64_t { kShuffle = 1, kRotation = 2, kSupervised = 3 };

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("train.batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw InvalidArgument("train.learning_rate must be >= 0");
  if (epochs < 1) throw InvalidArgument("train.epochs must be >= 1");
  if (convergence_window < 1) throw InvalidArgument("train.convergence_window must be >= 1");
  loss.validate();
}

void write_loss_curve(const std::filesystem::path& path, const std::vector<LossRecord>& curve) {
  io::atomic_write(path, [&](std::ostream& os) {
    os << "step,recon,rot,sep,total\n";
    for (const auto& r : curve)
      os << r.step << ',' << io::format_double(r.recon) << ',' << io::format_double(r.rot) << ','
         << io::format_double(r.sep) << ',' << io::format_double(r.total) << '\n';
  });
}

int sampled_quarter_turn(std::uint64_t seed, std::int64_t step) {
  auto rng = stream(seed, kRotation, static_cast<std::uint64_t>(step));
  return std::uniform_int_distribution<int>(1, 3)(rng);
}

torch::Tensor rotation_step(const torch::Tensor& reference_images, const GeometryBottleneck& reference_geometry,
                            KeypointModel& net, const std::vector<int>& quarter_turns) {
  auto total = torch::zeros({}, reference_geometry.rendered.options());
  for (int r : quarter_turns) {
    auto pseudo = rotate_maps(reference_geometry.rendered, r).detach();
    auto predicted = net->geometry(rotate_maps(reference_images, r)).rendered;
    total = total + rotation_loss(pseudo, predicted);
  }
  return total;
}

torch::Tensor rotation_step(const torch::Tensor& reference_images, KeypointModel& net,
                            const std::vector<int>& quarter_turns) {
  GeometryBottleneck g;
  {
    torch::NoGradGuard ng;
    g = net->geometry(reference_images);
  }
  return rotation_step(reference_images, g, net, quarter_turns);
}

class Trainer::Prefetcher {
public:
  Prefetcher(const Trainer& t, std::int64_t first, std::size_t capacity) : capacity_(capacity) {
    worker_ = std::thread([this, &t, first] {
      for (std::int64_t s = first;; ++s) {
        Batch b = t.make_batch(s);
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stop_ || queue_.size() < capacity_; });
        if (stop_) return;
        queue_.push_back(std::move(b));
        cv_.notify_all();
      }
    });
  }
  ~Prefetcher() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    worker_.join();
  }
  Batch pop() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return !queue_.empty(); });
    Batch b = std::move(queue_.front());
    queue_.pop_front();
    cv_.notify_all();
    return b;
  }

private:
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Batch> queue_;
  bool stop_ = false;
  std::thread worker_;
};

Trainer::Trainer(TrainConfig config, ModelState& state, const FrameStore& frames, std::vector<PairIndex> pairs,
                 const LabeledSet* labeled)
    : config_(std::move(config)), state_(state), frames_(frames), pairs_(std::move(pairs)), labeled_(labeled) {
  config_.validate();
  if (pairs_.empty()) throw EmptyResult("no training pairs");
  for (const auto& p : pairs_)
    if (p.reference < 0 || p.future >= frames_.size() || p.future <= p.reference)
      throw InvalidArgument("training pair outside the frame store");
  if (frames_.height() != state_.config.resolution || frames_.width() != state_.config.resolution)
    throw ShapeError("frames are not at the model resolution");
  if (config_.mode == TrainMode::semi_supervised && (labeled_ == nullptr || labeled_->frames.size() == 0))
    throw InvalidArgument("semi-supervised training needs labeled frames");

  const auto n = static_cast<std::int64_t>(pairs_.size());
  steps_per_epoch_ = config_.steps_per_epoch > 0 ? config_.steps_per_epoch
                                                 : (n + config_.batch_size - 1) / config_.batch_size;

  extractor_ = PerceptualExtractor(config_.perceptual);
  extractor_->to(state_.net->parameters().front().scalar_type());
  optimizer_ = std::make_unique<torch::optim::Adam>(state_.net->parameters(),
                                                    torch::optim::AdamOptions(config_.learning_rate));
}

Trainer::~Trainer() = default;

std::vector<std::int64_t> Trainer::batch_pairs(std::int64_t step) const {
  const auto n = static_cast<std::int64_t>(pairs_.size());
  const auto epoch = step / steps_per_epoch_;
  const auto within = step % steps_per_epoch_;
  std::vector<std::int64_t> out;
  out.reserve(static_cast<std::size_t>(config_.batch_size));
  // Position p in the epoch's visiting order; orders are reshuffled every n positions.
  for (std::int64_t j = 0; j < config_.batch_size; ++j) {
    const auto p = within * config_.batch_size + j;
    const auto round = p / n;
    std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    auto rng = stream(config_.seed, kShuffle, static_cast<std::uint64_t>(epoch * 1000003 + round));
    std::shuffle(perm.begin(), perm.end(), rng);
    out.push_back(perm[static_cast<std::size_t>(p % n)]);
  }
  return out;
}

Trainer::Batch Trainer::make_batch(std::int64_t step) const {
  Batch b;
  b.step = step;
  std::vector<std::int64_t> ref_idx, fut_idx;
  for (auto i : batch_pairs(step)) {
    ref_idx.push_back(pairs_[static_cast<std::size_t>(i)].reference);
    fut_idx.push_back(pairs_[static_cast<std::size_t>(i)].future);
  }
  b.reference = frames_.gather(ref_idx);
  b.future = frames_.gather(fut_idx);
  b.target = compute_target(b.reference, b.future, state_.config.target);
  return b;
}

LossRecord Trainer::step() {
  Batch batch;
  if (config_.workers > 0) {
    if (!prefetch_) prefetch_ = std::make_unique<Prefetcher>(*this, state_.step, 4);
    batch = prefetch_->pop();
    if (batch.step != state_.step) throw Error("prefetch queue out of sync");
  } else {
    batch = make_batch(state_.step);
  }

  auto& net = state_.net;
  net->train();
  const auto dtype = net->parameters().front().scalar_type();
  auto ref = batch.reference.to(dtype);
  auto fut = batch.future.to(dtype);
  auto target = batch.target.to(dtype);
  const int epoch = epoch_of(state_.step);
  const bool curriculum_on = epoch > config_.loss.curriculum_epoch;

  auto diverged = [&](const std::string& what) {
    if (!config_.out_dir.empty())
      save(config_.out_dir / ("diverged_step" + std::to_string(state_.step) + ".ckpt"));
    return NumericalError(what + " at step " + std::to_string(state_.step));
  };

  ForwardOutput out;
  try {
    out = net->forward(ref, fut);
  } catch (const NumericalError& e) {
    throw diverged(e.what());
  }
  LossParts parts;
  parts.recon = reconstruction_loss(target, out.reconstruction, extractor_);
  if (curriculum_on) {
    std::vector<int> turns = config_.all_rotation_angles ? std::vector<int>{1, 2, 3}
                                                         : std::vector<int>{sampled_quarter_turn(config_.seed, state_.step)};
    try {
      parts.rot = rotation_step(ref, out.geom_ref, net, turns);
    } catch (const NumericalError& e) {
      throw diverged(e.what());
    }
    parts.sep = separation_loss(torch::cat({out.geom_ref.keypoints, out.geom_fut.keypoints}, 0), config_.loss.sigma_s);
  }
  auto loss = total_loss(parts, config_.loss, epoch);

  double supervised = 0.0;
  if (config_.mode == TrainMode::semi_supervised) {
    auto rng = stream(config_.seed, kSupervised, static_cast<std::uint64_t>(state_.step));
    std::uniform_int_distribution<std::int64_t> pick(0, labeled_->frames.size() - 1);
    std::vector<std::int64_t> idx;
    for (int i = 0; i < config_.batch_size; ++i) idx.push_back(pick(rng));
    auto images = labeled_->frames.gather(idx).to(dtype);
    auto points = labeled_->points.index_select(0, torch::tensor(idx, torch::kLong)).to(dtype);
    GeometryBottleneck g;
    try {
      g = net->geometry(images);
    } catch (const NumericalError& e) {
      throw diverged(e.what());
    }
    auto sup = supervised_keypoint_loss(g.keypoints, points, labeled_->channel_of, state_.config.sigma,
                                        g.raw.size(2), g.raw.size(3));
    loss = loss + config_.supervised_weight * sup;
    supervised = sup.item<double>();
  }

  LossRecord rec;
  rec.step = state_.step;
  rec.epoch = epoch;
  rec.recon = parts.recon.item<double>();
  rec.rot = parts.rot.defined() ? parts.rot.item<double>() : 0.0;
  rec.sep = parts.sep.defined() ? parts.sep.item<double>() : 0.0;
  rec.supervised = supervised;
  rec.total = loss.item<double>();

  if (!std::isfinite(rec.total)) throw diverged("non-finite loss");

  optimizer_->zero_grad();
  loss.backward();
  optimizer_->step();
  ++state_.step;
  return rec;
}

TensorArchive Trainer::optimizer_state() const {
  TensorArchive a;
  a.meta["kind"] = "adam";
  a.meta["lr"] = config_.learning_rate;
  auto& states = optimizer_->state();
  for (const auto& p : state_.net->named_parameters(true)) {
    auto it = states.find(p.value().unsafeGetTensorImpl());
    if (it == states.end()) continue;
    const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
    a.tensors["adam/" + p.key() + "/exp_avg"] = s.exp_avg().clone();
    a.tensors["adam/" + p.key() + "/exp_avg_sq"] = s.exp_avg_sq().clone();
    a.meta["steps"][p.key()] = s.step();
  }
  return a;
}

void Trainer::restore_optimizer(const TensorArchive& archive) {
  if (archive.tensors.empty()) return;
  auto& states = optimizer_->state();
  for (const auto& p : state_.net->named_parameters(true)) {
    auto avg = archive.tensors.find("adam/" + p.key() + "/exp_avg");
    auto sq = archive.tensors.find("adam/" + p.key() + "/exp_avg_sq");
    if (avg == archive.tensors.end() || sq == archive.tensors.end()) continue;
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(archive.meta.at("steps").at(p.key()).get<std::int64_t>());
    s->exp_avg(avg->second.clone());
    s->exp_avg_sq(sq->second.clone());
    states[p.value().unsafeGetTensorImpl()] = std::move(s);
  }
}

void Trainer::save(const std::filesystem::path& path) const {
  auto opt = optimizer_state();
  save_checkpoint(path, state_, &opt,
                  {{"epoch", epoch_of(state_.step)}, {"seed", config_.seed}, {"steps_per_epoch", steps_per_epoch_}});
}

TrainResult Trainer::run(const std::function<void(const LossRecord&)>& on_step) {
  TrainResult result;
  std::vector<double> epoch_recon;
  double acc = 0.0;
  std::int64_t acc_n = 0;
  const std::int64_t cap = static_cast<std::int64_t>(config_.epochs) * steps_per_epoch_;
  const std::int64_t last = config_.max_steps > 0 ? std::min(cap, config_.max_steps) : cap;

  while (state_.step < last) {
    auto rec = step();
    result.curve.push_back(rec);
    if (on_step) on_step(rec);
    acc += rec.recon;
    ++acc_n;

    if (config_.checkpoint_every > 0 && !config_.out_dir.empty() && state_.step % config_.checkpoint_every == 0) {
      save(config_.out_dir / "latest.ckpt");
      write_loss_curve(config_.out_dir / "loss_curve.csv", result.curve);
    }

    if (state_.step % steps_per_epoch_ == 0) {
      epoch_recon.push_back(acc / static_cast<double>(acc_n));
      acc = 0.0;
      acc_n = 0;
      const int finished = epoch_of(state_.step);  // epochs completed so far
      const auto w = static_cast<std::size_t>(config_.convergence_window);
      if (finished - 1 > config_.loss.curriculum_epoch + config_.convergence_window && epoch_recon.size() > w) {
        const double before = epoch_recon[epoch_recon.size() - 1 - w];
        const double now = epoch_recon.back();
        if (before > 0.0 && (before - now) / before < config_.convergence_tol) {
          result.converged = true;
          break;
        }
      }
    }
  }
  prefetch_.reset();
  result.final_step = state_.step;
  if (!config_.out_dir.empty()) {
    save(config_.out_dir / "final.ckpt");
    write_loss_curve(config_.out_dir / "loss_curve.csv", result.curve);
  }
  return result;
}

TrainResult train(const FrameStore& frames, const std::vector<PairIndex>& pairs, const TrainConfig& config,
                  ModelState& state, const LabeledSet* labeled) {
  Trainer t(config, state, frames, pairs, labeled);
  return t.run();
}

}  // namespace kpdisc
