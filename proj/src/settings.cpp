#include "kpdisc/settings.hpp"

namespace kpdisc {

namespace {

template <class F>
auto checked(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(key, e.what());
  }
}

}  // namespace

TargetParams target_params(const Config& c) {
  TargetParams t;
  t.kind = checked("target.kind", [&] { return target_kind_from_string(c.get<std::string>("target.kind")); });
  t.ssim.window = c.get<int>("target.ssim.window");
  t.ssim.c1 = c.get<double>("target.ssim.c1");
  t.ssim.c2 = c.get<double>("target.ssim.c2");
  t.ssim.gaussian = c.get<bool>("target.ssim.gaussian");
  const auto neg = c.get<std::string>("target.ssim.negation");
  if (neg != "affine" && neg != "sign") throw ConfigError("target.ssim.negation", "expected 'affine' or 'sign'");
  t.ssim.negation = neg == "sign" ? SsimNegation::sign : SsimNegation::affine;
  if (t.ssim.window < 3 || t.ssim.window % 2 == 0) throw ConfigError("target.ssim.window", "must be odd and >= 3");
  return t;
}

ModelConfig model_config(const Config& c) {
  ModelConfig m;
  m.k = c.get<int>("model.k");
  m.sigma = c.get<double>("model.sigma");
  m.single_branch = c.get<bool>("model.single_branch");
  m.resolution = c.get<std::int64_t>("data.resolution");
  m.encoder = checked("model.encoder", [&] { return encoder_arch_from_string(c.get<std::string>("model.encoder")); });
  m.encoder_widths = c.get<std::vector<std::int64_t>>("model.encoder_widths");
  m.pose_channels = c.get<std::int64_t>("model.pose_channels");
  m.decoder_channels = c.get<std::vector<std::int64_t>>("model.decoder_channels");
  m.batchnorm = c.get<bool>("model.batchnorm");
  m.target = target_params(c);
  checked("model.k", [&] {
    m.validate();
    return 0;
  });
  return m;
}

PerceptualConfig perceptual_config(const Config& c) {
  PerceptualConfig p;
  p.widths = c.get<std::vector<std::int64_t>>("loss.perceptual_widths");
  p.blocks = c.get<int>("loss.perceptual_blocks");
  p.convs_per_block = c.get<int>("loss.perceptual_convs");
  p.block_weights = c.get<std::vector<double>>("loss.perceptual_block_weights");
  p.seed = c.get<std::uint64_t>("loss.perceptual_seed");
  p.weights = c.get<std::string>("loss.perceptual_weights");
  if (p.blocks < 1 || static_cast<std::size_t>(p.blocks) > p.widths.size())
    throw ConfigError("loss.perceptual_blocks", "must be between 1 and the number of perceptual widths");
  return p;
}

TrainConfig train_config(const Config& c) {
  TrainConfig t;
  t.batch_size = c.get<int>("train.batch_size");
  t.learning_rate = c.get<double>("train.learning_rate");
  t.epochs = c.get<int>("train.epochs");
  t.max_steps = c.get<std::int64_t>("train.max_steps");
  t.steps_per_epoch = c.get<std::int64_t>("train.steps_per_epoch");
  t.seed = c.get<std::uint64_t>("train.seed");
  const auto mode = c.get<std::string>("train.mode");
  if (mode == "self_supervised")
    t.mode = TrainMode::self_supervised;
  else if (mode == "semi_supervised")
    t.mode = TrainMode::semi_supervised;
  else
    throw ConfigError("train.mode", "expected 'self_supervised' or 'semi_supervised'");
  t.loss.w_r = c.get<double>("loss.w_r");
  t.loss.w_s = c.get<double>("loss.w_s");
  t.loss.sigma_s = c.get<double>("loss.sigma_s");
  t.loss.curriculum_epoch = c.get<int>("loss.curriculum_epoch");
  t.perceptual = perceptual_config(c);
  t.all_rotation_angles = c.get<bool>("train.all_rotation_angles");
  t.supervised_weight = c.get<double>("train.supervised_weight");
  t.convergence_tol = c.get<double>("train.convergence_tol");
  t.convergence_window = c.get<int>("train.convergence_window");
  t.checkpoint_every = c.get<std::int64_t>("train.checkpoint_every");
  t.workers = c.get<int>("train.workers");
  if (t.batch_size < 1) throw ConfigError("train.batch_size", "must be >= 1");
  if (!(t.learning_rate > 0.0)) throw ConfigError("train.learning_rate", "must be > 0");
  if (t.epochs < 1) throw ConfigError("train.epochs", "must be >= 1");
  if (t.loss.w_r < 0) throw ConfigError("loss.w_r", "must be >= 0");
  if (t.loss.w_s < 0) throw ConfigError("loss.w_s", "must be >= 0");
  if (!(t.loss.sigma_s > 0)) throw ConfigError("loss.sigma_s", "must be > 0");
  if (t.loss.curriculum_epoch < 0) throw ConfigError("loss.curriculum_epoch", "must be >= 0");
  return t;
}

LoadOptions load_options(const Config& c) {
  LoadOptions o;
  o.resolution = c.get<std::int64_t>("data.resolution");
  o.fps = c.get<double>("data.fps");
  if (o.resolution < 0) throw ConfigError("data.resolution", "must be >= 0");
  return o;
}

DiscoverOptions discover_options(const Config& c) {
  DiscoverOptions d;
  d.n_agents = c.get<int>("discover.n_agents");
  d.region = c.get<int>("discover.region");
  d.batch_size = c.get<int>("discover.batch_size");
  if (d.n_agents < 1) throw ConfigError("discover.n_agents", "must be >= 1");
  if (d.batch_size < 1) throw ConfigError("discover.batch_size", "must be >= 1");
  return d;
}

FeatureFlags feature_flags(const Config& c) {
  return {c.get<bool>("features.pose"), c.get<bool>("features.conf"), c.get<bool>("features.cov")};
}

ClassifierConfig classifier_config(const Config& c) {
  ClassifierConfig k;
  k.window = c.get<int>("classify.window");
  k.dilation = c.get<int>("classify.dilation");
  k.hidden = c.get<int>("classify.hidden");
  k.epochs = c.get<int>("classify.epochs");
  k.batch_size = c.get<int>("classify.batch_size");
  k.learning_rate = c.get<double>("classify.learning_rate");
  k.seed = c.get<std::uint64_t>("classify.seed");
  checked("classify.window", [&] {
    k.validate();
    return 0;
  });
  return k;
}

}  // namespace kpdisc
