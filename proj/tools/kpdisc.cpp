// kpdisc: command-line front end.
//
// Every input path is also a config key, so `kpdisc <cmd> --config <out>/manifest.json --out <dir>`
// replays a run.

#include "kpdisc/behavior.hpp"
#include "kpdisc/checkpoint.hpp"
#include "kpdisc/config.hpp"
#include "kpdisc/data.hpp"
#include "kpdisc/difftarget.hpp"
#include "kpdisc/discover.hpp"
#include "kpdisc/error.hpp"
#include "kpdisc/evalkit.hpp"
#include "kpdisc/heatfeat.hpp"
#include "kpdisc/io.hpp"
#include "kpdisc/manifest.hpp"
#include "kpdisc/plots.hpp"
#include "kpdisc/settings.hpp"
#include "kpdisc/synthetic.hpp"
#include "kpdisc/tracks.hpp"
#include "kpdisc/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <iostream>
#include <map>
#include <optional>

namespace fs = std::filesystem;
using namespace kpdisc;

namespace {

struct Common {
  std::string config_file;
  std::string preset;
  std::vector<std::string> sets;
  std::string out;
  std::map<std::string, std::string> aliases;  // config key -> value from a dedicated flag
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_file, "JSON config file or a run manifest")->check(CLI::ExistingFile);
  app->add_option("--preset", c.preset, "dataset preset: calms21, fly, human, jellyfish, vegetation");
  app->add_option("--set", c.sets, "override a config key, key=value (repeatable)");
  app->add_option("--out", c.out, "output directory")->required();
}

/// A flag that is shorthand for a config key.
void alias(CLI::App* app, Common& c, const std::string& flag, const std::string& key, const std::string& help) {
  app->add_option_function<std::string>(
      flag, [&c, key](const std::string& v) { c.aliases[key] = v; }, help + " (config key " + key + ")");
}

/// builtin < preset < file < flags.
Config resolve(const Common& c) {
  Config cfg;
  if (!c.preset.empty()) cfg.apply_preset(c.preset);
  if (!c.config_file.empty()) cfg.merge_file(c.config_file);
  for (const auto& [k, v] : c.aliases) cfg.set_from_string(k, v);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(s, "--set expects key=value");
    cfg.set_from_string(io::trim(s.substr(0, eq)), io::trim(s.substr(eq + 1)));
  }
  return cfg;
}

std::string require_path(const Config& cfg, const std::string& key) {
  auto p = cfg.get<std::string>(key);
  if (p.empty()) throw ConfigError(key, "an input path is required");
  if (!fs::exists(p)) throw ConfigError(key, "'" + p + "' does not exist");
  return p;
}

RunManifest begin(const std::string& command, const Config& cfg, const std::vector<fs::path>& inputs,
                  std::uint64_t seed) {
  RunManifest m;
  m.command = command;
  m.config = cfg.resolved();
  m.inputs = hash_inputs(inputs);
  m.seed = seed;
  m.started = utc_timestamp();
  return m;
}

void finish(const fs::path& out, RunManifest& m) {
  m.finished = utc_timestamp();
  write_manifest(out, m);
}

FrameStore load_frames(const Config& cfg) {
  const auto source = require_path(cfg, "data.source");
  auto opts = load_options(cfg);
  if (cfg.get<bool>("data.roi.enabled")) {
    // Locate the moving region on native-resolution frames from their SSIM dissimilarity.
    LoadOptions native = opts;
    native.resolution = 0;
    auto all = load_video(source, native);
    const auto gap = cfg.get<std::int64_t>("data.gap");
    const auto n = std::min<std::int64_t>(all.size() - gap, cfg.get<std::int64_t>("data.roi.frames"));
    if (n < 1) throw ConfigError("data.gap", "video is too short for ROI detection");
    torch::Tensor acc;
    for (std::int64_t i = 0; i < n; ++i) {
      auto t = compute_target(all.at(i).unsqueeze(0), all.at(i + gap).unsqueeze(0), target_params(cfg));
      auto m = t[0].mean(0);
      acc = acc.defined() ? acc + m : m;
    }
    acc = acc / static_cast<double>(n);
    opts.crop = motion_roi(acc, cfg.get<double>("data.roi.threshold"), cfg.get<std::int64_t>("data.roi.box"));
    std::cerr << "roi: x=" << opts.crop->x << " y=" << opts.crop->y << " size=" << opts.crop->width << "\n";
  }
  return load_video(source, opts);
}

void write_csv(const fs::path& path, const std::string& header, const std::vector<std::vector<std::string>>& rows) {
  io::atomic_write(path, [&](std::ostream& os) {
    os << header << '\n';
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
      os << '\n';
    }
  });
}

std::string num(double v) { return io::format_double(v); }

// ---- commands ----------------------------------------------------------------

int cmd_synth(const Config& cfg, const fs::path& out) {
  const auto agents = cfg.get<int>("synth.agents");
  const auto frames = cfg.get<std::int64_t>("synth.frames");
  const auto seed = cfg.get<std::uint64_t>("synth.seed");
  const auto res = cfg.get<std::int64_t>("synth.resolution");
  if (agents < 1) throw ConfigError("synth.agents", "must be >= 1");
  if (frames < 2) throw ConfigError("synth.frames", "must be >= 2");
  auto m = begin("synth", cfg, {}, seed);
  auto scene = make_default_scene(res, agents, seed);
  auto video = generate_synthetic(scene, frames, seed);
  save_frames_png(video.frames, out / "frames");
  write_part_tracks(out / "parts.csv", video.parts);
  finish(out, m);
  std::cout << "wrote " << frames << " frames and part tracks to " << out << "\n";
  return 0;
}

int cmd_train(const Config& cfg, const fs::path& out) {
  auto tc = train_config(cfg);
  tc.out_dir = out;
  auto mc = model_config(cfg);
  auto frames = load_frames(cfg);
  const auto gap = cfg.get<std::int64_t>("data.gap");
  const auto stride = cfg.get<std::int64_t>("data.stride");
  if (gap < 1) throw ConfigError("data.gap", "must be >= 1");
  if (stride < 1) throw ConfigError("data.stride", "must be >= 1");
  auto pairs = sample_pair_indices(frames.size(), gap, stride);
  write_pair_manifest(out / "pairs.csv", pairs);

  std::vector<fs::path> inputs{cfg.get<std::string>("data.source")};
  ModelState state;
  TensorArchive optim;
  const auto resume = cfg.get<std::string>("train.resume");
  if (!resume.empty()) {
    auto ck = load_checkpoint(resume);
    if (model_config_to_json(ck.state.config) != model_config_to_json(mc))
      throw ConfigError("train.resume", "checkpoint model settings differ from the configuration");
    state = std::move(ck.state);
    optim = std::move(ck.optimizer);
    inputs.emplace_back(resume);
  } else {
    state = ModelState::create(mc, tc.seed);
    const auto pretrained = cfg.get<std::string>("model.pretrained");
    if (!pretrained.empty()) {
      import_module(*state.net->encoder, "encoder/", TensorArchive::load(pretrained));
      inputs.emplace_back(pretrained);
    }
  }
  const auto dtype = cfg.get<std::string>("train.dtype");
  if (dtype == "f64")
    state.net->to(torch::kFloat64);
  else if (dtype != "f32")
    throw ConfigError("train.dtype", "expected 'f32' or 'f64'");

  std::optional<LabeledSet> labeled;
  if (tc.mode == TrainMode::semi_supervised) {
    // CSV: frame,point,u,v,channel
    auto t = io::read_csv(require_path(cfg, "train.labels"));
    inputs.emplace_back(cfg.get<std::string>("train.labels"));
    std::map<std::int64_t, std::map<int, std::array<double, 2>>> pts;
    std::map<int, int> channel;
    for (const auto& r : t.rows) {
      const int point = std::stoi(r.at(t.column("point")));
      pts[std::stoll(r.at(t.column("frame")))][point] = {std::stod(r.at(t.column("u"))), std::stod(r.at(t.column("v")))};
      channel[point] = std::stoi(r.at(t.column("channel")));
    }
    if (pts.empty()) throw ConfigError("train.labels", "no annotations");
    std::vector<std::int64_t> idx;
    auto points = torch::empty({static_cast<std::int64_t>(pts.size()), static_cast<std::int64_t>(channel.size()), 2},
                               torch::kFloat64);
    std::int64_t i = 0;
    for (const auto& [f, ps] : pts) {
      if (ps.size() != channel.size()) throw ConfigError("train.labels", "every labeled frame needs every point");
      idx.push_back(f);
      std::int64_t j = 0;
      for (const auto& [_, uv] : ps) {
        points[i][j][0] = uv[0];
        points[i][j][1] = uv[1];
        ++j;
      }
      ++i;
    }
    LabeledSet ls;
    ls.frames = FrameStore(frames.raw().index_select(0, torch::tensor(idx, torch::kLong)));
    ls.points = points;
    for (const auto& [_, ch] : channel) ls.channel_of.push_back(ch);
    labeled = std::move(ls);
  }

  auto m = begin("train", cfg, inputs, tc.seed);
  Trainer trainer(tc, state, frames, pairs, labeled ? &*labeled : nullptr);
  if (!optim.tensors.empty()) trainer.restore_optimizer(optim);
  const auto log_every = std::max<std::int64_t>(1, trainer.steps_per_epoch());
  auto result = trainer.run([&](const LossRecord& r) {
    if ((r.step + 1) % log_every == 0)
      std::cout << "step " << r.step << " epoch " << r.epoch << " recon " << r.recon << " rot " << r.rot << " sep "
                << r.sep << " total " << r.total << std::endl;
  });
  std::vector<double> xs, ys;
  for (const auto& r : result.curve) {
    xs.push_back(static_cast<double>(r.step));
    ys.push_back(r.total);
  }
  if (!xs.empty()) write_line_plot_png(xs, ys, "step", "total loss", true, out / "loss.png");
  finish(out, m);
  std::cout << "finished at step " << result.final_step << (result.converged ? " (converged)" : "") << "\n";
  return 0;
}

int cmd_discover(const Config& cfg, const fs::path& out) {
  const auto ckpt = require_path(cfg, "io.checkpoint");
  auto ck = load_checkpoint(ckpt);
  auto opts = load_options(cfg);
  opts.resolution = ck.state.config.resolution;
  auto frames = load_video(require_path(cfg, "data.source"), opts);
  auto m = begin("discover", cfg, {ckpt, cfg.get<std::string>("data.source")}, 0);
  auto records = discover_keypoints(frames, ck.state, discover_options(cfg));
  write_tracks_csv(out / "tracks.csv", records);
  write_tracks_binary(out / "tracks.kpt", records);
  const auto q = cfg.get<double>("discover.background_quantile");
  if (q > 0.0) {
    auto t = to_tensor(records);
    auto bg = background_keypoints(t.confidence, q);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t k = 0; k < bg.size(); ++k)
      rows.push_back({std::to_string(k), num(t.confidence.select(1, static_cast<std::int64_t>(k)).mean().item<double>()),
                      bg[k] ? "1" : "0"});
    write_csv(out / "keypoint_confidence.csv", "kp_id,mean_confidence,background", rows);
  }
  finish(out, m);
  std::cout << "wrote " << records.size() << " keypoint records\n";
  return 0;
}

int cmd_extract_features(const Config& cfg, const fs::path& out) {
  const auto tracks = require_path(cfg, "io.tracks");
  auto m = begin("extract-features", cfg, {tracks}, 0);
  auto f = generic_features(to_tensor(read_tracks(tracks)), feature_flags(cfg), cfg.get<int>("features.agents"));
  auto v = f.values.contiguous();
  auto a = v.accessor<double, 2>();
  std::string header = "frame";
  for (const auto& n : f.names) header += "," + n;
  io::atomic_write(out / "features.csv", [&](std::ostream& os) {
    os << header << '\n';
    for (std::int64_t i = 0; i < v.size(0); ++i) {
      os << f.frames[static_cast<std::size_t>(i)];
      for (std::int64_t j = 0; j < v.size(1); ++j) os << ',' << num(a[i][j]);
      os << '\n';
    }
  });
  finish(out, m);
  std::cout << "wrote " << v.size(0) << " x " << v.size(1) << " features\n";
  return 0;
}

int cmd_classify(const Config& cfg, const fs::path& out) {
  const auto tracks_path = require_path(cfg, "io.tracks");
  const auto labels_path = require_path(cfg, "io.labels");
  auto tracks = to_tensor(read_tracks(tracks_path));
  auto feats = generic_features(tracks, feature_flags(cfg), cfg.get<int>("features.agents"));

  // CSV: frame,label[,split] with split in {train, test}.
  auto t = io::read_csv(labels_path);
  std::map<std::int64_t, int> label_of;
  std::map<std::int64_t, std::string> split_of;
  for (const auto& r : t.rows) {
    const auto f = std::stoll(r.at(t.column("frame")));
    label_of[f] = std::stoi(r.at(t.column("label")));
    if (t.has_column("split")) split_of[f] = r.at(t.column("split"));
  }
  std::vector<int> labels;
  for (auto f : feats.frames) {
    auto it = label_of.find(f);
    if (it == label_of.end()) throw ConfigError("io.labels", "frame " + std::to_string(f) + " has no label");
    labels.push_back(it->second);
  }
  std::vector<std::int64_t> train, test;
  const auto n = static_cast<std::int64_t>(labels.size());
  if (!split_of.empty()) {
    for (std::int64_t i = 0; i < n; ++i)
      (split_of[feats.frames[static_cast<std::size_t>(i)]] == "train" ? train : test).push_back(i);
  } else {
    const auto frac = cfg.get<double>("classify.train_fraction");
    if (frac <= 0.0 || frac >= 1.0) throw ConfigError("classify.train_fraction", "must be in (0, 1)");
    const auto cut = static_cast<std::int64_t>(frac * static_cast<double>(n));
    for (std::int64_t i = 0; i < n; ++i) (i < cut ? train : test).push_back(i);
  }
  const auto classes = static_cast<std::int64_t>(*std::max_element(labels.begin(), labels.end())) + 1;
  auto of_interest = cfg.get<std::vector<int>>("classify.classes");
  const auto seeds = cfg.get<int>("classify.seeds");
  if (seeds < 1) throw ConfigError("classify.seeds", "must be >= 1");
  auto cc = classifier_config(cfg);

  auto m = begin("classify", cfg, {tracks_path, labels_path}, cc.seed);
  auto summary = classify_over_seeds(feats.values, labels, classes, train, test, cc, seeds, of_interest,
                                     cfg.get<int>("classify.background"));
  std::map<int, std::vector<double>> per_class;
  for (const auto& r : summary.runs)
    for (const auto& [c, ap] : r.ap) per_class[c].push_back(ap);
  std::vector<std::vector<std::string>> rows;
  for (const auto& [c, aps] : per_class) {
    double mean = 0.0, var = 0.0;
    for (double x : aps) mean += x;
    mean /= static_cast<double>(aps.size());
    for (double x : aps) var += (x - mean) * (x - mean);
    const double sd = aps.size() > 1 ? std::sqrt(var / static_cast<double>(aps.size() - 1)) : 0.0;
    rows.push_back({std::to_string(c), num(mean), num(sd)});
  }
  write_csv(out / "ap.csv", "class,ap_mean,ap_std", rows);
  write_csv(out / "map.csv", "map_mean,map_std,seeds", {{num(summary.mean), num(summary.std), std::to_string(seeds)}});
  finish(out, m);
  std::cout << "MAP " << summary.mean << " +- " << summary.std << " over " << seeds << " seeds\n";
  return 0;
}

int cmd_evaluate_regression(const Config& cfg, const fs::path& out) {
  const auto disc_path = require_path(cfg, "io.discovered");
  const auto ann_path = require_path(cfg, "io.annotated");
  auto disc = to_tensor(read_tracks(disc_path));
  // Annotations: frame,point,u,v[,activity], coordinates normalized by the image side.
  auto t = io::read_csv(ann_path);
  std::map<std::int64_t, std::map<int, std::array<double, 2>>> ann;
  std::map<std::int64_t, std::string> activity_of;
  for (const auto& r : t.rows) {
    const auto f = std::stoll(r.at(t.column("frame")));
    ann[f][std::stoi(r.at(t.column("point")))] = {std::stod(r.at(t.column("u"))), std::stod(r.at(t.column("v")))};
    if (t.has_column("activity")) activity_of[f] = r.at(t.column("activity"));
  }
  std::vector<std::int64_t> rows_idx;
  std::vector<std::string> activity;
  std::vector<double> flat;
  std::size_t m_points = 0;
  for (std::size_t i = 0; i < disc.frames.size(); ++i) {
    auto it = ann.find(disc.frames[i]);
    if (it == ann.end()) continue;
    if (m_points == 0) m_points = it->second.size();
    if (it->second.size() != m_points) throw ConfigError("io.annotated", "frames differ in annotated point count");
    rows_idx.push_back(static_cast<std::int64_t>(i));
    for (const auto& [_, uv] : it->second) flat.insert(flat.end(), {uv[0], uv[1]});
    if (!activity_of.empty()) activity.push_back(activity_of[disc.frames[i]]);
  }
  if (rows_idx.empty()) throw ConfigError("io.annotated", "no annotated frame matches the discovered tracks");
  const auto n = static_cast<std::int64_t>(rows_idx.size());
  auto annotated = torch::tensor(flat, torch::kFloat64).view({n, static_cast<std::int64_t>(m_points), 2});
  auto discovered = disc.coords.index_select(0, torch::tensor(rows_idx, torch::kLong));
  const auto frac = cfg.get<double>("regression.train_fraction");
  if (frac <= 0.0 || frac >= 1.0) throw ConfigError("regression.train_fraction", "must be in (0, 1)");
  std::vector<std::int64_t> train, test;
  const auto cut = static_cast<std::int64_t>(frac * static_cast<double>(n));
  for (std::int64_t i = 0; i < n; ++i) (i < cut ? train : test).push_back(i);

  auto m = begin("evaluate-regression", cfg, {disc_path, ann_path}, 0);
  auto r = fit_keypoint_regression(discovered, annotated, train, test, activity, cfg.get<double>("regression.ridge"));
  auto test_idx = torch::tensor(test, torch::kLong);
  auto pred = apply_regression(r, discovered.index_select(0, test_idx));
  auto truth = annotated.index_select(0, test_idx);
  const double side = cfg.get<double>("regression.image_side");
  const double thr = cfg.get<double>("regression.pck_threshold");
  std::vector<std::vector<std::string>> rows = {{"train", num(r.train_error)},
                                                {"test", num(r.test_error)},
                                                {"pck", num(pck(pred * side, truth * side, thr))},
                                                {"regularized", r.regularized ? "1" : "0"}};
  for (const auto& [a, e] : r.per_activity) rows.push_back({"activity:" + a, num(e)});
  write_csv(out / "regression.csv", "metric,value", rows);
  std::vector<double> xs, ys;
  for (int i = 0; i <= 50; ++i) {
    const double th = 2.0 * thr * i / 50.0;
    xs.push_back(th);
    ys.push_back(pck(pred * side, truth * side, th));
  }
  write_line_plot_png(xs, ys, "threshold", "PCK", false, out / "pck.png");
  finish(out, m);
  std::cout << "%-MSE train " << r.train_error << " test " << r.test_error << "\n";
  return 0;
}

int cmd_analyze_pulse(const Config& cfg, const fs::path& out) {
  const auto tracks_path = require_path(cfg, "io.tracks");
  const double fps = cfg.get<double>("pulse.fps") > 0 ? cfg.get<double>("pulse.fps") : cfg.get<double>("data.fps");
  if (!(fps > 0)) throw ConfigError("pulse.fps", "frame rate must be given (pulse.fps or data.fps)");
  auto m = begin("analyze-pulse", cfg, {tracks_path}, 0);
  auto s = pulse_spectrogram(to_tensor(read_tracks(tracks_path)), fps, cfg.get<double>("pulse.window_s"),
                             cfg.get<double>("pulse.overlap"), cfg.get<double>("pulse.min_confidence"),
                             cfg.get<double>("pulse.noise_floor"));
  auto mag = s.magnitude.contiguous();
  auto a = mag.accessor<double, 2>();
  io::atomic_write(out / "spectrogram.csv", [&](std::ostream& os) {
    os << "time,frequency,magnitude\n";
    for (std::int64_t w = 0; w < mag.size(0); ++w)
      for (std::int64_t b = 0; b < mag.size(1); ++b)
        os << num(s.times[static_cast<std::size_t>(w)]) << ',' << num(s.frequencies[static_cast<std::size_t>(b)])
           << ',' << num(a[w][b]) << '\n';
  });
  std::vector<std::vector<std::string>> rows;
  for (std::size_t w = 0; w < s.dominant.size(); ++w)
    rows.push_back({num(s.times[w]), s.dominant[w] ? num(*s.dominant[w]) : ""});
  write_csv(out / "pulse.csv", "time,dominant_frequency", rows);
  write_spectrogram_png(s, out / "spectrogram.png");
  finish(out, m);
  if (s.dominant_band)
    std::cout << "dominant band " << *s.dominant_band << " Hz (bin width " << s.bin_width << " Hz)\n";
  else
    std::cout << "no dominant band above the noise floor\n";
  return 0;
}

int cmd_analyze_wind(const Config& cfg, const fs::path& out) {
  // CSV with u_bar and either phi_bar or tracks (a track file per clip); i_u optional.
  const auto samples_path = require_path(cfg, "io.samples");
  std::vector<fs::path> inputs{samples_path};
  auto t = io::read_csv(samples_path);
  std::vector<WindSample> samples;
  if (t.has_column("phi_bar")) {
    samples = read_wind_samples(samples_path);
  } else if (t.has_column("tracks") && t.has_column("u_bar")) {
    for (const auto& r : t.rows) {
      fs::path clip = r.at(t.column("tracks"));
      if (clip.is_relative()) clip = fs::path(samples_path).parent_path() / clip;
      inputs.push_back(clip);
      samples.push_back({sway_amplitude(to_tensor(read_tracks(clip))), std::stod(r.at(t.column("u_bar"))),
                         t.has_column("i_u") ? std::stod(r.at(t.column("i_u"))) : 0.0});
    }
  } else {
    throw ConfigError("io.samples", "needs u_bar plus phi_bar or tracks columns");
  }
  auto m = begin("analyze-wind", cfg, inputs, 0);
  auto fit = fit_wind_model(samples, cfg.get<double>("wind.exponent"));
  write_csv(out / "wind_fit.csv", "c0,r2,exponent,samples",
            {{num(fit.c0), num(fit.r2), num(fit.exponent), std::to_string(samples.size())}});
  std::vector<std::vector<std::string>> rows;
  for (const auto& s : samples)
    rows.push_back({num(s.phi_bar), num(s.u_bar), num(s.i_u), num(fit.c0 * std::pow(s.phi_bar, fit.exponent))});
  write_csv(out / "wind_samples.csv", "phi_bar,u_bar,i_u,u_fit", rows);
  write_wind_plot_png(samples, fit, out / "wind.png");
  finish(out, m);
  std::cout << "C0 " << fit.c0 << " R2 " << fit.r2 << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  CLI::App app{"Self-supervised keypoint discovery and downstream behavior analysis"};
  app.require_subcommand(1);
  bool list_keys = false;
  app.add_flag("--list-keys", list_keys, "print every config key with its default and exit");

  struct Sub {
    CLI::App* app;
    Common common;
    int (*run)(const Config&, const fs::path&);
  };
  std::vector<std::unique_ptr<Sub>> subs;
  auto add = [&](const std::string& name, const std::string& help, int (*run)(const Config&, const fs::path&)) {
    auto s = std::make_unique<Sub>();
    s->app = app.add_subcommand(name, help);
    s->run = run;
    add_common(s->app, s->common);
    subs.push_back(std::move(s));
    return subs.back().get();
  };

  auto* synth = add("synth", "generate a synthetic video with ground-truth part tracks", cmd_synth);
  alias(synth->app, synth->common, "--agents", "synth.agents", "number of sprites");
  alias(synth->app, synth->common, "--frames", "synth.frames", "number of frames");
  alias(synth->app, synth->common, "--seed", "synth.seed", "random seed");
  alias(synth->app, synth->common, "--resolution", "synth.resolution", "frame side in pixels");

  auto* train = add("train", "train the keypoint model on a video", cmd_train);
  alias(train->app, train->common, "--video", "data.source", "video file or image directory");
  alias(train->app, train->common, "--resume", "train.resume", "checkpoint to resume from");
  alias(train->app, train->common, "--seed", "train.seed", "random seed");

  auto* discover = add("discover", "run a trained model over a video and export keypoint tracks", cmd_discover);
  alias(discover->app, discover->common, "--checkpoint", "io.checkpoint", "trained checkpoint");
  alias(discover->app, discover->common, "--video", "data.source", "video file or image directory");

  auto* features = add("extract-features", "compute generic behavior features from keypoint tracks",
                       cmd_extract_features);
  alias(features->app, features->common, "--tracks", "io.tracks", "track file (.csv or binary)");

  auto* classify = add("classify", "train and evaluate the frame-level behavior classifier", cmd_classify);
  alias(classify->app, classify->common, "--tracks", "io.tracks", "track file (.csv or binary)");
  alias(classify->app, classify->common, "--labels", "io.labels", "CSV frame,label[,split]");

  auto* regression = add("evaluate-regression", "fit discovered keypoints to annotations (%-MSE, PCK)",
                         cmd_evaluate_regression);
  alias(regression->app, regression->common, "--discovered", "io.discovered", "discovered track file");
  alias(regression->app, regression->common, "--annotated", "io.annotated", "CSV frame,point,u,v[,activity]");

  auto* pulse = add("analyze-pulse", "spectrogram of the mean inter-keypoint distance", cmd_analyze_pulse);
  alias(pulse->app, pulse->common, "--tracks", "io.tracks", "track file (.csv or binary)");
  alias(pulse->app, pulse->common, "--fps", "pulse.fps", "frame rate in Hz");

  auto* wind = add("analyze-wind", "fit wind speed against sway amplitude", cmd_analyze_wind);
  alias(wind->app, wind->common, "--samples", "io.samples", "CSV u_bar plus phi_bar or tracks");
  alias(wind->app, wind->common, "--exponent", "wind.exponent", "power applied to phi_bar");

  // --list-keys works without a subcommand.
  for (int i = 1; i < argc; ++i)
    if (std::string(argv[i]) == "--list-keys") {
      Config cfg;
      for (const auto& k : cfg.keys()) std::cout << k << " = " << cfg.raw(k).dump() << "\n";
      return 0;
    }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  for (auto& s : subs) {
    if (!s->app->parsed()) continue;
    try {
      auto cfg = resolve(s->common);
      fs::path out = s->common.out;
      fs::create_directories(out);
      return s->run(cfg, out);
    } catch (const ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 2;
}
