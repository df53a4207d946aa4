#include "kpdisc/config.hpp"

#include "kpdisc/io.hpp"

#include <algorithm>

namespace kpdisc {

using nlohmann::json;

namespace {

const std::map<std::string, json>& defaults() {
  static const std::map<std::string, json> d = {
      {"data.source", ""},
      {"data.gap", 6},
      {"data.stride", 1},
      {"data.resolution", 256},
      {"data.fps", 0.0},
      {"data.roi.enabled", false},
      {"data.roi.threshold", 0.1},
      {"data.roi.box", 150},
      {"data.roi.frames", 50},

      {"target.kind", "ssim"},
      {"target.ssim.window", 11},
      {"target.ssim.c1", 1e-4},
      {"target.ssim.c2", 9e-4},
      {"target.ssim.gaussian", false},
      {"target.ssim.negation", "affine"},

      {"model.k", 10},
      {"model.sigma", 0.05},
      {"model.single_branch", false},
      {"model.encoder", "resnet50"},
      {"model.encoder_widths", json::array({16, 32, 64, 64, 128})},
      {"model.pose_channels", 256},
      {"model.decoder_channels", json::array({1024, 512, 256, 128, 64})},
      {"model.batchnorm", true},
      {"model.pretrained", ""},

      {"loss.w_r", 1.0},
      {"loss.w_s", 0.02},
      {"loss.sigma_s", 0.05},
      {"loss.curriculum_epoch", 5},
      {"loss.perceptual_blocks", 4},
      {"loss.perceptual_widths", json::array({64, 128, 256, 512})},
      {"loss.perceptual_convs", 2},
      {"loss.perceptual_block_weights", json::array()},
      {"loss.perceptual_seed", 1234},
      {"loss.perceptual_weights", ""},

      {"train.batch_size", 5},
      {"train.learning_rate", 1e-3},
      {"train.epochs", 50},
      {"train.max_steps", 0},
      {"train.steps_per_epoch", 0},
      {"train.seed", 0},
      {"train.mode", "self_supervised"},
      {"train.checkpoint_every", 0},
      {"train.workers", 0},
      {"train.convergence_tol", 0.01},
      {"train.convergence_window", 5},
      {"train.all_rotation_angles", false},
      {"train.supervised_weight", 1.0},
      {"train.labels", ""},
      {"train.resume", ""},
      {"train.dtype", "f32"},

      {"discover.n_agents", 1},
      {"discover.region", 0},
      {"discover.batch_size", 16},
      {"discover.background_quantile", 0.0},

      {"features.pose", true},
      {"features.conf", true},
      {"features.cov", true},
      {"features.agents", 1},

      {"classify.window", 13},
      {"classify.hidden", 64},
      {"classify.dilation", 2},
      {"classify.epochs", 30},
      {"classify.batch_size", 64},
      {"classify.learning_rate", 1e-3},
      {"classify.seed", 0},
      {"classify.seeds", 5},
      {"classify.train_fraction", 0.7},
      {"classify.classes", json::array()},
      {"classify.background", 0},

      {"regression.train_fraction", 0.7},
      {"regression.ridge", 1e-6},
      {"regression.image_side", 1.0},
      {"regression.pck_threshold", 0.05},

      {"pulse.fps", 0.0},
      {"pulse.window_s", 4.0},
      {"pulse.overlap", 0.5},
      {"pulse.min_confidence", 0.0},
      {"pulse.noise_floor", 1e-9},

      {"wind.exponent", 0.5},

      {"io.checkpoint", ""},
      {"io.tracks", ""},
      {"io.labels", ""},
      {"io.discovered", ""},
      {"io.annotated", ""},
      {"io.samples", ""},

      {"synth.agents", 2},
      {"synth.frames", 500},
      {"synth.seed", 0},
      {"synth.resolution", 64},
  };
  return d;
}

const std::map<std::string, std::map<std::string, json>>& presets() {
  static const std::map<std::string, std::map<std::string, json>> p = {
      {"calms21", {{"model.k", 10}, {"train.batch_size", 5}, {"data.resolution", 256}, {"data.gap", 6},
                   {"data.stride", 13}, {"train.learning_rate", 1e-3}}},
      {"fly", {{"model.k", 10}, {"train.batch_size", 5}, {"data.resolution", 256}, {"data.gap", 3},
               {"train.learning_rate", 1e-3}, {"discover.n_agents", 2}, {"features.agents", 2},
               {"classify.dilation", 1}}},
      {"human", {{"model.k", 16}, {"train.batch_size", 36}, {"data.resolution", 128}, {"data.gap", 20},
                 {"train.learning_rate", 1e-3}}},
      {"jellyfish", {{"model.k", 10}, {"train.batch_size", 5}, {"data.resolution", 256}, {"data.gap", 20},
                     {"train.learning_rate", 1e-3}, {"data.roi.enabled", true}}},
      {"vegetation", {{"model.k", 15}, {"train.batch_size", 5}, {"data.resolution", 256}, {"data.gap", 60},
                      {"train.learning_rate", 1e-3}}},
  };
  return p;
}

const char* type_name(const json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number_integer()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  return "object";
}

bool compatible(const json& def, const json& v) {
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_number_integer()) return v.is_number_integer();
  if (def.is_number()) return v.is_number();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) return v.is_array();
  return false;
}

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object() && !defaults().count(key))
      flatten(*it, key, out);
    else
      out.emplace_back(key, *it);
  }
}

}  // namespace

Config::Config() {
  for (const auto& [k, v] : defaults()) entries_[k] = {v, Source::builtin};
}

const std::vector<std::string>& Config::preset_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [k, _] : presets()) n.push_back(k);
    return n;
  }();
  return names;
}

void Config::apply_preset(const std::string& name) {
  auto it = presets().find(name);
  if (it == presets().end()) throw ConfigError("preset", "unknown preset '" + name + "'");
  for (const auto& [k, v] : it->second) set(k, v, Source::preset);
}

void Config::merge_file(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("<file>", path.string() + " must hold a JSON object");
  // A run manifest carries its resolved configuration under "config".
  if (j.contains("manifest_version") && j.contains("config")) j = j.at("config");
  merge_json(j, Source::file);
}

void Config::merge_json(const json& j, Source source) {
  std::vector<std::pair<std::string, json>> flat;
  flatten(j, "", flat);
  for (const auto& [k, v] : flat) set(k, v, source);
}

void Config::check_type(const std::string& key, const json& value) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError(key, "unknown key");
  const auto& def = defaults().at(key);
  if (!compatible(def, value))
    throw ConfigError(key, std::string("expected ") + type_name(def) + ", got " + type_name(value));
}

void Config::set(const std::string& key, const json& value, Source source) {
  check_type(key, value);
  auto& e = entries_[key];
  e.value = defaults().at(key).is_number_float() && value.is_number_integer() ? json(value.get<double>()) : value;
  e.source = source;
}

void Config::set_from_string(const std::string& key, const std::string& text, Source source) {
  auto it = defaults().find(key);
  if (it == defaults().end()) throw ConfigError(key, "unknown key");
  const auto& def = it->second;
  json v;
  if (def.is_string()) {
    v = text;
  } else {
    try {
      v = json::parse(text);
    } catch (const json::parse_error&) {
      throw ConfigError(key, "cannot parse '" + text + "' as " + type_name(def));
    }
  }
  set(key, v, source);
}

bool Config::has(const std::string& key) const { return entries_.count(key) > 0; }

Config::Source Config::source(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError(key, "unknown key");
  return it->second.source;
}

const json& Config::raw(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError(key, "unknown key");
  return it->second.value;
}

json Config::resolved() const {
  json out = json::object();
  for (const auto& [k, e] : entries_) {
    json* node = &out;
    std::size_t start = 0;
    for (std::size_t dot = k.find('.'); dot != std::string::npos; dot = k.find('.', start)) {
      node = &(*node)[k.substr(start, dot - start)];
      start = dot + 1;
    }
    (*node)[k.substr(start)] = e.value;
  }
  return out;
}

std::vector<std::string> Config::keys() const {
  std::vector<std::string> k;
  for (const auto& [name, _] : entries_) k.push_back(name);
  return k;
}

}  // namespace kpdisc
