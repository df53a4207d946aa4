#pragma once

#include "kpdisc/error.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace kpdisc {

/// Layered key/value configuration. Keys are dotted and namespaced by module
/// (`data.gap`, `model.k`, `loss.w_r`, ...). Every key has a built-in default
/// that also fixes its type; later layers override earlier ones:
///
///   built-in default < dataset preset < config file < command-line flag
///
/// Config files are JSON, either nested (`{"model": {"k": 4}}`) or flat
/// (`{"model.k": 4}`). A run manifest is accepted as a config file too, which
/// is how runs are replayed.
class Config {
public:
  enum class Source { builtin, preset, file, flag };

  Config();

  static const std::vector<std::string>& preset_names();

  /// Applies one of the per-dataset hyperparameter presets (calms21, fly,
  /// human, jellyfish, vegetation).
  void apply_preset(const std::string& name);

  void merge_file(const std::filesystem::path& path);
  void merge_json(const nlohmann::json& j, Source source);

  void set(const std::string& key, const nlohmann::json& value, Source source = Source::flag);
  /// Parses `text` according to the key's declared type.
  void set_from_string(const std::string& key, const std::string& text,
                       Source source = Source::flag);

  bool has(const std::string& key) const;
  Source source(const std::string& key) const;
  const nlohmann::json& raw(const std::string& key) const;

  template <class T>
  T get(const std::string& key) const {
    try {
      return raw(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(key, e.what());
    }
  }

  /// Resolved configuration as a nested JSON object.
  nlohmann::json resolved() const;

  std::vector<std::string> keys() const;

private:
  struct Entry {
    nlohmann::json value;
    Source source = Source::builtin;
  };
  void check_type(const std::string& key, const nlohmann::json& value) const;

  std::map<std::string, Entry> entries_;
};

}  // namespace kpdisc
