#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "nsm/error.hpp"
#include "nsm/value.hpp"

namespace nsm {

struct TrainConfig {
  std::size_t beam_size = 32;
  std::size_t samples_per_question = 8;
  double learning_rate = 0.05;
  std::size_t ml_epochs = 10;      // likelihood epochs per iterative-ML iteration
  std::size_t ml_iterations = 5;
  std::size_t reinforce_epochs = 10;
  double alpha = 0.1;              // probability of replacing a rollout by the pseudo-gold program
  double baseline_decay = 0.9;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  std::size_t max_expressions = 3;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;

  void validate() const {
    auto positive = [](bool ok, const char* key) {
      if (!ok) throw FormatError(std::string("config: ") + key + " must be positive");
    };
    positive(beam_size > 0, "beam_size");
    positive(samples_per_question > 0, "samples_per_question");
    positive(learning_rate > 0, "learning_rate");
    positive(ml_iterations > 0, "ml_iterations");
    positive(baseline_decay > 0, "baseline_decay");
    positive(clip_norm > 0, "clip_norm");
    positive(max_expressions > 0, "max_expressions");
    positive(embed_dim > 0, "embed_dim");
    positive(hidden_dim > 0, "hidden_dim");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw FormatError("config: alpha must lie in [0, 1]");
    if (!(baseline_decay <= 1.0)) throw FormatError("config: baseline_decay must lie in (0, 1]");
  }
};

namespace detail {

struct ConfigField {
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
ConfigField config_field(T TrainConfig::*member) {
  return {[member](TrainConfig& c, const std::string& text) {
            if constexpr (std::is_floating_point_v<T>) {
              auto v = parse_number(text);
              if (!v) throw FormatError("config: bad number '" + text + "'");
              c.*member = *v;
            } else {
              T v{};
              auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
              if (ec != std::errc{} || ptr != text.data() + text.size())
                throw FormatError("config: bad integer '" + text + "'");
              c.*member = v;
            }
          },
          [member](const TrainConfig& c) {
            if constexpr (std::is_floating_point_v<T>)
              return format_number(c.*member);
            else
              return std::to_string(c.*member);
          }};
}

inline const std::map<std::string, ConfigField>& config_fields() {
  static const std::map<std::string, ConfigField> fields = {
      {"beam_size", config_field(&TrainConfig::beam_size)},
      {"samples_per_question", config_field(&TrainConfig::samples_per_question)},
      {"learning_rate", config_field(&TrainConfig::learning_rate)},
      {"ml_epochs", config_field(&TrainConfig::ml_epochs)},
      {"ml_iterations", config_field(&TrainConfig::ml_iterations)},
      {"reinforce_epochs", config_field(&TrainConfig::reinforce_epochs)},
      {"alpha", config_field(&TrainConfig::alpha)},
      {"baseline_decay", config_field(&TrainConfig::baseline_decay)},
      {"clip_norm", config_field(&TrainConfig::clip_norm)},
      {"seed", config_field(&TrainConfig::seed)},
      {"max_expressions", config_field(&TrainConfig::max_expressions)},
      {"embed_dim", config_field(&TrainConfig::embed_dim)},
      {"hidden_dim", config_field(&TrainConfig::hidden_dim)},
  };
  return fields;
}

}  // namespace detail

/// Parses `key=value` lines over the defaults. Blank lines and `#` comments
/// are skipped; unknown keys are rejected.
inline TrainConfig parse_config(std::istream& in, TrainConfig cfg = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("config line " + std::to_string(lineno) + ": expected key=value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    auto it = detail::config_fields().find(key);
    if (it == detail::config_fields().end())
      throw FormatError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    it->second.set(cfg, value);
  }
  cfg.validate();
  return cfg;
}

inline TrainConfig parse_config(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config '" + path + "'");
  return parse_config(in);
}

/// Effective configuration as `key=value` lines, sorted by key.
inline std::string format_config(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [key, field] : detail::config_fields()) out += key + "=" + field.get(cfg) + "\n";
  return out;
}

}  // namespace nsm
