#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "relkit/encoder.hpp"
#include "relkit/features.hpp"
#include "relkit/instances.hpp"
#include "relkit/objectives.hpp"
#include "relkit/trainer.hpp"

namespace relkit::cli {

// One flat key-value document drives every command. Keys are dotted
// strings; every key has a typed default, unknown keys are rejected by
// name, and command-line overrides are parsed against the default's
// type. The resolved document is written next to each run's outputs.
using ConfigValue = std::variant<bool, int64_t, double, std::string>;

struct RunConfig {
  std::string verb;
  std::map<std::string, ConfigValue> values;

  bool get_bool(const std::string& key) const;
  int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;  // accepts an int value
  const std::string& get_string(const std::string& key) const;

  encoder::EncoderConfig encoder_config() const;
  encoder::FeatureConfig feature_config() const;
  trainer::TrainConfig train_config() const;
  objectives::ContrastiveConfig contrastive_config() const;
  corpus::InstanceConfig instance_config() const;

  // Sorted-key pretty JSON with a trailing newline; the reproducibility
  // contract hashes and re-reads this exact text.
  std::string canonical_text() const;
  std::string hash8() const;         // first 8 hex digits of the text hash
  std::string run_dir_name() const;  // <verb>-<hash8>-s<seed>
};

// The full key set with per-verb defaults (the only difference today:
// pretraining turns the EMA toggle off, fine-tuning leaves it on).
std::map<std::string, ConfigValue> default_config(const std::string& verb);

// defaults <- config file (optional) <- "key=value" overrides.
// ConfigError names the offending key, value or file.
RunConfig resolve_config(const std::string& verb,
                         const std::string& config_path,
                         const std::vector<std::string>& overrides);

}  // namespace relkit::cli
