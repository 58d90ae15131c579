#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "kws/augment.hpp"
#include "kws/frontend.hpp"
#include "kws/model.hpp"
#include "kws/trainer.hpp"

namespace kws {

/// Every tunable of a run. Text form is flat "section.key = value" lines with
/// '#' comments, e.g. "train.steps = 200".
struct RunConfig {
  FrontendConfig frontend;
  AugmentSpec augment;
  ModelConfig model;
  TrainConfig train;

  void validate() const;
};

std::vector<std::string> run_config_keys();
std::string run_config_get(const RunConfig& c, std::string_view key);
/// Throws ParameterError for unknown keys and unparsable values.
void run_config_set(RunConfig& c, std::string_view key, std::string_view value);
/// Applies "key=value".
void run_config_assign(RunConfig& c, std::string_view assignment);

RunConfig parse_run_config(std::string_view text, const std::string& origin = "config");
RunConfig load_run_config(const std::filesystem::path& path);
/// All keys in a fixed order; parse_run_config(serialize(c)) == c.
std::string serialize_run_config(const RunConfig& c);

}  // namespace kws
