#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "kws/adam.hpp"
#include "kws/container.hpp"
#include "kws/model.hpp"

namespace kws {

enum class Stage { pretrain, finetune, supervised };

const char* stage_name(Stage s);
Stage parse_stage(const std::string& s);

struct OptimizerState {
  std::uint64_t t = 0;
  std::map<std::string, AdamMoments<float>> moments;
};

struct Checkpoint {
  Stage stage = Stage::supervised;
  std::uint64_t step = 0;
  KwsParams params;
  std::optional<OptimizerState> optimizer;
};

// Metadata travels as ordinary tensors named "meta.*"; optimizer moments as
// "adam.m.<param>" / "adam.v.<param>".
Container to_container(const Checkpoint& ckpt);
/// Rebuilds a checkpoint. When `expected` is given, the stored config must
/// match it and every tensor must have the shape it implies; disagreements
/// throw LoadError naming the tensor.
Checkpoint from_container(const Container& c, const std::optional<ModelConfig>& expected = std::nullopt);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace kws
