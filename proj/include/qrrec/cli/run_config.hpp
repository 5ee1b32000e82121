#pragma once

#include "qrrec/eval/evaluate.hpp"
#include "qrrec/model/config.hpp"
#include "qrrec/training/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qrrec::cli {

/// Everything a training or ablation run needs. The seed drives model
/// init, shuffling, negatives, dropout and evaluation candidates alike.
struct RunConfig {
  model::ModelConfig model;
  training::TrainConfig train;
  eval::EvalConfig eval;
  std::optional<std::uint64_t> seed;
  /// False while scales follow seq_len (the default "all").
  bool explicit_scales = false;

  /// Keys accepted in config files and as `--key` overrides (with '-' for '_').
  static const std::vector<std::string>& keys();

  /// Parses and stores one setting. Throws ConfigError naming the key.
  void set(std::string_view key, std::string_view value);

  /// Checks every field that does not depend on the dataset. Dataset counts
  /// are filled in later.
  void validate() const;

  /// Flat `key = value` text, one line per key, in keys() order.
  std::string to_ini() const;
};

/// Reads a flat key-value file: `key = value` lines, '#' or ';' comments,
/// blank lines ignored. Unknown keys are errors.
RunConfig load_run_config(const std::filesystem::path& path);
void apply_ini(RunConfig& config, std::string_view text, const std::string& origin = "config");

}  // namespace qrrec::cli
