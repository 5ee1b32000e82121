#pragma once

#include "qrrec/model/config.hpp"
#include "qrrec/model/parameters.hpp"

#include <json.hpp>

#include <filesystem>

namespace qrrec::model {

inline constexpr int kCheckpointFormatVersion = 1;

nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& j);

struct Checkpoint {
  ModelConfig config;
  ParameterStore store;
  nlohmann::json metadata;  // free-form run info (seed, epoch, dataset counts, ...)
};

/// Binary container:
///   magic "QRRECKPT", u32 format version, u64 header length,
///   JSON header {format_version, config, metadata, arrays: [{name, rows, cols}]},
///   then each array's values as little-endian f64, row-major, in header order.
/// Values round-trip bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ParameterStore& store, const nlohmann::json& metadata = {});

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace qrrec::model
