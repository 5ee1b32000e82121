#pragma once

#include "qrrec/cli/run_config.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace qrrec::cli {

enum ExitCode : int { kSuccess = 0, kRuntimeFailure = 1, kUsageError = 2 };

/// One row of an ablation table.
struct AblationVariant {
  std::string label;
  model::ModelConfig model;
};

/// Variants for a study (output-gate, aggregation, user-profile, scale),
/// each derived from `base`. Throws ConfigError for an unknown study.
std::vector<AblationVariant> ablation_variants(const std::string& study, const model::ModelConfig& base);

/// Worker cap for ablation runs: QRSEQ_THREADS if set and positive, else 1.
unsigned worker_threads();

/// Entry point shared by the `qrrec` binary and the tests. `args[0]` is the
/// program name. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qrrec::cli
