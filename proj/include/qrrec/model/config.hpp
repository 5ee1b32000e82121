#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace qrrec::model {

/// How hidden states are reduced: first over timesteps inside each scale,
/// then over scales. Codes read "<inner>+<outer>" with S = sum, M = mean,
/// L = last timestep.
enum class Aggregation { SumSum, LastSum, LastMean, SumMean, MeanMean };

Aggregation parse_aggregation(std::string_view code);
std::string to_string(Aggregation a);

struct ModelConfig {
  int dim = 128;
  int seq_len = 5;
  std::vector<int> scales{1, 2, 3, 4, 5};
  int num_layers = 1;
  bool use_output_gate = false;
  bool use_user_profile = true;
  Aggregation aggregation = Aggregation::SumSum;
  double dropout = 0.5;
  bool conv_bias = true;
  int num_items = 0;
  int num_users = 0;

  /// Scales 1..seq_len, the full multi-scale setting.
  static std::vector<int> all_scales(int seq_len);

  /// Throws ConfigError naming the offending field.
  void validate() const;

  /// An empty scale list is the profile-only model: the sequence branch is
  /// absent and the head sees concat(0, p_u).
  bool sequence_branch() const { return !scales.empty(); }
};

}  // namespace qrrec::model
