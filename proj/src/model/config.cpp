#include "qrrec/model/config.hpp"

#include "qrrec/errors.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace qrrec::model {

Aggregation parse_aggregation(std::string_view code) {
  if (code == "S+S" || code == "HSA") return Aggregation::SumSum;
  if (code == "L+S") return Aggregation::LastSum;
  if (code == "L+M") return Aggregation::LastMean;
  if (code == "S+M") return Aggregation::SumMean;
  if (code == "M+M") return Aggregation::MeanMean;
  throw ConfigError("aggregation: unknown strategy '" + std::string(code) +
                    "' (expected S+S, L+S, L+M, S+M or M+M)");
}

std::string to_string(Aggregation a) {
  switch (a) {
    case Aggregation::SumSum: return "S+S";
    case Aggregation::LastSum: return "L+S";
    case Aggregation::LastMean: return "L+M";
    case Aggregation::SumMean: return "S+M";
    case Aggregation::MeanMean: return "M+M";
  }
  return "?";
}

std::vector<int> ModelConfig::all_scales(int seq_len) {
  std::vector<int> s(static_cast<std::size_t>(std::max(seq_len, 0)));
  std::iota(s.begin(), s.end(), 1);
  return s;
}

void ModelConfig::validate() const {
  if (dim < 1) throw ConfigError("dim: must be >= 1, got " + std::to_string(dim));
  if (seq_len < 1) throw ConfigError("seq_len: must be >= 1, got " + std::to_string(seq_len));
  if (num_layers < 1 || num_layers > 4)
    throw ConfigError("num_layers: must be in [1, 4], got " + std::to_string(num_layers));
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw ConfigError("dropout: must be in [0, 1), got " + std::to_string(dropout));
  if (num_items < 1) throw ConfigError("num_items: must be >= 1, got " + std::to_string(num_items));
  if (num_users < 1) throw ConfigError("num_users: must be >= 1, got " + std::to_string(num_users));
  if (scales.empty() && !use_user_profile)
    throw ConfigError("scales: empty scale list requires user_profile = true");
  std::set<int> seen;
  for (int w : scales) {
    if (w < 1 || w > seq_len)
      throw ConfigError("scales: scale " + std::to_string(w) + " outside [1, " +
                        std::to_string(seq_len) + "]");
    if (!seen.insert(w).second) throw ConfigError("scales: duplicate scale " + std::to_string(w));
  }
}

}  // namespace qrrec::model
