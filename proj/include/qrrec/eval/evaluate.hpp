#pragma once

#include "qrrec/data/interactions.hpp"
#include "qrrec/data/splits.hpp"
#include "qrrec/model/config.hpp"
#include "qrrec/model/network.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace qrrec::eval {

inline constexpr int kReportFormatVersion = 1;

struct EvalConfig {
  int num_negatives = 100;  // candidates = negatives + the target
  int k = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MetricsReport {
  std::string split;
  std::uint64_t seed = 0;
  int k = 10;
  std::vector<std::int64_t> users;  // parallel to ranks
  std::vector<std::int64_t> ranks;
  double map = 0.0;
  double recall_at_k = 0.0;
  double ndcg_at_k = 0.0;
  std::vector<std::string> warnings;

  std::int64_t user_count() const { return static_cast<std::int64_t>(ranks.size()); }
};

/// {format_version, split, seed, users, map, recall_at_10, ndcg_at_10, warnings}
/// (the two cutoff keys follow k).
nlohmann::json to_json(const MetricsReport& report);

/// Scores a batch: returns B × K, one row per example, columns following
/// `batch.candidates`.
using Scorer = std::function<model::Matrix(const model::Batch&)>;

Scorer model_scorer(const model::ModelConfig& config, const model::ParameterStore& store);

/// Non-personalized popularity: an item's score is how often it appears in
/// the users' training prefixes (validation and test targets excluded).
class PopRec {
 public:
  explicit PopRec(const data::InteractionLog& log);
  double score(std::int64_t item) const;
  model::Matrix operator()(const model::Batch& batch) const;

 private:
  std::vector<double> counts_;  // indexed by item id
};

PopRec poprec_baseline(const data::InteractionLog& log);

/// Target followed by up to `num_negatives` sampled negatives. The draw uses
/// the user's own eval-candidates stream, so it depends only on (seed, user).
std::vector<std::int64_t> eval_candidates(const data::NegativeSampler& sampler, std::int64_t user,
                                          std::int64_t target, const EvalConfig& config,
                                          bool* truncated = nullptr);

/// Ranks each user's held-out target against sampled negatives and averages
/// the per-user metrics.
MetricsReport evaluate(const Scorer& scorer, const data::SplitDataset& splits, data::Split which,
                       const data::InteractionLog& log, const EvalConfig& config,
                       int batch_size = 256);

}  // namespace qrrec::eval
