#include "qrrec/eval/evaluate.hpp"

#include "qrrec/errors.hpp"
#include "qrrec/eval/metrics.hpp"
#include "qrrec/rng.hpp"

#include <algorithm>

namespace qrrec::eval {

void EvalConfig::validate() const {
  if (num_negatives < 1)
    throw ConfigError("eval_negatives: must be >= 1, got " + std::to_string(num_negatives));
  if (k < 1) throw ConfigError("k: must be >= 1, got " + std::to_string(k));
  if (num_negatives + 1 < k)
    throw ConfigError("k: cutoff " + std::to_string(k) + " exceeds the " +
                      std::to_string(num_negatives + 1) + " candidates");
}

nlohmann::json to_json(const MetricsReport& r) {
  const std::string suffix = "_at_" + std::to_string(r.k);
  return {{"format_version", kReportFormatVersion},
          {"split", r.split},
          {"seed", r.seed},
          {"users", r.user_count()},
          {"map", r.map},
          {"recall" + suffix, r.recall_at_k},
          {"ndcg" + suffix, r.ndcg_at_k},
          {"warnings", r.warnings}};
}

Scorer model_scorer(const model::ModelConfig& config, const model::ParameterStore& store) {
  return [&config, &store](const model::Batch& batch) { return model::score(batch, config, store); };
}

PopRec::PopRec(const data::InteractionLog& log)
    : counts_(static_cast<std::size_t>(log.item_count() + 1), 0.0) {
  for (std::int64_t u = 1; u <= log.user_count(); ++u)
    for (auto item : data::training_prefix(log, u)) counts_[static_cast<std::size_t>(item)] += 1.0;
}

double PopRec::score(std::int64_t item) const {
  if (item < 0 || item >= static_cast<std::int64_t>(counts_.size())) return 0.0;
  return counts_[static_cast<std::size_t>(item)];
}

model::Matrix PopRec::operator()(const model::Batch& batch) const {
  model::Matrix out(batch.candidates.rows(), batch.candidates.cols());
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = score(batch.candidates.data()[i]);
  return out;
}

PopRec poprec_baseline(const data::InteractionLog& log) {
  if (log.user_count() == 0) throw EmptyDatasetError("poprec: empty interaction log");
  return PopRec(log);
}

std::vector<std::int64_t> eval_candidates(const data::NegativeSampler& sampler, std::int64_t user,
                                          std::int64_t target, const EvalConfig& config,
                                          bool* truncated) {
  Rng rng = make_stream(config.seed, streams::kEvalCandidates, static_cast<std::uint64_t>(user));
  const std::int64_t want = config.num_negatives;
  const std::int64_t have = sampler.available(user);
  if (truncated != nullptr) *truncated = have < want;
  std::vector<std::int64_t> out{target};
  const auto negs = sampler.sample(user, std::min(want, have), rng);
  out.insert(out.end(), negs.begin(), negs.end());
  return out;
}

MetricsReport evaluate(const Scorer& scorer, const data::SplitDataset& splits, data::Split which,
                       const data::InteractionLog& log, const EvalConfig& config, int batch_size) {
  config.validate();
  const auto& windows = which == data::Split::Validation ? splits.validation : splits.test;
  if (windows.empty()) throw EmptyDatasetError("evaluate: empty " + data::to_string(which) + " split");

  const data::NegativeSampler sampler(log);
  MetricsReport report;
  report.split = data::to_string(which);
  report.seed = config.seed;
  report.k = config.k;

  std::vector<std::vector<std::int64_t>> candidates(windows.size());
  std::size_t truncated_users = 0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    bool truncated = false;
    candidates[i] = eval_candidates(sampler, windows[i].user, windows[i].target, config, &truncated);
    if (truncated) ++truncated_users;
  }
  if (truncated_users > 0)
    report.warnings.push_back(std::to_string(truncated_users) + " users had fewer than " +
                              std::to_string(config.num_negatives) +
                              " negatives available; all of theirs were used");

  const std::size_t L = static_cast<std::size_t>(splits.seq_len);
  double ap = 0, recall = 0, ndcg = 0;
  std::size_t begin = 0;
  while (begin < windows.size()) {
    // Consecutive users with the same candidate count share a batch.
    std::size_t end = begin + 1;
    while (end < windows.size() && end - begin < static_cast<std::size_t>(batch_size) &&
           candidates[end].size() == candidates[begin].size())
      ++end;
    const auto B = static_cast<Eigen::Index>(end - begin);
    const auto K = static_cast<Eigen::Index>(candidates[begin].size());
    model::Batch batch;
    batch.items.resize(B, static_cast<Eigen::Index>(L));
    batch.candidates.resize(B, K);
    batch.users.resize(static_cast<std::size_t>(B));
    for (Eigen::Index b = 0; b < B; ++b) {
      const auto& w = windows[begin + static_cast<std::size_t>(b)];
      batch.users[static_cast<std::size_t>(b)] = w.user;
      for (std::size_t t = 0; t < L; ++t) batch.items(b, static_cast<Eigen::Index>(t)) = w.context[t];
      const auto& c = candidates[begin + static_cast<std::size_t>(b)];
      for (Eigen::Index k = 0; k < K; ++k) batch.candidates(b, k) = c[static_cast<std::size_t>(k)];
    }
    const model::Matrix scores = scorer(batch);
    if (scores.rows() != B || scores.cols() != K)
      throw DimensionError("evaluate: scorer returned " + ad::shape_string(scores) + " for a [" +
                           std::to_string(B) + "x" + std::to_string(K) + "] batch");
    for (Eigen::Index b = 0; b < B; ++b) {
      const std::span<const double> row(scores.data() + b * K, static_cast<std::size_t>(K));
      const auto rank = rank_target(row, 0);
      const auto m = user_metrics(rank, config.k);
      ap += m.ap;
      recall += m.recall;
      ndcg += m.ndcg;
      report.users.push_back(batch.users[static_cast<std::size_t>(b)]);
      report.ranks.push_back(rank);
    }
    begin = end;
  }
  const double n = static_cast<double>(report.ranks.size());
  report.map = ap / n;
  report.recall_at_k = recall / n;
  report.ndcg_at_k = ndcg / n;
  return report;
}

}  // namespace qrrec::eval
