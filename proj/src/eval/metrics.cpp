#include "qrrec/eval/metrics.hpp"

#include "qrrec/errors.hpp"

#include <cmath>
#include <string>

namespace qrrec::eval {

std::int64_t rank_target(std::span<const double> scores, std::size_t target) {
  if (target >= scores.size())
    throw ContractError("rank_target: target index " + std::to_string(target) + " not among " +
                        std::to_string(scores.size()) + " candidates");
  const double t = scores[target];
  std::int64_t rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (i != target && scores[i] >= t) ++rank;
  return rank;
}

UserMetrics user_metrics(std::int64_t rank, int k) {
  if (rank < 1) throw ContractError("user_metrics: rank must be >= 1, got " + std::to_string(rank));
  UserMetrics m;
  m.ap = 1.0 / static_cast<double>(rank);
  if (rank <= k) {
    m.recall = 1.0;
    m.ndcg = 1.0 / std::log2(static_cast<double>(rank) + 1.0);
  }
  return m;
}

}  // namespace qrrec::eval
