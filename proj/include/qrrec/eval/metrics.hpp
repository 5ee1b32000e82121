#pragma once

#include <cstdint>
#include <span>

namespace qrrec::eval {

/// 1-based rank of `scores[target]` among all scores. Ties count against the
/// target: rank = 1 + #(strictly greater) + #(equal, other candidates).
std::int64_t rank_target(std::span<const double> scores, std::size_t target);

struct UserMetrics {
  double ap = 0.0;      // 1 / rank: average precision with one relevant item
  double recall = 0.0;  // 1 if rank <= k
  double ndcg = 0.0;    // 1 / log2(rank + 1) if rank <= k

  bool operator==(const UserMetrics&) const = default;
};

UserMetrics user_metrics(std::int64_t rank, int k);

}  // namespace qrrec::eval
