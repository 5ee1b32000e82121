#pragma once

#include "qrrec/data/interactions.hpp"
#include "qrrec/rng.hpp"

#include <json.hpp>

#include <cstdint>
#include <vector>

namespace qrrec::data {

/// One next-item example: the L items before `target`, left-padded with 0.
struct Window {
  std::int64_t user = 0;
  std::vector<std::int64_t> context;
  std::int64_t target = 0;

  bool operator==(const Window&) const = default;
};

/// Leave-one-out split. Per user: the last item is the test target, the
/// second-to-last the validation target, and every earlier position with a
/// non-empty history is a training window.
struct SplitDataset {
  int seq_len = 5;
  std::vector<Window> train;
  std::vector<Window> validation;  // one per user, ordered by user id
  std::vector<Window> test;        // one per user, ordered by user id
};

enum class Split { Validation, Test };

Split parse_split(std::string_view name);
std::string to_string(Split s);

SplitDataset make_splits(const InteractionLog& log, int seq_len = 5);

/// Items from each user's training prefix (everything before the
/// validation target), in time order.
std::vector<std::int64_t> training_prefix(const InteractionLog& log, std::int64_t user);

nlohmann::json to_json(const SplitDataset& split);

/// Draws distinct items a user never interacted with.
class NegativeSampler {
 public:
  explicit NegativeSampler(const InteractionLog& log);

  std::int64_t available(std::int64_t user) const;
  bool interacted(std::int64_t user, std::int64_t item) const;

  /// k distinct ids, uniform over the items outside the user's history, in
  /// draw order. Throws SamplingError when fewer than k exist.
  std::vector<std::int64_t> sample(std::int64_t user, std::int64_t k, Rng& rng) const;

 private:
  std::int64_t item_count_;
  std::vector<std::vector<std::int64_t>> history_;  // sorted, unique
};

std::vector<std::int64_t> sample_negatives(const InteractionLog& log, std::int64_t user,
                                           std::int64_t k, Rng& rng);

}  // namespace qrrec::data
