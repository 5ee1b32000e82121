#include "qrrec/data/splits.hpp"

#include "qrrec/errors.hpp"

#include <algorithm>
#include <random>

namespace qrrec::data {

Split parse_split(std::string_view name) {
  if (name == "validation") return Split::Validation;
  if (name == "test") return Split::Test;
  throw ConfigError("split: expected validation or test, got '" + std::string(name) + "'");
}

std::string to_string(Split s) { return s == Split::Validation ? "validation" : "test"; }

namespace {

Window window_at(std::int64_t user, const std::vector<std::int64_t>& seq, std::size_t pos, int L) {
  Window w;
  w.user = user;
  w.target = seq[pos];
  w.context.assign(static_cast<std::size_t>(L), 0);
  const std::size_t n = std::min(pos, static_cast<std::size_t>(L));
  std::copy(seq.begin() + static_cast<std::ptrdiff_t>(pos - n), seq.begin() + static_cast<std::ptrdiff_t>(pos),
            w.context.end() - static_cast<std::ptrdiff_t>(n));
  return w;
}

}  // namespace

SplitDataset make_splits(const InteractionLog& log, int seq_len) {
  if (seq_len < 1) throw ConfigError("seq_len: must be >= 1, got " + std::to_string(seq_len));
  SplitDataset split;
  split.seq_len = seq_len;
  for (std::int64_t u = 1; u <= log.user_count(); ++u) {
    const auto& seq = log.sequence(u);
    const std::size_t n = seq.size();
    if (n < 3)
      throw ContractError("make_splits: user " + log.user_ids[static_cast<std::size_t>(u - 1)] +
                          " has fewer than 3 interactions");
    for (std::size_t p = 1; p + 2 < n; ++p) split.train.push_back(window_at(u, seq, p, seq_len));
    split.validation.push_back(window_at(u, seq, n - 2, seq_len));
    split.test.push_back(window_at(u, seq, n - 1, seq_len));
  }
  return split;
}

std::vector<std::int64_t> training_prefix(const InteractionLog& log, std::int64_t user) {
  const auto& seq = log.sequence(user);
  if (seq.size() < 2) return {};
  return {seq.begin(), seq.end() - 2};
}

nlohmann::json to_json(const SplitDataset& split) {
  auto windows = [](const std::vector<Window>& ws) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& w : ws) arr.push_back({w.user, w.context, w.target});
    return arr;
  };
  return {{"format", "qrrec-split"},
          {"format_version", 1},
          {"seq_len", split.seq_len},
          {"train", windows(split.train)},
          {"validation", windows(split.validation)},
          {"test", windows(split.test)}};
}

NegativeSampler::NegativeSampler(const InteractionLog& log) : item_count_(log.item_count()) {
  history_.reserve(log.sequences.size());
  for (const auto& seq : log.sequences) {
    std::vector<std::int64_t> h = seq;
    std::sort(h.begin(), h.end());
    h.erase(std::unique(h.begin(), h.end()), h.end());
    history_.push_back(std::move(h));
  }
}

bool NegativeSampler::interacted(std::int64_t user, std::int64_t item) const {
  const auto& h = history_.at(static_cast<std::size_t>(user - 1));
  return std::binary_search(h.begin(), h.end(), item);
}

std::int64_t NegativeSampler::available(std::int64_t user) const {
  return item_count_ - static_cast<std::int64_t>(history_.at(static_cast<std::size_t>(user - 1)).size());
}

std::vector<std::int64_t> NegativeSampler::sample(std::int64_t user, std::int64_t k, Rng& rng) const {
  if (user < 1 || user > static_cast<std::int64_t>(history_.size()))
    throw IndexError("sample_negatives: unknown user " + std::to_string(user));
  const std::int64_t free = available(user);
  if (k > free)
    throw SamplingError("sample_negatives: user " + std::to_string(user) + " has " +
                        std::to_string(free) + " non-interacted items, " + std::to_string(k) +
                        " requested");
  std::vector<std::int64_t> out;
  if (k <= 0) return out;
  out.reserve(static_cast<std::size_t>(k));

  if (free * 2 >= item_count_ && k * 4 <= free) {
    // Sparse history: rejection sampling touches few items.
    std::uniform_int_distribution<std::int64_t> pick(1, item_count_);
    while (static_cast<std::int64_t>(out.size()) < k) {
      const std::int64_t c = pick(rng);
      if (interacted(user, c) || std::find(out.begin(), out.end(), c) != out.end()) continue;
      out.push_back(c);
    }
    return out;
  }
  // Dense history: enumerate the complement and take a partial shuffle.
  std::vector<std::int64_t> pool;
  pool.reserve(static_cast<std::size_t>(free));
  for (std::int64_t c = 1; c <= item_count_; ++c)
    if (!interacted(user, c)) pool.push_back(c);
  for (std::int64_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::int64_t> pick(i, static_cast<std::int64_t>(pool.size()) - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
    out.push_back(pool[static_cast<std::size_t>(i)]);
  }
  return out;
}

std::vector<std::int64_t> sample_negatives(const InteractionLog& log, std::int64_t user,
                                           std::int64_t k, Rng& rng) {
  return NegativeSampler(log).sample(user, k, rng);
}

}  // namespace qrrec::data
