#pragma once

#include "qrrec/data/interactions.hpp"
#include "qrrec/model/network.hpp"
#include "qrrec/model/parameters.hpp"
#include "qrrec/rng.hpp"
#include "qrrec/training/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

namespace qrrec::testing {

// Synthetic logs. Item names are zero-padded so the lexicographic id remap
// keeps item k at id k.

inline std::string item_name(std::int64_t k) {
  std::ostringstream s;
  s << 'i' << std::setw(4) << std::setfill('0') << k;
  return s.str();
}

inline std::string user_name(std::int64_t u) {
  std::ostringstream s;
  s << 'u' << std::setw(5) << std::setfill('0') << u;
  return s.str();
}

inline data::InteractionLog log_from_sequences(const std::vector<std::vector<std::int64_t>>& seqs) {
  std::vector<data::RawInteraction> raw;
  for (std::size_t u = 0; u < seqs.size(); ++u)
    for (std::size_t t = 0; t < seqs[u].size(); ++t)
      raw.push_back({user_name(static_cast<std::int64_t>(u) + 1), item_name(seqs[u][t]), 5.0,
                     static_cast<std::int64_t>(t)});
  return data::preprocess(raw, 3.0, 3);
}

/// A random single cycle over 1..items; `next[i]` follows item i.
inline std::vector<std::int64_t> random_cycle(std::int64_t items, Rng& rng) {
  std::vector<std::int64_t> order(static_cast<std::size_t>(items));
  std::iota(order.begin(), order.end(), 1);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::int64_t> next(static_cast<std::size_t>(items) + 1, 0);
  for (std::size_t j = 0; j < order.size(); ++j)
    next[static_cast<std::size_t>(order[j])] = order[(j + 1) % order.size()];
  return next;
}

/// Every user walks a fixed successor map from a random start item.
inline data::InteractionLog first_order_log(int users, std::int64_t items, int length,
                                            std::uint64_t seed) {
  Rng rng = make_stream(seed, "synthetic");
  const auto next = random_cycle(items, rng);
  std::uniform_int_distribution<std::int64_t> start(1, items);
  std::vector<std::vector<std::int64_t>> seqs(static_cast<std::size_t>(users));
  for (auto& s : seqs) {
    s.push_back(start(rng));
    while (static_cast<int>(s.size()) < length) s.push_back(next[static_cast<std::size_t>(s.back())]);
  }
  return log_from_sequences(seqs);
}

/// The next item is determined by the item one step back or the item two
/// steps back, whichever the user's phase selects, so both short and
/// longer-range dependencies occur in every sequence.
inline data::InteractionLog mixed_order_log(int users, std::int64_t items, int length,
                                            std::uint64_t seed) {
  Rng rng = make_stream(seed, "synthetic-mixed");
  const auto step1 = random_cycle(items, rng);
  const auto step2 = random_cycle(items, rng);
  std::uniform_int_distribution<std::int64_t> pick(1, items);
  std::vector<std::vector<std::int64_t>> seqs(static_cast<std::size_t>(users));
  for (auto& s : seqs) {
    s.push_back(pick(rng));
    s.push_back(pick(rng));
    while (static_cast<int>(s.size()) < length) {
      const std::size_t t = s.size();
      const bool second = (t % 2) == 0;
      s.push_back(second ? step2[static_cast<std::size_t>(s[t - 2])]
                         : step1[static_cast<std::size_t>(s[t - 1])]);
    }
  }
  return log_from_sequences(seqs);
}

/// Items drawn uniformly at random, no sequential structure.
inline data::InteractionLog uniform_log(int users, std::int64_t items, int length, std::uint64_t seed) {
  Rng rng = make_stream(seed, "synthetic-uniform");
  std::vector<std::vector<std::int64_t>> seqs(static_cast<std::size_t>(users));
  for (auto& s : seqs) {
    std::vector<std::int64_t> all(static_cast<std::size_t>(items));
    std::iota(all.begin(), all.end(), 1);
    std::shuffle(all.begin(), all.end(), rng);
    s.assign(all.begin(), all.begin() + length);
  }
  return log_from_sequences(seqs);
}

// Finite differences.

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
};

/// Relative error with an absolute floor in the denominator. Central
/// differences at eps = 1e-5 on an O(1) loss carry roundoff near 1e-9, so
/// entries below the floor compare on that absolute scale instead.
inline double relative_error(double a, double b, double floor = 1e-5) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Summed BCE of a train-mode forward with a fixed dropout stream.
inline double training_loss(const model::ModelConfig& cfg, model::ParameterStore& store,
                            const model::Batch& batch, std::uint64_t dropout_seed, bool backprop) {
  model::Tape tape;
  Rng rng = make_stream(dropout_seed, streams::kDropout);
  const auto trace = model::forward(tape, batch, cfg, store, model::Mode::Train, &rng);
  const auto loss = training::bce_loss(tape, trace.scores, 1);
  if (backprop) {
    model::zero_grads(store);
    backward(loss);
  }
  return loss.value()(0, 0);
}

inline GradCheck gradient_check(const model::ModelConfig& cfg, model::ParameterStore& store,
                                const model::Batch& batch, std::uint64_t dropout_seed,
                                double eps = 1e-5) {
  training_loss(cfg, store, batch, dropout_seed, true);
  std::vector<model::Matrix> analytic;
  store.for_each([&](const std::string&, model::Slot& s) { analytic.push_back(s.gradient); });

  GradCheck result;
  std::size_t index = 0;
  store.for_each([&](const std::string& name, model::Slot& s) {
    const auto& g = analytic[index++];
    if (!s.enabled) return;
    for (Eigen::Index r = 0; r < s.value.rows(); ++r) {
      if (r == s.frozen_row) continue;
      for (Eigen::Index c = 0; c < s.value.cols(); ++c) {
        const double orig = s.value(r, c);
        s.value(r, c) = orig + eps;
        const double up = training_loss(cfg, store, batch, dropout_seed, false);
        s.value(r, c) = orig - eps;
        const double down = training_loss(cfg, store, batch, dropout_seed, false);
        s.value(r, c) = orig;
        const double numeric = (up - down) / (2 * eps);
        const double err = relative_error(g(r, c), numeric);
        ++result.checked;
        result.max_abs_error = std::max(result.max_abs_error, std::abs(g(r, c) - numeric));
        if (err > result.max_rel_error) {
          result.max_rel_error = err;
          result.worst_analytic = g(r, c);
          result.worst_numeric = numeric;
          result.worst = name + "(" + std::to_string(r) + "," + std::to_string(c) + ")";
        }
      }
    }
  });
  return result;
}

/// Batch of B random windows over `items`, one target plus `negatives`
/// candidate columns, with some left padding.
inline model::Batch random_batch(Rng& rng, int batch, int seq_len, std::int64_t items,
                                 std::int64_t users, int negatives) {
  std::uniform_int_distribution<std::int64_t> item(1, items);
  std::uniform_int_distribution<std::int64_t> user(1, users);
  std::uniform_int_distribution<int> pad(0, seq_len - 1);
  model::Batch b;
  b.items = model::IdMatrix::Zero(batch, seq_len);
  b.candidates = model::IdMatrix::Zero(batch, negatives + 1);
  for (int i = 0; i < batch; ++i) {
    const int p = pad(rng);
    for (int t = p; t < seq_len; ++t) b.items(i, t) = item(rng);
    for (int k = 0; k <= negatives; ++k) b.candidates(i, k) = item(rng);
    b.users.push_back(user(rng));
  }
  return b;
}

// Scratch directories under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("qrrec-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

}  // namespace qrrec::testing
