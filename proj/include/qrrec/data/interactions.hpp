#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace qrrec::data {

inline constexpr int kDatasetFormatVersion = 1;

struct RawInteraction {
  std::string user;
  std::string item;
  double rating = 0.0;
  std::int64_t timestamp = 0;

  bool operator==(const RawInteraction&) const = default;
};

enum class Format { Csv, Jsonl };

Format parse_format(std::string_view name);

struct IngestResult {
  std::vector<RawInteraction> rows;
  std::vector<std::size_t> malformed_lines;  // 1-based line numbers
};

/// Reads `user,item,rating,timestamp` rows (CSV with that header, or JSON
/// lines with those fields). Malformed rows are skipped and reported; with
/// `strict` any malformed row raises ParseError listing every bad line.
IngestResult ingest(const std::filesystem::path& path, Format format, bool strict = false);
IngestResult read_csv(std::istream& in, bool strict = false);
IngestResult read_jsonl(std::istream& in, bool strict = false);

/// Filtered, time-ordered interactions with dense ids.
///
/// Internal user and item ids run 1..count; item id 0 is reserved for
/// padding. User u's external id is `user_ids[u - 1]`, and likewise for
/// items.
struct InteractionLog {
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  std::vector<std::vector<std::int64_t>> sequences;   // [u - 1] → item ids, oldest first
  std::vector<std::vector<std::int64_t>> timestamps;  // parallel to sequences
  double min_rating = 3.0;
  int min_interactions = 10;

  std::int64_t user_count() const { return static_cast<std::int64_t>(user_ids.size()); }
  std::int64_t item_count() const { return static_cast<std::int64_t>(item_ids.size()); }
  std::int64_t interaction_count() const;
  /// 1 - interactions / (users · items)
  double sparsity() const;

  const std::vector<std::int64_t>& sequence(std::int64_t user) const {
    return sequences.at(static_cast<std::size_t>(user - 1));
  }

  /// Back to raw rows (external ids, rating = min_rating), user by user.
  std::vector<RawInteraction> to_raw() const;

  bool operator==(const InteractionLog&) const = default;
};

/// Keeps rating >= min_rating, orders each user's rows by timestamp (stable
/// on input order), drops users left with fewer than min_interactions rows,
/// and assigns dense ids in lexicographic order of the external ids.
/// Throws EmptyDatasetError when no user survives.
InteractionLog preprocess(const std::vector<RawInteraction>& raw, double min_rating = 3.0,
                          int min_interactions = 10);

nlohmann::json to_json(const InteractionLog& log);
InteractionLog log_from_json(const nlohmann::json& j);

void save_dataset(const std::filesystem::path& path, const InteractionLog& log);
InteractionLog load_dataset(const std::filesystem::path& path);

}  // namespace qrrec::data
