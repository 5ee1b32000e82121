#include "qrrec/data/interactions.hpp"

#include "qrrec/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>

namespace qrrec::data {

Format parse_format(std::string_view name) {
  if (name == "csv") return Format::Csv;
  if (name == "jsonl") return Format::Jsonl;
  throw ConfigError("format: expected csv or jsonl, got '" + std::string(name) + "'");
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Comma split with optional double-quoted fields ("" escapes a quote).
std::optional<std::vector<std::string>> split_csv(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"' && trim(cur).empty()) {
      quoted = true;
      was_quoted = true;
      cur.clear();
    } else if (c == ',') {
      fields.push_back(was_quoted ? cur : std::string(trim(cur)));
      cur.clear();
      was_quoted = false;
    } else {
      cur += c;
    }
  }
  if (quoted) return std::nullopt;
  fields.push_back(was_quoted ? cur : std::string(trim(cur)));
  return fields;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<RawInteraction> make_row(std::string user, std::string item,
                                       std::optional<double> rating,
                                       std::optional<std::int64_t> ts) {
  if (user.empty() || item.empty() || !rating || !ts || *ts < 0 || !std::isfinite(*rating))
    return std::nullopt;
  return RawInteraction{std::move(user), std::move(item), *rating, *ts};
}

void finish(IngestResult& r, bool strict) {
  if (strict && !r.malformed_lines.empty()) {
    std::ostringstream msg;
    msg << "malformed rows at line";
    if (r.malformed_lines.size() > 1) msg << 's';
    for (std::size_t i = 0; i < r.malformed_lines.size(); ++i)
      msg << (i == 0 ? " " : ", ") << r.malformed_lines[i];
    throw ParseError(msg.str());
  }
}

}  // namespace

IngestResult read_csv(std::istream& in, bool strict) {
  IngestResult r;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_csv(line);
    if (!header_seen) {
      header_seen = true;
      const std::vector<std::string> expected{"user", "item", "rating", "timestamp"};
      if (!fields || *fields != expected)
        throw ParseError("line " + std::to_string(lineno) +
                         ": expected header 'user,item,rating,timestamp'");
      continue;
    }
    std::optional<RawInteraction> row;
    if (fields && fields->size() == 4)
      row = make_row((*fields)[0], (*fields)[1], parse_number<double>((*fields)[2]),
                     parse_number<std::int64_t>((*fields)[3]));
    if (row)
      r.rows.push_back(std::move(*row));
    else
      r.malformed_lines.push_back(lineno);
  }
  finish(r, strict);
  return r;
}

IngestResult read_jsonl(std::istream& in, bool strict) {
  IngestResult r;
  std::string line;
  std::size_t lineno = 0;
  auto id_field = [](const nlohmann::json& j, const char* key) -> std::string {
    if (!j.contains(key)) return {};
    const auto& v = j[key];
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
    return {};
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::optional<RawInteraction> row;
    try {
      const auto j = nlohmann::json::parse(line);
      std::optional<double> rating;
      std::optional<std::int64_t> ts;
      if (j.is_object()) {
        if (j.contains("rating") && j["rating"].is_number()) rating = j["rating"].get<double>();
        if (j.contains("timestamp") && j["timestamp"].is_number_integer())
          ts = j["timestamp"].get<std::int64_t>();
        row = make_row(id_field(j, "user"), id_field(j, "item"), rating, ts);
      }
    } catch (const nlohmann::json::exception&) {
    }
    if (row)
      r.rows.push_back(std::move(*row));
    else
      r.malformed_lines.push_back(lineno);
  }
  finish(r, strict);
  return r;
}

IngestResult ingest(const std::filesystem::path& path, Format format, bool strict) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  return format == Format::Csv ? read_csv(in, strict) : read_jsonl(in, strict);
}

std::int64_t InteractionLog::interaction_count() const {
  std::int64_t n = 0;
  for (const auto& s : sequences) n += static_cast<std::int64_t>(s.size());
  return n;
}

double InteractionLog::sparsity() const {
  const double cells = static_cast<double>(user_count()) * static_cast<double>(item_count());
  return cells > 0 ? 1.0 - static_cast<double>(interaction_count()) / cells : 1.0;
}

std::vector<RawInteraction> InteractionLog::to_raw() const {
  std::vector<RawInteraction> rows;
  rows.reserve(static_cast<std::size_t>(interaction_count()));
  for (std::size_t u = 0; u < sequences.size(); ++u)
    for (std::size_t k = 0; k < sequences[u].size(); ++k)
      rows.push_back({user_ids[u], item_ids[static_cast<std::size_t>(sequences[u][k] - 1)],
                      min_rating, timestamps[u][k]});
  return rows;
}

InteractionLog preprocess(const std::vector<RawInteraction>& raw, double min_rating,
                          int min_interactions) {
  // Row indices per external user, in input order.
  std::map<std::string, std::vector<std::size_t>> by_user;
  for (std::size_t i = 0; i < raw.size(); ++i)
    if (raw[i].rating >= min_rating) by_user[raw[i].user].push_back(i);

  std::map<std::string, std::int64_t> item_index;
  std::vector<std::pair<std::string, std::vector<std::size_t>>> kept;
  for (auto& [user, rows] : by_user) {
    if (static_cast<int>(rows.size()) < min_interactions) continue;
    std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
      return raw[a].timestamp < raw[b].timestamp;
    });
    for (std::size_t i : rows) item_index.emplace(raw[i].item, 0);
    kept.emplace_back(user, std::move(rows));
  }
  if (kept.empty())
    throw EmptyDatasetError("no user has " + std::to_string(min_interactions) +
                            " or more interactions with rating >= " + std::to_string(min_rating));

  InteractionLog log;
  log.min_rating = min_rating;
  log.min_interactions = min_interactions;
  std::int64_t next = 1;
  for (auto& [item, id] : item_index) {
    id = next++;
    log.item_ids.push_back(item);
  }
  for (auto& [user, rows] : kept) {
    log.user_ids.push_back(user);
    std::vector<std::int64_t> seq, ts;
    seq.reserve(rows.size());
    ts.reserve(rows.size());
    for (std::size_t i : rows) {
      seq.push_back(item_index.at(raw[i].item));
      ts.push_back(raw[i].timestamp);
    }
    log.sequences.push_back(std::move(seq));
    log.timestamps.push_back(std::move(ts));
  }
  return log;
}

nlohmann::json to_json(const InteractionLog& log) {
  return {{"format", "qrrec-dataset"},
          {"format_version", kDatasetFormatVersion},
          {"min_rating", log.min_rating},
          {"min_interactions", log.min_interactions},
          {"users", log.user_ids},
          {"items", log.item_ids},
          {"sequences", log.sequences},
          {"timestamps", log.timestamps}};
}

InteractionLog log_from_json(const nlohmann::json& j) {
  InteractionLog log;
  try {
    if (j.at("format") != "qrrec-dataset") throw ParseError("dataset: not a qrrec dataset file");
    const int version = j.at("format_version").get<int>();
    if (version != kDatasetFormatVersion)
      throw CompatibilityError("dataset: unsupported format version " + std::to_string(version));
    log.min_rating = j.at("min_rating").get<double>();
    log.min_interactions = j.at("min_interactions").get<int>();
    log.user_ids = j.at("users").get<std::vector<std::string>>();
    log.item_ids = j.at("items").get<std::vector<std::string>>();
    log.sequences = j.at("sequences").get<std::vector<std::vector<std::int64_t>>>();
    log.timestamps = j.at("timestamps").get<std::vector<std::vector<std::int64_t>>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("dataset: ") + e.what());
  }
  if (log.sequences.size() != log.user_ids.size() || log.timestamps.size() != log.user_ids.size())
    throw ParseError("dataset: sequence count does not match user count");
  for (std::size_t u = 0; u < log.sequences.size(); ++u) {
    if (log.sequences[u].size() != log.timestamps[u].size())
      throw ParseError("dataset: timestamps misaligned for user " + log.user_ids[u]);
    for (auto id : log.sequences[u])
      if (id < 1 || id > log.item_count())
        throw ParseError("dataset: item id " + std::to_string(id) + " out of range");
  }
  return log;
}

void save_dataset(const std::filesystem::path& path, const InteractionLog& log) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  os << to_json(log).dump() << '\n';
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

InteractionLog load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("dataset '" + path.string() + "': " + e.what());
  }
  return log_from_json(j);
}

}  // namespace qrrec::data
