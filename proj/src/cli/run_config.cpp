#include "qrrec/cli/run_config.hpp"

#include "qrrec/errors.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace qrrec::cli {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename T>
T number(std::string_view key, std::string_view value) {
  value = trim(value);
  T v{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (value.empty() || ec != std::errc() || ptr != value.data() + value.size())
    throw ConfigError(std::string(key) + ": cannot parse '" + std::string(value) + "' as a number");
  return v;
}

bool boolean(std::string_view key, std::string_view value) {
  value = trim(value);
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError(std::string(key) + ": expected true or false, got '" + std::string(value) + "'");
}

std::vector<int> int_list(std::string_view key, std::string_view value) {
  std::vector<int> out;
  value = trim(value);
  if (value.empty() || value == "none") return out;
  std::size_t start = 0;
  while (start <= value.size()) {
    const std::size_t comma = value.find(',', start);
    const std::string_view part =
        value.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    out.push_back(number<int>(key, part));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k{
      "seed",       "dim",        "seq_len",     "scales",        "num_layers",
      "output_gate", "user_profile", "aggregation", "dropout",     "conv_bias",
      "lr",         "batch_size", "l2",          "negatives",     "base_epochs",
      "patience",   "max_epochs", "eval_negatives", "k"};
  return k;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  if (key == "seed") seed = number<std::uint64_t>(key, value);
  else if (key == "dim") model.dim = number<int>(key, value);
  else if (key == "seq_len") {
    model.seq_len = number<int>(key, value);
    if (!explicit_scales) model.scales = model::ModelConfig::all_scales(model.seq_len);
  } else if (key == "scales") {
    explicit_scales = trim(value) != "all";
    model.scales = explicit_scales ? int_list(key, value) : model::ModelConfig::all_scales(model.seq_len);
  }
  else if (key == "num_layers") model.num_layers = number<int>(key, value);
  else if (key == "output_gate") model.use_output_gate = boolean(key, value);
  else if (key == "user_profile") model.use_user_profile = boolean(key, value);
  else if (key == "aggregation") model.aggregation = model::parse_aggregation(trim(value));
  else if (key == "dropout") model.dropout = number<double>(key, value);
  else if (key == "conv_bias") model.conv_bias = boolean(key, value);
  else if (key == "lr") train.lr = number<double>(key, value);
  else if (key == "batch_size") train.batch_size = number<int>(key, value);
  else if (key == "l2") train.l2 = number<double>(key, value);
  else if (key == "negatives") train.negatives = number<int>(key, value);
  else if (key == "base_epochs") train.base_epochs = number<int>(key, value);
  else if (key == "patience") train.patience = number<int>(key, value);
  else if (key == "max_epochs") train.max_epochs = number<int>(key, value);
  else if (key == "eval_negatives") eval.num_negatives = number<int>(key, value);
  else if (key == "k") eval.k = number<int>(key, value);
  else throw ConfigError(std::string(key) + ": unknown setting");
}

void RunConfig::validate() const {
  if (!seed) throw ConfigError("seed: required (no default)");
  model::ModelConfig m = model;
  if (m.num_items < 1) m.num_items = 1;
  if (m.num_users < 1) m.num_users = 1;
  m.validate();
  train.validate();
  eval.validate();
}

std::string RunConfig::to_ini() const {
  std::ostringstream os;
  os << std::setprecision(17);
  auto list = [](const std::vector<int>& v) {
    if (v.empty()) return std::string("none");
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  auto b = [](bool v) { return v ? "true" : "false"; };
  os << "# qrrec run config, format_version=1\n";
  if (seed) os << "seed = " << *seed << '\n';
  os << "dim = " << model.dim << '\n'
     << "seq_len = " << model.seq_len << '\n'
     << "scales = " << list(model.scales) << '\n'
     << "num_layers = " << model.num_layers << '\n'
     << "output_gate = " << b(model.use_output_gate) << '\n'
     << "user_profile = " << b(model.use_user_profile) << '\n'
     << "aggregation = " << model::to_string(model.aggregation) << '\n'
     << "dropout = " << model.dropout << '\n'
     << "conv_bias = " << b(model.conv_bias) << '\n'
     << "lr = " << train.lr << '\n'
     << "batch_size = " << train.batch_size << '\n'
     << "l2 = " << train.l2 << '\n'
     << "negatives = " << train.negatives << '\n'
     << "base_epochs = " << train.base_epochs << '\n'
     << "patience = " << train.patience << '\n'
     << "max_epochs = " << train.max_epochs << '\n'
     << "eval_negatives = " << eval.num_negatives << '\n'
     << "k = " << eval.k << '\n';
  return os.str();
}

void apply_ini(RunConfig& config, std::string_view text, const std::string& origin) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view l = trim(line);
    if (l.empty() || l.front() == '#' || l.front() == ';') continue;
    const auto eq = l.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    config.set(trim(l.substr(0, eq)), trim(l.substr(eq + 1)));
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  RunConfig config;
  apply_ini(config, buf.str(), path.string());
  return config;
}

}  // namespace qrrec::cli
