#include "qrrec/cli/commands.hpp"

#include "qrrec/data/interactions.hpp"
#include "qrrec/data/splits.hpp"
#include "qrrec/errors.hpp"
#include "qrrec/eval/evaluate.hpp"
#include "qrrec/model/checkpoint.hpp"
#include "qrrec/training/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;

namespace qrrec::cli {

namespace {

inline constexpr int kAblationFormatVersion = 1;

std::string flag_name(const std::string& key) {
  std::string f = key;
  std::replace(f.begin(), f.end(), '_', '-');
  return "--" + f;
}

/// `--key value` overrides for every RunConfig key, applied after the file.
struct Overrides {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App& app) {
    for (const auto& key : RunConfig::keys())
      options[key] = app.add_option(flag_name(key), values[key], "Override '" + key + "'");
  }

  void apply(RunConfig& rc) const {
    for (const auto& key : RunConfig::keys())
      if (options.at(key)->count() > 0) rc.set(key, values.at(key));
  }
};

void require_file(const fs::path& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + ": path required");
  if (!fs::exists(path)) throw ConfigError(what + ": no such file '" + path.string() + "'");
}

void prepare_out_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError("out: '" + dir.string() + "' is not a directory");
    if (!fs::is_empty(dir) && !force)
      throw ConfigError("out: '" + dir.string() + "' already holds results (use --force to overwrite)");
  }
  fs::create_directories(dir);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  os << text;
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

std::string report_text(const eval::MetricsReport& r) { return eval::to_json(r).dump(2) + "\n"; }

RunConfig resolve_run_config(const std::string& config_path, const Overrides& overrides) {
  RunConfig rc;
  if (!config_path.empty()) {
    if (!fs::exists(config_path)) throw ConfigError("config: no such file '" + config_path + "'");
    rc = load_run_config(config_path);
  }
  overrides.apply(rc);
  rc.validate();
  return rc;
}

struct PreparedData {
  data::InteractionLog log;
  data::SplitDataset splits;
};

PreparedData load_for_run(const fs::path& path, RunConfig& rc) {
  PreparedData d{data::load_dataset(path), {}};
  rc.model.num_items = static_cast<int>(d.log.item_count());
  rc.model.num_users = static_cast<int>(d.log.user_count());
  rc.train.seed = *rc.seed;
  rc.eval.seed = *rc.seed;
  d.splits = data::make_splits(d.log, rc.model.seq_len);
  return d;
}

nlohmann::json split_manifest(const PreparedData& d, const RunConfig& rc) {
  return {{"format", "qrrec-split-manifest"},
          {"format_version", 1},
          {"seq_len", d.splits.seq_len},
          {"seed", *rc.seed},
          {"users", d.log.user_count()},
          {"items", d.log.item_count()},
          {"interactions", d.log.interaction_count()},
          {"train_windows", d.splits.train.size()},
          {"validation", d.splits.validation.size()},
          {"test", d.splits.test.size()}};
}

void print_epoch(std::ostream& err, const std::string& prefix, const training::EpochRecord& r) {
  std::ostringstream line;
  line << std::fixed << std::setprecision(4) << prefix << "epoch " << r.epoch;
  if (r.mean_loss) line << "  loss " << *r.mean_loss;
  line << "  val map " << r.validation.map << "  recall " << r.validation.recall << "  ndcg "
       << r.validation.ndcg << '\n';
  err << line.str() << std::flush;
}

// ---------------------------------------------------------------- preprocess

struct PreprocessArgs {
  std::string input, format = "csv", out;
  double min_rating = 3.0;
  int min_interactions = 10;
  bool strict = false, force = false;
};

int cmd_preprocess(const PreprocessArgs& a, std::ostream& out, std::ostream& err) {
  const auto format = data::parse_format(a.format);
  if (a.min_interactions < 1) throw ConfigError("min-interactions: must be >= 1");
  require_file(a.input, "input");
  if (a.out.empty()) throw ConfigError("out: path required");
  if (fs::exists(a.out) && !a.force)
    throw ConfigError("out: '" + a.out + "' exists (use --force to overwrite)");

  const auto ingested = data::ingest(a.input, format, a.strict);
  if (!ingested.malformed_lines.empty())
    err << "warning: skipped " << ingested.malformed_lines.size() << " malformed rows\n";
  const auto log = data::preprocess(ingested.rows, a.min_rating, a.min_interactions);
  if (const auto parent = fs::path(a.out).parent_path(); !parent.empty()) fs::create_directories(parent);
  data::save_dataset(a.out, log);

  out << "users: " << log.user_count() << '\n'
      << "items: " << log.item_count() << '\n'
      << "interactions: " << log.interaction_count() << '\n'
      << "sparsity: " << std::fixed << std::setprecision(2) << log.sparsity() * 100.0 << "%\n";
  out.unsetf(std::ios::fixed);
  return kSuccess;
}

// --------------------------------------------------------------------- train

struct TrainArgs {
  std::string data, config, out;
  bool force = false;
  Overrides overrides;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig rc = resolve_run_config(a.config, a.overrides);
  require_file(a.data, "data");
  if (a.out.empty()) throw ConfigError("out: directory required");
  prepare_out_dir(a.out, a.force);

  PreparedData d = load_for_run(a.data, rc);
  const auto outcome = training::fit(d.log, d.splits, rc.model, rc.train, rc.eval,
                                     [&](const training::EpochRecord& r) { print_epoch(err, "", r); });

  const fs::path dir = a.out;
  nlohmann::json meta = {{"seed", *rc.seed},
                         {"best_epoch", outcome.fit.best_epoch},
                         {"eval", {{"num_negatives", rc.eval.num_negatives}, {"k", rc.eval.k}}},
                         {"dataset",
                          {{"users", d.log.user_count()},
                           {"items", d.log.item_count()},
                           {"interactions", d.log.interaction_count()}}}};
  model::save_checkpoint(dir / "checkpoint.bin", rc.model, outcome.fit.best, meta);
  std::ostringstream log_csv;
  training::write_training_log(log_csv, outcome.fit.log, rc.eval.k);
  write_text(dir / "train_log.csv", log_csv.str());
  write_text(dir / "validation_report.json", report_text(outcome.validation));
  write_text(dir / "test_report.json", report_text(outcome.test));
  write_text(dir / "split_manifest.json", split_manifest(d, rc).dump(2) + "\n");
  write_text(dir / "run_config.ini", rc.to_ini());
  out << report_text(outcome.test);
  return kSuccess;
}

// ------------------------------------------------------------------ evaluate

struct EvaluateArgs {
  std::string checkpoint, data, split = "test", baseline = "none", out;
  std::uint64_t seed = 0;
  int seq_len = 5;
  CLI::Option* seed_opt = nullptr;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream&) {
  const auto split = data::parse_split(a.split);
  const bool poprec = a.baseline == "poprec";
  if (!poprec && a.baseline != "none")
    throw ConfigError("baseline: expected none or poprec, got '" + a.baseline + "'");
  if (poprec && a.seed_opt->count() == 0) throw ConfigError("seed: required with --baseline poprec");
  if (!poprec) require_file(a.checkpoint, "checkpoint");
  require_file(a.data, "data");

  const auto log = data::load_dataset(a.data);
  eval::MetricsReport report;
  if (poprec) {
    eval::EvalConfig ec;
    ec.seed = a.seed;
    const auto splits = data::make_splits(log, a.seq_len);
    const auto pop = eval::poprec_baseline(log);
    report = eval::evaluate(pop, splits, split, log, ec);
  } else {
    const auto ck = model::load_checkpoint(a.checkpoint);
    if (ck.config.num_items != log.item_count() || ck.config.num_users != log.user_count())
      throw CompatibilityError("checkpoint expects " + std::to_string(ck.config.num_items) + " items and " +
                               std::to_string(ck.config.num_users) + " users, dataset has " +
                               std::to_string(log.item_count()) + " and " +
                               std::to_string(log.user_count()));
    eval::EvalConfig ec;
    const auto& m = ck.metadata;
    ec.seed = a.seed_opt->count() > 0 ? a.seed : m.value("seed", std::uint64_t{0});
    if (m.contains("eval")) {
      ec.num_negatives = m["eval"].value("num_negatives", ec.num_negatives);
      ec.k = m["eval"].value("k", ec.k);
    }
    const auto splits = data::make_splits(log, ck.config.seq_len);
    report = eval::evaluate(eval::model_scorer(ck.config, ck.store), splits, split, log, ec);
  }
  const std::string text = report_text(report);
  if (!a.out.empty()) write_text(a.out, text);
  out << text;
  return kSuccess;
}

// -------------------------------------------------------------------- ablate

struct AblateArgs {
  std::string data, config, out, study;
  bool force = false;
  Overrides overrides;
};

std::string slug(std::size_t index, const std::string& label) {
  std::ostringstream s;
  s << std::setw(2) << std::setfill('0') << index << '_';
  for (char c : label) s << (std::isalnum(static_cast<unsigned char>(c)) ? c : '-');
  return s.str();
}

int cmd_ablate(const AblateArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig rc = resolve_run_config(a.config, a.overrides);
  auto variants = ablation_variants(a.study, rc.model);
  require_file(a.data, "data");
  if (a.out.empty()) throw ConfigError("out: directory required");
  prepare_out_dir(a.out, a.force);

  PreparedData d = load_for_run(a.data, rc);
  for (auto& v : variants) {
    v.model.num_items = rc.model.num_items;
    v.model.num_users = rc.model.num_users;
    v.model.validate();
  }

  struct Row {
    int best_epoch = 0;
    eval::MetricsReport test;
  };
  std::vector<Row> rows(variants.size());
  std::vector<std::exception_ptr> failures(variants.size());
  std::atomic<std::size_t> next{0};
  std::mutex io;
  auto worker = [&] {
    for (std::size_t i = next++; i < variants.size(); i = next++) {
      try {
        const std::string prefix = "[" + variants[i].label + "] ";
        const auto outcome = training::fit(d.log, d.splits, variants[i].model, rc.train, rc.eval,
                                           [&](const training::EpochRecord& r) {
                                             std::lock_guard lock(io);
                                             print_epoch(err, prefix, r);
                                           });
        const fs::path sub = fs::path(a.out) / slug(i, variants[i].label);
        fs::create_directories(sub);
        std::ostringstream log_csv;
        training::write_training_log(log_csv, outcome.fit.log, rc.eval.k);
        write_text(sub / "train_log.csv", log_csv.str());
        write_text(sub / "test_report.json", report_text(outcome.test));
        rows[i] = {outcome.fit.best_epoch, outcome.test};
      } catch (...) {
        failures[i] = std::current_exception();
      }
    }
  };
  const unsigned threads = std::min<unsigned>(worker_threads(), static_cast<unsigned>(variants.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& f : failures)
    if (f) std::rethrow_exception(f);

  const std::string at = "_at_" + std::to_string(rc.eval.k);
  std::ostringstream csv;
  csv << "# qrrec-ablation study=" << a.study << " format_version=" << kAblationFormatVersion << '\n'
      << "variant,ndcg" << at << ",map,recall" << at << ",best_epoch\n"
      << std::setprecision(17);
  for (std::size_t i = 0; i < variants.size(); ++i)
    csv << variants[i].label << ',' << rows[i].test.ndcg_at_k << ',' << rows[i].test.map << ','
        << rows[i].test.recall_at_k << ',' << rows[i].best_epoch << '\n';
  write_text(fs::path(a.out) / "ablation.csv", csv.str());
  out << csv.str();
  return kSuccess;
}

}  // namespace

std::vector<AblationVariant> ablation_variants(const std::string& study, const model::ModelConfig& base) {
  std::vector<AblationVariant> v;
  auto with = [&](std::string label, auto&& edit) {
    model::ModelConfig m = base;
    edit(m);
    v.push_back({std::move(label), std::move(m)});
  };
  if (study == "output-gate") {
    with("with O", [](auto& m) { m.use_output_gate = true; });
    with("w/o O", [](auto& m) { m.use_output_gate = false; });
  } else if (study == "aggregation") {
    using model::Aggregation;
    with("L+S", [](auto& m) { m.aggregation = Aggregation::LastSum; });
    with("L+M", [](auto& m) { m.aggregation = Aggregation::LastMean; });
    with("S+M", [](auto& m) { m.aggregation = Aggregation::SumMean; });
    with("M+M", [](auto& m) { m.aggregation = Aggregation::MeanMean; });
    with("HSA(S+S)", [](auto& m) { m.aggregation = Aggregation::SumSum; });
  } else if (study == "user-profile") {
    with("p_u only", [](auto& m) {
      m.scales.clear();
      m.use_user_profile = true;
    });
    with("QR-Rec w/o p_u", [](auto& m) { m.use_user_profile = false; });
    with("QR-Rec", [](auto& m) { m.use_user_profile = true; });
  } else if (study == "scale") {
    for (int w = 1; w <= base.seq_len; ++w)
      with("Quasi-RNN(w=" + std::to_string(w) + ")", [w](auto& m) { m.scales = {w}; });
    with("QR-Rec", [](auto& m) { m.scales = model::ModelConfig::all_scales(m.seq_len); });
  } else {
    throw ConfigError("study: unknown study '" + study +
                      "' (expected output-gate, aggregation, user-profile or scale)");
  }
  return v;
}

unsigned worker_threads() {
  if (const char* env = std::getenv("QRSEQ_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<unsigned>(n);
  }
  return 1;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Multi-scale quasi-recurrent sequential recommender", "qrrec");
  app.require_subcommand(1);

  PreprocessArgs pre;
  auto* c_pre = app.add_subcommand("preprocess", "Filter raw interactions into a processed dataset");
  c_pre->add_option("--input", pre.input, "Raw interactions (CSV or JSON lines)")->required();
  c_pre->add_option("--format", pre.format, "csv or jsonl");
  c_pre->add_option("--min-rating", pre.min_rating, "Keep ratings >= this");
  c_pre->add_option("--min-interactions", pre.min_interactions, "Drop users with fewer interactions");
  c_pre->add_option("--out", pre.out, "Processed dataset file")->required();
  c_pre->add_flag("--strict", pre.strict, "Fail on any malformed row");
  c_pre->add_flag("--force", pre.force, "Overwrite an existing output");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train a model and report test metrics");
  c_train->add_option("--data", tr.data, "Processed dataset")->required();
  c_train->add_option("--config", tr.config, "Run config (key = value)");
  c_train->add_option("--out", tr.out, "Output directory")->required();
  c_train->add_flag("--force", tr.force, "Write into a non-empty output directory");
  tr.overrides.attach(*c_train);

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Evaluate a checkpoint or baseline");
  c_eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint file");
  c_eval->add_option("--data", ev.data, "Processed dataset")->required();
  c_eval->add_option("--split", ev.split, "validation or test");
  c_eval->add_option("--baseline", ev.baseline, "none or poprec");
  ev.seed_opt = c_eval->add_option("--seed", ev.seed, "Candidate sampling seed");
  c_eval->add_option("--seq-len", ev.seq_len, "Context length for the baseline splits");
  c_eval->add_option("--out", ev.out, "Also write the report here");

  AblateArgs ab;
  auto* c_ablate = app.add_subcommand("ablate", "Train every variant of an ablation study");
  c_ablate->add_option("--data", ab.data, "Processed dataset")->required();
  c_ablate->add_option("--study", ab.study, "output-gate, aggregation, user-profile or scale")->required();
  c_ablate->add_option("--config", ab.config, "Run config (key = value)");
  c_ablate->add_option("--out", ab.out, "Output directory")->required();
  c_ablate->add_flag("--force", ab.force, "Write into a non-empty output directory");
  ab.overrides.attach(*c_ablate);

  std::vector<char*> argv;
  std::vector<std::string> storage = args;
  if (storage.empty()) storage.push_back("qrrec");
  for (auto& s : storage) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsageError;
  }

  try {
    if (c_pre->parsed()) return cmd_preprocess(pre, out, err);
    if (c_train->parsed()) return cmd_train(tr, out, err);
    if (c_eval->parsed()) return cmd_evaluate(ev, out, err);
    if (c_ablate->parsed()) return cmd_ablate(ab, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kUsageError;
}

}  // namespace qrrec::cli
