#include "qrrec/cli/commands.hpp"
#include "qrrec/cli/run_config.hpp"
#include "qrrec/errors.hpp"

#include "../support/helpers.hpp"

#include <doctest.h>

#include <json.hpp>

#include <sstream>

using namespace qrrec;
using namespace qrrec::cli;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "qrrec");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string write_raw(const testing::TempDir& dir, const data::InteractionLog& log) {
  std::ostringstream csv;
  csv << "user,item,rating,timestamp\n";
  for (const auto& r : log.to_raw()) csv << r.user << ',' << r.item << ',' << r.rating << ',' << r.timestamp << '\n';
  const auto path = (dir / "raw.csv").string();
  testing::write_file(path, csv.str());
  return path;
}

const std::vector<std::string> kFast{"--seed", "5",          "--dim",        "8", "--base-epochs", "2",
                                     "--max-epochs", "3", "--batch-size", "64"};

std::vector<std::string> with_fast(std::vector<std::string> a) {
  a.insert(a.end(), kFast.begin(), kFast.end());
  return a;
}

}  // namespace

TEST_CASE("run config files") {
  RunConfig rc;
  apply_ini(rc, "# comment\nseed = 7\ndim=32\nscales = 1,3\naggregation = L+S\noutput_gate = true\n");
  CHECK(*rc.seed == 7);
  CHECK(rc.model.dim == 32);
  CHECK(rc.model.scales == std::vector<int>{1, 3});
  CHECK(rc.model.use_output_gate);
  rc.validate();

  RunConfig back;
  apply_ini(back, rc.to_ini());
  CHECK(back.to_ini() == rc.to_ini());

  RunConfig r2;
  r2.set("seq_len", "3");
  CHECK(r2.model.scales == std::vector<int>{1, 2, 3});
  CHECK_THROWS_AS(r2.validate(), ConfigError);

  auto names = [](const std::string& text, const std::string& key) {
    RunConfig r;
    try {
      apply_ini(r, text);
      r.validate();
    } catch (const ConfigError& e) {
      return std::string(e.what()).find(key) != std::string::npos;
    }
    return false;
  };
  CHECK(names("seed=1\ndim=abc\n", "dim"));
  CHECK(names("seed=1\nwidth=3\n", "width"));
  CHECK(names("seed=1\ndropout=1.5\n", "dropout"));
  CHECK(names("seed=1\nlr=-0.1\n", "lr"));
  CHECK(names("seed=1\nnot a pair\n", "config"));
}

TEST_CASE("ablation variants") {
  model::ModelConfig base;
  auto labels = [&](const std::string& study) {
    std::vector<std::string> out;
    for (const auto& v : ablation_variants(study, base)) out.push_back(v.label);
    return out;
  };
  CHECK(labels("aggregation") == std::vector<std::string>{"L+S", "L+M", "S+M", "M+M", "HSA(S+S)"});
  CHECK(labels("user-profile") == std::vector<std::string>{"p_u only", "QR-Rec w/o p_u", "QR-Rec"});
  CHECK(labels("output-gate") == std::vector<std::string>{"with O", "w/o O"});
  const auto scale = ablation_variants("scale", base);
  REQUIRE(scale.size() == 6);
  CHECK(scale[0].label == "Quasi-RNN(w=1)");
  CHECK(scale[4].model.scales == std::vector<int>{5});
  CHECK(scale[5].model.scales == std::vector<int>{1, 2, 3, 4, 5});
  CHECK_THROWS_AS(ablation_variants("depth", base), ConfigError);
}

TEST_CASE("cli usage errors") {
  CHECK(invoke({}).code == kUsageError);
  CHECK(invoke({"frobnicate"}).code == kUsageError);
  CHECK(invoke({"--help"}).code == kSuccess);

  testing::TempDir dir("cli-usage");
  const auto missing = (dir / "nope.json").string();
  auto r = invoke({"train", "--data", missing, "--out", (dir / "o").string(), "--seed", "1"});
  CHECK(r.code == kUsageError);
  CHECK(r.err.find(missing) != std::string::npos);

  r = invoke({"train", "--data", missing, "--out", (dir / "o").string()});
  CHECK(r.code == kUsageError);
  CHECK(r.err.find("seed") != std::string::npos);

  r = invoke({"train", "--data", missing, "--out", (dir / "o").string(), "--seed", "1", "--dropout", "2"});
  CHECK(r.code == kUsageError);
  CHECK(r.err.find("dropout") != std::string::npos);

  r = invoke({"ablate", "--data", missing, "--out", (dir / "a").string(), "--seed", "1", "--study", "depth"});
  CHECK(r.code == kUsageError);
  CHECK(r.err.find("depth") != std::string::npos);
}

TEST_CASE("cli preprocess") {
  testing::TempDir dir("cli-pre");
  const auto raw = write_raw(dir, testing::first_order_log(12, 30, 11, 1));
  const auto out = (dir / "ds.json").string();
  auto r = invoke({"preprocess", "--input", raw, "--out", out});
  REQUIRE(r.code == kSuccess);
  CHECK(r.out.find("users: 12") != std::string::npos);
  CHECK(r.out.find("interactions: 132") != std::string::npos);
  CHECK(r.out.find("sparsity:") != std::string::npos);
  const auto first = testing::read_file(out);
  CHECK(invoke({"preprocess", "--input", raw, "--out", out}).code == kUsageError);
  CHECK(invoke({"preprocess", "--input", raw, "--out", out, "--force"}).code == kSuccess);
  CHECK(testing::read_file(out) == first);

  r = invoke({"preprocess", "--input", raw, "--out", (dir / "e.json").string(), "--min-interactions", "50"});
  CHECK(r.code == kRuntimeFailure);
  CHECK(r.err.find("interactions") != std::string::npos);
}

TEST_CASE("cli train, evaluate and ablate") {
  testing::TempDir dir("cli-run");
  const auto data = (dir / "ds.json").string();
  data::save_dataset(data, testing::first_order_log(30, 40, 12, 2));
  const auto run_dir = (dir / "run").string();

  auto r = invoke(with_fast({"train", "--data", data, "--out", run_dir}));
  REQUIRE(r.code == kSuccess);
  for (const char* f : {"checkpoint.bin", "train_log.csv", "test_report.json", "validation_report.json",
                        "split_manifest.json", "run_config.ini"})
    CHECK(std::filesystem::exists(std::filesystem::path(run_dir) / f));
  const auto test_report = testing::read_file(std::filesystem::path(run_dir) / "test_report.json");
  CHECK(r.out == test_report);

  CHECK(invoke(with_fast({"train", "--data", data, "--out", run_dir})).code == kUsageError);

  const auto ckpt = (std::filesystem::path(run_dir) / "checkpoint.bin").string();
  r = invoke({"evaluate", "--checkpoint", ckpt, "--data", data});
  REQUIRE(r.code == kSuccess);
  CHECK(r.out == test_report);

  r = invoke({"evaluate", "--checkpoint", ckpt, "--data", data, "--split", "validation"});
  REQUIRE(r.code == kSuccess);
  CHECK(nlohmann::json::parse(r.out)["split"] == "validation");
  CHECK(r.out == testing::read_file(std::filesystem::path(run_dir) / "validation_report.json"));

  r = invoke({"evaluate", "--baseline", "poprec", "--data", data, "--seed", "5"});
  CHECK(r.code == kSuccess);
  CHECK(invoke({"evaluate", "--baseline", "poprec", "--data", data}).code == kUsageError);

  const auto other = (dir / "other.json").string();
  data::save_dataset(other, testing::first_order_log(30, 45, 12, 2));
  r = invoke({"evaluate", "--checkpoint", ckpt, "--data", other});
  CHECK(r.code == kRuntimeFailure);
  CHECK(r.err.find("items") != std::string::npos);

  const auto ini = (dir / "scale1.ini").string();
  testing::write_file(ini, "seed = 5\nscales = 1\ndim = 8\nbase_epochs = 1\nmax_epochs = 1\n");
  r = invoke({"train", "--data", data, "--config", ini, "--out", (dir / "w1").string()});
  REQUIRE(r.code == kSuccess);
  CHECK(testing::read_file(dir / "w1" / "run_config.ini").find("scales = 1\n") != std::string::npos);

  r = invoke(with_fast({"ablate", "--data", data, "--study", "aggregation", "--out", (dir / "abl").string()}));
  REQUIRE(r.code == kSuccess);
  std::istringstream csv(r.out);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(csv, line)) lines.push_back(line);
  REQUIRE(lines.size() == 7);
  CHECK(lines[0].rfind("# qrrec-ablation", 0) == 0);
  CHECK(lines[1].rfind("variant,ndcg_at_10", 0) == 0);
  CHECK(lines[6].rfind("HSA(S+S),", 0) == 0);
}
