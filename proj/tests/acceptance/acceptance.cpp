// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include "qrrec/cli/commands.hpp"
#include "qrrec/data/interactions.hpp"
#include "qrrec/data/splits.hpp"
#include "qrrec/eval/evaluate.hpp"
#include "qrrec/eval/metrics.hpp"
#include "qrrec/model/network.hpp"
#include "qrrec/training/trainer.hpp"

#include "../support/helpers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

using namespace qrrec;
using model::Aggregation;
using model::Matrix;
using model::ModelConfig;
using model::ParameterStore;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

ModelConfig random_config(Rng& rng, int items, int users) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  ModelConfig c;
  const int dims[] = {2, 4, 8};
  c.dim = dims[pick(0, 2)];
  c.seq_len = pick(0, 1) ? 5 : 3;
  c.scales.clear();
  while (c.scales.empty())
    for (int w = 1; w <= c.seq_len; ++w)
      if (pick(0, 1)) c.scales.push_back(w);
  c.use_output_gate = pick(0, 1) == 1;
  c.num_layers = pick(1, 2);
  const Aggregation aggs[] = {Aggregation::SumSum, Aggregation::LastSum, Aggregation::LastMean,
                              Aggregation::SumMean, Aggregation::MeanMean};
  c.aggregation = aggs[pick(0, 4)];
  c.use_user_profile = pick(0, 1) == 1;
  c.dropout = pick(0, 1) ? 0.3 : 0.0;
  c.num_items = items;
  c.num_users = users;
  return c;
}

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  Rng rng = make_stream(2024, "acceptance-gradcheck");
  double worst = 0.0, worst_abs = 0.0;
  std::string where;
  std::size_t checked = 0;
  bool saw_gate = false, saw_plain = false, saw_two_layers = false;
  const int configs = 24;
  for (int i = 0; i < configs; ++i) {
    auto cfg = random_config(rng, 15, 3);
    if (i < 4) {
      cfg.use_output_gate = i % 2 == 0;
      cfg.num_layers = 1 + i / 2;
    }
    saw_gate |= cfg.use_output_gate;
    saw_plain |= !cfg.use_output_gate;
    saw_two_layers |= cfg.num_layers == 2;
    Rng init = make_stream(static_cast<std::uint64_t>(i), streams::kInit);
    auto store = ParameterStore::initialize(cfg, init, 0.4);
    for (Eigen::Index r = 1; r < store.head_bias.value.rows(); ++r) store.head_bias.value(r, 0) = 0.1 * (r % 5) - 0.2;
    for (auto& per_scale : store.layers)
      for (auto& layer : per_scale) {
        layer.forget.bias.value.setConstant(0.1);
        if (!layer.output.filters.empty()) layer.output.bias.value.setConstant(-0.1);
      }
    const auto batch = testing::random_batch(rng, 2, cfg.seq_len, cfg.num_items, cfg.num_users, 3);
    const auto r = testing::gradient_check(cfg, store, batch, 1000 + static_cast<std::uint64_t>(i), 1e-5);
    checked += r.checked;
    worst_abs = std::max(worst_abs, r.max_abs_error);
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      where = "config " + std::to_string(i) + " " + r.worst +
              fmt(": analytic %.6g, numeric %.6g", r.worst_analytic, r.worst_numeric);
    }
  }
  const double secs = seconds_since(t0);
  const bool pass = worst < 1e-4 && secs < 120 && saw_gate && saw_plain && saw_two_layers;
  return {pass, fmt("max relative error %.3g (%s), max absolute error %.3g, over %d configs, %zu entries, %.1f s",
                    worst, where.c_str(), worst_abs, configs, checked, secs)};
}

std::vector<model::Var> random_steps(model::Tape& t, Rng& rng, int L, int B, int d) {
  std::normal_distribution<double> n(0.0, 2.0);
  std::vector<model::Var> out;
  for (int i = 0; i < L; ++i) {
    Matrix m(B, d);
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = n(rng);
    out.push_back(t.constant(m));
  }
  return out;
}

Outcome pooling_identities() {
  Rng rng = make_stream(7, "acceptance-pooling");
  int cases = 0;
  bool ok = true;
  for (int trial = 0; trial < 50; ++trial) {
    model::Tape t(false);
    const int L = 1 + trial % 6, B = 3, d = 4;
    const auto x = random_steps(t, rng, L, B, d);
    std::vector<model::Var> zeros(L, t.constant(Matrix::Zero(B, d)));
    std::vector<model::Var> ones(L, t.constant(Matrix::Ones(B, d)));
    std::vector<model::Var> f;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < L; ++i) {
      Matrix m(B, d);
      for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
      f.push_back(t.constant(m));
    }
    const auto pass = model::dynamic_average_pool(x, zeros);
    const auto hold = model::dynamic_average_pool(x, ones);
    const auto plain = model::dynamic_average_pool(x, f);
    const auto gated = model::output_gate_pool(x, f, ones);
    for (int i = 0; i < L; ++i) {
      ok &= pass[i].value() == x[i].value();
      ok &= (hold[i].value().array() == 0.0).all();
      ok &= gated.hidden[i].value() == plain[i].value();
      ok &= gated.cells[i].value() == plain[i].value();
      cases += 3;
    }
  }
  return {ok, fmt("%d timestep identities checked, exact equality %s", cases, ok ? "held" : "violated")};
}

Outcome causality() {
  Rng rng = make_stream(8, "acceptance-causality");
  bool ok = true;
  int compared = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto cfg = random_config(rng, 20, 4);
    cfg.dropout = 0.0;
    Rng init = make_stream(500 + static_cast<std::uint64_t>(trial), streams::kInit);
    auto store = ParameterStore::initialize(cfg, init, 0.8);
    const auto batch = testing::random_batch(rng, 3, cfg.seq_len, cfg.num_items, cfg.num_users, 2);
    const int tp = std::uniform_int_distribution<int>(0, cfg.seq_len - 1)(rng);
    auto perturbed = batch;
    for (Eigen::Index i = 0; i < batch.items.rows(); ++i)
      perturbed.items(i, tp) = batch.items(i, tp) % cfg.num_items + 1;
    model::Tape t(false);
    const auto a = model::forward(t, batch, cfg, store, model::Mode::Eval);
    const auto b = model::forward(t, perturbed, cfg, store, model::Mode::Eval);
    for (std::size_t s = 0; s < a.scales.size(); ++s)
      for (std::size_t k = 0; k < a.scales[s].layers.size(); ++k) {
        const auto& la = a.scales[s].layers[k];
        const auto& lb = b.scales[s].layers[k];
        for (int tt = 0; tt < tp; ++tt) {
          ok &= la.forget[tt].value() == lb.forget[tt].value();
          ok &= la.hidden[tt].value() == lb.hidden[tt].value();
          if (!la.output.empty()) ok &= la.output[tt].value() == lb.output[tt].value();
          ++compared;
        }
      }
  }
  return {ok, fmt("100 perturbed inputs, %d earlier timesteps unchanged: %s", compared, ok ? "yes" : "no")};
}

Outcome hsa_linearity() {
  Rng rng = make_stream(9, "acceptance-hsa");
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    auto cfg = random_config(rng, 20, 4);
    cfg.aggregation = Aggregation::SumSum;
    cfg.dropout = 0.0;
    Rng init = make_stream(900 + static_cast<std::uint64_t>(trial), streams::kInit);
    auto store = ParameterStore::initialize(cfg, init, 0.8);
    const auto batch = testing::random_batch(rng, 4, cfg.seq_len, cfg.num_items, cfg.num_users, 2);
    model::Tape t(false);
    const auto tr = model::forward(t, batch, cfg, store, model::Mode::Eval);
    Matrix sum = Matrix::Zero(batch.size(), cfg.dim);
    for (const auto& sc : tr.scales) sum += model::aggregate({sc.layers.back().hidden}, Aggregation::SumSum).value();
    worst = std::max(worst, (tr.aggregate.value() - sum).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-12, fmt("max |S+S - sum of per-scale sums| = %.3g over 50 networks", worst)};
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return detail::splitmix64(a * 0x9e3779b97f4a7c15ULL ^ b); }

Outcome metric_oracle() {
  const auto log = testing::uniform_log(200, 400, 15, 31);
  const auto splits = data::make_splits(log, 5);
  eval::EvalConfig cfg;
  cfg.seed = 77;
  // Coarse integer scores so ties are frequent.
  auto scorer = [](const model::Batch& b) {
    Matrix m(b.size(), b.candidates.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index k = 0; k < m.cols(); ++k)
        m(i, k) = static_cast<double>(mix(static_cast<std::uint64_t>(b.users[static_cast<std::size_t>(i)]),
                                          static_cast<std::uint64_t>(b.candidates(i, k))) % 40);
    return m;
  };
  const auto report = eval::evaluate(scorer, splits, data::Split::Test, log, cfg, 37);

  const data::NegativeSampler sampler(log);
  double map = 0, recall = 0, ndcg = 0;
  bool ranks_match = report.user_count() == 200;
  for (std::size_t u = 0; u < splits.test.size() && ranks_match; ++u) {
    const auto& w = splits.test[u];
    const auto cand = eval::eval_candidates(sampler, w.user, w.target, cfg);
    const auto scores = scorer(model::Batch::single(w.context, w.user, cand));
    std::vector<std::pair<double, bool>> order;
    for (std::size_t k = 0; k < cand.size(); ++k) order.push_back({scores(0, static_cast<Eigen::Index>(k)), k == 0});
    // Descending score; within a tie the target sorts last.
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return !a.second && b.second;
    });
    const auto pos = std::find_if(order.begin(), order.end(), [](const auto& p) { return p.second; }) - order.begin();
    const auto rank = static_cast<std::int64_t>(pos) + 1;
    ranks_match &= report.ranks[u] == rank;
    map += 1.0 / static_cast<double>(rank);
    recall += rank <= 10 ? 1.0 : 0.0;
    ndcg += rank <= 10 ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
  }
  const double n = 200.0;
  const bool ok = ranks_match && report.map == map / n && report.recall_at_k == recall / n &&
                  report.ndcg_at_k == ndcg / n;
  return {ok, fmt("200 users, ranks %s, map %.6f vs %.6f, ndcg %.6f vs %.6f", ranks_match ? "identical" : "differ",
                  report.map, map / n, report.ndcg_at_k, ndcg / n)};
}

Outcome single_example_overfit() {
  ModelConfig cfg;
  cfg.dim = 16;
  cfg.num_items = 30;
  cfg.num_users = 2;
  cfg.dropout = 0.0;
  Rng init = make_stream(3, streams::kInit);
  auto store = ParameterStore::initialize(cfg, init);
  auto adam = training::AdamState::for_store(store);
  const std::vector<std::int64_t> ctx{4, 9, 1, 22, 17}, cand{6, 13, 28, 2};
  const auto batch = model::Batch::single(ctx, 1, cand);
  double loss = 0;
  int steps = 0;
  for (; steps < 500; ++steps) {
    model::Tape tape;
    const auto tr = model::forward(tape, batch, cfg, store, model::Mode::Train);
    const auto l = training::bce_loss(tape, tr.scores, 1);
    loss = l.value()(0, 0);
    if (loss < 0.01) break;
    model::zero_grads(store);
    backward(l);
    training::adam_step(store, adam, 0.01, 0.0);
  }
  return {loss < 0.01, fmt("loss %.5f after %d Adam steps (d=16)", loss, steps)};
}

Outcome synthetic_learnability() {
  const auto t0 = Clock::now();
  const auto log = testing::first_order_log(500, 200, 30, 17);
  const auto splits = data::make_splits(log, 5);
  ModelConfig cfg;
  cfg.num_items = static_cast<int>(log.item_count());
  cfg.num_users = static_cast<int>(log.user_count());
  training::TrainConfig tc;
  tc.seed = 17;
  tc.base_epochs = 20;
  tc.max_epochs = 20;
  eval::EvalConfig ec;
  ec.seed = 17;
  const auto outcome = training::fit(log, splits, cfg, tc, ec);
  const auto pop = eval::evaluate(eval::poprec_baseline(log), splits, data::Split::Test, log, ec);
  const double secs = seconds_since(t0);
  const bool ok = outcome.test.recall_at_k >= 0.9 && pop.recall_at_k <= 0.3 && secs < 600;
  return {ok, fmt("QR-Rec Recall@10 %.4f (best epoch %d of %d), PopRec Recall@10 %.4f, %.1f s",
                  outcome.test.recall_at_k, outcome.fit.best_epoch, outcome.fit.epochs_run, pop.recall_at_k, secs)};
}

Outcome ablation_direction() {
  const auto t0 = Clock::now();
  ModelConfig base;
  base.dim = 32;
  const auto variants = cli::ablation_variants("scale", base);
  std::vector<double> ndcg(variants.size(), 0.0);
  const std::uint64_t seeds[] = {1, 2, 3};
  for (auto seed : seeds) {
    const auto log = testing::mixed_order_log(500, 200, 30, seed);
    const auto splits = data::make_splits(log, 5);
    training::TrainConfig tc;
    tc.seed = seed;
    tc.base_epochs = 20;
    tc.max_epochs = 20;
    eval::EvalConfig ec;
    ec.seed = seed;
    for (std::size_t v = 0; v < variants.size(); ++v) {
      auto cfg = variants[v].model;
      cfg.num_items = static_cast<int>(log.item_count());
      cfg.num_users = static_cast<int>(log.user_count());
      ndcg[v] += training::fit(log, splits, cfg, tc, ec).test.ndcg_at_k / 3.0;
    }
  }
  const double multi = ndcg.back();
  double best_single = 0.0;
  std::ostringstream rows;
  for (std::size_t v = 0; v + 1 < variants.size(); ++v) {
    best_single = std::max(best_single, ndcg[v]);
    rows << (v ? ", " : "") << "w=" << v + 1 << ' ' << fmt("%.4f", ndcg[v]);
  }
  return {multi >= best_single - 0.02,
          fmt("multi-scale NDCG@10 %.4f vs best single %.4f (", multi, best_single) + rows.str() +
              fmt("), %.1f s", seconds_since(t0))};
}

Outcome determinism() {
  testing::TempDir dir("acceptance-determinism");
  const auto data = (dir / "ds.json").string();
  data::save_dataset(data, testing::first_order_log(100, 80, 15, 5));
  auto train = [&](const std::string& out) {
    std::ostringstream o, e;
    return cli::run({"qrrec", "train", "--data", data, "--out", out, "--seed", "123", "--dim", "16",
                     "--base-epochs", "3", "--max-epochs", "3"},
                    o, e);
  };
  const int a = train((dir / "a").string());
  const int b = train((dir / "b").string());
  const auto ra = testing::read_file(dir / "a" / "test_report.json");
  const auto rb = testing::read_file(dir / "b" / "test_report.json");
  const bool ckpt_same =
      testing::read_file(dir / "a" / "checkpoint.bin") == testing::read_file(dir / "b" / "checkpoint.bin");
  const bool ok = a == 0 && b == 0 && !ra.empty() && ra == rb && ckpt_same;
  return {ok, fmt("exit codes %d/%d, test reports %s (%zu bytes), checkpoints %s", a, b,
                  ra == rb ? "byte-identical" : "differ", ra.size(), ckpt_same ? "identical" : "differ")};
}

Outcome preprocessing_conformance() {
  const std::string dir = QRREC_FIXTURE_DIR;
  const auto raw = data::ingest(dir + "/preprocess_fixture.csv", data::Format::Csv, true);
  const auto log = data::preprocess(raw.rows, 3.0, 10);
  const auto golden = data::log_from_json(nlohmann::json::parse(testing::read_file(dir + "/preprocess_golden.json")));
  const bool ok = raw.rows.size() == 12 && log == golden;
  return {ok, fmt("%zu raw rows -> %lld users, %lld items, %lld interactions; golden %s", raw.rows.size(),
                  static_cast<long long>(log.user_count()), static_cast<long long>(log.item_count()),
                  static_cast<long long>(log.interaction_count()), ok ? "matched" : "mismatch")};
}

}  // namespace

int main(int argc, char** argv) {
  // Optional arguments select criteria by number.
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"gradient correctness", gradient_correctness},
      {"pooling limit identities", pooling_identities},
      {"causality", causality},
      {"HSA linearity", hsa_linearity},
      {"metric oracle equivalence", metric_oracle},
      {"single-example overfit", single_example_overfit},
      {"synthetic learnability", synthetic_learnability},
      {"ablation direction", ablation_direction},
      {"determinism", determinism},
      {"preprocessing conformance", preprocessing_conformance},
  };
  int failures = 0;
  int index = 0;
  for (const auto& [name, check] : criteria) {
    ++index;
    if (!only.empty() && std::find(only.begin(), only.end(), index) == only.end()) continue;
    Outcome r;
    try {
      r = check();
    } catch (const std::exception& e) {
      r = {false, std::string("threw: ") + e.what()};
    }
    failures += r.pass ? 0 : 1;
    std::cout << (r.pass ? "PASS" : "FAIL") << "  " << index << ". " << name << ": " << r.detail << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
