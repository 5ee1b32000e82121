#include "qrrec/training/trainer.hpp"

#include "qrrec/errors.hpp"

#include <algorithm>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>

namespace qrrec::training {

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr: must be finite and >= 0");
  if (batch_size < 1) throw ConfigError("batch_size: must be >= 1, got " + std::to_string(batch_size));
  if (!(l2 >= 0.0)) throw ConfigError("l2: must be >= 0");
  if (negatives < 1) throw ConfigError("negatives: must be >= 1, got " + std::to_string(negatives));
  if (base_epochs < 0) throw ConfigError("base_epochs: must be >= 0");
  if (patience < 1) throw ConfigError("patience: must be >= 1");
  if (max_epochs < base_epochs)
    throw ConfigError("max_epochs: must be >= base_epochs (" + std::to_string(base_epochs) + ")");
}

TrainRngs::TrainRngs(std::uint64_t seed)
    : shuffle(make_stream(seed, streams::kShuffle)),
      negatives(make_stream(seed, streams::kNegatives)),
      dropout(make_stream(seed, streams::kDropout)) {}

EpochStats train_epoch(const data::SplitDataset& splits, const data::NegativeSampler& sampler,
                       ParameterStore& store, AdamState& adam, const model::ModelConfig& model_cfg,
                       const TrainConfig& train_cfg, TrainRngs& rngs) {
  const auto& windows = splits.train;
  if (windows.empty()) throw EmptyDatasetError("train_epoch: no training windows");
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rngs.shuffle);

  const auto L = static_cast<Eigen::Index>(splits.seq_len);
  const auto K = static_cast<Eigen::Index>(1 + train_cfg.negatives);
  double total = 0.0;
  for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(train_cfg.batch_size)) {
    const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(train_cfg.batch_size));
    const auto B = static_cast<Eigen::Index>(end - begin);
    model::Batch batch;
    batch.items.resize(B, L);
    batch.candidates.resize(B, K);
    batch.users.resize(static_cast<std::size_t>(B));
    for (Eigen::Index b = 0; b < B; ++b) {
      const auto& w = windows[order[begin + static_cast<std::size_t>(b)]];
      batch.users[static_cast<std::size_t>(b)] = w.user;
      for (Eigen::Index t = 0; t < L; ++t) batch.items(b, t) = w.context[static_cast<std::size_t>(t)];
      batch.candidates(b, 0) = w.target;
      const auto negs = sampler.sample(w.user, train_cfg.negatives, rngs.negatives);
      for (Eigen::Index k = 1; k < K; ++k) batch.candidates(b, k) = negs[static_cast<std::size_t>(k - 1)];
    }

    model::Tape tape;
    const auto trace = model::forward(tape, batch, model_cfg, store, model::Mode::Train, &rngs.dropout);
    const auto loss = bce_loss(tape, trace.scores);
    model::zero_grads(store);
    tape.backward(loss);
    adam_step(store, adam, train_cfg.lr, train_cfg.l2);
    total += loss.value()(0, 0);
  }
  return {total / static_cast<double>(windows.size()), static_cast<std::int64_t>(windows.size())};
}

FitResult fit_loop(ParameterStore initial, const TrainConfig& cfg, const EpochFn& run_epoch,
                   const ValidationFn& validate, const EpochCallback& on_epoch) {
  cfg.validate();
  FitResult result;
  ParameterStore current = std::move(initial);

  ValidationScores best_seen = validate(current, 0);
  result.log.push_back({0, std::nullopt, best_seen});
  if (on_epoch) on_epoch(result.log.back());
  result.best = current;
  result.best_epoch = 0;
  result.best_validation = best_seen;

  // Epoch 0 only sets the baseline; it is not an improvement.
  int last_improvement = std::numeric_limits<int>::min() / 2;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const int finished = epoch - 1;
    if (finished >= cfg.base_epochs && finished - last_improvement >= cfg.patience) break;

    const EpochStats stats = run_epoch(current, epoch);
    const ValidationScores v = validate(current, epoch);
    result.log.push_back({epoch, stats.mean_loss, v});
    if (on_epoch) on_epoch(result.log.back());
    result.epochs_run = epoch;

    bool improved = false;
    if (v.map > best_seen.map) { best_seen.map = v.map; improved = true; }
    if (v.recall > best_seen.recall) { best_seen.recall = v.recall; improved = true; }
    if (v.ndcg > best_seen.ndcg) { best_seen.ndcg = v.ndcg; improved = true; }
    if (improved) last_improvement = epoch;

    if (v.ndcg > result.best_validation.ndcg) {
      result.best = current;
      result.best_epoch = epoch;
      result.best_validation = v;
    }
  }
  return result;
}

TrainingOutcome fit(const data::InteractionLog& log, const data::SplitDataset& splits,
                    const model::ModelConfig& model_cfg, const TrainConfig& train_cfg,
                    const eval::EvalConfig& eval_cfg, const EpochCallback& on_epoch) {
  model_cfg.validate();
  train_cfg.validate();
  eval_cfg.validate();
  if (model_cfg.seq_len != splits.seq_len)
    throw ConfigError("seq_len: model uses " + std::to_string(model_cfg.seq_len) +
                      " but the splits were built with " + std::to_string(splits.seq_len));

  Rng init_rng = make_stream(train_cfg.seed, streams::kInit);
  ParameterStore store = ParameterStore::initialize(model_cfg, init_rng);
  AdamState adam = AdamState::for_store(store);
  TrainRngs rngs(train_cfg.seed);
  const data::NegativeSampler sampler(log);

  auto run_epoch = [&](ParameterStore& s, int) {
    return train_epoch(splits, sampler, s, adam, model_cfg, train_cfg, rngs);
  };
  auto validate = [&](const ParameterStore& s, int) {
    const auto r = eval::evaluate(eval::model_scorer(model_cfg, s), splits, data::Split::Validation,
                                  log, eval_cfg);
    return ValidationScores{r.map, r.recall_at_k, r.ndcg_at_k};
  };

  TrainingOutcome out{fit_loop(std::move(store), train_cfg, run_epoch, validate, on_epoch), {}, {}};
  const auto scorer = eval::model_scorer(model_cfg, out.fit.best);
  out.validation = eval::evaluate(scorer, splits, data::Split::Validation, log, eval_cfg);
  out.test = eval::evaluate(scorer, splits, data::Split::Test, log, eval_cfg);
  return out;
}

void write_training_log(std::ostream& os, const std::vector<EpochRecord>& log, int k) {
  const std::string at = "_at_" + std::to_string(k);
  os << "# qrrec-train-log format_version=" << kTrainLogFormatVersion << '\n';
  os << "epoch,mean_loss,val_map,val_recall" << at << ",val_ndcg" << at << '\n';
  os << std::setprecision(17);
  for (const auto& r : log) {
    os << r.epoch << ',';
    if (r.mean_loss) os << *r.mean_loss;
    os << ',' << r.validation.map << ',' << r.validation.recall << ',' << r.validation.ndcg << '\n';
  }
}

}  // namespace qrrec::training
