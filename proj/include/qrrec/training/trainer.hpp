#pragma once

#include "qrrec/data/interactions.hpp"
#include "qrrec/data/splits.hpp"
#include "qrrec/eval/evaluate.hpp"
#include "qrrec/model/config.hpp"
#include "qrrec/model/parameters.hpp"
#include "qrrec/rng.hpp"
#include "qrrec/training/optim.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

namespace qrrec::training {

inline constexpr int kTrainLogFormatVersion = 1;

struct TrainConfig {
  double lr = 0.001;
  int batch_size = 512;
  double l2 = 1e-6;
  int negatives = 3;
  int base_epochs = 20;
  int patience = 5;
  int max_epochs = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Per-run random streams; each ablation perturbs only its own.
struct TrainRngs {
  Rng shuffle;
  Rng negatives;
  Rng dropout;

  explicit TrainRngs(std::uint64_t seed);
};

struct EpochStats {
  double mean_loss = 0.0;  // summed loss / examples
  std::int64_t examples = 0;
};

/// Shuffles the training windows, then per batch: sample negatives, forward
/// in train mode, BCE loss, backward, Adam.
EpochStats train_epoch(const data::SplitDataset& splits, const data::NegativeSampler& sampler,
                       ParameterStore& store, AdamState& adam, const model::ModelConfig& model_cfg,
                       const TrainConfig& train_cfg, TrainRngs& rngs);

struct ValidationScores {
  double map = 0.0;
  double recall = 0.0;
  double ndcg = 0.0;
};

struct EpochRecord {
  int epoch = 0;                    // 0 is the untrained model
  std::optional<double> mean_loss;  // absent for epoch 0
  ValidationScores validation;
};

/// Scores the current parameters on the validation split.
using ValidationFn = std::function<ValidationScores(const ParameterStore&, int epoch)>;
/// Runs one epoch of optimization; `lr == 0` callers rely on it not touching the store.
using EpochFn = std::function<EpochStats(ParameterStore&, int epoch)>;

using EpochCallback = std::function<void(const EpochRecord&)>;

struct FitResult {
  ParameterStore best;
  int best_epoch = 0;
  ValidationScores best_validation;
  std::vector<EpochRecord> log;
  int epochs_run = 0;
};

/// Epoch control: evaluate the initial model, train `base_epochs` epochs,
/// then keep going while any validation metric reached a new best within
/// the last `patience` epochs (hard cap `max_epochs`). The returned
/// parameters are those of the epoch with the best validation NDCG (earliest
/// on ties).
FitResult fit_loop(ParameterStore initial, const TrainConfig& cfg, const EpochFn& run_epoch,
                   const ValidationFn& validate, const EpochCallback& on_epoch = {});

struct TrainingOutcome {
  FitResult fit;
  eval::MetricsReport validation;  // best epoch, validation split
  eval::MetricsReport test;        // best epoch, test split
};

/// Full training run on real splits: init from the seed, fit, and evaluate
/// the best parameters on validation and test.
TrainingOutcome fit(const data::InteractionLog& log, const data::SplitDataset& splits,
                    const model::ModelConfig& model_cfg, const TrainConfig& train_cfg,
                    const eval::EvalConfig& eval_cfg, const EpochCallback& on_epoch = {});

/// CSV: a `# qrrec-train-log format_version=N` line, a header, then one row
/// per epoch (mean_loss empty for epoch 0).
void write_training_log(std::ostream& os, const std::vector<EpochRecord>& log, int k = 10);

}  // namespace qrrec::training
