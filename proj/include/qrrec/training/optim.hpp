#pragma once

#include "qrrec/model/network.hpp"
#include "qrrec/model/parameters.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace qrrec::training {

using model::Matrix;
using model::ParameterStore;

/// Summed binary cross-entropy: -log sigmoid(y) per target score plus
/// -log(1 - sigmoid(y)) per negative score, in the overflow-free softplus form.
double bce_loss(std::span<const double> target_scores, std::span<const double> negative_scores);

/// Tape version over a B × K score block whose first `positives` columns are
/// targets and the remaining columns negatives.
model::Var bce_loss(model::Tape& tape, const model::Var& scores, Eigen::Index positives = 1);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<Matrix> first_moment;   // one per slot, ParameterStore::for_each order
  std::vector<Matrix> second_moment;

  static AdamState for_store(const ParameterStore& store);
};

/// One bias-corrected Adam update from the gradients currently in `store`,
/// with decoupled weight decay: theta -= lr * (m_hat / (sqrt(v_hat) + eps) + l2 * theta).
/// Disabled slots and frozen rows are left untouched.
void adam_step(ParameterStore& store, AdamState& state, double lr, double l2);

}  // namespace qrrec::training
