#include "qrrec/training/optim.hpp"

#include "qrrec/errors.hpp"

#include <cmath>

namespace qrrec::training {

double bce_loss(std::span<const double> target_scores, std::span<const double> negative_scores) {
  if (target_scores.empty()) throw ContractError("bce_loss: at least one target score is required");
  double loss = 0.0;
  for (double y : target_scores) loss += ad::softplus(-y);
  for (double y : negative_scores) loss += ad::softplus(y);
  return loss;
}

model::Var bce_loss(model::Tape& tape, const model::Var& scores, Eigen::Index positives) {
  if (positives < 1 || positives > scores.cols())
    throw ContractError("bce_loss: at least one target column is required");
  Matrix labels = Matrix::Zero(scores.rows(), scores.cols());
  labels.leftCols(positives).setOnes();
  return tape.bce_with_logits(scores, labels);
}

AdamState AdamState::for_store(const ParameterStore& store) {
  AdamState s;
  store.for_each([&](const std::string&, const model::Slot& slot) {
    s.first_moment.push_back(Matrix::Zero(slot.value.rows(), slot.value.cols()));
    s.second_moment.push_back(Matrix::Zero(slot.value.rows(), slot.value.cols()));
  });
  return s;
}

void adam_step(ParameterStore& store, AdamState& state, double lr, double l2) {
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  std::size_t index = 0;
  store.for_each([&](const std::string& name, model::Slot& slot) {
    if (index >= state.first_moment.size())
      throw ContractError("adam_step: optimizer state has no entry for '" + name + "'");
    Matrix& m = state.first_moment[index];
    Matrix& v = state.second_moment[index];
    ++index;
    if (!slot.enabled) return;
    if (m.rows() != slot.value.rows() || m.cols() != slot.value.cols())
      throw DimensionError("adam_step: moment shape mismatch for '" + name + "'");

    const auto& g = slot.gradient.array();
    m.array() = state.beta1 * m.array() + (1.0 - state.beta1) * g;
    v.array() = state.beta2 * v.array() + (1.0 - state.beta2) * g.square();
    auto theta = slot.value.array();
    const Eigen::Index frozen = slot.frozen_row;
    Matrix saved;
    if (frozen >= 0) saved = slot.value.row(frozen);
    theta -= lr * ((m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon) + l2 * theta);
    if (frozen >= 0) {
      slot.value.row(frozen) = saved;
      m.row(frozen).setZero();
      v.row(frozen).setZero();
    }
  });
}

}  // namespace qrrec::training
