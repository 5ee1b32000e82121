#include "qrrec/model/parameters.hpp"

#include <random>

namespace qrrec::model {

namespace {

Matrix normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  if (stddev <= 0.0) return Matrix::Zero(rows, cols);
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

GateBank make_bank(int width, int dim, bool bias_enabled, double stddev, Rng& rng) {
  GateBank bank;
  bank.filters.reserve(static_cast<std::size_t>(width));
  for (int i = 0; i < width; ++i) bank.filters.emplace_back(normal(dim, dim, stddev, rng));
  bank.bias = Slot(Matrix::Zero(1, dim), bias_enabled);
  return bank;
}

}  // namespace

ParameterStore ParameterStore::initialize(const ModelConfig& config, Rng& rng, double stddev) {
  config.validate();
  const int d = config.dim;
  ParameterStore p;
  p.item_embeddings = Slot(normal(config.num_items + 1, d, stddev, rng));
  p.item_embeddings.value.row(0).setZero();
  p.item_embeddings.frozen_row = 0;
  p.user_embeddings = Slot(normal(config.num_users, d, stddev, rng), config.use_user_profile);
  if (!config.use_user_profile) p.user_embeddings.value.setZero();
  p.head_weights = Slot(normal(config.num_items + 1, 2 * d, stddev, rng));
  p.head_bias = Slot(Matrix::Zero(config.num_items + 1, 1));

  p.scales = config.scales;
  for (int w : config.scales) {
    std::vector<ScaleLayer> stack;
    for (int k = 0; k < config.num_layers; ++k) {
      ScaleLayer layer;
      layer.forget = make_bank(w, d, config.conv_bias, stddev, rng);
      if (config.use_output_gate) layer.output = make_bank(w, d, config.conv_bias, stddev, rng);
      stack.push_back(std::move(layer));
    }
    p.layers.push_back(std::move(stack));
  }
  return p;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Slot& s) { n += static_cast<std::size_t>(s.size()); });
  return n;
}

void zero_grads(ParameterStore& store) {
  store.for_each([](const std::string&, Slot& s) { s.zero_grad(); });
}

}  // namespace qrrec::model
