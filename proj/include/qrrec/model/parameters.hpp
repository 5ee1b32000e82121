#pragma once

#include "qrrec/model/config.hpp"
#include "qrrec/numeric/array.hpp"
#include "qrrec/rng.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace qrrec::model {

using Real = double;
using Matrix = ad::Array<Real>;
using Slot = ad::GradSlot<Real>;

/// One convolutional gate: `filters[i]` is the d×d matrix applied to the
/// input `w - 1 - i` steps before the current one, so `filters.back()`
/// sees the current step.
struct GateBank {
  std::vector<Slot> filters;
  Slot bias;  // 1×d
};

struct ScaleLayer {
  GateBank forget;
  GateBank output;  // empty filters unless the output gate is enabled
};

/// Every trainable array of the network.
///
/// Item id 0 is padding: its embedding row is all-zero and frozen. User ids
/// are 1-based; user u lives in row u - 1 of `user_embeddings`. The head has
/// one weight row of width 2d and one bias per item id.
struct ParameterStore {
  Slot item_embeddings;  // (num_items + 1) × d
  Slot user_embeddings;  // num_users × d
  Slot head_weights;     // (num_items + 1) × 2d
  Slot head_bias;        // (num_items + 1) × 1
  std::vector<int> scales;
  std::vector<std::vector<ScaleLayer>> layers;  // [scale index][layer]

  /// Weights ~ N(0, stddev^2), biases zero, padding row zero.
  static ParameterStore initialize(const ModelConfig& config, Rng& rng, double stddev = 0.01);

  /// Visits every slot in a fixed order with a stable name. The order is the
  /// checkpoint order.
  template <typename F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <typename F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  std::size_t parameter_count() const;

 private:
  template <typename Self, typename F>
  static void visit(Self& self, F& f) {
    f(std::string("item_embeddings"), self.item_embeddings);
    f(std::string("user_embeddings"), self.user_embeddings);
    f(std::string("head_weights"), self.head_weights);
    f(std::string("head_bias"), self.head_bias);
    for (std::size_t s = 0; s < self.layers.size(); ++s) {
      for (std::size_t k = 0; k < self.layers[s].size(); ++k) {
        auto& layer = self.layers[s][k];
        const std::string prefix =
            "scale" + std::to_string(self.scales[s]) + ".layer" + std::to_string(k);
        for (std::size_t i = 0; i < layer.forget.filters.size(); ++i)
          f(prefix + ".forget.W" + std::to_string(i), layer.forget.filters[i]);
        f(prefix + ".forget.bias", layer.forget.bias);
        for (std::size_t i = 0; i < layer.output.filters.size(); ++i)
          f(prefix + ".output.W" + std::to_string(i), layer.output.filters[i]);
        if (!layer.output.filters.empty()) f(prefix + ".output.bias", layer.output.bias);
      }
    }
  }
};

void zero_grads(ParameterStore& store);

}  // namespace qrrec::model
