#pragma once

#include "qrrec/model/config.hpp"
#include "qrrec/model/parameters.hpp"
#include "qrrec/numeric/tape.hpp"
#include "qrrec/rng.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace qrrec::model {

using Tape = ad::Tape<Real>;
using Var = ad::Var<Real>;
using ad::IdMatrix;

enum class Mode { Train, Eval };

/// A batch of B examples. Every per-timestep array in the network is B×d with
/// one row per example; timestep t of a sequence is the t-th entry of a
/// std::vector, oldest first.
struct Batch {
  IdMatrix items;                   // B × L, oldest → newest, 0 = padding
  std::vector<std::int64_t> users;  // B, 1-based
  IdMatrix candidates;              // B × K

  Eigen::Index size() const { return items.rows(); }

  static Batch single(std::span<const std::int64_t> items, std::int64_t user,
                      std::span<const std::int64_t> candidates);
};

struct LayerTrace {
  std::vector<Var> forget;  // f_1..f_L
  std::vector<Var> output;  // o_1..o_L, output-gate variant only
  std::vector<Var> cells;   // c_1..c_L, output-gate variant only
  std::vector<Var> hidden;  // h_1..h_L
};

struct ScaleTrace {
  int width = 0;
  std::vector<LayerTrace> layers;
};

/// Handles into the tape for every intermediate of one forward pass.
struct ForwardTrace {
  std::vector<Var> inputs;  // embedded (and, in training, dropped-out) x_1..x_L
  std::vector<ScaleTrace> scales;
  Var aggregate;  // o, before dropout; invalid for the profile-only model
  Var scores;     // B × K
  Matrix input_mask;   // stacked L·B × d, empty when no dropout was applied
  Matrix output_mask;  // B × d
};

/// Looks up x_1..x_L. Padding ids give zero rows.
std::vector<Var> embed_sequence(Tape& tape, ParameterStore& store, const IdMatrix& items);

/// f_t = sigmoid(sum_i W_i x_{t-w+i} + b) with x_t = 0 for t < 1, so exactly
/// L gate arrays come out. `bias` may be null.
std::vector<Var> conv_gates(Tape& tape, std::span<const Var> inputs, std::span<Slot> filters,
                            Slot* bias);

/// h_t = f_t * h_{t-1} + (1 - f_t) * x_t, h_0 = 0.
std::vector<Var> dynamic_average_pool(std::span<const Var> inputs, std::span<const Var> gates);

struct GatedPool {
  std::vector<Var> cells;
  std::vector<Var> hidden;
};

/// c_t = f_t * c_{t-1} + (1 - f_t) * x_t, h_t = o_t * c_t, c_0 = 0.
GatedPool output_gate_pool(std::span<const Var> inputs, std::span<const Var> forget,
                           std::span<const Var> output);

/// Two-level reduction of per-scale hidden sequences into one B×d array.
Var aggregate(const std::vector<std::vector<Var>>& per_scale_hidden, Aggregation strategy);

/// score(i, k) = head_row(c_ik) . [o_i ; p_u] + head_bias(c_ik). `o` may be
/// invalid (profile-only model), in which case zeros take its place; p_u is
/// zero when the user profile is disabled.
Var predict_scores(Tape& tape, const Var& o, const std::vector<std::int64_t>& users,
                   ParameterStore& store, const IdMatrix& candidates, const ModelConfig& config);

/// Full network. `dropout_rng` is only consumed in train mode with dropout > 0.
ForwardTrace forward(Tape& tape, const Batch& batch, const ModelConfig& config,
                     ParameterStore& store, Mode mode, Rng* dropout_rng = nullptr);

/// Eval-mode scores without recording a tape. Safe to call concurrently on a
/// shared store.
Matrix score(const Batch& batch, const ModelConfig& config, const ParameterStore& store);

}  // namespace qrrec::model
