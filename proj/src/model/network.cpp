#include "qrrec/model/network.hpp"

#include "qrrec/errors.hpp"

#include <random>
#include <string>

namespace qrrec::model {

Batch Batch::single(std::span<const std::int64_t> items, std::int64_t user,
                    std::span<const std::int64_t> candidates) {
  Batch b;
  b.items.resize(1, static_cast<Eigen::Index>(items.size()));
  for (std::size_t t = 0; t < items.size(); ++t) b.items(0, static_cast<Eigen::Index>(t)) = items[t];
  b.users = {user};
  b.candidates.resize(1, static_cast<Eigen::Index>(candidates.size()));
  for (std::size_t k = 0; k < candidates.size(); ++k)
    b.candidates(0, static_cast<Eigen::Index>(k)) = candidates[k];
  return b;
}

std::vector<Var> embed_sequence(Tape& tape, ParameterStore& store, const IdMatrix& items) {
  std::vector<Var> xs;
  xs.reserve(static_cast<std::size_t>(items.cols()));
  std::vector<std::int64_t> column(static_cast<std::size_t>(items.rows()));
  for (Eigen::Index t = 0; t < items.cols(); ++t) {
    for (Eigen::Index i = 0; i < items.rows(); ++i) column[static_cast<std::size_t>(i)] = items(i, t);
    xs.push_back(tape.embedding(store.item_embeddings, column));
  }
  return xs;
}

std::vector<Var> conv_gates(Tape& tape, std::span<const Var> inputs, std::span<Slot> filters,
                            Slot* bias) {
  const auto width = static_cast<std::ptrdiff_t>(filters.size());
  if (width < 1) throw DimensionError("conv_gates: empty filter bank");
  if (inputs.empty()) throw DimensionError("conv_gates: empty input sequence");
  const Eigen::Index d = inputs.front().cols();
  for (const Slot& f : filters)
    if (f.value.rows() != d || f.value.cols() != d)
      throw DimensionError("conv_gates: filter " + ad::shape_string(f.value) + " for inputs of width " +
                           std::to_string(d));

  std::vector<Var> weights;
  weights.reserve(filters.size());
  for (Slot& f : filters) weights.push_back(tape.leaf(f));
  Var b;
  if (bias != nullptr) b = tape.leaf(*bias);

  std::vector<Var> gates;
  gates.reserve(inputs.size());
  const auto steps = static_cast<std::ptrdiff_t>(inputs.size());
  for (std::ptrdiff_t t = 0; t < steps; ++t) {
    Var acc;
    for (std::ptrdiff_t i = 0; i < width; ++i) {
      const std::ptrdiff_t src = t - (width - 1) + i;
      if (src < 0) continue;  // causal zero padding
      Var term = ad::matmul_nt(inputs[static_cast<std::size_t>(src)], weights[static_cast<std::size_t>(i)]);
      acc = acc.valid() ? acc + term : term;
    }
    if (b.valid()) acc = ad::add_row(acc, b);
    gates.push_back(ad::sigmoid(acc));
  }
  return gates;
}

namespace {

// f * prev + (1 - f) * x, written as x + f * (prev - x). With prev = 0 this
// is x - f * x, so f = 0 and f = 1 give x and 0 exactly.
Var gated_mix(const Var& f, const Var* prev, const Var& x) {
  if (prev == nullptr) return x - ad::mul(f, x);
  return x + ad::mul(f, *prev - x);
}

void check_lengths(std::size_t inputs, std::size_t gates, const char* what) {
  if (inputs != gates)
    throw DimensionError(std::string(what) + ": " + std::to_string(gates) + " gates for " +
                         std::to_string(inputs) + " timesteps");
}

}  // namespace

std::vector<Var> dynamic_average_pool(std::span<const Var> inputs, std::span<const Var> gates) {
  check_lengths(inputs.size(), gates.size(), "dynamic_average_pool");
  std::vector<Var> hidden;
  hidden.reserve(inputs.size());
  for (std::size_t t = 0; t < inputs.size(); ++t)
    hidden.push_back(gated_mix(gates[t], t == 0 ? nullptr : &hidden[t - 1], inputs[t]));
  return hidden;
}

GatedPool output_gate_pool(std::span<const Var> inputs, std::span<const Var> forget,
                           std::span<const Var> output) {
  check_lengths(inputs.size(), forget.size(), "output_gate_pool");
  check_lengths(inputs.size(), output.size(), "output_gate_pool");
  GatedPool out;
  out.cells = dynamic_average_pool(inputs, forget);
  out.hidden.reserve(inputs.size());
  for (std::size_t t = 0; t < inputs.size(); ++t) out.hidden.push_back(ad::mul(output[t], out.cells[t]));
  return out;
}

Var aggregate(const std::vector<std::vector<Var>>& per_scale_hidden, Aggregation strategy) {
  if (per_scale_hidden.empty()) throw DimensionError("aggregate: no scales");
  const bool inner_last = strategy == Aggregation::LastSum || strategy == Aggregation::LastMean;
  const bool inner_mean = strategy == Aggregation::MeanMean;
  const bool outer_mean = strategy == Aggregation::LastMean || strategy == Aggregation::SumMean ||
                          strategy == Aggregation::MeanMean;

  Var total;
  for (const auto& hs : per_scale_hidden) {
    if (hs.empty()) throw DimensionError("aggregate: empty hidden sequence");
    Var inner;
    if (inner_last) {
      inner = hs.back();
    } else {
      inner = hs.front();
      for (std::size_t t = 1; t < hs.size(); ++t) inner = inner + hs[t];
      if (inner_mean) inner = ad::scale(inner, Real(1) / static_cast<Real>(hs.size()));
    }
    total = total.valid() ? total + inner : inner;
  }
  if (outer_mean) total = ad::scale(total, Real(1) / static_cast<Real>(per_scale_hidden.size()));
  return total;
}

Var predict_scores(Tape& tape, const Var& o, const std::vector<std::int64_t>& users,
                   ParameterStore& store, const IdMatrix& candidates, const ModelConfig& config) {
  const auto batch = static_cast<Eigen::Index>(users.size());
  const Eigen::Index d = config.dim;
  if (candidates.rows() != batch || candidates.cols() < 1)
    throw DimensionError("predict_scores: candidates " + ad::shape_string(candidates) + " for " +
                         std::to_string(batch) + " examples");
  for (Eigen::Index i = 0; i < candidates.size(); ++i) {
    const auto c = candidates.data()[i];
    if (c < 1 || c > config.num_items)
      throw IndexError("predict_scores: unknown candidate id " + std::to_string(c));
  }

  Var seq = o.valid() ? o : tape.constant(Matrix::Zero(batch, d));
  Var profile;
  if (config.use_user_profile) {
    std::vector<std::int64_t> rows(users.size());
    for (std::size_t i = 0; i < users.size(); ++i) {
      if (users[i] < 1 || users[i] > config.num_users)
        throw IndexError("predict_scores: unknown user id " + std::to_string(users[i]));
      rows[i] = users[i] - 1;
    }
    profile = tape.embedding(store.user_embeddings, rows);
  } else {
    profile = tape.constant(Matrix::Zero(batch, d));
  }
  Var z = ad::hconcat(seq, profile);
  return tape.gather_dot(store.head_weights, z, candidates) + tape.gather(store.head_bias, candidates);
}

namespace {

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  std::bernoulli_distribution keep(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = keep(rng) ? s : 0.0;
  return m;
}

}  // namespace

ForwardTrace forward(Tape& tape, const Batch& batch, const ModelConfig& config,
                     ParameterStore& store, Mode mode, Rng* dropout_rng) {
  if (batch.items.cols() != config.seq_len)
    throw DimensionError("forward: sequences of length " + std::to_string(batch.items.cols()) +
                         ", model expects " + std::to_string(config.seq_len));
  if (static_cast<Eigen::Index>(batch.users.size()) != batch.size())
    throw DimensionError("forward: user count does not match batch size");
  for (Eigen::Index i = 0; i < batch.items.size(); ++i) {
    const auto id = batch.items.data()[i];
    if (id < 0 || id > config.num_items)
      throw IndexError("embed_sequence: item id " + std::to_string(id) + " outside [0, " +
                       std::to_string(config.num_items) + "]");
  }

  if (store.scales != config.scales || store.item_embeddings.value.rows() != config.num_items + 1 ||
      store.item_embeddings.value.cols() != config.dim)
    throw DimensionError("forward: parameter store does not match the model config");

  const bool drop = mode == Mode::Train && config.dropout > 0.0;
  if (drop && dropout_rng == nullptr) throw ContractError("forward: train-mode dropout needs an rng");

  ForwardTrace trace;
  const Eigen::Index B = batch.size();
  const Eigen::Index d = config.dim;

  if (config.sequence_branch()) {
    trace.inputs = embed_sequence(tape, store, batch.items);
    if (drop) {
      trace.input_mask = dropout_mask(B * config.seq_len, d, config.dropout, *dropout_rng);
      for (std::size_t t = 0; t < trace.inputs.size(); ++t) {
        Matrix m = trace.input_mask.middleRows(static_cast<Eigen::Index>(t) * B, B);
        trace.inputs[t] = ad::mul(trace.inputs[t], tape.constant(std::move(m)));
      }
    }

    std::vector<std::vector<Var>> finals;
    for (std::size_t s = 0; s < store.layers.size(); ++s) {
      ScaleTrace st;
      st.width = store.scales[s];
      std::vector<Var> seq = trace.inputs;
      for (ScaleLayer& layer : store.layers[s]) {
        LayerTrace lt;
        lt.forget = conv_gates(tape, seq, layer.forget.filters,
                               config.conv_bias ? &layer.forget.bias : nullptr);
        if (config.use_output_gate) {
          lt.output = conv_gates(tape, seq, layer.output.filters,
                                 config.conv_bias ? &layer.output.bias : nullptr);
          GatedPool pooled = output_gate_pool(seq, lt.forget, lt.output);
          lt.cells = std::move(pooled.cells);
          lt.hidden = std::move(pooled.hidden);
        } else {
          lt.hidden = dynamic_average_pool(seq, lt.forget);
        }
        seq = lt.hidden;
        st.layers.push_back(std::move(lt));
      }
      finals.push_back(std::move(seq));
      trace.scales.push_back(std::move(st));
    }
    trace.aggregate = aggregate(finals, config.aggregation);
  }

  Var o = trace.aggregate;
  if (drop && o.valid()) {
    trace.output_mask = dropout_mask(B, d, config.dropout, *dropout_rng);
    o = ad::mul(o, tape.constant(trace.output_mask));
  }
  trace.scores = predict_scores(tape, o, batch.users, store, batch.candidates, config);
  return trace;
}

Matrix score(const Batch& batch, const ModelConfig& config, const ParameterStore& store) {
  Tape tape(/*recording=*/false);
  // A non-recording tape only reads the slots.
  auto& mutable_store = const_cast<ParameterStore&>(store);
  return forward(tape, batch, config, mutable_store, Mode::Eval).scores.value();
}

}  // namespace qrrec::model
