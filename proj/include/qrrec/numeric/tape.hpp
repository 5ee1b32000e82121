#pragma once

#include "qrrec/errors.hpp"
#include "qrrec/numeric/array.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace qrrec::ad {

template <typename Scalar>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the
/// tape lives.
template <typename Scalar>
class Var {
 public:
  Var() = default;

  const Array<Scalar>& value() const { return tape_->value(*this); }
  /// Adjoint from the last backward pass; empty if nothing flowed here.
  const Array<Scalar>& grad() const { return tape_->grad(*this); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool requires_grad() const { return tape_->requires_grad(*this); }

  Tape<Scalar>* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape<Scalar>;
  Var(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Operations append nodes in evaluation order, so the
/// node order is already a topological order and backward is a single
/// reverse sweep.
///
/// A tape built with `recording = false` computes values only; every node is
/// a constant and backward is a no-op. Evaluation uses this mode.
template <typename Scalar>
class Tape {
 public:
  using Matrix = Array<Scalar>;
  using V = Var<Scalar>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  const Matrix& value(const V& v) const { return node(v).value; }
  const Matrix& grad(const V& v) const { return node(v).grad; }
  bool requires_grad(const V& v) const { return node(v).requires_grad; }

  V constant(Matrix value) { return push(std::move(value), false, nullptr); }

  /// Leaf bound to a trainable slot. Its adjoint is added into
  /// `slot.gradient` during backward.
  V leaf(GradSlot<Scalar>& slot) {
    const bool rg = recording_ && slot.enabled;
    V out = push(slot.value, rg, nullptr);
    if (rg) nodes_.back().slot = &slot;
    return out;
  }

  V matmul(const V& a, const V& b) {
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    if (av.cols() != bv.rows())
      throw DimensionError("matmul: inner dimensions disagree, " + shape_string(av) + " x " +
                           shape_string(bv));
    const std::size_t ia = a.id(), ib = b.id();
    return push(av * bv, any_grad(a, b), [ia, ib](Tape& t, const Matrix& g) {
      t.accumulate(ia, g * t.nodes_[ib].value.transpose());
      t.accumulate(ib, t.nodes_[ia].value.transpose() * g);
    });
  }

  /// a * b^T, the batched form of applying a filter matrix to row vectors.
  V matmul_nt(const V& a, const V& b) {
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    if (av.cols() != bv.cols())
      throw DimensionError("matmul_nt: inner dimensions disagree, " + shape_string(av) +
                           " x " + shape_string(bv) + "^T");
    const std::size_t ia = a.id(), ib = b.id();
    return push(av * bv.transpose(), any_grad(a, b), [ia, ib](Tape& t, const Matrix& g) {
      t.accumulate(ia, g * t.nodes_[ib].value);
      t.accumulate(ib, g.transpose() * t.nodes_[ia].value);
    });
  }

  V add(const V& a, const V& b) {
    check_same("add", a, b);
    const std::size_t ia = a.id(), ib = b.id();
    return push(value(a) + value(b), any_grad(a, b), [ia, ib](Tape& t, const Matrix& g) {
      t.accumulate(ia, g);
      t.accumulate(ib, g);
    });
  }

  V sub(const V& a, const V& b) {
    check_same("sub", a, b);
    const std::size_t ia = a.id(), ib = b.id();
    return push(value(a) - value(b), any_grad(a, b), [ia, ib](Tape& t, const Matrix& g) {
      t.accumulate(ia, g);
      t.accumulate(ib, -g);
    });
  }

  /// Elementwise (Hadamard) product.
  V mul(const V& a, const V& b) {
    check_same("mul", a, b);
    const std::size_t ia = a.id(), ib = b.id();
    return push(value(a).cwiseProduct(value(b)), any_grad(a, b),
                [ia, ib](Tape& t, const Matrix& g) {
                  t.accumulate(ia, g.cwiseProduct(t.nodes_[ib].value));
                  t.accumulate(ib, g.cwiseProduct(t.nodes_[ia].value));
                });
  }

  V scale(const V& a, Scalar s) {
    const std::size_t ia = a.id();
    return push(value(a) * s, a.requires_grad(),
                [ia, s](Tape& t, const Matrix& g) { t.accumulate(ia, g * s); });
  }

  /// Adds a 1×n row to every row of an m×n array.
  V add_row(const V& a, const V& row) {
    const Matrix& av = value(a);
    const Matrix& rv = value(row);
    if (rv.rows() != 1 || rv.cols() != av.cols())
      throw DimensionError("add_row: expected [1x" + std::to_string(av.cols()) + "] row, got " +
                           shape_string(rv));
    const std::size_t ia = a.id(), ir = row.id();
    Matrix out = av;
    out.rowwise() += rv.row(0);
    return push(std::move(out), any_grad(a, row), [ia, ir](Tape& t, const Matrix& g) {
      t.accumulate(ia, g);
      t.accumulate(ir, g.colwise().sum());
    });
  }

  V sigmoid(const V& a) {
    const std::size_t ia = a.id();
    const std::size_t out_id = nodes_.size();
    return push(ad::sigmoid(value(a)), a.requires_grad(),
                [ia, out_id](Tape& t, const Matrix& g) {
                  const Matrix& s = t.nodes_[out_id].value;
                  t.accumulate(ia, g.cwiseProduct(s).cwiseProduct((Scalar(1) - s.array()).matrix()));
                });
  }

  /// Concatenates along the trailing (column) dimension; leading dims agree.
  V hconcat(const V& a, const V& b) {
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    if (av.rows() != bv.rows())
      throw DimensionError("hconcat: row counts disagree, " + shape_string(av) + " vs " +
                           shape_string(bv));
    Matrix out(av.rows(), av.cols() + bv.cols());
    out << av, bv;
    const std::size_t ia = a.id(), ib = b.id();
    const Index ac = av.cols(), bc = bv.cols();
    return push(std::move(out), any_grad(a, b), [ia, ib, ac, bc](Tape& t, const Matrix& g) {
      t.accumulate(ia, g.leftCols(ac));
      t.accumulate(ib, g.rightCols(bc));
    });
  }

  V sum(const V& a) {
    const std::size_t ia = a.id();
    const Index r = value(a).rows(), c = value(a).cols();
    Matrix out(1, 1);
    out(0, 0) = value(a).sum();
    return push(std::move(out), a.requires_grad(), [ia, r, c](Tape& t, const Matrix& g) {
      t.accumulate(ia, Matrix::Constant(r, c, g(0, 0)));
    });
  }

  /// Row lookup: output row i is `table.value.row(ids[i])`. The adjoint is
  /// scattered straight into `table.gradient`, skipping `table.frozen_row`.
  V embedding(GradSlot<Scalar>& table, std::span<const std::int64_t> ids) {
    const Index n = static_cast<Index>(ids.size());
    Matrix out(n, table.value.cols());
    for (Index i = 0; i < n; ++i) {
      check_row(table, ids[i], "embedding");
      out.row(i) = table.value.row(ids[i]);
    }
    const bool rg = recording_ && table.enabled;
    std::vector<std::int64_t> idv(ids.begin(), ids.end());
    GradSlot<Scalar>* slot = &table;
    return push(std::move(out), rg, [slot, idv = std::move(idv)](Tape&, const Matrix& g) {
      for (std::size_t i = 0; i < idv.size(); ++i) {
        if (idv[i] == slot->frozen_row) continue;
        slot->gradient.row(idv[i]) += g.row(static_cast<Index>(i));
      }
    });
  }

  /// out(i, k) = table.row(ids(i, k)) . x.row(i)
  V gather_dot(GradSlot<Scalar>& table, const V& x, const IdMatrix& ids) {
    const Matrix& xv = value(x);
    if (ids.rows() != xv.rows() || table.value.cols() != xv.cols())
      throw DimensionError("gather_dot: table " + shape_string(table.value) + ", input " +
                           shape_string(xv) + ", ids " + shape_string(ids));
    Matrix out(ids.rows(), ids.cols());
    for (Index i = 0; i < ids.rows(); ++i)
      for (Index k = 0; k < ids.cols(); ++k) {
        check_row(table, ids(i, k), "gather_dot");
        out(i, k) = table.value.row(ids(i, k)).dot(xv.row(i));
      }
    const bool table_grad = recording_ && table.enabled;
    const std::size_t ix = x.id();
    GradSlot<Scalar>* slot = &table;
    return push(std::move(out), table_grad || x.requires_grad(),
                [slot, ix, ids, table_grad](Tape& t, const Matrix& g) {
                  const Matrix& xv = t.nodes_[ix].value;
                  if (t.nodes_[ix].requires_grad) {
                    Matrix gx = Matrix::Zero(xv.rows(), xv.cols());
                    for (Index i = 0; i < ids.rows(); ++i)
                      for (Index k = 0; k < ids.cols(); ++k)
                        gx.row(i) += g(i, k) * slot->value.row(ids(i, k));
                    t.accumulate(ix, gx);
                  }
                  if (table_grad) {
                    for (Index i = 0; i < ids.rows(); ++i)
                      for (Index k = 0; k < ids.cols(); ++k) {
                        if (ids(i, k) == slot->frozen_row) continue;
                        slot->gradient.row(ids(i, k)) += g(i, k) * xv.row(i);
                      }
                  }
                });
  }

  /// out(i, k) = table(ids(i, k), 0) for a single-column table.
  V gather(GradSlot<Scalar>& table, const IdMatrix& ids) {
    if (table.value.cols() != 1)
      throw DimensionError("gather: expected a single-column table, got " +
                           shape_string(table.value));
    Matrix out(ids.rows(), ids.cols());
    for (Index i = 0; i < ids.rows(); ++i)
      for (Index k = 0; k < ids.cols(); ++k) {
        check_row(table, ids(i, k), "gather");
        out(i, k) = table.value(ids(i, k), 0);
      }
    GradSlot<Scalar>* slot = &table;
    return push(std::move(out), recording_ && table.enabled, [slot, ids](Tape&, const Matrix& g) {
      for (Index i = 0; i < ids.rows(); ++i)
        for (Index k = 0; k < ids.cols(); ++k) {
          if (ids(i, k) == slot->frozen_row) continue;
          slot->gradient(ids(i, k), 0) += g(i, k);
        }
    });
  }

  /// Summed binary cross-entropy on logits: label 1 contributes
  /// -log sigmoid(y), label 0 contributes -log(1 - sigmoid(y)).
  V bce_with_logits(const V& logits, const Matrix& labels) {
    const Matrix& y = value(logits);
    if (labels.rows() != y.rows() || labels.cols() != y.cols())
      throw DimensionError("bce_with_logits: logits " + shape_string(y) + " vs labels " +
                           shape_string(labels));
    Scalar loss = 0;
    for (Index i = 0; i < y.rows(); ++i)
      for (Index k = 0; k < y.cols(); ++k)
        loss += labels(i, k) * softplus(-y(i, k)) + (Scalar(1) - labels(i, k)) * softplus(y(i, k));
    Matrix out(1, 1);
    out(0, 0) = loss;
    const std::size_t il = logits.id();
    return push(std::move(out), logits.requires_grad(), [il, labels](Tape& t, const Matrix& g) {
      const Matrix& yv = t.nodes_[il].value;
      t.accumulate(il, g(0, 0) * (ad::sigmoid(yv) - labels));
    });
  }

  /// Propagates d(root)/d(node) to every node and adds leaf adjoints into
  /// their slots. Node adjoints from a previous pass are discarded first.
  void backward(const V& root) {
    if (root.tape() != this) throw ContractError("backward: root belongs to a different tape");
    const Matrix& rv = value(root);
    if (rv.rows() != 1 || rv.cols() != 1)
      throw ContractError("backward: root must be a scalar, got " + shape_string(rv));
    if (!recording_) return;
    for (auto& n : nodes_) n.grad.resize(0, 0);
    nodes_[root.id()].grad = Matrix::Ones(1, 1);
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0) continue;
      if (n.slot != nullptr) {
        n.slot->gradient += n.grad;
        if (n.slot->frozen_row >= 0) n.slot->gradient.row(n.slot->frozen_row).setZero();
      }
      if (n.backprop) n.backprop(*this, n.grad);
    }
  }

 private:
  using Backprop = std::function<void(Tape&, const Matrix&)>;

  struct Node {
    Matrix value;
    Matrix grad;
    Backprop backprop;
    GradSlot<Scalar>* slot = nullptr;
    bool requires_grad = false;
  };

  const Node& node(const V& v) const {
    if (v.tape() != this || v.id() >= nodes_.size())
      throw ContractError("variable does not belong to this tape");
    return nodes_[v.id()];
  }

  V push(Matrix value, bool requires_grad, Backprop fn) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = recording_ && requires_grad;
    if (n.requires_grad) n.backprop = std::move(fn);
    nodes_.push_back(std::move(n));
    return V(this, nodes_.size() - 1);
  }

  bool any_grad(const V& a, const V& b) const { return node(a).requires_grad || node(b).requires_grad; }

  void check_same(const char* op, const V& a, const V& b) const {
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    if (av.rows() != bv.rows() || av.cols() != bv.cols())
      throw DimensionError(std::string(op) + ": shapes disagree, " + shape_string(av) + " vs " +
                           shape_string(bv));
  }

  static void check_row(const GradSlot<Scalar>& table, std::int64_t id, const char* op) {
    if (id < 0 || id >= table.value.rows())
      throw IndexError(std::string(op) + ": id " + std::to_string(id) + " outside [0, " +
                       std::to_string(table.value.rows()) + ")");
  }

  template <typename Expr>
  void accumulate(std::size_t id, const Expr& e) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = e;
    else
      n.grad += e;
  }

  std::vector<Node> nodes_;
  bool recording_;
};

// Free-function spellings so model code reads as expressions.

template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) { return a.tape()->matmul(a, b); }
template <typename S>
Var<S> matmul_nt(const Var<S>& a, const Var<S>& b) { return a.tape()->matmul_nt(a, b); }
template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) { return a.tape()->add(a, b); }
template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) { return a.tape()->sub(a, b); }
template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) { return a.tape()->mul(a, b); }
template <typename S>
Var<S> scale(const Var<S>& a, S s) { return a.tape()->scale(a, s); }
template <typename S>
Var<S> negate(const Var<S>& a) { return a.tape()->scale(a, S(-1)); }
template <typename S>
Var<S> add_row(const Var<S>& a, const Var<S>& row) { return a.tape()->add_row(a, row); }
template <typename S>
Var<S> sigmoid(const Var<S>& a) { return a.tape()->sigmoid(a); }
template <typename S>
Var<S> hconcat(const Var<S>& a, const Var<S>& b) { return a.tape()->hconcat(a, b); }
template <typename S>
Var<S> sum(const Var<S>& a) { return a.tape()->sum(a); }

template <typename S>
Var<S> operator+(const Var<S>& a, const Var<S>& b) { return add(a, b); }
template <typename S>
Var<S> operator-(const Var<S>& a, const Var<S>& b) { return sub(a, b); }

template <typename S>
void backward(const Var<S>& root) { root.tape()->backward(root); }

}  // namespace qrrec::ad
