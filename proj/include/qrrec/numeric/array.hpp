#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <string>

namespace qrrec::ad {

using Index = Eigen::Index;

/// Dense 2-D array, row-major so that embedding rows are contiguous.
/// Vectors are 1×n (a single batch row) or n×1, scalars are 1×1.
template <typename Scalar>
using Array = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Integer ids laid out like a batch: one row per example.
using IdMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Derived>
std::string shape_string(const Eigen::EigenBase<Derived>& m) {
  return "[" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + "]";
}

/// A trainable array together with its accumulated gradient.
///
/// `frozen_row` marks one row (the padding embedding) that never receives
/// gradient and is never touched by the optimizer.
template <typename Scalar>
struct GradSlot {
  Array<Scalar> value;
  Array<Scalar> gradient;
  bool enabled = true;
  Index frozen_row = -1;

  GradSlot() = default;
  explicit GradSlot(Array<Scalar> v, bool enable = true)
      : value(std::move(v)), gradient(Array<Scalar>::Zero(value.rows(), value.cols())), enabled(enable) {}

  void zero_grad() { gradient.setZero(value.rows(), value.cols()); }
  Index size() const { return value.size(); }
};

// Largest/smallest representable values strictly inside (0, 1). Saturated
// sigmoids are clamped here so gates never become exactly 0 or 1.
template <typename Scalar>
inline constexpr Scalar kSigmoidHi = Scalar(1) - std::numeric_limits<Scalar>::epsilon() / 2;
template <typename Scalar>
inline constexpr Scalar kSigmoidLo = std::numeric_limits<Scalar>::min();

template <std::floating_point Scalar>
Scalar sigmoid(Scalar x) {
  Scalar s;
  if (x >= Scalar(0)) {
    s = Scalar(1) / (Scalar(1) + std::exp(-x));
  } else {
    const Scalar e = std::exp(x);
    s = e / (Scalar(1) + e);
  }
  if (s > kSigmoidHi<Scalar>) return kSigmoidHi<Scalar>;
  if (s < kSigmoidLo<Scalar>) return kSigmoidLo<Scalar>;
  return s;
}

/// log(1 + e^x) without overflow.
template <std::floating_point Scalar>
Scalar softplus(Scalar x) {
  return std::max(x, Scalar(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename Derived>
Array<typename Derived::Scalar> sigmoid(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return x.unaryExpr([](S v) { return sigmoid(v); });
}

}  // namespace qrrec::ad
