#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vnt/tape.hpp"

namespace vnt {

/// Matrix product over the last two axes. Leading (batch) axes must match,
/// or one operand may be a plain matrix that is broadcast over the other's
/// batch. Backward: dA = dC·Bᵀ, dB = Aᵀ·dC.
Var matmul(Var a, Var b);

/// Swaps the last two axes.
Var transpose(Var a);
Var reshape(Var a, Shape shape);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// Elementwise product with a constant tensor (dropout masks).
Var mul_const(Var a, const Tensor& c);
/// Adds `bias[F]` to every row of `a[..xF]`.
Var add_bias(Var a, Var bias);
/// Repeats a vector `a[F]` into `n` rows: result [n x F].
Var tile_rows(Var a, std::size_t n);

Var sum(Var a);
/// Mean over one axis; the axis is removed from the shape.
Var mean_axis(Var a, std::size_t axis);
Var concat(std::span<const Var> parts, std::size_t axis);

/// Row-wise softmax of a / scale over the last axis, stabilized by the row
/// maximum.
Var softmax_rows(Var a, double scale);

Var leaky_relu(Var a, double slope);
inline Var relu(Var a) { return leaky_relu(a, 0.0); }

/// Vector-neuron half-space clamp on [..x3] vectors: where <q,d> < 0 the
/// component of q along d is scaled by alpha; where |d| < 1e-12 q passes.
Var vn_clamp(Var q, Var d, double alpha);

/// Mean cross-entropy of `logits[B x K]` against integer labels.
Var cross_entropy(Var logits, std::span<const int> labels);

/// Batch statistics of a [M x F] input, filled by batch_norm in train mode.
struct BatchStats {
  std::vector<double> mean;
  std::vector<double> var;  // biased
};

/// Feature-wise batch normalization of `x[M x F]`. In train mode the batch
/// statistics are used (and written to `stats` when given); otherwise the
/// supplied running mean and variance.
Var batch_norm(Var x, Var gamma, Var beta, bool train, std::span<const double> running_mean,
               std::span<const double> running_var, double eps, BatchStats* stats = nullptr);

}  // namespace vnt
