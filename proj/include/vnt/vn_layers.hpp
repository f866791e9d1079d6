#pragma once

#include <cstddef>
#include <vector>

#include "vnt/ops.hpp"

namespace vnt {

// Vector-neuron features are [N x C x 3] tensors: N points, C channels, one
// 3-vector per channel. A rotation acts on the right of every 3-vector.

/// Leak used by non-linearities next to the heads and in the lifting block.
inline constexpr double kVnLeak = 0.2;

/// Per-point channel mixing W·V_n with W [C' x C]; the vector axis is
/// untouched, so the map commutes with rotations.
Var vn_linear(Var v, Var w);

/// Vector-neuron leaky ReLU. A direction d = U·V is predicted per channel;
/// vectors q with <q,d> < 0 lose (1-alpha) of their component along d.
Var vn_leaky_relu(Var v, Var u, double alpha);

struct EdgeConvWeights {
  Var lift;  // [C x 2]
  Var dir;   // [C x C]
  std::size_t k = 20;
  double alpha = kVnLeak;
};

/// k nearest neighbours of every point (self excluded), nearest first.
/// Ties are broken by the lower point index.
std::vector<std::vector<std::size_t>> knn(const Tensor& points, std::size_t k);

/// Lifts a [N x 3] cloud to [N x C x 3] features. Every neighbour j of i
/// contributes the 2-channel edge feature (x_j - x_i, x_i), mapped by
/// `lift`, passed through a VN leaky ReLU and mean-pooled over neighbours.
Var edge_conv_lift(Tape& tape, const Tensor& points, const EdgeConvWeights& w);

struct FrameNetWeights {
  Var lin1;  // [C/2 x C]
  Var dir1;  // [C/2 x C/2]
  Var lin2;  // [3 x C/2]
  Var dir2;  // [3 x 3]
  double alpha = kVnLeak;
};

/// Channel width of the first frame-net stage for C input channels.
inline std::size_t frame_hidden(std::size_t channels) { return channels / 2 > 0 ? channels / 2 : 1; }

/// Rotation-invariant readout: an equivariant frame T [N x 3 x 3] is
/// predicted from V and the result is V_n·T_nᵀ, shape [N x C x 3].
Var vn_invariant(Var v, const FrameNetWeights& w);

/// Mean over the point axis: [N x C x 3] -> [1 x C x 3].
Var vn_mean_pool(Var v);

}  // namespace vnt
