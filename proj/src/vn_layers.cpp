#include "vnt/vn_layers.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "vnt/errors.hpp"

namespace vnt {

Var vn_linear(Var v, Var w) {
  if (v.shape().size() != 3 || w.shape().size() != 2 || w.dim(1) != v.dim(1)) {
    throw DimensionError("vn_linear: weights " + shape_str(w.shape()) + " do not match features " +
                         shape_str(v.shape()));
  }
  return matmul(w, v);
}

Var vn_leaky_relu(Var v, Var u, double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw ConfigError("vn_leaky_relu: alpha must lie in [0,1)");
  return vn_clamp(v, vn_linear(v, u), alpha);
}

std::vector<std::vector<std::size_t>> knn(const Tensor& points, std::size_t k) {
  if (points.rank() != 2 || points.dim(1) != 3) {
    throw DimensionError("knn: expects [N x 3] points, got " + shape_str(points.shape()));
  }
  const std::size_t n = points.dim(0);
  if (k < 1 || k >= n) {
    throw ConfigError("knn: need 1 <= k < N, got k=" + std::to_string(k) + " N=" + std::to_string(n));
  }
  const auto x = points.data();
  std::vector<std::vector<std::size_t>> out(n);
  std::vector<double> dist(n);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double d = x[j * 3 + c] - x[i * 3 + c];
        s += d * d;
      }
      dist[j] = s;
    }
    std::iota(order.begin(), order.end(), 0);
    auto closer = [&](std::size_t a, std::size_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); };
    // Self is moved past every candidate before selecting.
    dist[i] = std::numeric_limits<double>::infinity();
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), closer);
    out[i].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

Var edge_conv_lift(Tape& tape, const Tensor& points, const EdgeConvWeights& w) {
  const auto neighbours = knn(points, w.k);
  const std::size_t n = points.dim(0), k = w.k;
  const auto x = points.data();
  std::vector<double> edges(n * k * 6);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < k; ++a) {
      const std::size_t j = neighbours[i][a];
      double* e = edges.data() + (i * k + a) * 6;
      for (int c = 0; c < 3; ++c) {
        e[c] = x[j * 3 + c] - x[i * 3 + c];
        e[3 + c] = x[i * 3 + c];
      }
    }
  }
  const Var edge = tape.constant(Tensor({n * k, 2, 3}, std::move(edges)));
  const Var lifted = vn_leaky_relu(vn_linear(edge, w.lift), w.dir, w.alpha);
  const std::size_t c = lifted.dim(1);
  return mean_axis(reshape(lifted, {n, k, c, 3}), 1);
}

Var vn_invariant(Var v, const FrameNetWeights& w) {
  const Var hidden = vn_leaky_relu(vn_linear(v, w.lin1), w.dir1, w.alpha);
  const Var frame = vn_leaky_relu(vn_linear(hidden, w.lin2), w.dir2, w.alpha);
  if (frame.dim(1) != 3) {
    throw DimensionError("vn_invariant: frame must have 3 channels, got " + shape_str(frame.shape()));
  }
  return matmul(v, transpose(frame));
}

Var vn_mean_pool(Var v) {
  if (v.shape().size() != 3) throw DimensionError("vn_mean_pool: expects [N x C x 3], got " + shape_str(v.shape()));
  return reshape(mean_axis(v, 0), {1, v.dim(1), v.dim(2)});
}

}  // namespace vnt
