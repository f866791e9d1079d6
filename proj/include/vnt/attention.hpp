#pragma once

#include <cstddef>
#include <vector>

#include "vnt/vn_layers.hpp"

namespace vnt {

/// Width of a multi-headed block: d_model channels in and out, `heads`
/// heads of `d_k` channels each (values use the same width).
struct AttentionConfig {
  std::size_t d_model = 0;
  std::size_t heads = 0;
  std::size_t d_k = 0;

  void validate() const;
};

/// Attention scores S = Σ_c Q_(c)·K_(c)ᵀ for features [N x C x D], computed
/// as one product of the features flattened to [N x C·D].
Var flatten_scores(Var q, Var k);

struct AttentionResult {
  Var output;   // [N x C_v x D]
  Var weights;  // [N x N], row-stochastic over keys
};

/// softmax(S / sqrt(d_k)) applied to every vector component of `v`.
/// Rotating q, k and v together rotates the output and leaves the weights
/// unchanged.
AttentionResult vn_attention(Var q, Var k, Var v, std::size_t d_k);

struct HeadWeights {
  Var wq;  // [d_k x d_model]
  Var wk;
  Var wv;
};

struct MultiHeadWeights {
  std::vector<HeadWeights> heads;
  Var wo;  // [d_model x heads·d_k]
};

/// Self-attention over x with per-head channel projections, head outputs
/// concatenated on the channel axis, projected by Wo and added to x.
/// When `weights_out` is given, each head's attention matrix is appended.
Var multi_head_vn_attention(Var x, const MultiHeadWeights& w, const AttentionConfig& cfg,
                            std::vector<Tensor>* weights_out = nullptr);

struct FFNWeights {
  Var w1;   // [d_ff x d_model]
  Var dir;  // [d_ff x d_ff]
  Var w2;   // [d_model x d_ff]
};

/// W2 · VN-ReLU(W1 · x) with alpha = 0; no residual.
Var vn_ffn(Var x, const FFNWeights& w);

struct BlockWeights {
  MultiHeadWeights attention;
  FFNWeights ffn;
};

/// y = multi_head_vn_attention(x) (residual included); returns y + vn_ffn(y).
Var vnt_block(Var x, const BlockWeights& w, const AttentionConfig& cfg,
              std::vector<Tensor>* weights_out = nullptr);

}  // namespace vnt
