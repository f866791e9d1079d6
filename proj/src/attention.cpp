#include "vnt/attention.hpp"

#include <cmath>
#include <string>

#include "vnt/errors.hpp"

namespace vnt {

void AttentionConfig::validate() const {
  if (d_model == 0 || heads == 0 || d_k == 0) {
    throw ConfigError("attention config needs positive d_model, heads and d_k");
  }
}

Var flatten_scores(Var q, Var k) {
  if (q.shape() != k.shape() || q.shape().size() != 3) {
    throw DimensionError("flatten_scores: query " + shape_str(q.shape()) + " and key " + shape_str(k.shape()) +
                         " must share a [N x C x D] shape");
  }
  const std::size_t n = q.dim(0), width = q.dim(1) * q.dim(2);
  const Var qf = reshape(q, {n, width});
  const Var kf = reshape(k, {n, width});
  return matmul(qf, transpose(kf));
}

AttentionResult vn_attention(Var q, Var k, Var v, std::size_t d_k) {
  if (v.shape().size() != 3 || v.dim(0) != q.dim(0)) {
    throw DimensionError("vn_attention: value " + shape_str(v.shape()) + " does not match query " +
                         shape_str(q.shape()));
  }
  if (d_k == 0) throw ConfigError("vn_attention: d_k must be positive");
  const Var weights = softmax_rows(flatten_scores(q, k), std::sqrt(static_cast<double>(d_k)));
  const std::size_t n = v.dim(0), cv = v.dim(1), d = v.dim(2);
  const Var out = reshape(matmul(weights, reshape(v, {n, cv * d})), {n, cv, d});
  return {out, weights};
}

Var multi_head_vn_attention(Var x, const MultiHeadWeights& w, const AttentionConfig& cfg,
                            std::vector<Tensor>* weights_out) {
  cfg.validate();
  if (x.shape().size() != 3 || x.dim(1) != cfg.d_model) {
    throw ConfigError("multi_head_vn_attention: input " + shape_str(x.shape()) + " does not have d_model=" +
                      std::to_string(cfg.d_model) + " channels");
  }
  if (w.heads.size() != cfg.heads) {
    throw ConfigError("multi_head_vn_attention: " + std::to_string(w.heads.size()) + " head weight sets for " +
                      std::to_string(cfg.heads) + " heads");
  }
  const Shape proj{cfg.d_k, cfg.d_model};
  const Shape out_proj{cfg.d_model, cfg.heads * cfg.d_k};
  if (w.wo.shape() != out_proj) {
    throw ConfigError("multi_head_vn_attention: Wo is " + shape_str(w.wo.shape()) + ", expected " + shape_str(out_proj));
  }
  std::vector<Var> heads;
  heads.reserve(cfg.heads);
  for (const HeadWeights& h : w.heads) {
    if (h.wq.shape() != proj || h.wk.shape() != proj || h.wv.shape() != proj) {
      throw ConfigError("multi_head_vn_attention: head projections must be " + shape_str(proj));
    }
    AttentionResult r = vn_attention(vn_linear(x, h.wq), vn_linear(x, h.wk), vn_linear(x, h.wv), cfg.d_k);
    if (weights_out) weights_out->push_back(r.weights.value());
    heads.push_back(r.output);
  }
  const Var joined = heads.size() == 1 ? heads[0] : concat(heads, 1);
  return add(vn_linear(joined, w.wo), x);
}

Var vn_ffn(Var x, const FFNWeights& w) {
  return vn_linear(vn_leaky_relu(vn_linear(x, w.w1), w.dir, 0.0), w.w2);
}

Var vnt_block(Var x, const BlockWeights& w, const AttentionConfig& cfg, std::vector<Tensor>* weights_out) {
  const Var y = multi_head_vn_attention(x, w.attention, cfg, weights_out);
  return add(y, vn_ffn(y, w.ffn));
}

}  // namespace vnt
