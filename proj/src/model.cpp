#include "vnt/model.hpp"

#include <cmath>

#include "vnt/errors.hpp"

namespace vnt {

namespace {

struct ParamSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in;
};

std::string block_prefix(std::size_t b) { return "block" + std::to_string(b) + "."; }

/// Every trainable tensor of a config, in initialization order.
std::vector<ParamSpec> param_specs(const ModelConfig& cfg) {
  const std::size_t L = cfg.linear_dim, h = cfg.heads, dk = cfg.head_size;
  std::vector<ParamSpec> specs{
      {"edge.lift", {L, 2}, 2},
      {"edge.dir", {L, L}, L},
  };
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    const std::string p = block_prefix(b);
    for (std::size_t i = 0; i < h; ++i) {
      const std::string hp = p + "head" + std::to_string(i) + ".";
      specs.push_back({hp + "wq", {dk, L}, L});
      specs.push_back({hp + "wk", {dk, L}, L});
      specs.push_back({hp + "wv", {dk, L}, L});
    }
    specs.push_back({p + "wo", {L, h * dk}, h * dk});
    specs.push_back({p + "ffn.w1", {L, L}, L});
    specs.push_back({p + "ffn.dir", {L, L}, L});
    specs.push_back({p + "ffn.w2", {L, L}, L});
  }
  const std::size_t c = cfg.trunk_channels(), c2 = frame_hidden(c);
  if (cfg.readout == Readout::Invariant) {
    specs.push_back({"invariant.lin1", {c2, c}, c});
    specs.push_back({"invariant.dir1", {c2, c2}, c2});
    specs.push_back({"invariant.lin2", {3, c2}, c2});
    specs.push_back({"invariant.dir2", {3, 3}, 3});
  }
  auto linear = [&specs](const std::string& name, std::size_t in, std::size_t out) {
    specs.push_back({name + ".weight", {in, out}, in});
    specs.push_back({name + ".bias", {out}, in});
  };
  const std::size_t f = cfg.point_features();
  if (cfg.task == Task::Classification) {
    linear("head.fc0", f, kClsHidden[0]);
    linear("head.fc1", kClsHidden[0], kClsHidden[1]);
    linear("head.fc2", kClsHidden[1], cfg.num_classes);
  } else {
    linear("category", cfg.num_categories, kCategoryEmbedding);
    std::size_t in = f + kCategoryEmbedding;
    for (std::size_t i = 0; i < 3; ++i) {
      linear("head.fc" + std::to_string(i), in, kSegHidden[i]);
      specs.push_back({"head.bn" + std::to_string(i) + ".gamma", {kSegHidden[i]}, 0});
      specs.push_back({"head.bn" + std::to_string(i) + ".beta", {kSegHidden[i]}, 0});
      in = kSegHidden[i];
    }
    linear("head.fc3", in, cfg.num_classes);
  }
  return specs;
}

const Var& param(const Bindings& b, const std::string& name) {
  auto it = b.find(name);
  if (it == b.end()) throw ConfigError("missing parameter binding '" + name + "'");
  return it->second;
}

Var linear(const Bindings& b, const std::string& name, Var x) {
  return add_bias(matmul(x, param(b, name + ".weight")), param(b, name + ".bias"));
}

Var dropout(Var x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  std::vector<double> mask(x.value().size());
  for (double& m : mask) m = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
  return mul_const(x, Tensor(x.shape(), std::move(mask)));
}

BlockWeights block_weights(const Bindings& b, const ModelConfig& cfg, std::size_t block) {
  const std::string p = block_prefix(block);
  BlockWeights w;
  for (std::size_t i = 0; i < cfg.heads; ++i) {
    const std::string hp = p + "head" + std::to_string(i) + ".";
    w.attention.heads.push_back({param(b, hp + "wq"), param(b, hp + "wk"), param(b, hp + "wv")});
  }
  w.attention.wo = param(b, p + "wo");
  w.ffn = {param(b, p + "ffn.w1"), param(b, p + "ffn.dir"), param(b, p + "ffn.w2")};
  return w;
}

void check_normalized(const Tensor& points) {
  const std::size_t n = points.dim(0);
  double c[3] = {0, 0, 0};
  double max_norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) {
      c[k] += points[i * 3 + k];
      s += points[i * 3 + k] * points[i * 3 + k];
    }
    max_norm = std::max(max_norm, std::sqrt(s));
  }
  const double centroid = std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]) / static_cast<double>(n);
  if (centroid > 1e-6 || std::abs(max_norm - 1.0) > 1e-6) {
    throw ContractError("model input is not normalized (centroid norm " + std::to_string(centroid) +
                        ", max norm " + std::to_string(max_norm) + ")");
  }
}

Tensor check_one_hot(const Tensor& category, std::size_t width) {
  bool ok = category.size() == width;
  std::size_t ones = 0;
  for (std::size_t i = 0; ok && i < category.size(); ++i) {
    ok = category[i] == 0.0 || category[i] == 1.0;
    ones += category[i] == 1.0;
  }
  if (!ok || ones != 1) {
    throw ContractError("category must be a one-hot vector of width " + std::to_string(width));
  }
  return category.reshaped({1, width});
}

}  // namespace

std::string to_string(Task t) { return t == Task::Classification ? "classification" : "segmentation"; }

Task parse_task(const std::string& s) {
  if (s == "classification" || s == "cls") return Task::Classification;
  if (s == "segmentation" || s == "seg") return Task::Segmentation;
  throw ConfigError("unknown task '" + s + "' (expected classification|segmentation)");
}

std::string to_string(Readout r) { return r == Readout::Invariant ? "invariant" : "flatten"; }

Readout parse_readout(const std::string& s) {
  if (s == "invariant") return Readout::Invariant;
  if (s == "flatten") return Readout::Flatten;
  throw ConfigError("unknown readout '" + s + "' (expected invariant|flatten)");
}

std::vector<std::string> ModelConfig::violations() const {
  std::vector<std::string> v;
  if (linear_dim == 0) v.push_back("linear_dim must be >= 1");
  if (heads == 0) v.push_back("heads must be >= 1");
  if (head_size == 0) v.push_back("head_size must be >= 1");
  if (blocks == 0) v.push_back("blocks must be >= 1");
  if (knn_k == 0) v.push_back("knn_k must be >= 1");
  if (num_classes == 0) v.push_back("num_classes must be >= 1");
  if (task == Task::Segmentation && num_categories == 0) v.push_back("segmentation needs num_categories >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) v.push_back("dropout must lie in [0,1)");
  return v;
}

void ModelConfig::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid model config:";
  for (const auto& s : v) msg += " " + s + ";";
  throw ConfigError(msg);
}

VNTModel init_model(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  VNTModel m;
  m.config = cfg;
  for (const ParamSpec& s : param_specs(cfg)) {
    const std::size_t n = shape_size(s.shape);
    std::vector<double> values(n);
    if (s.fan_in == 0) {
      // Batch-norm affine parameters.
      const bool is_gamma = s.name.ends_with(".gamma");
      std::fill(values.begin(), values.end(), is_gamma ? 1.0 : 0.0);
    } else {
      const double bound = 1.0 / std::sqrt(static_cast<double>(s.fan_in));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (double& x : values) x = u(rng);
    }
    m.params.add(s.name, Tensor(s.shape, std::move(values)));
  }
  if (cfg.task == Task::Segmentation) {
    for (std::size_t i = 0; i < 3; ++i) {
      const std::string p = "head.bn" + std::to_string(i) + ".";
      m.buffers.add(p + "running_mean", Tensor::zeros({kSegHidden[i]}));
      m.buffers.add(p + "running_var", Tensor::full({kSegHidden[i]}, 1.0));
    }
  }
  return m;
}

std::size_t count_params(const ModelConfig& cfg) {
  std::size_t n = 0;
  for (const auto& [module, count] : count_params_by_module(cfg)) n += count;
  return n;
}

std::vector<std::pair<std::string, std::size_t>> count_params_by_module(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<std::pair<std::string, std::size_t>> out;
  for (const ParamSpec& s : param_specs(cfg)) {
    const std::string module = s.name.substr(0, s.name.find('.'));
    if (out.empty() || out.back().first != module) out.emplace_back(module, 0);
    out.back().second += shape_size(s.shape);
  }
  return out;
}

Var point_features(const VNTModel& m, const Bindings& b, Tape& tape, const Tensor& points, ForwardOptions& opt) {
  const ModelConfig& cfg = m.config;
  if (points.rank() != 2 || points.dim(1) != 3) {
    throw DimensionError("model input must be [N x 3], got " + shape_str(points.shape()));
  }
  if (debug_checks() && !opt.train) check_normalized(points);

  Var x = edge_conv_lift(tape, points, {param(b, "edge.lift"), param(b, "edge.dir"), cfg.knn_k, kVnLeak});
  const AttentionConfig att = cfg.attention();
  std::vector<Var> outputs;
  for (std::size_t i = 0; i < cfg.blocks; ++i) {
    std::vector<Tensor>* capture = nullptr;
    if (opt.attention) capture = &opt.attention->emplace_back();
    x = vnt_block(x, block_weights(b, cfg, i), att, capture);
    outputs.push_back(x);
  }
  const Var joined = outputs.size() == 1 ? outputs[0] : concat(outputs, 1);
  const std::size_t n = points.dim(0);
  if (cfg.readout == Readout::Flatten) return reshape(joined, {n, cfg.point_features()});
  const FrameNetWeights frame{param(b, "invariant.lin1"), param(b, "invariant.dir1"), param(b, "invariant.lin2"),
                              param(b, "invariant.dir2"), kVnLeak};
  return reshape(vn_invariant(joined, frame), {n, cfg.point_features()});
}

Var forward_classify(const VNTModel& m, const Bindings& b, Tape& tape, const Tensor& points, ForwardOptions& opt) {
  const ModelConfig& cfg = m.config;
  if (cfg.task != Task::Classification) throw ConfigError("forward_classify on a segmentation model");
  const Var feats = point_features(m, b, tape, points, opt);
  Var h = reshape(mean_axis(feats, 0), {1, cfg.point_features()});
  const bool drop = opt.train && cfg.dropout > 0.0;
  if (drop && !opt.rng) throw ContractError("forward_classify: train mode needs a dropout generator");
  for (int i = 0; i < 2; ++i) {
    h = leaky_relu(linear(b, "head.fc" + std::to_string(i), h), kHeadLeak);
    if (drop) h = dropout(h, cfg.dropout, *opt.rng);
  }
  return linear(b, "head.fc2", h);
}

Var forward_segment(const VNTModel& m, const Bindings& b, Tape& tape, std::span<const Tensor> points,
                    std::span<const Tensor> categories, ForwardOptions& opt) {
  const ModelConfig& cfg = m.config;
  if (cfg.task != Task::Segmentation) throw ConfigError("forward_segment on a classification model");
  if (points.size() != categories.size() || points.empty()) {
    throw ContractError("forward_segment: need one category per cloud");
  }
  std::vector<Var> rows;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Tensor onehot = check_one_hot(categories[i], cfg.num_categories);
    const Var feats = point_features(m, b, tape, points[i], opt);
    const Var emb = reshape(linear(b, "category", tape.constant(onehot)), {kCategoryEmbedding});
    const Var parts[2] = {feats, tile_rows(emb, points[i].dim(0))};
    rows.push_back(concat(parts, 1));
  }
  Var h = rows.size() == 1 ? rows[0] : concat(rows, 0);
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string bn = "head.bn" + std::to_string(i) + ".";
    h = linear(b, "head.fc" + std::to_string(i), h);
    BatchStats stats;
    const auto& rm = m.buffers.entry(bn + "running_mean").value;
    const auto& rv = m.buffers.entry(bn + "running_var").value;
    h = batch_norm(h, param(b, bn + "gamma"), param(b, bn + "beta"), opt.train, rm, rv, kBatchNormEps,
                   opt.train ? &stats : nullptr);
    if (opt.train && opt.bn_stats) opt.bn_stats->push_back(std::move(stats));
    h = relu(h);
  }
  return linear(b, "head.fc3", h);
}

Tensor classify(const VNTModel& m, const Tensor& points) {
  Tape tape(false);
  const Bindings b = m.params.bind(tape, false);
  ForwardOptions opt;
  return forward_classify(m, b, tape, points, opt).value();
}

Tensor segment(const VNTModel& m, const Tensor& points, const Tensor& category) {
  Tape tape(false);
  const Bindings b = m.params.bind(tape, false);
  ForwardOptions opt;
  return forward_segment(m, b, tape, std::span(&points, 1), std::span(&category, 1), opt).value();
}

void update_running_stats(VNTModel& m, std::span<const BatchStats> stats, std::size_t batch_rows) {
  const double unbias = batch_rows > 1 ? static_cast<double>(batch_rows) / static_cast<double>(batch_rows - 1) : 1.0;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const std::string bn = "head.bn" + std::to_string(i) + ".";
    auto& rm = m.buffers.entry(bn + "running_mean").value;
    auto& rv = m.buffers.entry(bn + "running_var").value;
    for (std::size_t j = 0; j < rm.size(); ++j) {
      rm[j] = kBatchNormMomentum * rm[j] + (1.0 - kBatchNormMomentum) * stats[i].mean[j];
      rv[j] = kBatchNormMomentum * rv[j] + (1.0 - kBatchNormMomentum) * stats[i].var[j] * unbias;
    }
  }
}

}  // namespace vnt
