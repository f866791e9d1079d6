#include "vnt/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>

#include "vnt/errors.hpp"
#include "vnt/grad_check.hpp"
#include "vnt/model.hpp"
#include "vnt/pointcloud.hpp"

namespace vnt {

namespace {

constexpr double kExactTol = 1e-12;
constexpr double kGradStep = 1e-5;
constexpr double kGradTol = 1e-4;

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <class F>
CheckResult timed(F&& f) {
  const auto t0 = Clock::now();
  CheckResult r = f();
  r.seconds = since(t0);
  return r;
}
constexpr double kModelRelTol = 1e-6;

Tensor randn(const Shape& shape, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = g(rng);
  return Tensor(shape, std::move(v));
}

std::size_t uniform(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Tensor scaled(const Tensor& t, double s) {
  std::vector<double> v = t.to_vector();
  for (double& x : v) x *= s;
  return Tensor(t.shape(), std::move(v));
}

Tensor random_cloud(std::size_t n, Rng& rng) { return normalize(randn({n, 3}, rng)); }

// One equivariance trial: returns ||f(x·R) - f(x)·R||_inf.
using Trial = std::function<double(Rng&, const Rotation&)>;

double vn_error(const Tensor& rotated_out, const Tensor& out, const Rotation& r) {
  return max_abs_diff(rotated_out, r.apply(out));
}

EdgeConvWeights edge_weights(Tape& t, std::size_t c, std::size_t k, Rng& rng) {
  return {t.constant(randn({c, 2}, rng)), t.constant(randn({c, c}, rng)), k, kVnLeak};
}

MultiHeadWeights mha_weights(Tape& t, const AttentionConfig& cfg, Rng& rng) {
  MultiHeadWeights w;
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    w.heads.push_back({t.constant(randn({cfg.d_k, cfg.d_model}, rng)), t.constant(randn({cfg.d_k, cfg.d_model}, rng)),
                       t.constant(randn({cfg.d_k, cfg.d_model}, rng))});
  }
  w.wo = t.constant(randn({cfg.d_model, cfg.heads * cfg.d_k}, rng));
  return w;
}

FFNWeights ffn_weights(Tape& t, std::size_t c, Rng& rng) {
  return {t.constant(randn({c, c}, rng)), t.constant(randn({c, c}, rng)), t.constant(randn({c, c}, rng))};
}

AttentionConfig random_attention(Rng& rng) {
  return {uniform(rng, 1, 6), uniform(rng, 1, 3), uniform(rng, 1, 4)};
}

CheckResult equivariance(const std::string& name, const VerifyOptions& opt, std::uint64_t stream, const Trial& f) {
  const auto t0 = Clock::now();
  CheckResult r{name, 0.0, opt.tol, false, {}};
  for (std::size_t i = 0; i < opt.trials; ++i) {
    Rng rng = derive_rng(opt.seed, stream, i);
    const Rotation rot = sample_rotation(RotationProtocol::SO3, rng);
    r.max_error = std::max(r.max_error, f(rng, rot));
  }
  r.passed = r.max_error <= r.threshold;
  r.seconds = since(t0);
  return r;
}

std::vector<CheckResult> equivariance_checks(const VerifyOptions& opt) {
  std::vector<CheckResult> out;
  out.push_back(equivariance("equivariance/vn_linear", opt, 1, [](Rng& rng, const Rotation& rot) {
    const std::size_t n = uniform(rng, 1, 16), c = uniform(rng, 1, 8), c2 = uniform(rng, 1, 8);
    const Tensor x = randn({n, c, 3}, rng), w = randn({c2, c}, rng);
    Tape t(false);
    return vn_error(vn_linear(t.constant(rot.apply(x)), t.constant(w)).value(),
                    vn_linear(t.constant(x), t.constant(w)).value(), rot);
  }));
  out.push_back(equivariance("equivariance/vn_leaky_relu", opt, 2, [](Rng& rng, const Rotation& rot) {
    const std::size_t n = uniform(rng, 1, 16), c = uniform(rng, 1, 8);
    const Tensor x = randn({n, c, 3}, rng), u = randn({c, c}, rng);
    const double alpha = std::uniform_real_distribution<double>(0.0, 0.9)(rng);
    Tape t(false);
    return vn_error(vn_leaky_relu(t.constant(rot.apply(x)), t.constant(u), alpha).value(),
                    vn_leaky_relu(t.constant(x), t.constant(u), alpha).value(), rot);
  }));
  out.push_back(equivariance("equivariance/edge_conv_lift", opt, 3, [](Rng& rng, const Rotation& rot) {
    const std::size_t n = uniform(rng, 4, 24), c = uniform(rng, 1, 8), k = uniform(rng, 1, n - 1);
    const Tensor p = randn({n, 3}, rng);
    Tape t(false);
    const EdgeConvWeights w = edge_weights(t, c, k, rng);
    return vn_error(edge_conv_lift(t, rot.apply(p), w).value(), edge_conv_lift(t, p, w).value(), rot);
  }));
  out.push_back(equivariance("equivariance/vn_mean_pool", opt, 4, [](Rng& rng, const Rotation& rot) {
    const Tensor x = randn({uniform(rng, 1, 16), uniform(rng, 1, 8), 3}, rng);
    Tape t(false);
    return vn_error(vn_mean_pool(t.constant(rot.apply(x))).value(), vn_mean_pool(t.constant(x)).value(), rot);
  }));
  out.push_back(equivariance("equivariance/vn_attention", opt, 5, [](Rng& rng, const Rotation& rot) {
    const std::size_t n = uniform(rng, 1, 16), c = uniform(rng, 1, 6), cv = uniform(rng, 1, 6);
    const Tensor q = randn({n, c, 3}, rng), k = randn({n, c, 3}, rng), v = randn({n, cv, 3}, rng);
    Tape t(false);
    const auto a = vn_attention(t.constant(rot.apply(q)), t.constant(rot.apply(k)), t.constant(rot.apply(v)), c);
    const auto b = vn_attention(t.constant(q), t.constant(k), t.constant(v), c);
    return vn_error(a.output.value(), b.output.value(), rot);
  }));
  out.push_back(equivariance("equivariance/multi_head", opt, 6, [](Rng& rng, const Rotation& rot) {
    const AttentionConfig cfg = random_attention(rng);
    const Tensor x = randn({uniform(rng, 1, 16), cfg.d_model, 3}, rng);
    Tape t(false);
    const MultiHeadWeights w = mha_weights(t, cfg, rng);
    return vn_error(multi_head_vn_attention(t.constant(rot.apply(x)), w, cfg).value(),
                    multi_head_vn_attention(t.constant(x), w, cfg).value(), rot);
  }));
  out.push_back(equivariance("equivariance/vn_ffn", opt, 7, [](Rng& rng, const Rotation& rot) {
    const std::size_t c = uniform(rng, 1, 8);
    const Tensor x = randn({uniform(rng, 1, 16), c, 3}, rng);
    Tape t(false);
    const FFNWeights w = ffn_weights(t, c, rng);
    return vn_error(vn_ffn(t.constant(rot.apply(x)), w).value(), vn_ffn(t.constant(x), w).value(), rot);
  }));
  out.push_back(equivariance("equivariance/vnt_block", opt, 8, [](Rng& rng, const Rotation& rot) {
    const AttentionConfig cfg = random_attention(rng);
    const Tensor x = randn({uniform(rng, 1, 16), cfg.d_model, 3}, rng);
    Tape t(false);
    const BlockWeights w{mha_weights(t, cfg, rng), ffn_weights(t, cfg.d_model, rng)};
    return vn_error(vnt_block(t.constant(rot.apply(x)), w, cfg).value(), vnt_block(t.constant(x), w, cfg).value(),
                    rot);
  }));
  out.push_back(equivariance("invariance/vn_invariant", opt, 9, [](Rng& rng, const Rotation& rot) {
    const std::size_t n = uniform(rng, 1, 16), c = uniform(rng, 1, 8), h = frame_hidden(c);
    const Tensor x = randn({n, c, 3}, rng);
    Tape t(false);
    const FrameNetWeights w{t.constant(randn({h, c}, rng)), t.constant(randn({h, h}, rng)),
                            t.constant(randn({3, h}, rng)), t.constant(randn({3, 3}, rng)), kVnLeak};
    return max_abs_diff(vn_invariant(t.constant(rot.apply(x)), w).value(), vn_invariant(t.constant(x), w).value());
  }));
  return out;
}

CheckResult attention_matrix_invariance(const VerifyOptions& opt) {
  CheckResult r{"invariance/attention_weights", 0.0, std::min(kExactTol, opt.tol), false, {}};
  for (std::size_t i = 0; i < opt.trials; ++i) {
    Rng rng = derive_rng(opt.seed, 10, i);
    const Rotation rot = sample_rotation(RotationProtocol::SO3, rng);
    const AttentionConfig cfg = random_attention(rng);
    const Tensor x = randn({uniform(rng, 1, 16), cfg.d_model, 3}, rng);
    Tape t(false);
    const MultiHeadWeights w = mha_weights(t, cfg, rng);
    std::vector<Tensor> plain, rotated;
    multi_head_vn_attention(t.constant(x), w, cfg, &plain);
    multi_head_vn_attention(t.constant(rot.apply(x)), w, cfg, &rotated);
    for (std::size_t h = 0; h < plain.size(); ++h) r.max_error = std::max(r.max_error, max_abs_diff(plain[h], rotated[h]));
  }
  r.passed = r.max_error <= r.threshold;
  return r;
}

CheckResult scalar_reduction(const VerifyOptions& opt) {
  CheckResult r{"reduction/d1_scalar_attention", 0.0, 0.0, true, {}};
  for (std::size_t i = 0; i < opt.trials; ++i) {
    Rng rng = derive_rng(opt.seed, 11, i);
    const std::size_t n = uniform(rng, 1, 16), c = uniform(rng, 1, 8), cv = uniform(rng, 1, 8);
    const Tensor q = randn({n, c}, rng), k = randn({n, c}, rng), v = randn({n, cv}, rng);
    Tape t(false);
    const auto vn = vn_attention(t.constant(q.reshaped({n, c, 1})), t.constant(k.reshaped({n, c, 1})),
                                 t.constant(v.reshaped({n, cv, 1})), c);
    const Var w = softmax_rows(matmul(t.constant(q), transpose(t.constant(k))), std::sqrt(static_cast<double>(c)));
    const Tensor scalar = matmul(w, t.constant(v)).value();
    if (!bitwise_equal(vn.output.value().reshaped({n, cv}), scalar) || !bitwise_equal(vn.weights.value(), w.value())) {
      r.passed = false;
      r.max_error = std::max(r.max_error, max_abs_diff(vn.output.value().reshaped({n, cv}), scalar));
    }
  }
  return r;
}

CheckResult flattening_equality(const VerifyOptions& opt) {
  CheckResult r{"identity/flattened_scores", 0.0, std::min(kExactTol, opt.tol), false, {}};
  Rng rng = derive_rng(opt.seed, 12, 0);
  for (std::size_t n = 2; n <= 16; ++n) {
    for (std::size_t c = 1; c <= 8; ++c) {
      const Tensor q = randn({n, c, 3}, rng), k = randn({n, c, 3}, rng);
      Tape t(false);
      const Tensor s = flatten_scores(t.constant(q), t.constant(k)).value();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          double naive = 0.0;
          for (std::size_t ch = 0; ch < c; ++ch) {
            double dot = 0.0;
            for (std::size_t d = 0; d < 3; ++d) dot += q.at({i, ch, d}) * k.at({j, ch, d});
            naive += dot;
          }
          r.max_error = std::max(r.max_error, std::abs(naive - s.at({i, j})));
        }
      }
    }
  }
  r.passed = r.max_error <= r.threshold;
  return r;
}

CheckResult cosine_decomposition(const VerifyOptions& opt) {
  CheckResult r{"identity/cosine_decomposition", 0.0, std::min(kExactTol, opt.tol), false, {}};
  for (std::size_t trial = 0; trial < opt.trials; ++trial) {
    Rng rng = derive_rng(opt.seed, 13, trial);
    const std::size_t n = uniform(rng, 2, 12), c = uniform(rng, 1, 8);
    const Tensor q = randn({n, c, 3}, rng), k = randn({n, c, 3}, rng);
    Tape t(false);
    const Tensor s = flatten_scores(t.constant(q), t.constant(k)).value();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double total = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch) {
          double qq = 0, kk = 0, qk = 0;
          for (std::size_t d = 0; d < 3; ++d) {
            const double a = q.at({i, ch, d}), b = k.at({j, ch, d});
            qq += a * a;
            kk += b * b;
            qk += a * b;
          }
          const double qn = std::sqrt(qq), kn = std::sqrt(kk);
          const double cosine = std::cos(std::acos(std::clamp(qk / (qn * kn), -1.0, 1.0)));
          total += qn * kn * cosine;
        }
        r.max_error = std::max(r.max_error, std::abs(total - s.at({i, j})));
      }
    }
  }
  r.passed = r.max_error <= r.threshold;
  return r;
}

ModelConfig tiny_config(Task task) {
  ModelConfig cfg;
  cfg.linear_dim = 4;
  cfg.heads = 2;
  cfg.head_size = 4;
  cfg.knn_k = 8;
  cfg.task = task;
  cfg.num_classes = task == Task::Classification ? 3 : 4;
  cfg.num_categories = task == Task::Classification ? 0 : 2;
  return cfg;
}

double relative_error(const Tensor& a, const Tensor& b) {
  return max_abs_diff(a, b) / std::max(max_abs(b), 1e-300);
}

constexpr std::size_t kInvarianceClouds = 10;

CheckResult model_invariance(const VerifyOptions& opt, Task task) {
  const std::string name = task == Task::Classification ? "invariance/model_classify" : "invariance/model_segment";
  CheckResult r{name, 0.0, kModelRelTol, false, {}};
  for (std::size_t i = 0; i < kInvarianceClouds; ++i) {
    Rng rng = derive_rng(opt.seed, task == Task::Classification ? 14 : 15, i);
    const VNTModel m = init_model(tiny_config(task), rng);
    const Tensor p = random_cloud(uniform(rng, 16, 48), rng);
    const Tensor cat = one_hot(static_cast<int>(i % 2), 2);
    const Tensor base = task == Task::Classification ? classify(m, p) : segment(m, p, cat);
    for (std::size_t j = 0; j < opt.trials; ++j) {
      const Tensor q = sample_rotation(RotationProtocol::SO3, rng).apply(p);
      const Tensor out = task == Task::Classification ? classify(m, q) : segment(m, q, cat);
      r.max_error = std::max(r.max_error, relative_error(out, base));
    }
  }
  r.passed = r.max_error <= r.threshold;
  return r;
}

CheckResult from_grad_report(const std::string& name, const GradCheckReport& rep) {
  CheckResult r{name, rep.max_error(), rep.tolerance, rep.passed(), {}};
  for (const auto& p : rep.params) {
    if (p.max_rel_error == r.max_error) {
      char buf[256];
      std::snprintf(buf, sizeof buf, "%s[%zu] analytic %.6e numeric %.6e", p.name.c_str(), p.worst_index, p.analytic,
                    p.numeric);
      r.detail = buf;
      break;
    }
  }
  return r;
}

// Scalar loss sum(f(x) ∘ probe).
Var probe_loss(Tape& t, Var out, Rng& rng) { return sum(mul(out, t.constant(randn(out.shape(), rng)))); }

std::vector<CheckResult> layer_gradient_checks(const VerifyOptions& opt) {
  std::vector<CheckResult> out;
  const std::size_t trials = std::min<std::size_t>(opt.trials, 3);
  constexpr std::size_t n = 6, c = 3;
  const AttentionConfig cfg{c, 2, 2};
  auto run = [&](const std::string& name, std::uint64_t stream,
                 const std::function<ParamStore(Rng&)>& make,
                 const std::function<Var(Tape&, const Bindings&, const Tensor&)>& f) {
    const auto t0 = Clock::now();
    CheckResult agg{name, 0.0, kGradTol, true, {}};
    for (std::size_t i = 0; i < trials; ++i) {
      Rng rng = derive_rng(opt.seed, stream, i);
      const ParamStore ps = make(rng);
      const Tensor points = randn({n, 3}, rng);
      const std::uint64_t probe_seed = rng();
      const ScalarProgram prog = [&](Tape& t, const Bindings& b) {
        Rng probe(probe_seed);
        return probe_loss(t, f(t, b, points), probe);
      };
      const CheckResult r = from_grad_report(name, grad_check(prog, ps, kGradStep, kGradTol));
      if (r.max_error >= agg.max_error) agg.detail = r.detail;
      agg.max_error = std::max(agg.max_error, r.max_error);
      agg.passed = agg.passed && r.passed;
    }
    agg.seconds = since(t0);
    return agg;
  };
  auto add_mha = [&](ParamStore& ps, Rng& rng) {
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      for (const char* p : {"wq", "wk", "wv"}) ps.add("h" + std::to_string(h) + p, randn({cfg.d_k, c}, rng));
    }
    ps.add("wo", randn({c, cfg.heads * cfg.d_k}, rng));
  };
  auto mha = [&](const Bindings& b) {
    MultiHeadWeights w;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const std::string s = "h" + std::to_string(h);
      w.heads.push_back({b.at(s + "wq"), b.at(s + "wk"), b.at(s + "wv")});
    }
    w.wo = b.at("wo");
    return w;
  };
  auto add_ffn = [&](ParamStore& ps, Rng& rng) {
    for (const char* p : {"w1", "dir", "w2"}) ps.add(p, randn({c, c}, rng));
  };
  auto ffn = [](const Bindings& b) { return FFNWeights{b.at("w1"), b.at("dir"), b.at("w2")}; };

  out.push_back(run(
      "gradient/vn_linear", 20,
      [&](Rng& rng) {
        ParamStore ps;
        ps.add("x", randn({n, c, 3}, rng));
        ps.add("w", randn({2, c}, rng));
        return ps;
      },
      [](Tape&, const Bindings& b, const Tensor&) { return vn_linear(b.at("x"), b.at("w")); }));
  out.push_back(run(
      "gradient/vn_leaky_relu", 21,
      [&](Rng& rng) {
        ParamStore ps;
        ps.add("x", randn({n, c, 3}, rng));
        ps.add("u", randn({c, c}, rng));
        return ps;
      },
      [](Tape&, const Bindings& b, const Tensor&) { return vn_leaky_relu(b.at("x"), b.at("u"), kVnLeak); }));
  out.push_back(run(
      "gradient/edge_conv_lift", 22,
      [&](Rng& rng) {
        ParamStore ps;
        ps.add("lift", randn({c, 2}, rng));
        ps.add("dir", randn({c, c}, rng));
        return ps;
      },
      [](Tape& t, const Bindings& b, const Tensor& p) {
        return edge_conv_lift(t, p, {b.at("lift"), b.at("dir"), 3, kVnLeak});
      }));
  out.push_back(run(
      "gradient/vn_attention", 23,
      [&](Rng& rng) {
        ParamStore ps;
        for (const char* p : {"q", "k", "v"}) ps.add(p, randn({n, c, 3}, rng));
        return ps;
      },
      [&](Tape&, const Bindings& b, const Tensor&) { return vn_attention(b.at("q"), b.at("k"), b.at("v"), c).output; }));
  out.push_back(run(
      "gradient/multi_head", 24,
      [&](Rng& rng) {
        ParamStore ps;
        ps.add("x", randn({n, c, 3}, rng));
        add_mha(ps, rng);
        return ps;
      },
      [&](Tape&, const Bindings& b, const Tensor&) { return multi_head_vn_attention(b.at("x"), mha(b), cfg); }));
  out.push_back(run(
      "gradient/vn_ffn", 25,
      [&](Rng& rng) {
        ParamStore ps;
        ps.add("x", randn({n, c, 3}, rng));
        add_ffn(ps, rng);
        return ps;
      },
      [&](Tape&, const Bindings& b, const Tensor&) { return vn_ffn(b.at("x"), ffn(b)); }));
  out.push_back(run(
      "gradient/vnt_block", 26,
      [&](Rng& rng) {
        ParamStore ps;
        ps.add("x", randn({n, c, 3}, rng));
        add_mha(ps, rng);
        add_ffn(ps, rng);
        return ps;
      },
      [&](Tape&, const Bindings& b, const Tensor&) { return vnt_block(b.at("x"), {mha(b), ffn(b)}, cfg); }));
  out.push_back(run(
      "gradient/vn_invariant", 27,
      [&](Rng& rng) {
        ParamStore ps;
        ps.add("x", randn({n, 4, 3}, rng));
        ps.add("lin1", randn({2, 4}, rng));
        ps.add("dir1", randn({2, 2}, rng));
        ps.add("lin2", randn({3, 2}, rng));
        ps.add("dir2", randn({3, 3}, rng));
        return ps;
      },
      [](Tape&, const Bindings& b, const Tensor&) {
        return vn_invariant(b.at("x"), {b.at("lin1"), b.at("dir1"), b.at("lin2"), b.at("dir2"), kVnLeak});
      }));
  return out;
}

CheckResult model_gradient_check(const VerifyOptions& opt) {
  Rng rng = derive_rng(opt.seed, 30, 0);
  const VNTModel m = init_model(tiny_config(Task::Classification), rng);
  const Tensor p = random_cloud(16, rng);
  const int label = 0;
  const ScalarProgram prog = [&](Tape& t, const Bindings& b) {
    ForwardOptions fo;
    return cross_entropy(forward_classify(m, b, t, p, fo), std::span(&label, 1));
  };
  return from_grad_report("gradient/full_model", grad_check(prog, m.params, kGradStep, kGradTol));
}

std::string scale_note(const VerifyOptions& opt) {
  double worst = 0.0;
  for (std::size_t i = 0; i < std::min<std::size_t>(opt.trials, 20); ++i) {
    Rng rng = derive_rng(opt.seed, 40, i);
    const std::size_t n = uniform(rng, 2, 16), c = uniform(rng, 1, 6);
    const Tensor q = randn({n, c, 3}, rng), k = randn({n, c, 3}, rng);
    Tape t(false);
    const double s = std::sqrt(static_cast<double>(c));
    const Tensor a = softmax_rows(flatten_scores(t.constant(q), t.constant(k)), s).value();
    const Tensor b = softmax_rows(flatten_scores(t.constant(scaled(q, 2.0)), t.constant(scaled(k, 2.0))), s)
                         .value();
    worst = std::max(worst, max_abs_diff(a, b));
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "note: scaling inputs by 2 changes attention weights by up to %.3e (not an invariant)",
                worst);
  return buf;
}

}  // namespace

bool VerifyReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

const CheckResult* VerifyReport::find(const std::string& name) const {
  for (const auto& c : checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

VerifyReport run_verify(const VerifyOptions& opt) {
  if (precision() != Precision::Float64) throw ContractError("verify requires 64-bit precision");
  if (opt.trials == 0) throw ConfigError("verify needs at least one trial");
  if (!(opt.tol > 0.0)) throw ConfigError("verify tolerance must be positive");
  VerifyReport rep;
  rep.checks = equivariance_checks(opt);
  rep.checks.push_back(timed([&] { return attention_matrix_invariance(opt); }));
  rep.checks.push_back(timed([&] { return scalar_reduction(opt); }));
  rep.checks.push_back(timed([&] { return flattening_equality(opt); }));
  rep.checks.push_back(timed([&] { return cosine_decomposition(opt); }));
  rep.checks.push_back(timed([&] { return model_invariance(opt, Task::Classification); }));
  rep.checks.push_back(timed([&] { return model_invariance(opt, Task::Segmentation); }));
  for (auto& c : layer_gradient_checks(opt)) rep.checks.push_back(std::move(c));
  rep.checks.push_back(timed([&] { return model_gradient_check(opt); }));
  rep.notes.push_back(scale_note(opt));
  return rep;
}

void print_report(std::ostream& out, const VerifyReport& report) {
  char buf[256];
  for (const auto& c : report.checks) {
    std::snprintf(buf, sizeof buf, "%-4s %-34s max_error %.3e  threshold %.1e  %7.2f s\n", c.passed ? "PASS" : "FAIL",
                  c.name.c_str(), c.max_error, c.threshold, c.seconds);
    out << buf;
    if (!c.passed && !c.detail.empty()) out << "     worst: " << c.detail << '\n';
  }
  for (const auto& n : report.notes) out << n << '\n';
  std::size_t failed = 0;
  for (const auto& c : report.checks) failed += !c.passed;
  out << report.checks.size() << " checks, " << failed << " failed\n";
}

}  // namespace vnt
