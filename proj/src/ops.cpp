#include "vnt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <cblas.h>

#include "vnt/errors.hpp"

namespace vnt {

namespace {

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void accumulate(Tape& tape, Var v, std::span<const double> g) {
  if (!v.requires_grad()) return;
  auto& buf = tape.grad_buffer(v);
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

struct MatmulPlan {
  std::size_t batch = 1, p = 0, q = 0, r = 0;
  bool a_batched = false, b_batched = false;
  Shape out;
};

MatmulPlan plan_matmul(const Shape& sa, const Shape& sb) {
  auto fail = [&] {
    return DimensionError("matmul: incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
  };
  if (sa.size() < 2 || sb.size() < 2) throw fail();
  MatmulPlan plan;
  plan.p = sa[sa.size() - 2];
  plan.q = sa.back();
  plan.r = sb.back();
  if (sb[sb.size() - 2] != plan.q) throw fail();
  const Shape lead_a(sa.begin(), sa.end() - 2);
  const Shape lead_b(sb.begin(), sb.end() - 2);
  if (!lead_a.empty() && !lead_b.empty() && lead_a != lead_b) throw fail();
  plan.a_batched = !lead_a.empty();
  plan.b_batched = !lead_b.empty();
  plan.out = plan.a_batched ? lead_a : lead_b;
  plan.batch = shape_size(plan.out);
  plan.out.push_back(plan.p);
  plan.out.push_back(plan.r);
  return plan;
}

// Products below this many multiply-adds stay in the plain loops.
constexpr std::size_t kBlasMinWork = 4096;

bool use_blas(std::size_t m, std::size_t k, std::size_t n) {
  static const bool single_threaded = (openblas_set_num_threads(1), true);
  return single_threaded && m * k * n >= kBlasMinWork;
}

// C[m x n] += A[m x k] · B[k x n]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* A, const double* B, double* C) {
  if (m == 1 && use_blas(m, k, n)) {
    cblas_dgemv(CblasRowMajor, CblasTrans, int(k), int(n), 1.0, B, int(n), A, 1, 1.0, C, 1);
    return;
  }
  if (use_blas(m, k, n)) {
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, int(m), int(n), int(k), 1.0, A, int(k), B, int(n), 1.0, C,
                int(n));
    return;
  }
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = C + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const double ail = A[i * k + l];
      const double* brow = B + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += ail * brow[j];
    }
  }
}

// C[m x n] += G[m x k] · B[n x k]ᵀ
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* G, const double* B, double* C) {
  if (m == 1 && use_blas(m, k, n)) {
    cblas_dgemv(CblasRowMajor, CblasNoTrans, int(n), int(k), 1.0, B, int(k), G, 1, 1.0, C, 1);
    return;
  }
  if (use_blas(m, k, n)) {
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, int(m), int(n), int(k), 1.0, G, int(k), B, int(k), 1.0, C,
                int(n));
    return;
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t l = 0; l < k; ++l) s += G[i * k + l] * B[j * k + l];
      C[i * n + j] += s;
    }
  }
}

// C[m x n] += A[k x m]ᵀ · G[k x n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* A, const double* G, double* C) {
  if (k == 1 && use_blas(m, k, n)) {
    cblas_dger(CblasRowMajor, int(m), int(n), 1.0, A, 1, G, 1, C, int(n));
    return;
  }
  if (use_blas(m, k, n)) {
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, int(m), int(n), int(k), 1.0, A, int(m), G, int(n), 1.0, C,
                int(n));
    return;
  }
  for (std::size_t l = 0; l < k; ++l) {
    for (std::size_t i = 0; i < m; ++i) {
      const double a = A[l * m + i];
      double* dst = C + i * n;
      const double* src = G + l * n;
      for (std::size_t j = 0; j < n; ++j) dst[j] += a * src[j];
    }
  }
}

}  // namespace

namespace {

// [batch][rows][cols] <-> [rows][batch * cols]
std::vector<double> pack_columns(const double* x, std::size_t batch, std::size_t rows, std::size_t cols) {
  std::vector<double> out(batch * rows * cols);
  for (std::size_t t = 0; t < batch; ++t) {
    for (std::size_t i = 0; i < rows; ++i) {
      std::copy_n(x + (t * rows + i) * cols, cols, out.data() + i * batch * cols + t * cols);
    }
  }
  return out;
}

void unpack_columns_add(const double* x, std::size_t batch, std::size_t rows, std::size_t cols, double* out) {
  for (std::size_t t = 0; t < batch; ++t) {
    for (std::size_t i = 0; i < rows; ++i) {
      const double* src = x + i * batch * cols + t * cols;
      double* dst = out + (t * rows + i) * cols;
      for (std::size_t j = 0; j < cols; ++j) dst[j] += src[j];
    }
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  const MatmulPlan plan = plan_matmul(a.shape(), b.shape());
  const auto [batch, p, q, r, a_batched, b_batched, out_shape] = plan;
  const double* A = a.value().data().data();
  const double* B = b.value().data().data();
  std::vector<double> c(batch * p * r, 0.0);
  if (a_batched && !b_batched) {
    gemm_nn(batch * p, q, r, A, B, c.data());
  } else if (!a_batched && b_batched) {
    const std::vector<double> bp = pack_columns(B, batch, q, r);
    std::vector<double> cp(p * batch * r, 0.0);
    gemm_nn(p, q, batch * r, A, bp.data(), cp.data());
    unpack_columns_add(cp.data(), batch, p, r, c.data());
  } else {
    for (std::size_t t = 0; t < batch; ++t) gemm_nn(p, q, r, A + t * p * q, B + t * q * r, c.data() + t * p * r);
  }
  return a.tape().record(
      Tensor(out_shape, std::move(c)), {a, b}, [a, b, plan](std::span<const double> g, Tape& tape) {
        const double* A = a.value().data().data();
        const double* B = b.value().data().data();
        const std::size_t batch = plan.batch, p = plan.p, q = plan.q, r = plan.r;
        double* ga = a.requires_grad() ? tape.grad_buffer(a).data() : nullptr;
        double* gb = b.requires_grad() ? tape.grad_buffer(b).data() : nullptr;
        if (plan.a_batched && !plan.b_batched) {
          if (ga) gemm_nt(batch * p, r, q, g.data(), B, ga);
          if (gb) gemm_tn(q, batch * p, r, A, g.data(), gb);
        } else if (!plan.a_batched && plan.b_batched) {
          const std::vector<double> gp = pack_columns(g.data(), batch, p, r);
          if (ga) {
            const std::vector<double> bp = pack_columns(B, batch, q, r);
            gemm_nt(p, batch * r, q, gp.data(), bp.data(), ga);
          }
          if (gb) {
            std::vector<double> gbp(q * batch * r, 0.0);
            gemm_tn(q, p, batch * r, A, gp.data(), gbp.data());
            unpack_columns_add(gbp.data(), batch, q, r, gb);
          }
        } else {
          for (std::size_t t = 0; t < batch; ++t) {
            if (ga) gemm_nt(p, r, q, g.data() + t * p * r, B + t * q * r, ga + t * p * q);
            if (gb) gemm_tn(q, p, r, A + t * p * q, g.data() + t * p * r, gb + t * q * r);
          }
        }
      });
}

Var transpose(Var a) {
  const Shape& s = a.shape();
  if (s.size() < 2) throw DimensionError("transpose: rank < 2 for " + shape_str(s));
  const std::size_t rows = s[s.size() - 2], cols = s.back();
  const std::size_t batch = a.value().size() / (rows * cols);
  Shape out = s;
  std::swap(out[out.size() - 2], out.back());
  const auto src = a.value().data();
  std::vector<double> d(src.size());
  for (std::size_t t = 0; t < batch; ++t) {
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) d[t * rows * cols + j * rows + i] = src[t * rows * cols + i * cols + j];
    }
  }
  return a.tape().record(Tensor(out, std::move(d)), {a},
                         [a, rows, cols, batch](std::span<const double> g, Tape& tape) {
                           auto& ga = tape.grad_buffer(a);
                           for (std::size_t t = 0; t < batch; ++t) {
                             for (std::size_t i = 0; i < rows; ++i) {
                               for (std::size_t j = 0; j < cols; ++j) {
                                 ga[t * rows * cols + i * cols + j] += g[t * rows * cols + j * rows + i];
                               }
                             }
                           }
                         });
}

Var reshape(Var a, Shape shape) {
  return a.tape().record(a.value().reshaped(std::move(shape)), {a},
                         [a](std::span<const double> g, Tape& tape) { accumulate(tape, a, g); });
}

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  const auto x = a.value().data(), y = b.value().data();
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[i] + y[i];
  return a.tape().record(Tensor(a.shape(), std::move(d)), {a, b},
                         [a, b](std::span<const double> g, Tape& tape) {
                           accumulate(tape, a, g);
                           accumulate(tape, b, g);
                         });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  const auto x = a.value().data(), y = b.value().data();
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[i] - y[i];
  return a.tape().record(Tensor(a.shape(), std::move(d)), {a, b},
                         [a, b](std::span<const double> g, Tape& tape) {
                           accumulate(tape, a, g);
                           if (b.requires_grad()) {
                             auto& gb = tape.grad_buffer(b);
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                           }
                         });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  const auto x = a.value().data(), y = b.value().data();
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[i] * y[i];
  return a.tape().record(Tensor(a.shape(), std::move(d)), {a, b},
                         [a, b](std::span<const double> g, Tape& tape) {
                           const auto x = a.value().data(), y = b.value().data();
                           if (a.requires_grad()) {
                             auto& ga = tape.grad_buffer(a);
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
                           }
                           if (b.requires_grad()) {
                             auto& gb = tape.grad_buffer(b);
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
                           }
                         });
}

Var scale(Var a, double s) {
  const auto x = a.value().data();
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[i] * s;
  return a.tape().record(Tensor(a.shape(), std::move(d)), {a},
                         [a, s](std::span<const double> g, Tape& tape) {
                           auto& ga = tape.grad_buffer(a);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
                         });
}

Var mul_const(Var a, const Tensor& c) {
  if (a.shape() != c.shape()) {
    throw DimensionError("mul_const: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(c.shape()));
  }
  const auto x = a.value().data(), y = c.data();
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[i] * y[i];
  return a.tape().record(Tensor(a.shape(), std::move(d)), {a},
                         [a, c](std::span<const double> g, Tape& tape) {
                           auto& ga = tape.grad_buffer(a);
                           const auto y = c.data();
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
                         });
}

Var add_bias(Var a, Var bias) {
  const std::size_t f = a.shape().back();
  if (bias.shape() != Shape{f}) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not fit " + shape_str(a.shape()));
  }
  const auto x = a.value().data(), b = bias.value().data();
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[i] + b[i % f];
  return a.tape().record(Tensor(a.shape(), std::move(d)), {a, bias},
                         [a, bias, f](std::span<const double> g, Tape& tape) {
                           accumulate(tape, a, g);
                           if (bias.requires_grad()) {
                             auto& gb = tape.grad_buffer(bias);
                             for (std::size_t i = 0; i < g.size(); ++i) gb[i % f] += g[i];
                           }
                         });
}

Var tile_rows(Var a, std::size_t n) {
  if (a.shape().size() != 1 || n == 0) {
    throw DimensionError("tile_rows: expects a vector, got " + shape_str(a.shape()));
  }
  const std::size_t f = a.shape()[0];
  const auto x = a.value().data();
  std::vector<double> d(n * f);
  for (std::size_t i = 0; i < n; ++i) std::copy(x.begin(), x.end(), d.begin() + i * f);
  return a.tape().record(Tensor({n, f}, std::move(d)), {a},
                         [a, f](std::span<const double> g, Tape& tape) {
                           auto& ga = tape.grad_buffer(a);
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i % f] += g[i];
                         });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape().record(Tensor::scalar(s), {a}, [a](std::span<const double> g, Tape& tape) {
    auto& ga = tape.grad_buffer(a);
    for (double& v : ga) v += g[0];
  });
}

Var mean_axis(Var a, std::size_t axis) {
  const Shape& s = a.shape();
  if (axis >= s.size()) throw DimensionError("mean_axis: axis out of range for " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  Shape out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != axis) out.push_back(s[i]);
  }
  if (out.empty()) out.push_back(1);
  const auto x = a.value().data();
  std::vector<double> d(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < n; ++k) {
      const double* src = x.data() + (o * n + k) * inner;
      double* dst = d.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (double& v : d) v *= inv;
  return a.tape().record(Tensor(out, std::move(d)), {a},
                         [a, outer, inner, n, inv](std::span<const double> g, Tape& tape) {
                           auto& ga = tape.grad_buffer(a);
                           for (std::size_t o = 0; o < outer; ++o) {
                             for (std::size_t k = 0; k < n; ++k) {
                               double* dst = ga.data() + (o * n + k) * inner;
                               const double* src = g.data() + o * inner;
                               for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i] * inv;
                             }
                           }
                         });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw DimensionError("concat: axis out of range for " + shape_str(s0));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == s0[i];
    if (!ok) throw DimensionError("concat: " + shape_str(s) + " incompatible with " + shape_str(s0));
    widths.push_back(s[axis] * inner);
    total += s[axis];
  }
  Shape out = s0;
  out[axis] = total;
  const std::size_t row = total * inner;
  std::vector<double> d(outer * row);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto x = parts[k].value().data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(x.data() + o * widths[k], widths[k], d.data() + o * row + offset);
    }
    offset += widths[k];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape().record(Tensor(out, std::move(d)), parts,
                                [inputs, widths, outer, row](std::span<const double> g, Tape& tape) {
                                  std::size_t offset = 0;
                                  for (std::size_t k = 0; k < inputs.size(); ++k) {
                                    if (inputs[k].requires_grad()) {
                                      auto& gk = tape.grad_buffer(inputs[k]);
                                      for (std::size_t o = 0; o < outer; ++o) {
                                        const double* src = g.data() + o * row + offset;
                                        double* dst = gk.data() + o * widths[k];
                                        for (std::size_t i = 0; i < widths[k]; ++i) dst[i] += src[i];
                                      }
                                    }
                                    offset += widths[k];
                                  }
                                });
}

Var softmax_rows(Var a, double scale) {
  if (!(scale > 0.0)) throw ContractError("softmax_rows: scale must be positive");
  const std::size_t cols = a.shape().back();
  const std::size_t rows = a.value().size() / cols;
  const auto x = a.value().data();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < rows; ++i) {
    const double* xr = x.data() + i * cols;
    double* yr = y.data() + i * cols;
    double m = xr[0];
    for (std::size_t j = 1; j < cols; ++j) m = std::max(m, xr[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      yr[j] = std::exp((xr[j] - m) / scale);
      z += yr[j];
    }
    for (std::size_t j = 0; j < cols; ++j) yr[j] /= z;
  }
  Tensor out(a.shape(), std::move(y));
  return a.tape().record(out, {a}, [a, out, rows, cols, scale](std::span<const double> g, Tape& tape) {
    auto& ga = tape.grad_buffer(a);
    const auto y = out.data();
    for (std::size_t i = 0; i < rows; ++i) {
      const double* yr = y.data() + i * cols;
      const double* gr = g.data() + i * cols;
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += gr[j] * yr[j];
      for (std::size_t j = 0; j < cols; ++j) ga[i * cols + j] += yr[j] * (gr[j] - dot) / scale;
    }
  });
}

Var leaky_relu(Var a, double slope) {
  const auto x = a.value().data();
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[i] > 0.0 ? x[i] : slope * x[i];
  return a.tape().record(Tensor(a.shape(), std::move(d)), {a},
                         [a, slope](std::span<const double> g, Tape& tape) {
                           auto& ga = tape.grad_buffer(a);
                           const auto x = a.value().data();
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] += x[i] > 0.0 ? g[i] : slope * g[i];
                         });
}

Var vn_clamp(Var q, Var d, double alpha) {
  require_same_shape("vn_clamp", q, d);
  if (q.shape().back() != 3) throw DimensionError("vn_clamp: last axis must be 3, got " + shape_str(q.shape()));
  const double c = 1.0 - alpha;
  const auto qv = q.value().data(), dv = d.value().data();
  std::vector<double> out(qv.begin(), qv.end());
  for (std::size_t i = 0; i < out.size(); i += 3) {
    const double* qi = qv.data() + i;
    const double* di = dv.data() + i;
    const double n2 = di[0] * di[0] + di[1] * di[1] + di[2] * di[2];
    const double dot = qi[0] * di[0] + qi[1] * di[1] + qi[2] * di[2];
    if (std::sqrt(n2) < 1e-12 || dot >= 0.0) continue;
    const double f = c * dot / n2;
    for (int k = 0; k < 3; ++k) out[i + k] = qi[k] - f * di[k];
  }
  return q.tape().record(Tensor(q.shape(), std::move(out)), {q, d},
                         [q, d, c](std::span<const double> g, Tape& tape) {
                           const auto qv = q.value().data(), dv = d.value().data();
                           std::vector<double>* gq = q.requires_grad() ? &tape.grad_buffer(q) : nullptr;
                           std::vector<double>* gd = d.requires_grad() ? &tape.grad_buffer(d) : nullptr;
                           for (std::size_t i = 0; i < g.size(); i += 3) {
                             const double* qi = qv.data() + i;
                             const double* di = dv.data() + i;
                             const double* gi = g.data() + i;
                             const double n2 = di[0] * di[0] + di[1] * di[1] + di[2] * di[2];
                             const double dot = qi[0] * di[0] + qi[1] * di[1] + qi[2] * di[2];
                             if (std::sqrt(n2) < 1e-12 || dot >= 0.0) {
                               if (gq) {
                                 for (int k = 0; k < 3; ++k) (*gq)[i + k] += gi[k];
                               }
                               continue;
                             }
                             const double gd_dot = gi[0] * di[0] + gi[1] * di[1] + gi[2] * di[2];
                             if (gq) {
                               for (int k = 0; k < 3; ++k) (*gq)[i + k] += gi[k] - c * gd_dot / n2 * di[k];
                             }
                             if (gd) {
                               for (int k = 0; k < 3; ++k) {
                                 (*gd)[i + k] -= c * (gd_dot * qi[k] / n2 + dot * gi[k] / n2 -
                                                      2.0 * dot * gd_dot * di[k] / (n2 * n2));
                               }
                             }
                           }
                         });
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  const std::size_t k = logits.shape().back();
  const std::size_t b = logits.value().size() / k;
  if (labels.size() != b) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_str(logits.shape()));
  }
  const auto x = logits.value().data();
  std::vector<double> probs(x.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw ContractError("cross_entropy: label " + std::to_string(labels[i]) + " outside [0," +
                          std::to_string(k) + ")");
    }
    const double* xr = x.data() + i * k;
    const double m = *std::max_element(xr, xr + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(xr[j] - m);
    const double lse = m + std::log(z);
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] = std::exp(xr[j] - lse);
    loss += lse - xr[labels[i]];
  }
  loss /= static_cast<double>(b);
  std::vector<int> lab(labels.begin(), labels.end());
  return logits.tape().record(Tensor::scalar(loss), {logits},
                              [logits, probs = std::move(probs), lab = std::move(lab), b, k](
                                  std::span<const double> g, Tape& tape) {
                                auto& gl = tape.grad_buffer(logits);
                                const double s = g[0] / static_cast<double>(b);
                                for (std::size_t i = 0; i < b; ++i) {
                                  for (std::size_t j = 0; j < k; ++j) {
                                    const double onehot = static_cast<int>(j) == lab[i] ? 1.0 : 0.0;
                                    gl[i * k + j] += s * (probs[i * k + j] - onehot);
                                  }
                                }
                              });
}

Var batch_norm(Var x, Var gamma, Var beta, bool train, std::span<const double> running_mean,
               std::span<const double> running_var, double eps, BatchStats* stats) {
  if (x.shape().size() != 2) throw DimensionError("batch_norm: expects [M x F], got " + shape_str(x.shape()));
  const std::size_t m = x.shape()[0], f = x.shape()[1];
  if (gamma.shape() != Shape{f} || beta.shape() != Shape{f}) {
    throw DimensionError("batch_norm: affine parameters do not match " + shape_str(x.shape()));
  }
  const auto xv = x.value().data();
  std::vector<double> mean(f, 0.0), var(f, 0.0);
  if (train) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < f; ++j) mean[j] += xv[i * f + j];
    }
    for (double& v : mean) v /= static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < f; ++j) {
        const double c = xv[i * f + j] - mean[j];
        var[j] += c * c;
      }
    }
    for (double& v : var) v /= static_cast<double>(m);
    if (stats) *stats = BatchStats{mean, var};
  } else {
    if (running_mean.size() != f || running_var.size() != f) {
      throw DimensionError("batch_norm: running statistics do not match feature count");
    }
    mean.assign(running_mean.begin(), running_mean.end());
    var.assign(running_var.begin(), running_var.end());
  }
  std::vector<double> inv(f);
  for (std::size_t j = 0; j < f; ++j) inv[j] = 1.0 / std::sqrt(var[j] + eps);
  std::vector<double> xhat(xv.size()), y(xv.size());
  const auto gv = gamma.value().data(), bv = beta.value().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < f; ++j) {
      xhat[i * f + j] = (xv[i * f + j] - mean[j]) * inv[j];
      y[i * f + j] = gv[j] * xhat[i * f + j] + bv[j];
    }
  }
  return x.tape().record(
      Tensor(x.shape(), std::move(y)), {x, gamma, beta},
      [x, gamma, beta, train, m, f, inv = std::move(inv), xhat = std::move(xhat)](std::span<const double> g,
                                                                                  Tape& tape) {
        const auto gv = gamma.value().data();
        std::vector<double> sum_g(f, 0.0), sum_gx(f, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < f; ++j) {
            sum_g[j] += g[i * f + j];
            sum_gx[j] += g[i * f + j] * xhat[i * f + j];
          }
        }
        if (beta.requires_grad()) {
          auto& gb = tape.grad_buffer(beta);
          for (std::size_t j = 0; j < f; ++j) gb[j] += sum_g[j];
        }
        if (gamma.requires_grad()) {
          auto& gg = tape.grad_buffer(gamma);
          for (std::size_t j = 0; j < f; ++j) gg[j] += sum_gx[j];
        }
        if (!x.requires_grad()) return;
        auto& gx = tape.grad_buffer(x);
        const double md = static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < f; ++j) {
            const double gi = g[i * f + j];
            if (train) {
              gx[i * f + j] += gv[j] * inv[j] / md * (md * gi - sum_g[j] - xhat[i * f + j] * sum_gx[j]);
            } else {
              gx[i * f + j] += gv[j] * inv[j] * gi;
            }
          }
        }
      });
}

}  // namespace vnt
