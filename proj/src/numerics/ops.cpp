#include "trunet/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>

namespace trunet::num {

namespace {

enum class Broadcast { kNone, kLeftScalar, kRightScalar };

Broadcast check_binary(const char* op, const Var& a, const Var& b) {
  if (a.shape() == b.shape()) return Broadcast::kNone;
  if (a.size() == 1) return Broadcast::kLeftScalar;
  if (b.size() == 1) return Broadcast::kRightScalar;
  throw ShapeError(op, "shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

void accumulate(Node* target, const Tensor& g) {
  if (!target->requires_grad) return;
  Tensor& t = target->grad_buffer();
  double* dst = t.ptr();
  const double* src = g.ptr();
  for (std::size_t i = 0; i < t.size(); ++i) dst[i] += src[i];
}

template <class Fn, class Deriv>
Var unary(const char* op, const Var& a, Fn fn, Deriv deriv) {
  Tensor out(a.shape());
  const double* x = a.value().ptr();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(x[i]);
  return detail::make_result(op, std::move(out), {&a}, [a, deriv](Node& self) {
    if (!a.requires_grad()) return;
    Tensor& ga = a.node()->grad_buffer();
    const double* xv = a.value().ptr();
    const double* yv = self.value.ptr();
    const double* g = self.grad.ptr();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * deriv(xv[i], yv[i]);
  });
}

// Splits a shape around `axis` into (outer, length, inner) extents.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

// C[m,p] += A[m,n] B[n,p]
void gemm_nn(std::size_t m, std::size_t n, std::size_t p, const double* A, const double* B, double* C) {
  for (std::size_t i = 0; i < m; ++i) {
    double* c = C + i * p;
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = A[i * n + k];
      if (aik == 0.0) continue;
      const double* b = B + k * p;
      for (std::size_t j = 0; j < p; ++j) c[j] += aik * b[j];
    }
  }
}

// Dot product with four interleaved partial sums so the loop vectorises
// under strict FP semantics; the summation order is fixed, hence results
// are reproducible.
double dot_lanes(const double* x, const double* y, std::size_t n) {
  double l[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    for (std::size_t q = 0; q < 4; ++q) l[q] += x[j + q] * y[j + q];
  }
  double s = (l[0] + l[1]) + (l[2] + l[3]);
  for (; j < n; ++j) s += x[j] * y[j];
  return s;
}

// A[m,n] += C[m,p] B[n,p]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t p, const double* C, const double* B, double* A) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* c = C + i * p;
    for (std::size_t k = 0; k < n; ++k) {
      A[i * n + k] += dot_lanes(c, B + k * p, p);
    }
  }
}

// B[n,p] += A[m,n]^T C[m,p]
void gemm_tn(std::size_t m, std::size_t n, std::size_t p, const double* A, const double* C, double* B) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* c = C + i * p;
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = A[i * n + k];
      if (aik == 0.0) continue;
      double* b = B + k * p;
      for (std::size_t j = 0; j < p; ++j) b[j] += aik * c[j];
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
  const Broadcast bc = check_binary("add", a, b);
  const Shape& shape = bc == Broadcast::kLeftScalar ? b.shape() : a.shape();
  Tensor out(shape);
  const double* x = a.value().ptr();
  const double* y = b.value().ptr();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = x[bc == Broadcast::kLeftScalar ? 0 : i] + y[bc == Broadcast::kRightScalar ? 0 : i];
  }
  return detail::make_result("add", std::move(out), {&a, &b}, [a, b, bc](Node& self) {
    const Tensor& g = self.grad;
    for (auto [v, reduce] : {std::pair{a, bc == Broadcast::kLeftScalar}, std::pair{b, bc == Broadcast::kRightScalar}}) {
      if (!v.requires_grad()) continue;
      if (reduce) {
        v.node()->grad_buffer()[0] += std::accumulate(g.data().begin(), g.data().end(), 0.0);
      } else {
        accumulate(v.node(), g);
      }
    }
  });
}

Var sub(const Var& a, const Var& b) { return add(a, neg(b)); }

Var mul(const Var& a, const Var& b) {
  const Broadcast bc = check_binary("mul", a, b);
  const Shape& shape = bc == Broadcast::kLeftScalar ? b.shape() : a.shape();
  Tensor out(shape);
  const double* x = a.value().ptr();
  const double* y = b.value().ptr();
  const std::size_t sa = bc == Broadcast::kLeftScalar ? 0 : 1;
  const std::size_t sb = bc == Broadcast::kRightScalar ? 0 : 1;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i * sa] * y[i * sb];
  return detail::make_result("mul", std::move(out), {&a, &b}, [a, b, sa, sb](Node& self) {
    const double* g = self.grad.ptr();
    const std::size_t n = self.grad.size();
    const double* x = a.value().ptr();
    const double* y = b.value().ptr();
    if (a.requires_grad()) {
      double* ga = a.node()->grad_buffer().ptr();
      for (std::size_t i = 0; i < n; ++i) ga[i * sa] += g[i] * y[i * sb];
    }
    if (b.requires_grad()) {
      double* gb = b.node()->grad_buffer().ptr();
      for (std::size_t i = 0; i < n; ++i) gb[i * sb] += g[i] * x[i * sa];
    }
  });
}

Var scale(const Var& a, double s) {
  return unary("scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary("add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var clamp_min(const Var& a, double floor) {
  return unary(
      "clamp_min", a, [floor](double x) { return x > floor ? x : floor; },
      [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

Var exp(const Var& a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var abs(const Var& a) {
  return unary(
      "abs", a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var pow(const Var& a, double c) {
  if (c < 1.0) {
    return unary(
        "pow", a, [c](double x) { return std::pow(x > kPowFloor ? x : kPowFloor, c); },
        [c](double x, double) { return x > kPowFloor ? c * std::pow(x, c - 1.0) : 0.0; });
  }
  return unary(
      "pow", a, [c](double x) { return std::pow(x, c); }, [c](double x, double) { return c * std::pow(x, c - 1.0); });
}

Var sin(const Var& a) {
  return unary("sin", a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Var cos(const Var& a) {
  return unary("cos", a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Var tanh(const Var& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var leaky_relu(const Var& a, double negative_slope) {
  return unary(
      "leaky_relu", a, [negative_slope](double x) { return x > 0.0 ? x : negative_slope * x; },
      [negative_slope](double x, double) { return x > 0.0 ? 1.0 : negative_slope; });
}

Var atan2(const Var& y, const Var& x) {
  if (y.shape() != x.shape()) throw ShapeError("atan2", to_string(y.shape()) + " vs " + to_string(x.shape()));
  Tensor out(y.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::atan2(y.value()[i], x.value()[i]);
  return detail::make_result("atan2", std::move(out), {&y, &x}, [y, x](Node& self) {
    const double* g = self.grad.ptr();
    const double* yv = y.value().ptr();
    const double* xv = x.value().ptr();
    double* gy = y.requires_grad() ? y.node()->grad_buffer().ptr() : nullptr;
    double* gx = x.requires_grad() ? x.node()->grad_buffer().ptr() : nullptr;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double r2 = xv[i] * xv[i] + yv[i] * yv[i];
      if (r2 == 0.0) continue;
      if (gy) gy[i] += g[i] * xv[i] / r2;
      if (gx) gx[i] -= g[i] * yv[i] / r2;
    }
  });
}

Var magnitude(const Var& re, const Var& im, double eps) {
  if (re.shape() != im.shape()) throw ShapeError("magnitude", to_string(re.shape()) + " vs " + to_string(im.shape()));
  if (!(eps > 0.0)) throw ShapeError("magnitude", "eps must be positive");
  Tensor out(re.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::sqrt(re.value()[i] * re.value()[i] + im.value()[i] * im.value()[i] + eps);
  }
  const Tensor r = out;
  return detail::make_result("magnitude", std::move(out), {&re, &im}, [re, im, r](Node& self) {
    const double* g = self.grad.ptr();
    double* gr = re.requires_grad() ? re.node()->grad_buffer().ptr() : nullptr;
    double* gi = im.requires_grad() ? im.node()->grad_buffer().ptr() : nullptr;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (gr) gr[i] += g[i] * re.value()[i] / r[i];
      if (gi) gi[i] += g[i] * im.value()[i] / r[i];
    }
  });
}

// ---------------------------------------------------------------- linear algebra

Var matmul(const Var& a, const Var& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.size() == 2 && sa.size() >= 2 && sa.back() == sb[0]) {
    const std::size_t n = sb[0], p = sb[1];
    const std::size_t m = a.size() / n;
    Shape so = sa;
    so.back() = p;
    Tensor out(so);
    gemm_nn(m, n, p, a.value().ptr(), b.value().ptr(), out.ptr());
    return detail::make_result("matmul", std::move(out), {&a, &b}, [a, b, m, n, p](Node& self) {
      if (a.requires_grad()) gemm_nt(m, n, p, self.grad.ptr(), b.value().ptr(), a.node()->grad_buffer().ptr());
      if (b.requires_grad()) gemm_tn(m, n, p, a.value().ptr(), self.grad.ptr(), b.node()->grad_buffer().ptr());
    });
  }
  if (sa.size() == 3 && sb.size() == 3 && sa[0] == sb[0] && sa[2] == sb[1]) {
    const std::size_t batch = sa[0], m = sa[1], n = sa[2], p = sb[2];
    Tensor out(Shape{batch, m, p});
    for (std::size_t bi = 0; bi < batch; ++bi) {
      gemm_nn(m, n, p, a.value().ptr() + bi * m * n, b.value().ptr() + bi * n * p, out.ptr() + bi * m * p);
    }
    return detail::make_result("matmul", std::move(out), {&a, &b}, [a, b, batch, m, n, p](Node& self) {
      for (std::size_t bi = 0; bi < batch; ++bi) {
        const double* g = self.grad.ptr() + bi * m * p;
        if (a.requires_grad()) {
          gemm_nt(m, n, p, g, b.value().ptr() + bi * n * p, a.node()->grad_buffer().ptr() + bi * m * n);
        }
        if (b.requires_grad()) {
          gemm_tn(m, n, p, a.value().ptr() + bi * m * n, g, b.node()->grad_buffer().ptr() + bi * n * p);
        }
      }
    });
  }
  throw ShapeError("matmul", to_string(sa) + " x " + to_string(sb));
}

Var transpose(const Var& a) {
  if (a.shape().size() == 2) return permute(a, {1, 0});
  if (a.shape().size() == 3) return permute(a, {0, 2, 1});
  throw ShapeError("transpose", "expected rank 2 or 3, got " + to_string(a.shape()));
}

Var permute(const Var& a, const std::vector<std::size_t>& axes) {
  const Shape& s = a.shape();
  const std::size_t r = s.size();
  std::vector<bool> seen(r, false);
  if (axes.size() != r) throw ShapeError("permute", "axes do not match rank of " + to_string(s));
  for (std::size_t ax : axes) {
    if (ax >= r || seen[ax]) throw ShapeError("permute", "invalid axes for " + to_string(s));
    seen[ax] = true;
  }
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * s[i];
  Shape so(r);
  std::vector<std::size_t> stride(r);  // input stride for each output axis
  for (std::size_t i = 0; i < r; ++i) {
    so[i] = s[axes[i]];
    stride[i] = in_stride[axes[i]];
  }
  // Output-ordered gather index, reused by backward as a scatter index.
  auto index = std::make_shared<std::vector<std::size_t>>(a.size());
  std::vector<std::size_t> counter(r, 0);
  std::size_t offset = 0;
  for (std::size_t o = 0; o < a.size(); ++o) {
    (*index)[o] = offset;
    for (std::size_t d = r; d-- > 0;) {
      if (++counter[d] < so[d]) {
        offset += stride[d];
        break;
      }
      offset -= stride[d] * (so[d] - 1);
      counter[d] = 0;
    }
  }
  Tensor out(so);
  for (std::size_t o = 0; o < out.size(); ++o) out[o] = a.value()[(*index)[o]];
  return detail::make_result("permute", std::move(out), {&a}, [a, index](Node& self) {
    if (!a.requires_grad()) return;
    double* ga = a.node()->grad_buffer().ptr();
    for (std::size_t o = 0; o < self.grad.size(); ++o) ga[(*index)[o]] += self.grad[o];
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return detail::make_result("reshape", std::move(out), {&a}, [a](Node& self) {
    if (a.requires_grad()) accumulate(a.node(), self.grad);
  });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat", "no operands");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw ShapeError("concat", "axis out of range for " + to_string(s0));
  Shape so = s0;
  so[axis] = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == s0[i];
    if (!ok) throw ShapeError("concat", to_string(s0) + " vs " + to_string(s) + " along axis " + std::to_string(axis));
    so[axis] += s[axis];
  }
  const AxisSplit outer = split_at(so, axis);
  Tensor out(so);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const std::size_t block = p.shape()[axis] * outer.inner;
    for (std::size_t o = 0; o < outer.outer; ++o) {
      std::copy_n(p.value().ptr() + o * block, block, out.ptr() + o * outer.len * outer.inner + offset);
    }
    offset += block;
  }
  return detail::make_result("concat", std::move(out), parts, [parts, outer](Node& self) {
    std::size_t off = 0;
    for (const Var& p : parts) {
      const std::size_t block = p.size() / outer.outer;
      if (p.requires_grad()) {
        double* g = p.node()->grad_buffer().ptr();
        for (std::size_t o = 0; o < outer.outer; ++o) {
          const double* src = self.grad.ptr() + o * outer.len * outer.inner + off;
          for (std::size_t i = 0; i < block; ++i) g[o * block + i] += src[i];
        }
      }
      off += block;
    }
  });
}

Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = a.shape();
  if (axis >= s.size() || begin > end || end > s[axis]) {
    throw ShapeError("slice", "range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                                  std::to_string(axis) + " of " + to_string(s));
  }
  const AxisSplit sp = split_at(s, axis);
  Shape so = s;
  so[axis] = end - begin;
  Tensor out(so);
  const std::size_t block = (end - begin) * sp.inner;
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::copy_n(a.value().ptr() + (o * sp.len + begin) * sp.inner, block, out.ptr() + o * block);
  }
  return detail::make_result("slice", std::move(out), {&a}, [a, sp, begin, block](Node& self) {
    if (!a.requires_grad()) return;
    double* g = a.node()->grad_buffer().ptr();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      double* dst = g + (o * sp.len + begin) * sp.inner;
      const double* src = self.grad.ptr() + o * block;
      for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
    }
  });
}

// ---------------------------------------------------------------- normalisation

Var softmax(const Var& a, std::size_t axis) {
  if (axis >= a.shape().size()) throw ShapeError("softmax", "axis out of range for " + to_string(a.shape()));
  const AxisSplit sp = split_at(a.shape(), axis);
  Tensor out(a.shape());
  const double* x = a.value().ptr();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.len * sp.inner + in;
      double mx = x[base];
      for (std::size_t l = 1; l < sp.len; ++l) mx = std::max(mx, x[base + l * sp.inner]);
      double z = 0.0;
      for (std::size_t l = 0; l < sp.len; ++l) {
        const double e = std::exp(x[base + l * sp.inner] - mx);
        out[base + l * sp.inner] = e;
        z += e;
      }
      for (std::size_t l = 0; l < sp.len; ++l) out[base + l * sp.inner] /= z;
    }
  }
  return detail::make_result("softmax", std::move(out), {&a}, [a, sp](Node& self) {
    if (!a.requires_grad()) return;
    double* ga = a.node()->grad_buffer().ptr();
    const double* y = self.value.ptr();
    const double* g = self.grad.ptr();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t in = 0; in < sp.inner; ++in) {
        const std::size_t base = o * sp.len * sp.inner + in;
        double s = 0.0;
        for (std::size_t l = 0; l < sp.len; ++l) s += g[base + l * sp.inner] * y[base + l * sp.inner];
        for (std::size_t l = 0; l < sp.len; ++l) {
          const std::size_t i = base + l * sp.inner;
          ga[i] += y[i] * (g[i] - s);
        }
      }
    }
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  if (x.shape().empty()) throw ShapeError("layer_norm", "rank-0 input");
  const std::size_t d = x.shape().back();
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw ShapeError("layer_norm", "input " + to_string(x.shape()) + " with gain " + to_string(gain.shape()) +
                                       " and bias " + to_string(bias.shape()));
  }
  const std::size_t rows = x.size() / d;
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv = std::make_shared<std::vector<double>>(rows);
  Tensor out(x.shape());
  const double* xv = x.value().ptr();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv + r * d;
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += row[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<double>(d);
    const double iv = 1.0 / std::sqrt(var + eps);
    (*inv)[r] = iv;
    for (std::size_t i = 0; i < d; ++i) {
      const double xh = (row[i] - mu) * iv;
      (*xhat)[r * d + i] = xh;
      out[r * d + i] = xh * gain.value()[i] + bias.value()[i];
    }
  }
  return detail::make_result("layer_norm", std::move(out), {&x, &gain, &bias},
                             [x, gain, bias, xhat, inv, rows, d](Node& self) {
                               const double* g = self.grad.ptr();
                               if (gain.requires_grad() || bias.requires_grad()) {
                                 for (std::size_t r = 0; r < rows; ++r) {
                                   for (std::size_t i = 0; i < d; ++i) {
                                     if (gain.requires_grad()) gain.node()->grad_buffer()[i] += g[r * d + i] * (*xhat)[r * d + i];
                                     if (bias.requires_grad()) bias.node()->grad_buffer()[i] += g[r * d + i];
                                   }
                                 }
                               }
                               if (!x.requires_grad()) return;
                               double* gx = x.node()->grad_buffer().ptr();
                               const double* gv = gain.value().ptr();
                               const double dd = static_cast<double>(d);
                               for (std::size_t r = 0; r < rows; ++r) {
                                 double s1 = 0.0, s2 = 0.0;
                                 for (std::size_t i = 0; i < d; ++i) {
                                   const double dxh = g[r * d + i] * gv[i];
                                   s1 += dxh;
                                   s2 += dxh * (*xhat)[r * d + i];
                                 }
                                 for (std::size_t i = 0; i < d; ++i) {
                                   const double dxh = g[r * d + i] * gv[i];
                                   gx[r * d + i] += (*inv)[r] / dd * (dd * dxh - s1 - (*xhat)[r * d + i] * s2);
                                 }
                               }
                             });
}

Var add_bias(const Var& a, const Var& bias) {
  if (a.shape().empty() || bias.shape() != Shape{a.shape().back()}) {
    throw ShapeError("add_bias", to_string(a.shape()) + " + " + to_string(bias.shape()));
  }
  const std::size_t d = bias.size();
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias.value()[i % d];
  return detail::make_result("add_bias", std::move(out), {&a, &bias}, [a, bias, d](Node& self) {
    if (a.requires_grad()) accumulate(a.node(), self.grad);
    if (bias.requires_grad()) {
      double* gb = bias.node()->grad_buffer().ptr();
      for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i % d] += self.grad[i];
    }
  });
}

// ---------------------------------------------------------------- convolution

std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad_before,
                          std::size_t pad_after) {
  const std::size_t padded = in + pad_before + pad_after;
  if (padded < kernel || stride == 0) return 0;
  return (padded - kernel) / stride + 1;
}

namespace {

struct ConvDims {
  std::size_t cin, h, w;     // conv input
  std::size_t cout, ho, wo;  // conv output
  std::size_t kh, kw;
  ConvGeometry g;
};

// Output column range [lo, hi) whose input column ow*sw + j - pl lies in [0, w).
inline void col_range(const ConvDims& d, std::size_t j, std::size_t& lo, std::size_t& hi) {
  const long sw = static_cast<long>(d.g.stride_w);
  const long off = static_cast<long>(j) - static_cast<long>(d.g.pad_left);
  long l = off >= 0 ? 0 : (-off + sw - 1) / sw;
  long h = (static_cast<long>(d.w) - 1 - off);
  h = h < 0 ? 0 : h / sw + 1;
  h = std::min(h, static_cast<long>(d.wo));
  lo = static_cast<std::size_t>(std::max(l, 0L));
  hi = static_cast<std::size_t>(std::max(h, static_cast<long>(lo)));
}

inline bool input_row(const ConvDims& d, std::size_t oh, std::size_t i, std::size_t& ih) {
  const long r = static_cast<long>(oh * d.g.stride_h + i) - static_cast<long>(d.g.pad_top);
  if (r < 0 || r >= static_cast<long>(d.h)) return false;
  ih = static_cast<std::size_t>(r);
  return true;
}

// y[cout,ho,wo] += conv(x, w)
void conv_fwd(const ConvDims& d, const double* x, const double* w, double* y) {
  const std::size_t sw = d.g.stride_w;
  for (std::size_t co = 0; co < d.cout; ++co) {
    for (std::size_t ci = 0; ci < d.cin; ++ci) {
      for (std::size_t i = 0; i < d.kh; ++i) {
        for (std::size_t j = 0; j < d.kw; ++j) {
          const double wv = w[((co * d.cin + ci) * d.kh + i) * d.kw + j];
          if (wv == 0.0) continue;
          std::size_t lo, hi;
          col_range(d, j, lo, hi);
          for (std::size_t oh = 0; oh < d.ho; ++oh) {
            std::size_t ih;
            if (!input_row(d, oh, i, ih)) continue;
            const double* xr = x + (ci * d.h + ih) * d.w;
            const long off = static_cast<long>(j) - static_cast<long>(d.g.pad_left);
            double* yr = y + (co * d.ho + oh) * d.wo;
            for (std::size_t ow = lo; ow < hi; ++ow) yr[ow] += wv * xr[static_cast<long>(ow * sw) + off];
          }
        }
      }
    }
  }
}

// dx[cin,h,w] += conv^T(dy, w)
void conv_bwd_data(const ConvDims& d, const double* dy, const double* w, double* dx) {
  const std::size_t sw = d.g.stride_w;
  for (std::size_t co = 0; co < d.cout; ++co) {
    for (std::size_t ci = 0; ci < d.cin; ++ci) {
      for (std::size_t i = 0; i < d.kh; ++i) {
        for (std::size_t j = 0; j < d.kw; ++j) {
          const double wv = w[((co * d.cin + ci) * d.kh + i) * d.kw + j];
          if (wv == 0.0) continue;
          std::size_t lo, hi;
          col_range(d, j, lo, hi);
          for (std::size_t oh = 0; oh < d.ho; ++oh) {
            std::size_t ih;
            if (!input_row(d, oh, i, ih)) continue;
            double* xr = dx + (ci * d.h + ih) * d.w;
            const long off = static_cast<long>(j) - static_cast<long>(d.g.pad_left);
            const double* yr = dy + (co * d.ho + oh) * d.wo;
            for (std::size_t ow = lo; ow < hi; ++ow) xr[static_cast<long>(ow * sw) + off] += wv * yr[ow];
          }
        }
      }
    }
  }
}

// dw[cout,cin,kh,kw] += sum over positions of dy * x
void conv_bwd_weight(const ConvDims& d, const double* x, const double* dy, double* dw) {
  const std::size_t sw = d.g.stride_w;
  for (std::size_t co = 0; co < d.cout; ++co) {
    for (std::size_t ci = 0; ci < d.cin; ++ci) {
      for (std::size_t i = 0; i < d.kh; ++i) {
        for (std::size_t j = 0; j < d.kw; ++j) {
          std::size_t lo, hi;
          col_range(d, j, lo, hi);
          double s = 0.0;
          for (std::size_t oh = 0; oh < d.ho; ++oh) {
            std::size_t ih;
            if (!input_row(d, oh, i, ih)) continue;
            const double* xr = x + (ci * d.h + ih) * d.w;
            const long off = static_cast<long>(j) - static_cast<long>(d.g.pad_left);
            const double* yr = dy + (co * d.ho + oh) * d.wo;
            for (std::size_t ow = lo; ow < hi; ++ow) s += yr[ow] * xr[static_cast<long>(ow * sw) + off];
          }
          dw[((co * d.cin + ci) * d.kh + i) * d.kw + j] += s;
        }
      }
    }
  }
}

void add_channel_bias(const double* b, std::size_t channels, std::size_t plane, double* y) {
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) y[c * plane + i] += b[c];
  }
}

void channel_bias_grad(const double* g, std::size_t channels, std::size_t plane, double* gb) {
  for (std::size_t c = 0; c < channels; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += g[c * plane + i];
    gb[c] += s;
  }
}

void check_geometry(const char* op, const ConvGeometry& g) {
  if (g.stride_h == 0 || g.stride_w == 0) throw ShapeError(op, "zero stride");
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var* bias, const ConvGeometry& g) {
  check_geometry("conv2d", g);
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sx.size() != 3 || sw.size() != 4 || sw[1] != sx[0]) {
    throw ShapeError("conv2d", "input " + to_string(sx) + " with weight " + to_string(sw));
  }
  ConvDims d{sx[0], sx[1], sx[2], sw[0], 0, 0, sw[2], sw[3], g};
  d.ho = conv_out_size(d.h, d.kh, g.stride_h, g.pad_top, g.pad_bottom);
  d.wo = conv_out_size(d.w, d.kw, g.stride_w, g.pad_left, g.pad_right);
  if (d.ho == 0 || d.wo == 0) throw ShapeError("conv2d", "kernel larger than padded input " + to_string(sx));
  if (bias && bias->shape() != Shape{d.cout}) throw ShapeError("conv2d", "bias " + to_string(bias->shape()));
  Tensor out(Shape{d.cout, d.ho, d.wo});
  conv_fwd(d, x.value().ptr(), w.value().ptr(), out.ptr());
  if (bias) add_channel_bias(bias->value().ptr(), d.cout, d.ho * d.wo, out.ptr());
  Var b = bias ? *bias : constant(Tensor(Shape{d.cout}));
  return detail::make_result("conv2d", std::move(out), {&x, &w, &b}, [x, w, b, d](Node& self) {
    if (x.requires_grad()) conv_bwd_data(d, self.grad.ptr(), w.value().ptr(), x.node()->grad_buffer().ptr());
    if (w.requires_grad()) conv_bwd_weight(d, x.value().ptr(), self.grad.ptr(), w.node()->grad_buffer().ptr());
    if (b.requires_grad()) channel_bias_grad(self.grad.ptr(), d.cout, d.ho * d.wo, b.node()->grad_buffer().ptr());
  });
}

Var conv2d_transpose(const Var& y, const Var& w, const Var* bias, const ConvGeometry& g) {
  check_geometry("conv2d_transpose", g);
  const Shape& sy = y.shape();
  const Shape& sw = w.shape();
  if (sy.size() != 3 || sw.size() != 4 || sw[0] != sy[0]) {
    throw ShapeError("conv2d_transpose", "input " + to_string(sy) + " with weight " + to_string(sw));
  }
  ConvDims d{sw[1], 0, 0, sw[0], sy[1], sy[2], sw[2], sw[3], g};
  const long h = static_cast<long>((d.ho - 1) * g.stride_h + d.kh) - static_cast<long>(g.pad_top + g.pad_bottom);
  const long wd = static_cast<long>((d.wo - 1) * g.stride_w + d.kw) - static_cast<long>(g.pad_left + g.pad_right);
  if (h <= 0 || wd <= 0) throw ShapeError("conv2d_transpose", "padding exceeds output extent for " + to_string(sy));
  d.h = static_cast<std::size_t>(h);
  d.w = static_cast<std::size_t>(wd);
  if (bias && bias->shape() != Shape{d.cin}) throw ShapeError("conv2d_transpose", "bias " + to_string(bias->shape()));
  Tensor out(Shape{d.cin, d.h, d.w});
  conv_bwd_data(d, y.value().ptr(), w.value().ptr(), out.ptr());
  if (bias) add_channel_bias(bias->value().ptr(), d.cin, d.h * d.w, out.ptr());
  Var b = bias ? *bias : constant(Tensor(Shape{d.cin}));
  return detail::make_result("conv2d_transpose", std::move(out), {&y, &w, &b}, [y, w, b, d](Node& self) {
    if (y.requires_grad()) conv_fwd(d, self.grad.ptr(), w.value().ptr(), y.node()->grad_buffer().ptr());
    if (w.requires_grad()) conv_bwd_weight(d, self.grad.ptr(), y.value().ptr(), w.node()->grad_buffer().ptr());
    if (b.requires_grad()) channel_bias_grad(self.grad.ptr(), d.cin, d.h * d.w, b.node()->grad_buffer().ptr());
  });
}

// ---------------------------------------------------------------- reductions

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return detail::make_result("sum", Tensor::scalar(s), {&a}, [a](Node& self) {
    if (!a.requires_grad()) return;
    const double g = self.grad[0];
    for (double& v : a.node()->grad_buffer().data()) v += g;
  });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Var sum_axis(const Var& a, std::size_t axis) {
  if (axis >= a.shape().size()) throw ShapeError("sum_axis", "axis out of range for " + to_string(a.shape()));
  const AxisSplit sp = split_at(a.shape(), axis);
  Shape so = a.shape();
  so.erase(so.begin() + static_cast<long>(axis));
  Tensor out(so);
  const double* x = a.value().ptr();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t l = 0; l < sp.len; ++l) {
      const double* src = x + (o * sp.len + l) * sp.inner;
      double* dst = out.ptr() + o * sp.inner;
      for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
    }
  }
  return detail::make_result("sum_axis", std::move(out), {&a}, [a, sp](Node& self) {
    if (!a.requires_grad()) return;
    double* ga = a.node()->grad_buffer().ptr();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t l = 0; l < sp.len; ++l) {
        double* dst = ga + (o * sp.len + l) * sp.inner;
        const double* src = self.grad.ptr() + o * sp.inner;
        for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

}  // namespace trunet::num
