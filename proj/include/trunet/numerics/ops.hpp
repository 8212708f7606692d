#pragma once

#include <cstddef>
#include <vector>

#include "trunet/numerics/tape.hpp"

namespace trunet::num {

// Elementwise binary ops. Operands must have equal shapes, except that either
// side may be a one-element tensor, which is broadcast.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);

Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);

// max(a, floor). Gradient passes where a > floor and is zero elsewhere.
Var clamp_min(const Var& a, double floor);

// a[..., m, n] x b[n, p] -> [..., m, p]   (weight applied to the last axis)
// a[B, m, n]   x b[B, n, p] -> [B, m, p]  (batched)
Var matmul(const Var& a, const Var& b);

// Swaps the last two axes (rank 2 or 3).
Var transpose(const Var& a);
Var permute(const Var& a, const std::vector<std::size_t>& axes);
Var reshape(const Var& a, Shape shape);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end);

Var exp(const Var& a);
Var log(const Var& a);
// Real absolute value; subgradient 0 at 0.
Var abs(const Var& a);
// x^c. For c < 1 the base is floored at kPowFloor before evaluation and the
// gradient is zero wherever the floor is active. For c >= 1 no floor applies.
Var pow(const Var& a, double c);
Var sin(const Var& a);
Var cos(const Var& a);
// Elementwise angle of (x, y); equal shapes required.
Var atan2(const Var& y, const Var& x);
// sqrt(re^2 + im^2 + eps), smooth everywhere for eps > 0.
Var magnitude(const Var& re, const Var& im, double eps = 1e-12);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
// Negative slope 0 gives ReLU. Subgradient at 0 is the negative-side slope.
Var leaky_relu(const Var& a, double negative_slope = 0.2);

Var softmax(const Var& a, std::size_t axis);
// Normalises over the last axis, then applies gain and bias of that length.
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
// Adds a bias vector along the last axis.
Var add_bias(const Var& a, const Var& bias);

struct ConvGeometry {
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_top = 0;
  std::size_t pad_bottom = 0;
  std::size_t pad_left = 0;
  std::size_t pad_right = 0;
};

// x[Cin, H, W], w[Cout, Cin, kh, kw], bias[Cout] (optional) -> [Cout, Ho, Wo]
// with zero padding. Ho = (H + pad_top + pad_bottom - kh) / stride_h + 1.
Var conv2d(const Var& x, const Var& w, const Var* bias, const ConvGeometry& g);
// Adjoint of conv2d with the same weight and geometry:
// y[Cin', Ho, Wo], w[Cin', Cout', kh, kw], bias[Cout'] -> [Cout', H, W] with
// H = (Ho - 1) * stride_h + kh - pad_top - pad_bottom.
Var conv2d_transpose(const Var& y, const Var& w, const Var* bias, const ConvGeometry& g);

std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad_before,
                          std::size_t pad_after);

Var sum(const Var& a);
Var mean(const Var& a);
// Sums out one axis; the result drops that axis.
Var sum_axis(const Var& a, std::size_t axis);

constexpr double kPowFloor = 1e-8;

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

}  // namespace trunet::num
