#include "trunet/tnet/tnet.hpp"

#include <cmath>

#include "trunet/numerics/ops.hpp"

namespace trunet::tnet {

using num::Shape;
using num::Tensor;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kCat:
      return "cat";
    case Variant::kRealImag:
      return "realimag";
    case Variant::kMagPhase:
      return "magphase";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  if (name == "cat") return Variant::kCat;
  if (name == "realimag") return Variant::kRealImag;
  if (name == "magphase") return Variant::kMagPhase;
  throw ConfigError("tnet: unknown variant '" + name + "' (expected cat, realimag or magphase)");
}

void TNetConfig::validate() const {
  if (dim == 0 || heads == 0) throw ConfigError("tnet: D and H must be positive");
  if (dim % heads != 0) {
    throw ConfigError("tnet: D=" + std::to_string(dim) + " is not divisible by H=" + std::to_string(heads));
  }
  if (blocks == 0) throw ConfigError("tnet: at least one block required");
  if (bins == 0) throw ConfigError("tnet: F must be positive");
}

namespace {

void check_batched(const char* op, const Var& a) {
  if (a.shape().size() != 3) throw num::ShapeError(op, "expected [B, M, d], got " + num::to_string(a.shape()));
}

Var heads_slice(const Var& a, std::size_t h, std::size_t dh) { return num::slice(a, 2, h * dh, (h + 1) * dh); }

Var tile_frames(const Tensor& pe, std::size_t frames) {
  Tensor t(Shape{frames, pe.dim(0), pe.dim(1)});
  for (std::size_t k = 0; k < frames; ++k) std::copy(pe.data().begin(), pe.data().end(), t.ptr() + k * pe.size());
  return num::constant(std::move(t));
}

Var linear(const Var& x, const Var& w, const Var& b) { return num::add_bias(num::matmul(x, w), b); }

Var finish_block(const std::vector<Var>& head_outputs, const Var& residual, const BlockWeights& w) {
  const Var mh = num::matmul(num::concat(head_outputs, 2), w.wmh);
  const Var z = num::layer_norm(residual + mh, w.ln1_gain, w.ln1_bias);
  const Var ff = linear(num::leaky_relu(linear(z, w.ff1, w.ff1_bias), 0.0), w.ff2, w.ff2_bias);
  return num::layer_norm(z + ff, w.ln2_gain, w.ln2_bias);
}

}  // namespace

AttentionOutput attention_head(const Var& q, const Var& k, const Var& v) {
  check_batched("attention_head", q);
  const double inv = 1.0 / std::sqrt(static_cast<double>(q.dim(2)));
  const Var scores = num::scale(num::matmul(q, num::transpose(k)), inv);
  const Var weights = num::softmax(scores, 2);
  return {num::matmul(weights, v), weights};
}

AttentionOutput complex_attention_head(const Var& q_re, const Var& q_im, const Var& k_re, const Var& k_im,
                                       const Var& v) {
  check_batched("complex_attention_head", q_re);
  // q k^H = (qr kr^T + qi ki^T) + i (qi kr^T - qr ki^T)
  const Var kr_t = num::transpose(k_re), ki_t = num::transpose(k_im);
  const Var re = num::matmul(q_re, kr_t) + num::matmul(q_im, ki_t);
  const Var im = num::matmul(q_im, kr_t) - num::matmul(q_re, ki_t);
  const double inv = 1.0 / std::sqrt(static_cast<double>(q_re.dim(2)));
  const Var scores = num::magnitude(num::scale(re, inv), num::scale(im, inv));
  const Var weights = num::softmax(scores, 2);
  return {num::matmul(weights, v), weights};
}

void add_block_params(num::ParameterStore& store, const std::string& prefix, std::size_t dim, std::size_t ff_dim,
                      num::Rng& rng) {
  store.add_uniform(prefix + ".wq", {dim, dim}, dim, rng);
  store.add_uniform(prefix + ".wk", {dim, dim}, dim, rng);
  store.add_uniform(prefix + ".wv", {dim, dim}, dim, rng);
  store.add_uniform(prefix + ".wmh", {dim, dim}, dim, rng);
  store.add_ones(prefix + ".ln1.gain", {dim});
  store.add_zeros(prefix + ".ln1.bias", {dim});
  store.add_uniform(prefix + ".ff1.w", {dim, ff_dim}, dim, rng);
  store.add_zeros(prefix + ".ff1.b", {ff_dim});
  store.add_uniform(prefix + ".ff2.w", {ff_dim, dim}, ff_dim, rng);
  store.add_zeros(prefix + ".ff2.b", {dim});
  store.add_ones(prefix + ".ln2.gain", {dim});
  store.add_zeros(prefix + ".ln2.bias", {dim});
}

BlockWeights bind_block(num::ParamView& p, const std::string& prefix) {
  return {p(prefix + ".wq"),      p(prefix + ".wk"),       p(prefix + ".wv"),    p(prefix + ".wmh"),
          p(prefix + ".ln1.gain"), p(prefix + ".ln1.bias"), p(prefix + ".ff1.w"), p(prefix + ".ff1.b"),
          p(prefix + ".ff2.w"),    p(prefix + ".ff2.b"),    p(prefix + ".ln2.gain"), p(prefix + ".ln2.bias")};
}

std::vector<Head> project_qkv(const Var& zq, const Var& zk, const Var& zv, const BlockWeights& w,
                              std::size_t heads) {
  const std::size_t dim = w.wq.dim(0);
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("tnet: D=" + std::to_string(dim) + " is not divisible by H=" + std::to_string(heads));
  }
  const std::size_t dh = dim / heads;
  const Var q = num::matmul(zq, w.wq), k = num::matmul(zk, w.wk), v = num::matmul(zv, w.wv);
  std::vector<Head> out;
  out.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) out.push_back({heads_slice(q, h, dh), heads_slice(k, h, dh), heads_slice(v, h, dh)});
  return out;
}

std::vector<ComplexHead> project_complex_qkv(const Var& zq_re, const Var& zq_im, const Var& zk_re, const Var& zk_im,
                                             const Var& zv, const BlockWeights& w, std::size_t heads) {
  const std::size_t dim = w.wq.dim(0);
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("tnet: D=" + std::to_string(dim) + " is not divisible by H=" + std::to_string(heads));
  }
  const std::size_t dh = dim / heads;
  // Real projection matrices act on both parts of the complex inputs.
  const Var qr = num::matmul(zq_re, w.wq), qi = num::matmul(zq_im, w.wq);
  const Var kr = num::matmul(zk_re, w.wk), ki = num::matmul(zk_im, w.wk);
  const Var v = num::matmul(zv, w.wv);
  std::vector<ComplexHead> out;
  out.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    out.push_back({heads_slice(qr, h, dh), heads_slice(qi, h, dh), heads_slice(kr, h, dh), heads_slice(ki, h, dh),
                   heads_slice(v, h, dh)});
  }
  return out;
}

Var transformer_block(const Var& zq, const Var& zk, const Var& zv, const BlockWeights& w, std::size_t heads,
                      Trace* trace) {
  std::vector<Var> outs;
  for (const Head& h : project_qkv(zq, zk, zv, w, heads)) {
    AttentionOutput a = attention_head(h.q, h.k, h.v);
    if (trace) trace->attention.push_back(a.weights);
    outs.push_back(a.values);
  }
  return finish_block(outs, zv, w);
}

Var complex_transformer_block(const Var& zq_re, const Var& zq_im, const Var& zk_re, const Var& zk_im, const Var& zv,
                              const BlockWeights& w, std::size_t heads, Trace* trace) {
  std::vector<Var> outs;
  for (const ComplexHead& h : project_complex_qkv(zq_re, zq_im, zk_re, zk_im, zv, w, heads)) {
    AttentionOutput a = complex_attention_head(h.q_re, h.q_im, h.k_re, h.k_im, h.v);
    if (trace) trace->attention.push_back(a.weights);
    outs.push_back(a.values);
  }
  return finish_block(outs, zv, w);
}

Tensor positional_encoding(std::size_t channels, std::size_t dim) {
  Tensor pe(Shape{channels, dim});
  for (std::size_t m = 0; m < channels; ++m) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(dim));
      const double a = static_cast<double>(m) * rate;
      pe[m * dim + i] = i % 2 == 0 ? std::sin(a) : std::cos(a);
    }
  }
  return pe;
}

namespace {

std::string stack_name(const std::string& prefix, int s) { return prefix + ".stack" + std::to_string(s); }
std::string block_name(const std::string& base, std::size_t n) { return base + ".block" + std::to_string(n); }

}  // namespace

void add_tnet_params(num::ParameterStore& store, const TNetConfig& c, num::Rng& rng, const std::string& prefix) {
  c.validate();
  const std::size_t d = c.dim, f = c.bins;
  if (c.variant == Variant::kCat) {
    store.add_uniform(prefix + ".embed.w", {2 * f, d}, 2 * f, rng);
    store.add_zeros(prefix + ".embed.b", {d});
    for (std::size_t n = 0; n < c.blocks; ++n) add_block_params(store, block_name(prefix, n), d, c.ff(), rng);
    return;
  }
  for (int s = 0; s < 2; ++s) {
    const std::string base = stack_name(prefix, s);
    store.add_uniform(base + ".qk_embed.w", {f, d}, f, rng);
    store.add_uniform(base + ".v_embed.w", {f, d}, f, rng);
    store.add_zeros(base + ".v_embed.b", {d});
    for (std::size_t n = 0; n < c.blocks; ++n) add_block_params(store, block_name(base, n), d, c.ff(), rng);
  }
}

Var tnet_forward(const dsp::ComplexPlanes& spec, const TNetConfig& c, num::ParamView& p, const std::string& prefix,
                 Trace* trace) {
  c.validate();
  const Shape& s = spec.re.shape();
  if (s.size() != 3 || spec.im.shape() != s) {
    throw num::ShapeError("tnet_forward", "spectra planes must be [M, K, F] and equal, got " + num::to_string(s));
  }
  if (s[2] != c.bins) {
    throw ConfigError("tnet: spectra have " + std::to_string(s[2]) + " bins but the embedding expects " +
                      std::to_string(c.bins));
  }
  const std::size_t frames = s[1];
  // Frames become the batch axis: [K, M, F].
  const Var re = num::permute(spec.re, {1, 0, 2});
  const Var im = num::permute(spec.im, {1, 0, 2});
  const Var pe = c.positional_encoding ? tile_frames(positional_encoding(s[0], c.dim), frames) : Var();
  const auto with_pe = [&](const Var& x) { return c.positional_encoding ? x + pe : x; };

  if (c.variant == Variant::kCat) {
    Var z = with_pe(linear(num::concat({re, im}, 2), p(prefix + ".embed.w"), p(prefix + ".embed.b")));
    for (std::size_t n = 0; n < c.blocks; ++n) {
      z = transformer_block(z, z, z, bind_block(p, block_name(prefix, n)), c.heads, trace);
    }
    return z;
  }

  Var planes[2];
  if (c.variant == Variant::kRealImag) {
    planes[0] = re;
    planes[1] = im;
  } else {
    planes[0] = num::magnitude(re, im);
    planes[1] = num::atan2(im, re);
  }
  std::vector<Var> outputs;
  for (int st = 0; st < 2; ++st) {
    const std::string base = stack_name(prefix, st);
    const Var wc = p(base + ".qk_embed.w");
    // Complex embedding with a real matrix; the positional code is real.
    const Var zc_re = with_pe(num::matmul(re, wc));
    const Var zc_im = num::matmul(im, wc);
    Var zv = with_pe(linear(planes[st], p(base + ".v_embed.w"), p(base + ".v_embed.b")));
    for (std::size_t n = 0; n < c.blocks; ++n) {
      zv = complex_transformer_block(zc_re, zc_im, zc_re, zc_im, zv, bind_block(p, block_name(base, n)), c.heads,
                                     trace);
    }
    outputs.push_back(zv);
  }
  return num::concat(outputs, 2);
}

}  // namespace trunet::tnet
