#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "trunet/dsp/stft.hpp"
#include "trunet/numerics/params.hpp"

namespace trunet::tnet {

using num::Var;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Variant { kCat, kRealImag, kMagPhase };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);

struct TNetConfig {
  Variant variant = Variant::kMagPhase;
  std::size_t blocks = 4;
  std::size_t heads = 16;
  std::size_t dim = 1024;  // D; heads * (D / heads)
  std::size_t ff_dim = 0;  // 0 selects 2 * D
  std::size_t bins = 257;  // F of the input spectra
  bool positional_encoding = true;

  std::size_t ff() const { return ff_dim == 0 ? 2 * dim : ff_dim; }
  std::size_t head_dim() const { return dim / heads; }
  // Feature width per channel of the TNet output.
  std::size_t output_dim() const { return variant == Variant::kCat ? dim : 2 * dim; }
  void validate() const;
};

// Attention over the channel axis. Inputs are batched as [B, M, d]; the
// weights are [B, M, M] with rows summing to one.
struct AttentionOutput {
  Var values;
  Var weights;
};

// softmax(q k^T / sqrt(d)) v
AttentionOutput attention_head(const Var& q, const Var& k, const Var& v);
// softmax(|q k^H| / sqrt(d)) v with complex q, k given as planes.
AttentionOutput complex_attention_head(const Var& q_re, const Var& q_im, const Var& k_re, const Var& k_im,
                                       const Var& v);

struct BlockWeights {
  Var wq, wk, wv;  // [D, D]; head h uses columns [h*D/H, (h+1)*D/H)
  Var wmh;         // [D, D]
  Var ln1_gain, ln1_bias;
  Var ff1, ff1_bias;  // [D, D_ff], [D_ff]
  Var ff2, ff2_bias;  // [D_ff, D], [D]
  Var ln2_gain, ln2_bias;
};

void add_block_params(num::ParameterStore& store, const std::string& prefix, std::size_t dim, std::size_t ff_dim,
                      num::Rng& rng);
BlockWeights bind_block(num::ParamView& params, const std::string& prefix);

struct Head {
  Var q, k, v;
};
struct ComplexHead {
  Var q_re, q_im, k_re, k_im, v;
};

// Per-head projections of [B, M, D] inputs to [B, M, D/H].
std::vector<Head> project_qkv(const Var& zq, const Var& zk, const Var& zv, const BlockWeights& w, std::size_t heads);
std::vector<ComplexHead> project_complex_qkv(const Var& zq_re, const Var& zq_im, const Var& zk_re, const Var& zk_im,
                                             const Var& zv, const BlockWeights& w, std::size_t heads);

// Attention weights of every head of every block, in evaluation order.
struct Trace {
  std::vector<Var> attention;
};

// Post-norm block: z = LN(z_v + MH(q, k, v)); out = LN(z + FF(z)).
Var transformer_block(const Var& zq, const Var& zk, const Var& zv, const BlockWeights& w, std::size_t heads,
                      Trace* trace = nullptr);
Var complex_transformer_block(const Var& zq_re, const Var& zq_im, const Var& zk_re, const Var& zk_im, const Var& zv,
                              const BlockWeights& w, std::size_t heads, Trace* trace = nullptr);

// Sinusoidal encoding of the channel index, [M, D].
num::Tensor positional_encoding(std::size_t channels, std::size_t dim);

void add_tnet_params(num::ParameterStore& store, const TNetConfig& config, num::Rng& rng,
                     const std::string& prefix = "tnet");

// Spectra planes [M, K, F] -> per-frame spatial features [K, M, output_dim()].
// Every frame is processed independently; attention runs across channels.
Var tnet_forward(const dsp::ComplexPlanes& spec, const TNetConfig& config, num::ParamView& params,
                 const std::string& prefix = "tnet", Trace* trace = nullptr);

}  // namespace trunet::tnet
