#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "trunet/dsp/filter.hpp"
#include "trunet/numerics/ops.hpp"
#include "trunet/numerics/params.hpp"
#include "trunet/tnet/tnet.hpp"

namespace trunet::runet {

using num::Var;
using tnet::ConfigError;

struct RUNetConfig {
  std::vector<std::size_t> channels{16, 16, 32, 32, 64};  // C_1..C_L
  std::size_t kernel_time = 6;
  std::size_t kernel_freq = 6;
  std::size_t lstm_hidden = 1200;
  std::size_t mics = 8;            // M
  std::size_t input_channels = 0;  // planes fed to the first conv; 0 selects 2M
  std::size_t bins = 257;          // F of the spectra
  std::size_t sources = 2;
  dsp::FilterMode mode = dsp::FilterMode::kMultiChannel;

  std::size_t layers() const { return channels.size(); }
  std::size_t in_channels() const { return input_channels == 0 ? 2 * mics : input_channels; }
  // Channels of the filter estimate: M in multi-channel mode, 1 otherwise.
  std::size_t out_channels() const { return mode == dsp::FilterMode::kMultiChannel ? mics : 1; }
  // Frequency width inside the network: F rounded up to a multiple of 2^L.
  std::size_t padded_bins() const;
  void validate() const;
};

void add_runet_params(num::ParameterStore& store, const RUNetConfig& config, num::Rng& rng,
                      const std::string& prefix = "runet");

// Stride (1, 2) convolution with "same" time padding and frequency padding
// that halves an even width exactly.
num::ConvGeometry encoder_geometry(const RUNetConfig& config);
// Stride 1 in both axes, output the size of the input.
num::ConvGeometry same_geometry(const RUNetConfig& config);

// Encoder activations e_1..e_L for x[C_in, K, F'].
std::vector<Var> encode(const Var& x, const RUNetConfig& config, num::ParamView& params,
                        const std::string& prefix = "runet");

// e_L[C_L, K, F_L] -> same shape. Per frame the C_L * F_L features pass two
// BLSTM layers over K; the first layer's output is added to the second's and
// a linear map returns to C_L * F_L.
Var blstm_bridge(const Var& encoded, const RUNetConfig& config, num::ParamView& params,
                 const std::string& prefix = "runet");

// Mirrored transposed convolutions; decoder layer l receives the bridge or
// previous decoder output plus a 1x1 convolution of e_l. Returns
// [out_channels(), K, F'].
Var decode(const Var& bridged, const std::vector<Var>& skips, const RUNetConfig& config, num::ParamView& params,
           const std::string& prefix = "runet");

// encode -> bridge -> decode.
Var encoder_decoder(const Var& x, const RUNetConfig& config, num::ParamView& params,
                    const std::string& prefix = "runet");

// Fully connected layer along frequency (F' -> 2 * sources * F, shared over
// channels and frames) and tanh. Returns one complex filter per source,
// planes [out_channels(), K, F], each component in [-1, 1].
std::vector<dsp::ComplexPlanes> filter_heads(const Var& decoded, const RUNetConfig& config, num::ParamView& params,
                                             const std::string& prefix = "runet");

}  // namespace trunet::runet
