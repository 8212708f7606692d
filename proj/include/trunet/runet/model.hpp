#pragma once

#include <string>
#include <vector>

#include "trunet/dsp/filter.hpp"
#include "trunet/runet/runet.hpp"
#include "trunet/tnet/tnet.hpp"

namespace trunet::runet {

// TNet -> RUNet -> filters -> iSTFT. With `use_tnet` false the network is
// the RUNet-only baseline fed with the real and imaginary planes alone.
struct ModelConfig {
  bool use_tnet = true;
  tnet::TNetConfig tnet;
  RUNetConfig runet;
  dsp::StftConfig stft;
  std::size_t reference_channel = 0;  // single-channel filtering

  std::size_t mics() const { return runet.mics; }
  void validate() const;
};

// Toy preset: M=2, L=2, channels (4, 8), BLSTM 32, D=8, H=2, N=1.
ModelConfig toy_preset(tnet::Variant variant = tnet::Variant::kMagPhase,
                       dsp::FilterMode mode = dsp::FilterMode::kSingleChannel);
// Full-size settings: M=8, L=5, channels (16, 16, 32, 32, 64), BLSTM 1200,
// N=4, H=16, D=1024.
ModelConfig paper_preset(tnet::Variant variant = tnet::Variant::kMagPhase,
                         dsp::FilterMode mode = dsp::FilterMode::kSingleChannel);

void add_model_params(num::ParameterStore& store, const ModelConfig& config, num::Rng& rng);

struct ModelOutput {
  std::vector<dsp::FilterSet> filters;           // one per source
  std::vector<dsp::ComplexPlanes> estimates;     // filtered spectra, [1, K, F] per source
  std::vector<Var> waves;                        // iSTFT of the estimates, [1, N] per source
  std::vector<dsp::ComplexPlanes> consistent;    // STFT of the waves
};

// `mixture` planes are [M, K, F]; `length` is the time-domain length.
ModelOutput trunet_forward(const dsp::ComplexPlanes& mixture, std::size_t length, const ModelConfig& config,
                           num::ParamView& params);

// Value-level convenience: separated waves for a mixture.
std::vector<dsp::MultiWave> separate(const dsp::MultiWave& mixture, const ModelConfig& config,
                                     const num::ParameterStore& params);

}  // namespace trunet::runet
