#pragma once

#include <cstddef>
#include <vector>

#include "trunet/dsp/stft.hpp"

namespace trunet::dsp {

enum class FilterMode {
  // Each source estimate is sum_m conj(B_m) * Y_m over all microphones.
  kMultiChannel,
  // One filter per source, applied to the reference microphone: B * Y_ref.
  kSingleChannel,
};

// Per-source time-frequency filters. In multi-channel mode each entry is
// [M, K, F]; in single-channel mode it is [1, K, F].
struct FilterSet {
  FilterMode mode = FilterMode::kMultiChannel;
  std::vector<ComplexPlanes> per_source;
  std::size_t reference_channel = 0;
};

// Returns one [1, K, F] estimate per source.
std::vector<ComplexPlanes> apply_filter(const FilterSet& filters, const ComplexPlanes& mixture);

// Single filter, value level. `filter` must be [M, K, F] in multi-channel mode
// and [1, K, F] in single-channel mode. The result is [1, K, F].
Spectra apply_filter(const Spectra& filter, const Spectra& mixture, FilterMode mode,
                     std::size_t reference_channel = 0);

}  // namespace trunet::dsp
