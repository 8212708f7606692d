#include "trunet/dsp/filter.hpp"

#include <string>

#include "trunet/numerics/ops.hpp"

namespace trunet::dsp {

using num::Var;

namespace {

ComplexPlanes filter_one(const ComplexPlanes& b, const ComplexPlanes& y, FilterMode mode, std::size_t ref) {
  const num::Shape& ys = y.re.shape();
  if (ys.size() != 3 || y.im.shape() != ys) {
    throw DspError("apply_filter: mixture planes must be [M, K, F] and equal, got " + num::to_string(ys));
  }
  const num::Shape& bs = b.re.shape();
  if (b.im.shape() != bs) throw DspError("apply_filter: filter planes differ in shape");
  if (mode == FilterMode::kMultiChannel) {
    if (bs != ys) {
      throw DspError("apply_filter: multi-channel filter " + num::to_string(bs) + " does not match mixture " +
                     num::to_string(ys));
    }
    // conj(B) Y = (Br Yr + Bi Yi) + i (Br Yi - Bi Yr), summed over channels.
    const Var re = num::sum_axis(b.re * y.re + b.im * y.im, 0);
    const Var im = num::sum_axis(b.re * y.im - b.im * y.re, 0);
    const num::Shape out{1, ys[1], ys[2]};
    return {num::reshape(re, out), num::reshape(im, out)};
  }
  if (ref >= ys[0]) {
    throw DspError("apply_filter: reference channel " + std::to_string(ref) + " out of range for " +
                   std::to_string(ys[0]) + " channels");
  }
  if (bs != num::Shape{1, ys[1], ys[2]}) {
    throw DspError("apply_filter: single-channel filter must be [1, K, F], got " + num::to_string(bs));
  }
  const Var yr = num::slice(y.re, 0, ref, ref + 1);
  const Var yi = num::slice(y.im, 0, ref, ref + 1);
  return {b.re * yr - b.im * yi, b.re * yi + b.im * yr};
}

}  // namespace

std::vector<ComplexPlanes> apply_filter(const FilterSet& filters, const ComplexPlanes& mixture) {
  std::vector<ComplexPlanes> out;
  out.reserve(filters.per_source.size());
  for (const auto& b : filters.per_source) {
    out.push_back(filter_one(b, mixture, filters.mode, filters.reference_channel));
  }
  return out;
}

Spectra apply_filter(const Spectra& filter, const Spectra& mixture, FilterMode mode, std::size_t reference_channel) {
  const ComplexPlanes r = filter_one(filter.as_constants(), mixture.as_constants(), mode, reference_channel);
  return Spectra{r.re.value(), r.im.value(), mixture.config, mixture.length, mixture.sample_rate};
}

}  // namespace trunet::dsp
