#pragma once

#include <filesystem>
#include <optional>

#include "trunet/dsp/wave.hpp"

namespace trunet::dsp {

enum class WavFormat { kPcm16, kFloat32 };

// Reads PCM16 or float32 RIFF/WAVE, any channel count. When
// `expected_rate` is given, a file at any other rate is rejected; there is no
// resampling.
MultiWave read_wav(const std::filesystem::path& path, std::optional<int> expected_rate = kDefaultSampleRate);

// PCM16 output clips to [-1, 1).
void write_wav(const std::filesystem::path& path, const MultiWave& wave, WavFormat format = WavFormat::kFloat32);

}  // namespace trunet::dsp
