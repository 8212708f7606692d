#include "trunet/dsp/wav_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace trunet::dsp {

static_assert(std::endian::native == std::endian::little, "WAV IO assumes a little-endian host");

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const std::vector<char>& buf, std::size_t pos) {
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  return v;
}

template <typename T>
void put_le(std::vector<char>& out, T v) {
  const auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
  out.insert(out.end(), bytes.begin(), bytes.end());
}

void put_tag(std::vector<char>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

}  // namespace

MultiWave read_wav(const std::filesystem::path& path, std::optional<int> expected_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DspError("read_wav: cannot open " + path.string());
  const std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = " in " + path.string();
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw DspError("read_wav: not a RIFF/WAVE file" + where);
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t data_pos = 0, data_len = 0;
  bool have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::string tag(buf.data() + pos, 4);
    const std::size_t len = read_le<std::uint32_t>(buf, pos + 4);
    const std::size_t body = pos + 8;
    if (body + len > buf.size()) throw DspError("read_wav: chunk '" + tag + "' overruns the file" + where);
    if (tag == "fmt ") {
      if (len < 16) throw DspError("read_wav: short fmt chunk" + where);
      format = read_le<std::uint16_t>(buf, body);
      channels = read_le<std::uint16_t>(buf, body + 2);
      rate = read_le<std::uint32_t>(buf, body + 4);
      bits = read_le<std::uint16_t>(buf, body + 14);
      if (format == kFormatExtensible) {
        if (len < 26) throw DspError("read_wav: short extensible fmt chunk" + where);
        format = read_le<std::uint16_t>(buf, body + 24);  // first two bytes of the subformat GUID
      }
      have_fmt = true;
    } else if (tag == "data") {
      data_pos = body;
      data_len = len;
      have_data = true;
    }
    pos = body + len + (len & 1);
  }
  if (!have_fmt || !have_data) throw DspError("read_wav: missing fmt or data chunk" + where);
  if (channels == 0) throw DspError("read_wav: zero channels" + where);
  if (expected_rate && static_cast<int>(rate) != *expected_rate) {
    throw DspError("read_wav: sample rate " + std::to_string(rate) + " Hz does not match the expected " +
                   std::to_string(*expected_rate) + " Hz" + where);
  }
  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32) {
    throw DspError("read_wav: unsupported encoding (format " + std::to_string(format) + ", " + std::to_string(bits) +
                   " bits)" + where);
  }
  const std::size_t width = bits / 8;
  const std::size_t frames = data_len / (width * channels);
  MultiWave wave(channels, frames, static_cast<int>(rate));
  for (std::size_t n = 0; n < frames; ++n) {
    for (std::size_t m = 0; m < channels; ++m) {
      const std::size_t at = data_pos + (n * channels + m) * width;
      wave.channel(m)[n] = pcm16 ? read_le<std::int16_t>(buf, at) / 32768.0 : read_le<float>(buf, at);
    }
  }
  return wave;
}

void write_wav(const std::filesystem::path& path, const MultiWave& wave, WavFormat format) {
  const std::uint16_t channels = static_cast<std::uint16_t>(wave.channels());
  const std::uint16_t bits = format == WavFormat::kPcm16 ? 16 : 32;
  const std::uint32_t block = channels * bits / 8;
  const std::uint32_t data_len = static_cast<std::uint32_t>(wave.samples() * block);
  std::vector<char> out;
  out.reserve(44 + data_len);
  put_tag(out, "RIFF");
  put_le<std::uint32_t>(out, 36 + data_len);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_le<std::uint32_t>(out, 16);
  put_le<std::uint16_t>(out, format == WavFormat::kPcm16 ? kFormatPcm : kFormatFloat);
  put_le<std::uint16_t>(out, channels);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(wave.sample_rate()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(wave.sample_rate()) * block);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(block));
  put_le<std::uint16_t>(out, bits);
  put_tag(out, "data");
  put_le<std::uint32_t>(out, data_len);
  for (std::size_t n = 0; n < wave.samples(); ++n) {
    for (std::size_t m = 0; m < channels; ++m) {
      const double v = wave.channel(m)[n];
      if (format == WavFormat::kPcm16) {
        const double s = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
        put_le<std::int16_t>(out, static_cast<std::int16_t>(s));
      } else {
        put_le<float>(out, static_cast<float>(v));
      }
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DspError("write_wav: cannot open " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DspError("write_wav: write failed for " + path.string());
}

}  // namespace trunet::dsp
