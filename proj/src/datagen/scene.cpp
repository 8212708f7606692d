#include "trunet/datagen/scene.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <optional>
#include <thread>

#include <json.hpp>

#include "trunet/dsp/fft.hpp"
#include "trunet/dsp/wav_io.hpp"
#include "trunet/numerics/rng.hpp"

namespace trunet::datagen {

using dsp::MultiWave;
using json = nlohmann::json;

std::size_t SceneConfig::samples() const {
  return static_cast<std::size_t>(std::llround(seconds * static_cast<double>(sample_rate)));
}

void SceneConfig::validate() const {
  if (mics == 0) throw DataError("scene: mics must be positive");
  if (!(seconds > 0.0) || sample_rate <= 0) throw DataError("scene: duration and sample rate must be positive");
  if (!(rt60_min > 0.0 && rt60_min <= rt60_max)) throw DataError("scene: need 0 < rt60_min <= rt60_max");
  if (!(room_min.x <= room_max.x && room_min.y <= room_max.y && room_min.z <= room_max.z)) {
    throw DataError("scene: room_min must not exceed room_max");
  }
  const double need = 2.0 * (wall_margin + array_radius);
  if (room_min.x <= need || room_min.y <= need || room_min.z <= 2.0 * wall_margin) {
    throw DataError("scene: the smallest room leaves no space inside the wall margin");
  }
  if (energy_ratio.stddev < 0.0 || snr.stddev < 0.0 || level.stddev < 0.0) {
    throw DataError("scene: standard deviations must be non-negative");
  }
}

namespace {

Vec3 uniform_point(num::Rng& rng, const Vec3& lo, const Vec3& hi) {
  return {rng.uniform(lo.x, hi.x), rng.uniform(lo.y, hi.y), rng.uniform(lo.z, hi.z)};
}

}  // namespace

SceneSpec draw_scene(const SceneConfig& config, std::uint64_t seed) {
  config.validate();
  num::Rng rng(seed);
  SceneSpec s;
  s.seed = seed;
  const Vec3 dims = uniform_point(rng, config.room_min, config.room_max);
  s.room = room_from_rt60(dims, rng.uniform(config.rt60_min, config.rt60_max));

  const double m = config.wall_margin;
  s.array.mics = config.mics;
  s.array.radius = config.array_radius;
  s.array.orientation = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double r = m + config.array_radius;
  s.array.center = {rng.uniform(r, dims.x - r), rng.uniform(r, dims.y - r), rng.uniform(std::min(1.0, dims.z / 2), std::min(1.8, dims.z - m))};

  const Vec3 lo{m, m, m}, hi{dims.x - m, dims.y - m, dims.z - m};
  for (auto& src : s.sources) {
    // Rejection sampling keeps sources away from the array.
    for (int attempt = 0;; ++attempt) {
      src = uniform_point(rng, lo, hi);
      if (distance(src, s.array.center) >= config.min_source_distance) break;
      if (attempt > 1000) throw DataError("scene: cannot place a source away from the array");
    }
  }
  s.draws.energy_ratio_db = rng.normal(config.energy_ratio.mean, config.energy_ratio.stddev);
  s.draws.snr_db = rng.normal(config.snr.mean, config.snr.stddev);
  s.draws.level_dbfs = rng.normal(config.level.mean, config.level.stddev);
  return s;
}

double energy(const MultiWave& w) { return w.energy(); }

double rms_dbfs(const MultiWave& w) {
  const double n = static_cast<double>(w.channels() * w.samples());
  return 10.0 * std::log10(w.energy() / n);
}

namespace {

MultiWave convolve(const std::vector<double>& signal, const std::vector<std::vector<double>>& rir, int rate) {
  MultiWave out(rir.size(), signal.size(), rate);
  for (std::size_t m = 0; m < rir.size(); ++m) {
    const auto full = dsp::fft_convolve(signal, rir[m]);
    std::copy_n(full.begin(), signal.size(), out.channel(m).begin());
  }
  return out;
}

void scale(MultiWave& w, double g) {
  for (std::size_t m = 0; m < w.channels(); ++m) {
    for (double& v : w.channel(m)) v *= g;
  }
}

MultiWave add(const MultiWave& a, const MultiWave& b) {
  MultiWave out = a;
  for (std::size_t m = 0; m < a.channels(); ++m) {
    auto dst = out.channel(m);
    const auto src = b.channel(m);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  return out;
}

double peak(const MultiWave& w) {
  double p = 0.0;
  for (std::size_t m = 0; m < w.channels(); ++m) {
    for (double v : w.channel(m)) p = std::max(p, std::abs(v));
  }
  return p;
}

double energy_of(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

}  // namespace

double noise_gain(double speech_energy, double noise_energy, double snr_db) {
  return std::sqrt(speech_energy / (noise_energy * std::pow(10.0, snr_db / 10.0)));
}

Mixture make_mixture(const SceneSpec& scene, const std::vector<double>& speech1, const std::vector<double>& speech2,
                     const MultiWave& noise, const std::array<std::vector<std::vector<double>>, 2>& rirs,
                     const MixOptions& options) {
  const std::size_t n = speech1.size();
  if (n == 0 || speech2.size() != n || noise.samples() != n) {
    throw DataError("make_mixture: speech and noise lengths differ (" + std::to_string(speech1.size()) + ", " +
                    std::to_string(speech2.size()) + ", " + std::to_string(noise.samples()) + ")");
  }
  const std::size_t mics = rirs[0].size();
  if (rirs[1].size() != mics || noise.channels() != mics) {
    throw DataError("make_mixture: RIR sets and noise must have the same channel count");
  }
  if (energy_of(speech1) == 0.0 || energy_of(speech2) == 0.0 || noise.energy() == 0.0) {
    throw DataError("make_mixture: a silent input makes the energy ratios undefined");
  }
  const int rate = noise.sample_rate();
  std::array<std::vector<std::vector<double>>, 2> shaped;
  for (std::size_t k = 0; k < 2; ++k) {
    for (const auto& r : rirs[k]) shaped[k].push_back(shape_target_rir(r, rate));
  }

  std::array<MultiWave, 2> images{convolve(speech1, rirs[0], rate), convolve(speech2, rirs[1], rate)};
  std::array<MultiWave, 2> targets{convolve(speech1, shaped[0], rate), convolve(speech2, shaped[1], rate)};
  if (images[0].energy() == 0.0 || images[1].energy() == 0.0) {
    throw DataError("make_mixture: a reverberant speaker image is silent");
  }

  // Speaker 2 gain for the drawn ratio E1 / E2 = 10^(r/10).
  const double g2 = std::sqrt(images[0].energy() / (images[1].energy() * std::pow(10.0, scene.draws.energy_ratio_db / 10.0)));
  scale(images[1], g2);
  scale(targets[1], g2);
  const MultiWave speech = add(images[0], images[1]);

  MultiWave scaled_noise = noise;
  scale(scaled_noise, noise_gain(speech.energy(), noise.energy(), scene.draws.snr_db));
  MultiWave mixture = add(speech, scaled_noise);

  const double cap = std::pow(10.0, options.max_level / 20.0);
  const double level = std::min(scene.draws.level_dbfs, options.max_level);
  double g = std::pow(10.0, level / 20.0) /
             std::sqrt(mixture.energy() / static_cast<double>(mixture.channels() * mixture.samples()));
  if (peak(mixture) * g > cap) g = cap / peak(mixture);

  for (MultiWave* w : {&mixture, &images[0], &images[1], &targets[0], &targets[1], &scaled_noise}) scale(*w, g);
  Mixture out{std::move(mixture), std::move(targets), std::move(images), std::move(scaled_noise), scene.draws};
  out.applied.level_dbfs = rms_dbfs(out.mixture);
  return out;
}

Mixture make_mixture(const SceneSpec& scene, const std::vector<double>& speech1, const std::vector<double>& speech2,
                     const MultiWave& noise, const MixOptions& options) {
  const int rate = noise.sample_rate();
  return make_mixture(scene, speech1, speech2, noise,
                      {simulate_rir(scene.room, scene.array, scene.sources[0], rate),
                       simulate_rir(scene.room, scene.array, scene.sources[1], rate)},
                      options);
}

std::vector<double> synthetic_speech(std::size_t samples, std::uint64_t seed, int sample_rate) {
  num::Rng rng(seed);
  const double fs = static_cast<double>(sample_rate);
  const double two_pi = 2.0 * std::numbers::pi;

  // Syllable on/off envelope with raised-cosine edges.
  std::vector<double> envelope(samples, 0.0);
  std::vector<bool> fricative(samples, false);
  std::size_t t = static_cast<std::size_t>(rng.uniform(0.0, 0.1) * fs);
  while (t < samples) {
    const auto len = static_cast<std::size_t>(rng.uniform(0.1, 0.35) * fs);
    const auto edge = std::max<std::size_t>(1, len / 5);
    const double gain = rng.uniform(0.5, 1.0);
    const bool burst = rng.uniform() < 0.3;
    for (std::size_t i = 0; i < len && t + i < samples; ++i) {
      double e = 1.0;
      if (i < edge) e = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / static_cast<double>(edge));
      if (i + edge > len) {
        e = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(len - i) / static_cast<double>(edge));
      }
      envelope[t + i] = gain * e;
      fricative[t + i] = burst && i < len / 4;
    }
    t += len + static_cast<std::size_t>(rng.uniform(0.03, 0.25) * fs);
  }

  const double f0_base = rng.uniform(90.0, 220.0);
  const double vib_rate = rng.uniform(0.2, 0.8), vib_phase = rng.uniform(0.0, two_pi);
  const double f1_rate = rng.uniform(1.0, 4.0), f2_rate = rng.uniform(1.0, 4.0);
  const double f1_phase = rng.uniform(0.0, two_pi), f2_phase = rng.uniform(0.0, two_pi);
  const int harmonics = static_cast<int>(0.45 * fs / 80.0);

  std::vector<double> out(samples, 0.0);
  double phase = 0.0, previous_noise = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double time = static_cast<double>(i) / fs;
    const double f0 = f0_base * (1.0 + 0.12 * std::sin(two_pi * vib_rate * time + vib_phase));
    phase = std::fmod(phase + two_pi * f0 / fs, two_pi);
    const double white = rng.normal(0.0, 1.0);
    if (envelope[i] == 0.0) continue;
    if (fricative[i]) {
      // First difference tilts the noise towards high frequencies.
      out[i] = 0.3 * envelope[i] * (white - previous_noise);
      previous_noise = white;
      continue;
    }
    const double f1 = 550.0 + 250.0 * std::sin(two_pi * f1_rate * time + f1_phase);
    const double f2 = 1600.0 + 700.0 * std::sin(two_pi * f2_rate * time + f2_phase);
    double v = 0.0;
    for (int k = 1; k <= harmonics; ++k) {
      const double f = k * f0;
      if (f >= 0.45 * fs) break;
      const double a = std::exp(-std::pow((f - f1) / 150.0, 2)) + 0.6 * std::exp(-std::pow((f - f2) / 250.0, 2)) +
                       0.05 / k;
      v += a * std::sin(k * phase);
    }
    out[i] = envelope[i] * v;
  }
  const double e = energy_of(out);
  if (e > 0.0) {
    const double g = std::sqrt(static_cast<double>(samples) / e);
    for (double& v : out) v *= g;
  }
  return out;
}

MultiWave sensor_noise(std::size_t channels, std::size_t samples, std::uint64_t seed, int sample_rate) {
  num::Rng rng(seed);
  MultiWave w(channels, samples, sample_rate);
  for (std::size_t m = 0; m < channels; ++m) {
    for (double& v : w.channel(m)) v = rng.normal(0.0, 1.0);
  }
  return w;
}

std::size_t worker_threads() {
  if (const char* env = std::getenv("TRUNET_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

json to_json(const Vec3& p) { return json::array({p.x, p.y, p.z}); }
Vec3 vec3_of(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

json to_json(const SceneRecord& r) {
  const SceneSpec& s = r.spec;
  return {
      {"index", r.index},
      {"seed", s.seed},
      {"room", {{"dims", to_json(s.room.dims)}, {"reflection", s.room.reflection}, {"rt60", s.room.rt60}, {"max_order", s.room.max_order}}},
      {"array",
       {{"mics", s.array.mics}, {"radius", s.array.radius}, {"center", to_json(s.array.center)},
        {"orientation", s.array.orientation}}},
      {"sources", json::array({to_json(s.sources[0]), to_json(s.sources[1])})},
      {"draws",
       {{"energy_ratio_db", s.draws.energy_ratio_db}, {"snr_db", s.draws.snr_db}, {"level_dbfs", s.draws.level_dbfs}}},
      {"applied_level_dbfs", r.applied.level_dbfs},
      {"files", {{"mixture", r.mixture_file}, {"targets", r.target_files}}},
  };
}

SceneRecord record_of(const json& j) {
  SceneRecord r;
  r.index = j.at("index").get<std::size_t>();
  SceneSpec& s = r.spec;
  s.seed = j.at("seed").get<std::uint64_t>();
  const json& room = j.at("room");
  s.room.dims = vec3_of(room.at("dims"));
  s.room.reflection = room.at("reflection").get<std::array<double, 6>>();
  s.room.rt60 = room.at("rt60").get<double>();
  s.room.max_order = room.at("max_order").get<int>();
  const json& array = j.at("array");
  s.array.mics = array.at("mics").get<std::size_t>();
  s.array.radius = array.at("radius").get<double>();
  s.array.center = vec3_of(array.at("center"));
  s.array.orientation = array.at("orientation").get<double>();
  s.sources = {vec3_of(j.at("sources").at(0)), vec3_of(j.at("sources").at(1))};
  const json& draws = j.at("draws");
  s.draws = {draws.at("energy_ratio_db").get<double>(), draws.at("snr_db").get<double>(),
             draws.at("level_dbfs").get<double>()};
  r.applied = s.draws;
  r.applied.level_dbfs = j.at("applied_level_dbfs").get<double>();
  r.mixture_file = j.at("files").at("mixture").get<std::string>();
  r.target_files = j.at("files").at("targets").get<std::array<std::string, 2>>();
  return r;
}

std::string scene_name(std::size_t i) {
  std::string digits = std::to_string(i);
  return "scene" + std::string(digits.size() < 5 ? 5 - digits.size() : 0, '0') + digits;
}

}  // namespace

std::vector<SceneRecord> generate_dataset(const SceneConfig& config, std::size_t count, std::uint64_t seed,
                                          const std::filesystem::path& out_dir, std::size_t threads) {
  config.validate();
  std::filesystem::create_directories(out_dir);
  std::vector<SceneRecord> records(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        // Each scene owns its streams: geometry, two speakers, noise.
        const std::uint64_t scene_seed = num::derive_seed(seed, i);
        SceneRecord& r = records[i];
        r.index = i;
        r.spec = draw_scene(config, scene_seed);
        const std::size_t n = config.samples();
        const Mixture mix = make_mixture(r.spec, synthetic_speech(n, num::derive_seed(scene_seed, 1), config.sample_rate),
                                         synthetic_speech(n, num::derive_seed(scene_seed, 2), config.sample_rate),
                                         sensor_noise(config.mics, n, num::derive_seed(scene_seed, 3), config.sample_rate),
                                         MixOptions{config.max_level});
        r.applied = mix.applied;
        const std::string base = scene_name(i);
        r.mixture_file = base + "_mix.wav";
        r.target_files = {base + "_s1.wav", base + "_s2.wav"};
        dsp::write_wav(out_dir / r.mixture_file, mix.mixture);
        for (std::size_t k = 0; k < 2; ++k) dsp::write_wav(out_dir / r.target_files[k], mix.targets[k]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t lanes = std::max<std::size_t>(1, std::min(threads ? threads : worker_threads(), count));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < lanes; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::ofstream manifest(out_dir / "manifest.jsonl");
  if (!manifest) throw DataError("cannot write " + (out_dir / "manifest.jsonl").string());
  for (const SceneRecord& r : records) manifest << to_json(r).dump() << '\n';
  return records;
}

std::vector<SceneRecord> read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw DataError("cannot open manifest " + manifest.string());
  std::vector<SceneRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(record_of(json::parse(line)));
    } catch (const json::exception& e) {
      throw DataError(manifest.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

LoadedScene load_scene(const SceneRecord& record, const std::filesystem::path& dataset_dir) {
  return {dsp::read_wav(dataset_dir / record.mixture_file, std::nullopt),
          {dsp::read_wav(dataset_dir / record.target_files[0], std::nullopt),
           dsp::read_wav(dataset_dir / record.target_files[1], std::nullopt)}};
}

}  // namespace trunet::datagen
