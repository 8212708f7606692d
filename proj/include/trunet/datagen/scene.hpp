#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "trunet/datagen/rir.hpp"
#include "trunet/dsp/wave.hpp"

namespace trunet::datagen {

// Gaussian parameters are (mean, standard deviation) in dB.
struct Gaussian {
  double mean = 0.0;
  double stddev = 0.0;
};

// Ranges scenes are drawn from.
struct SceneConfig {
  std::size_t mics = 8;
  double array_radius = 0.05;
  double seconds = 30.0;
  int sample_rate = 16000;
  Vec3 room_min{3.0, 3.0, 2.5};
  Vec3 room_max{8.0, 7.0, 3.5};
  double rt60_min = 0.2;
  double rt60_max = 0.8;
  double wall_margin = 0.5;        // m between walls and array or sources
  double min_source_distance = 0.5;  // m from the array centre
  Gaussian energy_ratio{0.0, 2.0};
  Gaussian snr{8.0, 10.0};
  Gaussian level{-28.0, 10.0};  // dBFS
  double max_level = -1.0;      // dBFS

  std::size_t samples() const;
  void validate() const;
};

// The random quantities of one scene.
struct SceneDraws {
  double energy_ratio_db = 0.0;  // speaker 1 over speaker 2, reverberant
  double snr_db = 0.0;           // speech mixture over noise
  double level_dbfs = -28.0;     // mixture RMS
};

struct SceneSpec {
  std::uint64_t seed = 0;
  RoomSpec room;
  ArraySpec array;
  std::array<Vec3, 2> sources;
  SceneDraws draws;
};

// Deterministic in (config, seed).
SceneSpec draw_scene(const SceneConfig& config, std::uint64_t seed);

struct Mixture {
  dsp::MultiWave mixture;
  // Speakers convolved with the shaped RIRs, with the gains of their
  // mixture counterparts.
  std::array<dsp::MultiWave, 2> targets;
  // Speakers convolved with the full RIRs, as they appear in the mixture.
  std::array<dsp::MultiWave, 2> images;
  dsp::MultiWave noise;  // scaled, as it appears in the mixture
  // Draws as applied; the level differs from the drawn one when it was
  // clamped to the maximum level or lowered to avoid clipping.
  SceneDraws applied;
};

// Gain on the noise that puts the speech-to-noise energy ratio at snr_db:
// sqrt(E_speech / (E_noise 10^(snr/10))).
double noise_gain(double speech_energy, double noise_energy, double snr_db);

struct MixOptions {
  double max_level = -1.0;  // dBFS cap on the RMS level and on the peak
};

// Convolves each speaker with its RIR set (truncated to the speaker length),
// scales speaker 2 to the drawn energy ratio, adds `noise` ([M, N]) at the
// drawn SNR and rescales everything to the drawn level. Energies are summed
// over all channels. Throws on silent inputs or mismatched lengths.
Mixture make_mixture(const SceneSpec& scene, const std::vector<double>& speech1, const std::vector<double>& speech2,
                     const dsp::MultiWave& noise, const std::array<std::vector<std::vector<double>>, 2>& rirs,
                     const MixOptions& options = {});

// Convenience: simulates and shapes the RIRs of `scene` first.
Mixture make_mixture(const SceneSpec& scene, const std::vector<double>& speech1, const std::vector<double>& speech2,
                     const dsp::MultiWave& noise, const MixOptions& options = {});

double energy(const dsp::MultiWave& w);
double rms_dbfs(const dsp::MultiWave& w);

// Speech-like test signal: a voiced harmonic source with a wandering pitch
// (80-250 Hz), two moving formant resonances and syllable-rate on/off
// envelopes, normalised to unit RMS. Deterministic in the seed.
std::vector<double> synthetic_speech(std::size_t samples, std::uint64_t seed, int sample_rate = 16000);
// Independent white Gaussian noise per channel, unit variance.
dsp::MultiWave sensor_noise(std::size_t channels, std::size_t samples, std::uint64_t seed, int sample_rate = 16000);

// One generated scene with everything needed to rebuild it.
struct SceneRecord {
  std::size_t index = 0;
  SceneSpec spec;
  SceneDraws applied;
  std::string mixture_file;
  std::array<std::string, 2> target_files;
};

// Generates `count` scenes with seeds derive_seed(seed, i) into `out_dir`
// (WAV files plus manifest.jsonl, one JSON object per line, scene order).
// Scenes run on up to `threads` workers (0: TRUNET_THREADS or hardware
// concurrency); output is independent of the thread count.
std::vector<SceneRecord> generate_dataset(const SceneConfig& config, std::size_t count, std::uint64_t seed,
                                          const std::filesystem::path& out_dir, std::size_t threads = 0);

// Reads a manifest written by generate_dataset. File paths are resolved
// against the manifest's directory.
std::vector<SceneRecord> read_manifest(const std::filesystem::path& manifest);

struct LoadedScene {
  dsp::MultiWave mixture;
  std::array<dsp::MultiWave, 2> targets;
};
LoadedScene load_scene(const SceneRecord& record, const std::filesystem::path& dataset_dir);

// Worker count from TRUNET_THREADS, else hardware concurrency (at least 1).
std::size_t worker_threads();

}  // namespace trunet::datagen
