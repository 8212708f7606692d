#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>

#include "trunet/datagen/rir.hpp"
#include "trunet/datagen/scene.hpp"
#include "trunet/dsp/fft.hpp"

using namespace trunet;
using namespace trunet::datagen;

namespace {

RoomSpec plain_room(Vec3 dims, double beta, int order) {
  RoomSpec r;
  r.dims = dims;
  r.reflection.fill(beta);
  r.max_order = order;
  return r;
}

ArraySpec single_mic(Vec3 at) {
  ArraySpec a;
  a.mics = 1;
  a.radius = 0.0;
  a.center = at;
  return a;
}

std::size_t arrival(double d, double fs = 16000.0) { return static_cast<std::size_t>(std::llround(fs * d / kSpeedOfSound)); }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("trunet_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

SceneConfig small_config() {
  SceneConfig c;
  c.mics = 2;
  c.seconds = 0.5;
  c.room_min = {3.0, 3.0, 2.5};
  c.room_max = {4.0, 4.0, 3.0};
  c.rt60_min = 0.2;
  c.rt60_max = 0.3;
  return c;
}

}  // namespace

TEST_CASE("eight-microphone circle has equal neighbour spacing", "[datagen]") {
  ArraySpec a;
  a.center = {2.0, 2.0, 1.5};
  a.orientation = 0.3;
  const auto p = a.positions();
  REQUIRE(p.size() == 8);
  const double expected = 2.0 * 0.05 * std::sin(std::numbers::pi / 8.0);
  for (std::size_t m = 0; m < 8; ++m) {
    REQUIRE(std::abs(distance(p[m], p[(m + 1) % 8]) - expected) < 1e-12);
    REQUIRE(std::abs(distance(p[m], a.center) - 0.05) < 1e-12);
  }
}

TEST_CASE("free-field impulse sits at the rounded delay with 1/(4 pi d)", "[datagen][rir]") {
  const RoomSpec room = plain_room({6.0, 5.0, 3.0}, 0.0, -1);
  REQUIRE(image_order(room) == 0);
  ArraySpec array;
  array.mics = 4;
  array.radius = 0.05;
  array.center = {3.0, 2.5, 1.5};
  const Vec3 src{1.2, 1.0, 1.1};
  const auto rir = simulate_rir(room, array, src);
  const auto mics = array.positions();
  for (std::size_t m = 0; m < mics.size(); ++m) {
    const double d = distance(src, mics[m]);
    std::size_t nonzero = 0;
    for (double v : rir[m]) nonzero += v != 0.0;
    REQUIRE(nonzero == 1);
    REQUIRE(rir[m][arrival(d)] == Catch::Approx(1.0 / (4.0 * std::numbers::pi * d)).epsilon(1e-14));
  }
}

TEST_CASE("one metre at 16 kHz arrives at sample 47", "[datagen][rir]") {
  const RoomSpec room = plain_room({5.0, 5.0, 3.0}, 0.0, 0);
  const auto rir = simulate_rir(room, single_mic({2.0, 2.0, 1.5}), {3.0, 2.0, 1.5});
  REQUIRE(direct_path_index(rir[0]) == 47);
  REQUIRE(rir[0].size() == 48);
}

TEST_CASE("first-order images match mirror arithmetic and scale with the room", "[datagen][rir]") {
  const double beta = 0.6;
  std::vector<std::vector<double>> dist;
  for (double k : {1.0, 2.0}) {
    const Vec3 dims{4.0 * k, 5.0 * k, 3.0 * k};
    const Vec3 mic{1.5 * k, 2.0 * k, 1.2 * k}, src{2.6 * k, 3.1 * k, 1.7 * k};
    const auto rir = simulate_rir(plain_room(dims, beta, 1), single_mic(mic), src)[0];
    // Direct path plus the six single mirrors.
    const std::vector<Vec3> images{src,
                                   {-src.x, src.y, src.z},
                                   {2 * dims.x - src.x, src.y, src.z},
                                   {src.x, -src.y, src.z},
                                   {src.x, 2 * dims.y - src.y, src.z},
                                   {src.x, src.y, -src.z},
                                   {src.x, src.y, 2 * dims.z - src.z}};
    std::vector<double> expected(rir.size(), 0.0);
    dist.emplace_back();
    for (std::size_t i = 0; i < images.size(); ++i) {
      const double d = distance(images[i], mic);
      dist.back().push_back(d);
      REQUIRE(arrival(d) < expected.size());
      expected[arrival(d)] += (i == 0 ? 1.0 : beta) / (4.0 * std::numbers::pi * d);
    }
    for (std::size_t t = 0; t < rir.size(); ++t) REQUIRE(rir[t] == Catch::Approx(expected[t]).margin(1e-15));
  }
  // Every image distance, hence every continuous delay, doubles with the room.
  for (std::size_t i = 0; i < dist[0].size(); ++i) REQUIRE(std::abs(dist[1][i] - 2.0 * dist[0][i]) < 1e-12);
}

TEST_CASE("Eyring coefficients reproduce the RT60 and the Sabine limit is enforced", "[datagen][rir]") {
  const Vec3 dims{5.0, 4.0, 3.0};
  for (double rt : {0.2, 0.5, 0.8}) {
    const RoomSpec room = room_from_rt60(dims, rt);
    const double a = 1.0 - room.reflection[0] * room.reflection[0];
    const double eyring = 0.161 * room.volume() / (-room.surface() * std::log(1.0 - a));
    REQUIRE(eyring == Catch::Approx(rt).epsilon(1e-12));
    REQUIRE(room.sabine_rt60() > rt);  // Sabine overestimates for a > 0
    REQUIRE(image_order(room) > 0);
  }
  REQUIRE_THROWS_AS(room_from_rt60(dims, 0.05), DataError);
  REQUIRE_THROWS_AS(room_from_rt60({0.0, 1.0, 1.0}, 0.5), DataError);
}

TEST_CASE("the automatic image order leaves the dropped tail 60 dB down", "[datagen][rir]") {
  const RoomSpec room = room_from_rt60({4.0, 3.5, 2.8}, 0.3);
  const int order = image_order(room);
  const Vec3 mic{1.0, 1.2, 1.3}, src{2.9, 2.1, 1.6};
  const double direct = 1.0 / (4.0 * std::numbers::pi * distance(mic, src));
  // Brute-force oracle over the next orders: every image amplitude is small.
  const double beta = room.reflection[0];
  const int reach = order / 2 + 4;
  double worst = 0.0;
  for (int nx = -reach; nx <= reach; ++nx) {
    for (int ny = -reach; ny <= reach; ++ny) {
      for (int nz = -reach; nz <= reach; ++nz) {
        for (int q = 0; q < 8; ++q) {
          const int qx = q & 1, qy = (q >> 1) & 1, qz = (q >> 2) & 1;
          const int refl = std::abs(2 * nx - qx) + std::abs(2 * ny - qy) + std::abs(2 * nz - qz);
          if (refl <= order) continue;
          const Vec3 img{(1 - 2 * qx) * src.x + 2 * nx * room.dims.x, (1 - 2 * qy) * src.y + 2 * ny * room.dims.y,
                         (1 - 2 * qz) * src.z + 2 * nz * room.dims.z};
          worst = std::max(worst, std::pow(beta, refl) / (4.0 * std::numbers::pi * distance(img, mic)));
        }
      }
    }
  }
  REQUIRE(worst <= 1e-3 * direct);
}

TEST_CASE("geometry errors", "[datagen][rir][errors]") {
  const RoomSpec room = plain_room({3.0, 3.0, 3.0}, 0.5, 2);
  REQUIRE_THROWS_AS(simulate_rir(room, single_mic({1.0, 1.0, 1.0}), {4.0, 1.0, 1.0}), DataError);
  REQUIRE_THROWS_AS(simulate_rir(room, single_mic({-1.0, 1.0, 1.0}), {2.0, 1.0, 1.0}), DataError);
  REQUIRE_THROWS_AS(simulate_rir(plain_room({3.0, -1.0, 3.0}, 0.5, 2), single_mic({1, 1, 1}), {2, 1, 1}), DataError);
  REQUIRE_THROWS_AS(image_order(plain_room({3.0, 3.0, 3.0}, 1.0, -1)), DataError);
}

TEST_CASE("shaping leaves short and impulse-only responses alone", "[datagen][shape]") {
  std::vector<double> impulse(4000, 0.0);
  impulse[30] = 0.7;
  REQUIRE(shape_target_rir(impulse) == impulse);

  // A tail that is gone within 150 ms after the early part.
  std::vector<double> short_tail(30 + 800 + 2400, 0.0);
  short_tail[30] = 1.0;
  for (std::size_t i = 31; i < short_tail.size(); ++i) short_tail[i] = 0.2 * std::exp(-0.002 * static_cast<double>(i));
  const auto shaped = shape_target_rir(short_tail);
  for (std::size_t i = 0; i < shaped.size(); ++i) REQUIRE(std::abs(shaped[i] - short_tail[i]) <= 1e-12);
}

TEST_CASE("shaping a flat tail gives 60 dB within 200 ms and keeps the early part", "[datagen][shape]") {
  const std::size_t direct = 100, early = 800, cap = 3200;
  std::vector<double> rir(16000, 0.05);
  for (std::size_t i = 0; i < direct; ++i) rir[i] = 0.0;
  rir[direct] = 1.0;
  const auto shaped = shape_target_rir(rir);
  for (std::size_t i = 0; i < direct + early; ++i) REQUIRE(shaped[i] == rir[i]);
  const std::size_t t0 = direct + early;
  // Envelope relative to the start of the tail.
  for (std::size_t i = t0 + cap; i < shaped.size(); ++i) REQUIRE(std::abs(shaped[i]) <= 1e-3 * std::abs(shaped[t0]) * (1 + 1e-12));
  REQUIRE(20.0 * std::log10(std::abs(shaped[t0 + cap]) / std::abs(shaped[t0])) <= -60.0 + 1e-9);
  double e_raw = 0.0, e_shaped = 0.0;
  for (std::size_t i = 0; i < rir.size(); ++i) {
    e_raw += rir[i] * rir[i];
    e_shaped += shaped[i] * shaped[i];
  }
  REQUIRE(e_shaped <= e_raw);
}

TEST_CASE("simulated responses satisfy the shaping invariants", "[datagen][shape]") {
  const RoomSpec room = room_from_rt60({5.0, 4.0, 3.0}, 0.7);
  ArraySpec array;
  array.mics = 2;
  array.center = {2.0, 2.0, 1.4};
  const auto rirs = simulate_rir(room, array, {3.5, 3.0, 1.6});
  for (const auto& r : rirs) {
    const auto s = shape_target_rir(r);
    const std::size_t keep = direct_path_index(r) + 800;
    for (std::size_t i = 0; i < keep; ++i) REQUIRE(s[i] == r[i]);
    double er = 0.0, es = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      er += r[i] * r[i];
      es += s[i] * s[i];
    }
    REQUIRE(es < er);  // an RT60 of 0.7 s must be shortened
  }
}

TEST_CASE("noise gain arithmetic", "[datagen][mix]") {
  REQUIRE(noise_gain(3.0, 3.0, 0.0) == 1.0);
  REQUIRE(noise_gain(1.0, 1.0, 20.0) == Catch::Approx(0.1).epsilon(1e-15));
  REQUIRE(noise_gain(4.0, 1.0, 0.0) == Catch::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("mixture meets the drawn SNR, ratio and level", "[datagen][mix]") {
  const SceneConfig cfg = small_config();
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    SceneSpec scene = draw_scene(cfg, seed);
    scene.draws.level_dbfs = -28.0;
    const std::size_t n = cfg.samples();
    const auto s1 = synthetic_speech(n, 10 + seed), s2 = synthetic_speech(n, 20 + seed);
    const auto noise = sensor_noise(cfg.mics, n, 30 + seed);
    const Mixture mix = make_mixture(scene, s1, s2, noise);

    dsp::MultiWave speech = mix.images[0];
    for (std::size_t m = 0; m < speech.channels(); ++m) {
      for (std::size_t i = 0; i < n; ++i) speech.channel(m)[i] += mix.images[1].channel(m)[i];
    }
    const double snr = 10.0 * std::log10(speech.energy() / mix.noise.energy());
    REQUIRE(std::abs(snr - scene.draws.snr_db) < 0.01);
    const double ratio = 10.0 * std::log10(mix.images[0].energy() / mix.images[1].energy());
    REQUIRE(std::abs(ratio - scene.draws.energy_ratio_db) < 1e-9);
    REQUIRE(std::abs(rms_dbfs(mix.mixture) - (-28.0)) < 0.1);
    REQUIRE(mix.applied.level_dbfs == Catch::Approx(-28.0).margin(1e-9));

    // Construction identity: mixture = speaker images + noise.
    for (std::size_t m = 0; m < speech.channels(); ++m) {
      for (std::size_t i = 0; i < n; ++i) {
        REQUIRE(std::abs(mix.mixture.channel(m)[i] - speech.channel(m)[i] - mix.noise.channel(m)[i]) < 1e-14);
      }
    }
  }
}

TEST_CASE("targets carry the gains of their mixture images", "[datagen][mix]") {
  const SceneConfig cfg = small_config();
  const SceneSpec scene = draw_scene(cfg, 9);
  const std::size_t n = cfg.samples();
  const auto s1 = synthetic_speech(n, 41), s2 = synthetic_speech(n, 42);
  const std::array rirs{simulate_rir(scene.room, scene.array, scene.sources[0]),
                        simulate_rir(scene.room, scene.array, scene.sources[1])};
  const Mixture mix = make_mixture(scene, s1, s2, sensor_noise(cfg.mics, n, 43), rirs);
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& s = k == 0 ? s1 : s2;
    const auto raw_image = dsp::fft_convolve(s, rirs[k][0]);
    const auto raw_target = dsp::fft_convolve(s, shape_target_rir(rirs[k][0]));
    const double gi = mix.images[k].channel(0)[400] / raw_image[400];
    const double gt = mix.targets[k].channel(0)[400] / raw_target[400];
    REQUIRE(gi == Catch::Approx(gt).epsilon(1e-10));
  }
}

TEST_CASE("level is capped and clipping avoided", "[datagen][mix]") {
  const SceneConfig cfg = small_config();
  SceneSpec scene = draw_scene(cfg, 5);
  scene.draws.level_dbfs = 6.0;
  const std::size_t n = cfg.samples();
  const Mixture mix = make_mixture(scene, synthetic_speech(n, 1), synthetic_speech(n, 2), sensor_noise(2, n, 3));
  double peak = 0.0;
  for (std::size_t m = 0; m < 2; ++m) {
    for (double v : mix.mixture.channel(m)) peak = std::max(peak, std::abs(v));
  }
  REQUIRE(peak <= std::pow(10.0, -1.0 / 20.0) * (1 + 1e-12));
  REQUIRE(mix.applied.level_dbfs <= -1.0 + 1e-9);
}

TEST_CASE("silent inputs are rejected", "[datagen][mix][errors]") {
  const SceneConfig cfg = small_config();
  const SceneSpec scene = draw_scene(cfg, 6);
  const std::size_t n = cfg.samples();
  const std::vector<double> silent(n, 0.0);
  REQUIRE_THROWS_AS(make_mixture(scene, silent, synthetic_speech(n, 1), sensor_noise(2, n, 2)), DataError);
  REQUIRE_THROWS_AS(make_mixture(scene, synthetic_speech(n, 1), synthetic_speech(n, 2), dsp::MultiWave(2, n)), DataError);
  REQUIRE_THROWS_AS(make_mixture(scene, synthetic_speech(n, 1), synthetic_speech(n - 1, 2), sensor_noise(2, n, 2)),
                    DataError);
}

TEST_CASE("synthetic speech is deterministic, unit RMS and has pauses", "[datagen]") {
  const auto a = synthetic_speech(16000, 77), b = synthetic_speech(16000, 77), c = synthetic_speech(16000, 78);
  REQUIRE(a == b);
  REQUIRE(a != c);
  double e = 0.0;
  std::size_t zeros = 0;
  for (double v : a) {
    e += v * v;
    zeros += v == 0.0;
  }
  REQUIRE(e / 16000.0 == Catch::Approx(1.0).epsilon(1e-12));
  REQUIRE(zeros > 1000);
}

TEST_CASE("scene draws are reproducible and respect the room", "[datagen]") {
  const SceneConfig cfg = small_config();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SceneSpec a = draw_scene(cfg, seed), b = draw_scene(cfg, seed);
    REQUIRE(a.room.reflection == b.room.reflection);
    REQUIRE(a.draws.snr_db == b.draws.snr_db);
    REQUIRE(a.sources[1].z == b.sources[1].z);
    for (const auto& s : a.sources) {
      REQUIRE(a.room.contains(s, cfg.wall_margin));
      REQUIRE(distance(s, a.array.center) >= cfg.min_source_distance);
    }
    REQUIRE_NOTHROW(a.array.validate(a.room, cfg.wall_margin));
    REQUIRE(a.room.rt60 >= cfg.rt60_min);
    REQUIRE(a.room.rt60 <= cfg.rt60_max);
  }
}

TEST_CASE("dataset generation is bit-identical across runs and thread counts", "[datagen][dataset]") {
  SceneConfig cfg = small_config();
  cfg.seconds = 0.25;
  const auto d1 = scratch("ds1"), d2 = scratch("ds2");
  const auto r1 = generate_dataset(cfg, 3, 1234, d1, 1);
  const auto r2 = generate_dataset(cfg, 3, 1234, d2, 3);
  REQUIRE(r1.size() == 3);
  for (const auto& entry : std::filesystem::directory_iterator(d1)) {
    const auto name = entry.path().filename();
    INFO(name);
    REQUIRE(slurp(entry.path()) == slurp(d2 / name));
  }
  const auto back = read_manifest(d1 / "manifest.jsonl");
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    REQUIRE(back[i].index == i);
    REQUIRE(back[i].spec.seed == r1[i].spec.seed);
    REQUIRE(back[i].spec.draws.snr_db == r1[i].spec.draws.snr_db);
    REQUIRE(back[i].spec.sources[0].x == r1[i].spec.sources[0].x);
    REQUIRE(back[i].spec.room.reflection == r1[i].spec.room.reflection);
    REQUIRE(back[i].applied.level_dbfs == r1[i].applied.level_dbfs);
  }
  const LoadedScene scene = load_scene(back[1], d1);
  REQUIRE(scene.mixture.channels() == 2);
  REQUIRE(scene.mixture.samples() == cfg.samples());
  REQUIRE(scene.targets[0].samples() == cfg.samples());
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}
