#include "trunet/datagen/rir.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace trunet::datagen {

namespace {

constexpr double kSabineConstant = 0.161;  // s/m, 24 ln(10) / c
constexpr double kTailRatio = 1e-3;        // 60 dB in amplitude

std::string fmt(const Vec3& p) {
  return "(" + std::to_string(p.x) + ", " + std::to_string(p.y) + ", " + std::to_string(p.z) + ")";
}

}  // namespace

double distance(const Vec3& a, const Vec3& b) { return std::hypot(a.x - b.x, a.y - b.y, a.z - b.z); }

double RoomSpec::sabine_rt60() const {
  const std::array<double, 6> area{dims.y * dims.z, dims.y * dims.z, dims.x * dims.z,
                                   dims.x * dims.z, dims.x * dims.y, dims.x * dims.y};
  double absorption = 0.0;
  for (std::size_t w = 0; w < 6; ++w) absorption += area[w] * (1.0 - reflection[w] * reflection[w]);
  if (absorption <= 0.0) return std::numeric_limits<double>::infinity();
  return kSabineConstant * volume() / absorption;
}

bool RoomSpec::contains(const Vec3& p, double margin) const {
  return p.x >= margin && p.y >= margin && p.z >= margin && p.x <= dims.x - margin && p.y <= dims.y - margin &&
         p.z <= dims.z - margin;
}

void RoomSpec::validate() const {
  if (!(dims.x > 0.0 && dims.y > 0.0 && dims.z > 0.0)) throw DataError("room: dimensions must be positive, got " + fmt(dims));
  for (double b : reflection) {
    if (!(b >= 0.0 && b <= 1.0)) throw DataError("room: reflection coefficients must be in [0, 1], got " + std::to_string(b));
  }
  const bool all_reflective = std::all_of(reflection.begin(), reflection.end(), [](double b) { return b >= 1.0; });
  if (all_reflective && max_order < 0) throw DataError("room: fully reflective walls need an explicit max_order");
}

RoomSpec room_from_rt60(const Vec3& dims, double rt60) {
  RoomSpec room;
  room.dims = dims;
  room.rt60 = rt60;
  if (!(dims.x > 0.0 && dims.y > 0.0 && dims.z > 0.0)) throw DataError("room: dimensions must be positive, got " + fmt(dims));
  const double limit = kSabineConstant * room.volume() / room.surface();
  if (!(rt60 > limit)) {
    throw DataError("room: RT60 " + std::to_string(rt60) + " s is not realisable in a " + fmt(dims) +
                    " m room (needs more than " + std::to_string(limit) + " s)");
  }
  const double absorption = 1.0 - std::exp(-limit / rt60);
  room.reflection.fill(std::sqrt(1.0 - absorption));
  return room;
}

std::vector<Vec3> ArraySpec::positions() const {
  std::vector<Vec3> out(mics);
  for (std::size_t m = 0; m < mics; ++m) {
    const double a = orientation + 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(mics);
    out[m] = {center.x + radius * std::cos(a), center.y + radius * std::sin(a), center.z};
  }
  return out;
}

void ArraySpec::validate(const RoomSpec& room, double margin) const {
  if (mics == 0) throw DataError("array: needs at least one microphone");
  if (!(radius >= 0.0)) throw DataError("array: radius must be non-negative");
  for (const Vec3& p : positions()) {
    if (!room.contains(p, margin)) throw DataError("array: microphone at " + fmt(p) + " is outside the room");
  }
}

int image_order(const RoomSpec& room) {
  if (room.max_order >= 0) return room.max_order;
  const double beta = *std::max_element(room.reflection.begin(), room.reflection.end());
  if (beta <= 0.0) return 0;
  if (beta >= 1.0) throw DataError("room: fully reflective walls need an explicit max_order");
  const double d_max = std::hypot(room.dims.x, room.dims.y, room.dims.z);
  const double l_min = std::min({room.dims.x, room.dims.y, room.dims.z});
  // The bound falls monotonically in n from n = 4 on.
  for (int n = 4;; ++n) {
    const double d_image = (std::ceil(n / 3.0) - 1.0) * l_min;
    if (std::pow(beta, n) * d_max / d_image <= kTailRatio) return n - 1;
    if (n > 10000) throw DataError("room: reflection coefficients too close to 1 for automatic image order");
  }
}

std::vector<std::vector<double>> simulate_rir(const RoomSpec& room, const ArraySpec& array, const Vec3& source,
                                              int sample_rate) {
  room.validate();
  array.validate(room);
  if (!room.contains(source)) throw DataError("simulate_rir: source at " + fmt(source) + " is outside the room");
  if (sample_rate <= 0) throw DataError("simulate_rir: sample rate must be positive");
  const int order = image_order(room);
  const auto mics = array.positions();
  const double fs = static_cast<double>(sample_rate);

  struct Tap {
    std::size_t index;
    double amplitude;
  };
  std::vector<std::vector<Tap>> taps(mics.size());
  std::size_t length = 1;
  const int reach = (order + 1) / 2 + 1;
  const std::array<double, 3> src{source.x, source.y, source.z};
  const std::array<double, 3> dim{room.dims.x, room.dims.y, room.dims.z};
  for (int nx = -reach; nx <= reach; ++nx) {
    for (int ny = -reach; ny <= reach; ++ny) {
      for (int nz = -reach; nz <= reach; ++nz) {
        const std::array<int, 3> n{nx, ny, nz};
        for (int q = 0; q < 8; ++q) {
          // Per axis: image coordinate (1 - 2q) s + 2 n L, with |n - q|
          // reflections off the wall at 0 and |n| off the wall at L.
          std::array<double, 3> img{};
          double gain = 1.0;
          int reflections = 0;
          for (int a = 0; a < 3; ++a) {
            const int qa = (q >> a) & 1;
            img[a] = (1 - 2 * qa) * src[a] + 2.0 * n[a] * dim[a];
            const int low = std::abs(n[a] - qa), high = std::abs(n[a]);
            reflections += low + high;
            gain *= std::pow(room.reflection[2 * a], low) * std::pow(room.reflection[2 * a + 1], high);
          }
          if (reflections > order || gain == 0.0) continue;
          for (std::size_t m = 0; m < mics.size(); ++m) {
            const double d = std::hypot(img[0] - mics[m].x, img[1] - mics[m].y, img[2] - mics[m].z);
            if (d < 1e-3) throw DataError("simulate_rir: source coincides with a microphone");
            const auto index = static_cast<std::size_t>(std::llround(fs * d / kSpeedOfSound));
            taps[m].push_back({index, gain / (4.0 * std::numbers::pi * d)});
            length = std::max(length, index + 1);
          }
        }
      }
    }
  }
  std::vector<std::vector<double>> rir(mics.size(), std::vector<double>(length, 0.0));
  for (std::size_t m = 0; m < mics.size(); ++m) {
    for (const Tap& t : taps[m]) rir[m][t.index] += t.amplitude;
  }
  return rir;
}

std::size_t direct_path_index(const std::vector<double>& rir) {
  if (rir.empty()) throw DataError("direct_path_index: empty impulse response");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rir.size(); ++i) {
    if (std::abs(rir[i]) > std::abs(rir[best])) best = i;
  }
  return best;
}

std::vector<double> shape_target_rir(const std::vector<double>& rir, int sample_rate, const ShapeOptions& options) {
  if (rir.empty()) throw DataError("shape_target_rir: empty impulse response");
  const double fs = static_cast<double>(sample_rate);
  const std::size_t t0 = direct_path_index(rir) + static_cast<std::size_t>(std::llround(options.early * fs));
  const auto span = static_cast<std::size_t>(std::llround(options.cap * fs));
  if (t0 >= rir.size()) return rir;

  // Schroeder energy from t0 and from t0 + cap.
  double from_t0 = 0.0, from_cap = 0.0;
  for (std::size_t i = t0; i < rir.size(); ++i) {
    const double e = rir[i] * rir[i];
    from_t0 += e;
    if (i >= t0 + span) from_cap += e;
  }
  if (from_cap <= from_t0 * kTailRatio * kTailRatio) return rir;

  std::vector<double> out = rir;
  const double rate = std::log(1.0 / kTailRatio) / static_cast<double>(span);
  for (std::size_t i = t0; i < out.size(); ++i) out[i] *= std::exp(-rate * static_cast<double>(i - t0));
  return out;
}

}  // namespace trunet::datagen
