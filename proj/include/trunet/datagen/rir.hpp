#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace trunet::datagen {

class DataError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

constexpr double kSpeedOfSound = 343.0;  // m/s

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

double distance(const Vec3& a, const Vec3& b);

// Shoebox room with one corner at the origin. Walls are ordered
// x=0, x=Lx, y=0, y=Ly, z=0, z=Lz; coefficients are pressure reflection
// factors in [0, 1].
struct RoomSpec {
  Vec3 dims;
  std::array<double, 6> reflection{};
  // RT60 the coefficients were derived from; 0 when set by hand.
  double rt60 = 0.0;
  // Largest total number of wall reflections per image; negative selects
  // the order automatically (see image_order).
  int max_order = -1;

  double volume() const { return dims.x * dims.y * dims.z; }
  double surface() const { return 2.0 * (dims.x * dims.y + dims.x * dims.z + dims.y * dims.z); }
  // Sabine estimate from the surface-averaged absorption 1 - beta^2;
  // infinite for a fully reflective room.
  double sabine_rt60() const;
  bool contains(const Vec3& p, double margin = 0.0) const;
  void validate() const;
};

// Uniform coefficients from Eyring's formula,
// RT60 = 0.161 V / (-S ln(1 - a)), beta = sqrt(1 - a). Throws when the RT60
// is below the fully absorbing limit 0.161 V / S (Sabine check).
RoomSpec room_from_rt60(const Vec3& dims, double rt60);

// Circular array in the horizontal plane around `center`; microphone m sits
// at azimuth orientation + 2 pi m / M.
struct ArraySpec {
  std::size_t mics = 8;
  double radius = 0.05;
  Vec3 center;
  double orientation = 0.0;  // radians

  std::vector<Vec3> positions() const;
  void validate(const RoomSpec& room, double margin = 0.0) const;
};

// Image order beyond which every image is at least 60 dB below the weakest
// direct path: beta_max^n * d_max / d_min(n) <= 1e-3, where an image with n
// reflections lies at least (ceil(n / 3) - 1) * min(L) away.
int image_order(const RoomSpec& room);

// Impulse responses [mic][sample] at `sample_rate`. Each image contributes
// prod(beta) / (4 pi d) at sample round(fs d / c). The length runs to the
// latest image arrival.
std::vector<std::vector<double>> simulate_rir(const RoomSpec& room, const ArraySpec& array, const Vec3& source,
                                              int sample_rate = 16000);

// Index of the direct-path peak (largest magnitude; first on ties).
std::size_t direct_path_index(const std::vector<double>& rir);

struct ShapeOptions {
  double early = 0.05;  // s kept untouched after the direct path
  double cap = 0.2;     // s for 60 dB of decay in the shaped tail
};

// Leaves the direct path and the following `early` seconds alone. If the
// raw tail after that point has not lost 60 dB of energy (Schroeder
// integral) within `cap` seconds, it is multiplied by
// exp(-ln(1000) (t - t0) / cap), which reaches -60 dB at t0 + cap.
std::vector<double> shape_target_rir(const std::vector<double>& rir, int sample_rate = 16000,
                                     const ShapeOptions& options = {});

}  // namespace trunet::datagen
