#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trunet/numerics/params.hpp"

namespace trunet::num {

// Adam moments aligned with the parameter order of the owning checkpoint.
struct OptimizerState {
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

// Versioned little-endian binary checkpoint. Layout (docs/checkpoint_format.md):
//   "TRUNETCK" | u32 version | u64 len, config text | u64 step | u32 count |
//   count x (u32 len, name | u32 rank | rank x u64 dim | f64 values) |
//   u8 has_optimizer | [u64 adam_step | count x (f64 m) | count x (f64 v)]
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string config_text;
  std::uint64_t step = 0;
  ParameterStore params;
  std::optional<OptimizerState> optimizer;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
Checkpoint deserialize(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace trunet::num
