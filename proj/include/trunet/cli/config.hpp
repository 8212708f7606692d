#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "trunet/datagen/scene.hpp"
#include "trunet/loss/loss.hpp"
#include "trunet/runet/model.hpp"

namespace trunet::cli {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TrainConfig {
  std::size_t steps = 2000;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip = 5.0;  // maximum global L2 norm of the gradient
  std::size_t batch = 1;
  std::size_t checkpoint_every = 500;  // 0: only the final checkpoint
  // Loss on the STFT of the resynthesised waves rather than on the filtered
  // spectra directly.
  bool consistent = true;

  void validate() const;
};

// Everything a run depends on. Every field has a flat key (see keys()).
struct RunConfig {
  std::string preset = "toy";
  std::uint64_t seed = 1;
  runet::ModelConfig model;
  loss::LossConfig loss;
  TrainConfig train;
  datagen::SceneConfig data;
  std::size_t data_count = 4;  // scenes written by mixgen

  // Recomputes the fields that follow from others (bins from the STFT, RUNet
  // input planes from M and use_tnet, data.mics from M) and validates.
  void finalize();
};

// Defaults of a named preset ("toy" or "paper").
RunConfig preset_config(const std::string& name);

// Parsed "key = value" lines; '#' starts a comment. Duplicate keys keep the
// last value.
using KeyValues = std::vector<std::pair<std::string, std::string>>;
KeyValues parse_key_values(const std::string& text);

// Applies `preset` first (from the pairs, default toy), then every other key
// in order. Unknown keys and malformed values throw ConfigError.
RunConfig resolve(const KeyValues& pairs);
RunConfig load_config(const std::filesystem::path& path);

// Sets one key on an existing config (no finalize).
void set_key(RunConfig& config, const std::string& key, const std::string& value);

// Every key with its resolved value, one per line, in a fixed order.
// resolve(parse_key_values(to_text(c))) reproduces c exactly.
std::string to_text(const RunConfig& config);

// All recognised keys in output order.
const std::vector<std::string>& keys();

}  // namespace trunet::cli
