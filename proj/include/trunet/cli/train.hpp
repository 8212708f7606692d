#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "trunet/cli/config.hpp"
#include "trunet/datagen/scene.hpp"
#include "trunet/metrics/metrics.hpp"
#include "trunet/numerics/checkpoint.hpp"

namespace trunet::cli {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One training utterance: the M-channel mixture and the reference-channel
// targets, as waves and as spectra.
struct Example {
  std::string id;
  dsp::MultiWave mixture;
  std::array<std::vector<double>, 2> targets;
  dsp::Spectra mixture_spec;
  std::array<dsp::Spectra, 2> target_spec;  // [1, K, F]
};

Example make_example(const std::string& id, const dsp::MultiWave& mixture,
                     const std::array<dsp::MultiWave, 2>& targets, const runet::ModelConfig& model);
// Every scene of a generated dataset (manifest.jsonl in `dataset_dir`).
// Throws when the channel count differs from the model's M.
std::vector<Example> load_examples(const std::filesystem::path& dataset_dir, const runet::ModelConfig& model);

// Scales `grads` in place so their joint L2 norm is at most `max_norm`;
// returns the norm before scaling.
double clip_global_norm(std::vector<num::Tensor>& grads, double max_norm);

// Zero moments shaped like the parameters.
num::OptimizerState fresh_optimizer(const num::ParameterStore& params);
// One bias-corrected Adam step.
void adam_update(num::ParameterStore& params, const std::vector<num::Tensor>& grads, num::OptimizerState& state,
                 const TrainConfig& config);

// Example used in slot `slot` of step `step`: the examples are visited in a
// fresh seeded permutation every epoch.
std::size_t scheduled_example(std::uint64_t seed, std::size_t step, std::size_t slot, std::size_t batch,
                              std::size_t count);

// Initial parameters for config.model, drawn from config.seed.
num::ParameterStore init_params(const RunConfig& config);

// uPIT loss of the model on one example; recorded when `params` is bound to a
// tape.
num::Var example_loss(const RunConfig& config, num::ParamView& params, const Example& example);

struct StepResult {
  std::size_t step = 0;  // index of the step just taken, from 0
  double loss = 0.0;     // batch mean before the update
  double grad_norm = 0.0;  // before clipping
  std::vector<std::size_t> examples;
};

class Trainer {
 public:
  Trainer(RunConfig config, std::vector<Example> data);
  // Continues from a checkpoint taken by checkpoint(); the parameter layout
  // must match config.model.
  Trainer(RunConfig config, std::vector<Example> data, const num::Checkpoint& resume);

  // Forward, uPIT loss, backward, clipping and one Adam update. Throws
  // TrainError with parameter statistics when the loss or the gradient is not
  // finite.
  StepResult step();

  std::size_t completed() const { return completed_; }
  const RunConfig& config() const { return config_; }
  const num::ParameterStore& params() const { return params_; }
  const std::vector<Example>& data() const { return data_; }
  num::Checkpoint checkpoint() const;

 private:
  RunConfig config_;
  std::vector<Example> data_;
  num::ParameterStore params_;
  num::OptimizerState optimizer_;
  std::size_t completed_ = 0;
};

// Per-tensor min, max, RMS and non-finite count, one line each.
std::string parameter_stats(const num::ParameterStore& params);

struct TrainOptions {
  std::filesystem::path out_dir;
  std::function<void(const StepResult&)> on_step;
};

// Runs `trainer` up to config.train.steps. Writes the resolved config
// (config.txt), loss.csv (appended when resuming), step_NNNNNNN.ckpt every
// checkpoint_every steps and final.ckpt. Returns the final checkpoint path.
std::filesystem::path train(Trainer& trainer, const TrainOptions& options);

// Separates every example and scores it against its reference-channel
// targets.
metrics::EvalReport evaluate_model(const runet::ModelConfig& model, const num::ParameterStore& params,
                                   const std::vector<Example>& data);

}  // namespace trunet::cli
