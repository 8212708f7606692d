#pragma once

#include <functional>
#include <string>
#include <vector>

namespace trunet::cli {

struct GradCheckItem {
  std::string group;  // "layer", "model" or "loss"
  std::string name;
  bool passed = false;
  std::string summary;
  double seconds = 0.0;
};

struct GradCheckSuiteOptions {
  double model_tolerance = 1e-4;  // layers and full models
  double loss_tolerance = 1e-5;
  bool layers = true;
  bool models = true;
  bool loss = true;
  // Coordinates probed per full-model parameter tensor.
  std::size_t model_coords = 16;
  std::function<void(const GradCheckItem&)> on_item;
};

// Finite-difference checks of every layer type, the full toy model in all
// variants and filter modes, and the losses.
std::vector<GradCheckItem> run_gradcheck_suite(const GradCheckSuiteOptions& options = {});

}  // namespace trunet::cli
