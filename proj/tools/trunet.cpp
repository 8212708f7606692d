// trunet: data generation, training, separation, evaluation and gradient
// checks from the command line.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "trunet/cli/config.hpp"
#include "trunet/cli/gradcheck.hpp"
#include "trunet/cli/train.hpp"
#include "trunet/datagen/rir.hpp"
#include "trunet/dsp/wav_io.hpp"

namespace fs = std::filesystem;
using namespace trunet;

namespace {

struct Common {
  std::string config_file;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::string checkpoint;
  std::vector<std::string> overrides;  // key=value
};

void apply_overrides(cli::RunConfig& config, const Common& c) {
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw cli::ConfigError("--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    };
    cli::set_key(config, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  if (c.seed) config.seed = *c.seed;
  config.finalize();
}

// Preset, then the config file, then --set pairs and --seed.
cli::RunConfig run_config(const Common& c) {
  cli::KeyValues pairs;
  if (!c.config_file.empty()) {
    std::ifstream in(c.config_file);
    if (!in) throw cli::ConfigError("cannot read config " + c.config_file);
    std::stringstream ss;
    ss << in.rdbuf();
    pairs = cli::parse_key_values(ss.str());
  }
  if (!c.preset.empty()) pairs.insert(pairs.begin(), {"preset", c.preset});
  cli::RunConfig config = cli::resolve(pairs);
  apply_overrides(config, c);
  return config;
}

// The configuration a checkpoint was trained with, plus --set and --seed.
cli::RunConfig checkpoint_config(const num::Checkpoint& ckpt, const Common& c) {
  cli::RunConfig config = cli::resolve(cli::parse_key_values(ckpt.config_text));
  apply_overrides(config, c);
  return config;
}

void write_config(const fs::path& dir, const cli::RunConfig& config) {
  fs::create_directories(dir);
  std::ofstream(dir / "config.txt") << cli::to_text(config);
}

nlohmann::json vec_json(const datagen::Vec3& v) { return {v.x, v.y, v.z}; }

int simulate_rir(const Common& c) {
  const cli::RunConfig config = run_config(c);
  const fs::path dir = c.out_dir;
  write_config(dir, config);
  const auto scene = datagen::draw_scene(config.data, config.seed);
  const int rate = config.data.sample_rate;
  nlohmann::json meta;
  meta["seed"] = config.seed;
  meta["room"] = {{"dims", vec_json(scene.room.dims)},
                  {"reflection", scene.room.reflection},
                  {"rt60", scene.room.rt60},
                  {"image_order", datagen::image_order(scene.room)}};
  nlohmann::json mics = nlohmann::json::array();
  for (const auto& p : scene.array.positions()) mics.push_back(vec_json(p));
  meta["mics"] = mics;
  for (std::size_t s = 0; s < 2; ++s) {
    const auto rir = datagen::simulate_rir(scene.room, scene.array, scene.sources[s], rate);
    std::vector<std::vector<double>> shaped;
    for (const auto& ch : rir) shaped.push_back(datagen::shape_target_rir(ch, rate));
    const std::string stem = "rir_s" + std::to_string(s + 1);
    dsp::write_wav(dir / (stem + ".wav"), dsp::MultiWave(rir, rate));
    dsp::write_wav(dir / (stem + "_shaped.wav"), dsp::MultiWave(shaped, rate));
    meta["sources"].push_back({{"position", vec_json(scene.sources[s])},
                               {"distance", datagen::distance(scene.sources[s], scene.array.center)},
                               {"rir", stem + ".wav"},
                               {"shaped_rir", stem + "_shaped.wav"},
                               {"samples", rir.front().size()}});
  }
  std::ofstream(dir / "scene.json") << meta.dump(2) << '\n';
  std::printf("room %.2f x %.2f x %.2f m, RT60 %.2f s, order %d -> %s\n", scene.room.dims.x, scene.room.dims.y,
              scene.room.dims.z, scene.room.rt60, datagen::image_order(scene.room), dir.string().c_str());
  return 0;
}

int mixgen(const Common& c) {
  const cli::RunConfig config = run_config(c);
  const fs::path dir = c.out_dir;
  write_config(dir, config);
  const auto records = datagen::generate_dataset(config.data, config.data_count, config.seed, dir);
  std::printf("%zu scenes (%g s, M=%zu) -> %s\n", records.size(), config.data.seconds, config.data.mics,
              (dir / "manifest.jsonl").string().c_str());
  return 0;
}

int train(const Common& c, const std::string& data_dir, std::size_t log_every) {
  std::optional<num::Checkpoint> resume;
  cli::RunConfig config;
  if (!c.checkpoint.empty()) {
    resume = num::load_checkpoint(c.checkpoint);
    config = c.config_file.empty() && c.preset.empty() ? checkpoint_config(*resume, c) : run_config(c);
  } else {
    config = run_config(c);
  }
  auto data = cli::load_examples(data_dir, config.model);
  cli::Trainer trainer = resume ? cli::Trainer(config, std::move(data), *resume) : cli::Trainer(config, std::move(data));
  std::printf("training %zu -> %zu steps on %zu examples\n", trainer.completed(), config.train.steps,
              trainer.data().size());
  const auto t0 = std::chrono::steady_clock::now();
  double acc = 0.0;
  std::size_t n = 0;
  cli::TrainOptions opt;
  opt.out_dir = c.out_dir;
  opt.on_step = [&](const cli::StepResult& r) {
    acc += r.loss;
    ++n;
    if ((r.step + 1) % log_every == 0 || r.step + 1 == config.train.steps) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::printf("step %7zu  loss %.5f  grad_norm %.4f  %.0f s\n", r.step + 1, acc / static_cast<double>(n),
                  r.grad_norm, secs);
      std::fflush(stdout);
      acc = 0.0;
      n = 0;
    }
  };
  const fs::path final_path = cli::train(trainer, opt);
  std::printf("final checkpoint %s\n", final_path.string().c_str());
  return 0;
}

int separate(const Common& c, const std::vector<std::string>& inputs) {
  if (c.checkpoint.empty()) throw cli::ConfigError("separate needs --checkpoint");
  const num::Checkpoint ckpt = num::load_checkpoint(c.checkpoint);
  const cli::RunConfig config = checkpoint_config(ckpt, c);
  const fs::path dir = c.out_dir;
  fs::create_directories(dir);
  for (const auto& in : inputs) {
    const dsp::MultiWave mixture = dsp::read_wav(in, config.data.sample_rate);
    if (mixture.channels() != config.model.mics()) {
      throw cli::ConfigError(in + ": input has " + std::to_string(mixture.channels()) +
                             " channels, the model expects M=" + std::to_string(config.model.mics()));
    }
    const auto waves = runet::separate(mixture, config.model, ckpt.params);
    const std::string stem = fs::path(in).stem().string();
    for (std::size_t s = 0; s < waves.size(); ++s) {
      const fs::path out = dir / (stem + "_s" + std::to_string(s + 1) + ".wav");
      dsp::write_wav(out, waves[s]);
      std::printf("%s\n", out.string().c_str());
    }
  }
  return 0;
}

int evaluate(const Common& c, const std::string& data_dir) {
  if (c.checkpoint.empty()) throw cli::ConfigError("evaluate needs --checkpoint");
  const num::Checkpoint ckpt = num::load_checkpoint(c.checkpoint);
  const cli::RunConfig config = checkpoint_config(ckpt, c);
  const auto data = cli::load_examples(data_dir, config.model);
  const auto report = cli::evaluate_model(config.model, ckpt.params, data);
  const fs::path dir = c.out_dir;
  fs::create_directories(dir);
  std::ofstream(dir / "metrics.jsonl") << report.to_jsonl();
  std::printf("%s", report.to_table().c_str());
  return 0;
}

int gradcheck(std::size_t coords, bool layers, bool models, bool losses) {
  cli::GradCheckSuiteOptions opt;
  opt.model_coords = coords;
  opt.layers = layers;
  opt.models = models;
  opt.loss = losses;
  opt.on_item = [](const cli::GradCheckItem& item) {
    std::printf("%-6s %-28s %s  %.1f s  %s\n", item.group.c_str(), item.name.c_str(), item.passed ? "PASS" : "FAIL",
                item.seconds, item.summary.c_str());
    std::fflush(stdout);
  };
  const auto items = cli::run_gradcheck_suite(opt);
  std::size_t failed = 0;
  for (const auto& item : items) failed += item.passed ? 0 : 1;
  std::printf("%zu of %zu checks passed\n", items.size() - failed, items.size());
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TRUNet multi-channel speech separation"};
  app.require_subcommand(1);
  Common c;
  app.add_option("--config", c.config_file, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--preset", c.preset, "Base settings")->check(CLI::IsMember({"toy", "paper"}));
  app.add_option("--seed", c.seed, "Run seed (overrides the config)");
  app.add_option("--out-dir", c.out_dir, "Output directory");
  app.add_option("--checkpoint", c.checkpoint, "Checkpoint to resume from or to run");
  app.add_option("--set", c.overrides, "Override one config key (key=value), repeatable");

  auto* sim = app.add_subcommand("simulate-rir", "Draw one scene and write its impulse responses");
  auto* mix = app.add_subcommand("mixgen", "Generate a dataset of mixtures and targets");

  auto* tr = app.add_subcommand("train", "Train a model on a generated dataset");
  std::string train_data;
  std::size_t log_every = 50;
  tr->add_option("--data", train_data, "Dataset directory (manifest.jsonl)")->required();
  tr->add_option("--log-every", log_every, "Steps between progress lines")->check(CLI::PositiveNumber);

  auto* sep = app.add_subcommand("separate", "Separate multi-channel WAV files");
  std::vector<std::string> inputs;
  sep->add_option("--input", inputs, "M-channel mixture WAV, repeatable")->required()->check(CLI::ExistingFile);

  auto* ev = app.add_subcommand("evaluate", "Score a checkpoint on a dataset");
  std::string eval_data;
  ev->add_option("--data", eval_data, "Dataset directory (manifest.jsonl)")->required();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference checks of layers, toy models and losses");
  std::size_t coords = 16;
  bool skip_layers = false, skip_models = false, skip_loss = false;
  gc->add_option("--coords", coords, "Coordinates per model parameter tensor");
  gc->add_flag("--skip-layers", skip_layers);
  gc->add_flag("--skip-models", skip_models);
  gc->add_flag("--skip-loss", skip_loss);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return simulate_rir(c);
    if (*mix) return mixgen(c);
    if (*tr) return train(c, train_data, log_every);
    if (*sep) return separate(c, inputs);
    if (*ev) return evaluate(c, eval_data);
    if (*gc) return gradcheck(coords, !skip_layers, !skip_models, !skip_loss);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "trunet: %s\n", e.what());
    return 1;
  }
  return 0;
}
