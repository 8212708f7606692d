#include "trunet/cli/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "trunet/numerics/ops.hpp"

namespace trunet::cli {

namespace fs = std::filesystem;

namespace {

// Stream indices under the run seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kScheduleStream = 2;

}  // namespace

Example make_example(const std::string& id, const dsp::MultiWave& mixture,
                     const std::array<dsp::MultiWave, 2>& targets, const runet::ModelConfig& model) {
  if (mixture.channels() != model.mics()) {
    throw TrainError("example " + id + ": mixture has " + std::to_string(mixture.channels()) +
                     " channels, the model expects M=" + std::to_string(model.mics()));
  }
  const std::size_t ref = model.reference_channel;
  std::array<std::vector<double>, 2> ref_targets;
  for (std::size_t s = 0; s < 2; ++s) {
    if (targets[s].samples() != mixture.samples() || targets[s].channels() <= ref) {
      throw TrainError("example " + id + ": target " + std::to_string(s + 1) + " does not match the mixture");
    }
    const auto ch = targets[s].channel(ref);
    ref_targets[s].assign(ch.begin(), ch.end());
  }
  const int rate = mixture.sample_rate();
  return Example{id,
                 mixture,
                 ref_targets,
                 dsp::stft(mixture, model.stft),
                 {dsp::stft(dsp::MultiWave({ref_targets[0]}, rate), model.stft),
                  dsp::stft(dsp::MultiWave({ref_targets[1]}, rate), model.stft)}};
}

std::vector<Example> load_examples(const fs::path& dataset_dir, const runet::ModelConfig& model) {
  const auto records = datagen::read_manifest(dataset_dir / "manifest.jsonl");
  if (records.empty()) throw TrainError("dataset " + dataset_dir.string() + " has no scenes");
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const auto scene = datagen::load_scene(r, dataset_dir);
    out.push_back(make_example(fs::path(r.mixture_file).stem().string(), scene.mixture, scene.targets, model));
  }
  return out;
}

double clip_global_norm(std::vector<num::Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double v : g.data()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& g : grads) {
      for (double& v : g.data()) v *= scale;
    }
  }
  return norm;
}

num::OptimizerState fresh_optimizer(const num::ParameterStore& params) {
  num::OptimizerState s;
  for (const auto& name : params.names()) {
    const auto& shape = params.get(name).shape();
    s.first_moment.emplace_back(shape, 0.0);
    s.second_moment.emplace_back(shape, 0.0);
  }
  return s;
}

void adam_update(num::ParameterStore& params, const std::vector<num::Tensor>& grads, num::OptimizerState& state,
                 const TrainConfig& c) {
  const auto& names = params.names();
  if (grads.size() != names.size() || state.first_moment.size() != names.size()) {
    throw TrainError("adam: gradient or moment count does not match the parameters");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < names.size(); ++i) {
    num::Tensor& p = params.get(names[i]);
    num::Tensor& m = state.first_moment[i];
    num::Tensor& v = state.second_moment[i];
    const num::Tensor& g = grads[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
      p[k] -= c.learning_rate * (m[k] / bias1) / (std::sqrt(v[k] / bias2) + c.epsilon);
    }
  }
}

std::size_t scheduled_example(std::uint64_t seed, std::size_t step, std::size_t slot, std::size_t batch,
                              std::size_t count) {
  if (count == 0) throw TrainError("schedule: no examples");
  const std::size_t global = step * batch + slot;
  const std::size_t epoch = global / count;
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  num::Rng rng(num::derive_seed(num::derive_seed(seed, kScheduleStream), epoch));
  // Fisher-Yates with explicit draws; std::shuffle is not specified
  // bit-for-bit across standard libraries.
  for (std::size_t i = count; i-- > 1;) std::swap(order[i], order[rng.next() % (i + 1)]);
  return order[global % count];
}

num::ParameterStore init_params(const RunConfig& config) {
  num::ParameterStore ps;
  num::Rng rng(num::derive_seed(config.seed, kInitStream));
  runet::add_model_params(ps, config.model, rng);
  return ps;
}

num::Var example_loss(const RunConfig& config, num::ParamView& params, const Example& ex) {
  const auto out = runet::trunet_forward(ex.mixture_spec.as_constants(), ex.mixture.samples(), config.model, params);
  const std::vector<dsp::ComplexPlanes> targets{ex.target_spec[0].as_constants(), ex.target_spec[1].as_constants()};
  const auto& estimates = config.train.consistent ? out.consistent : out.estimates;
  const loss::LossConfig lc = config.loss;
  return loss::upit(targets, estimates, [&lc](const dsp::ComplexPlanes& t, const dsp::ComplexPlanes& e) {
           return loss::loss(t, e, lc);
         }).loss;
}

Trainer::Trainer(RunConfig config, std::vector<Example> data)
    : config_(std::move(config)), data_(std::move(data)), params_(init_params(config_)) {
  if (data_.empty()) throw TrainError("train: no training examples");
  optimizer_ = fresh_optimizer(params_);
}

Trainer::Trainer(RunConfig config, std::vector<Example> data, const num::Checkpoint& resume)
    : config_(std::move(config)), data_(std::move(data)), params_(resume.params), completed_(resume.step) {
  if (data_.empty()) throw TrainError("train: no training examples");
  const num::ParameterStore layout = init_params(config_);
  bool same = layout.names() == params_.names();
  for (std::size_t i = 0; same && i < layout.names().size(); ++i) {
    same = layout.get(layout.names()[i]).shape() == params_.get(layout.names()[i]).shape();
  }
  if (!same) throw TrainError("resume: checkpoint parameters do not match the configured model");
  if (resume.optimizer) {
    optimizer_ = *resume.optimizer;
    if (optimizer_.first_moment.size() != params_.size() || optimizer_.second_moment.size() != params_.size()) {
      throw TrainError("resume: optimizer state does not match the parameters");
    }
  } else {
    optimizer_ = fresh_optimizer(params_);
  }
}

std::string parameter_stats(const num::ParameterStore& params) {
  std::ostringstream os;
  char line[256];
  for (const auto& name : params.names()) {
    const auto& t = params.get(name);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo, sq = 0.0;
    std::size_t bad = 0;
    for (double v : t.data()) {
      if (!std::isfinite(v)) {
        ++bad;
        continue;
      }
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sq += v * v;
    }
    std::snprintf(line, sizeof line, "  %-40s min %+.4e max %+.4e rms %.4e non-finite %zu\n", name.c_str(), lo, hi,
                  std::sqrt(sq / static_cast<double>(t.size())), bad);
    os << line;
  }
  return os.str();
}

StepResult Trainer::step() {
  const TrainConfig& tc = config_.train;
  StepResult r;
  r.step = completed_;
  const auto& names = params_.names();
  std::vector<num::Tensor> grads;
  for (const auto& n : names) grads.emplace_back(params_.get(n).shape(), 0.0);

  double total = 0.0;
  for (std::size_t slot = 0; slot < tc.batch; ++slot) {
    const std::size_t idx = scheduled_example(config_.seed, completed_, slot, tc.batch, data_.size());
    r.examples.push_back(idx);
    num::Tape tape;
    num::ParamView view(params_, &tape);
    const num::Var l = example_loss(config_, view, data_[idx]);
    const double value = l.value()[0];
    if (!std::isfinite(value)) {
      throw TrainError("train: non-finite loss at step " + std::to_string(completed_) + " on example " +
                       data_[idx].id + "\nparameters:\n" + parameter_stats(params_));
    }
    total += value;
    tape.backward(l);
    for (std::size_t i = 0; i < names.size(); ++i) {
      const num::Tensor g = view.grad(names[i]);
      for (std::size_t k = 0; k < g.size(); ++k) grads[i][k] += g[k];
    }
  }
  const double inv = 1.0 / static_cast<double>(tc.batch);
  if (tc.batch > 1) {
    for (auto& g : grads) {
      for (double& v : g.data()) v *= inv;
    }
  }
  r.loss = total * inv;
  r.grad_norm = clip_global_norm(grads, tc.clip);
  if (!std::isfinite(r.grad_norm)) {
    throw TrainError("train: non-finite gradient at step " + std::to_string(completed_) + "\nparameters:\n" +
                     parameter_stats(params_));
  }
  adam_update(params_, grads, optimizer_, tc);
  ++completed_;
  return r;
}

num::Checkpoint Trainer::checkpoint() const {
  num::Checkpoint c;
  c.config_text = to_text(config_);
  c.step = completed_;
  c.params = params_;
  c.optimizer = optimizer_;
  return c;
}

fs::path train(Trainer& trainer, const TrainOptions& options) {
  const fs::path& dir = options.out_dir;
  fs::create_directories(dir);
  const RunConfig& config = trainer.config();
  {
    std::ofstream cfg(dir / "config.txt");
    cfg << to_text(config);
  }
  const fs::path csv_path = dir / "loss.csv";
  const bool append = trainer.completed() > 0 && fs::exists(csv_path);
  std::ofstream csv(csv_path, append ? std::ios::app : std::ios::trunc);
  if (!append) csv << "step,loss,grad_norm,examples\n";

  char name[64];
  while (trainer.completed() < config.train.steps) {
    const StepResult r = trainer.step();
    std::string ex;
    for (std::size_t i : r.examples) ex += (ex.empty() ? "" : " ") + std::to_string(i);
    char row[128];
    std::snprintf(row, sizeof row, "%zu,%.17g,%.17g,", r.step, r.loss, r.grad_norm);
    csv << row << ex << '\n';
    if (options.on_step) options.on_step(r);
    const std::size_t every = config.train.checkpoint_every;
    if (every > 0 && trainer.completed() % every == 0) {
      std::snprintf(name, sizeof name, "step_%07zu.ckpt", trainer.completed());
      num::save_checkpoint(dir / name, trainer.checkpoint());
    }
  }
  csv.flush();
  const fs::path final_path = dir / "final.ckpt";
  num::save_checkpoint(final_path, trainer.checkpoint());
  return final_path;
}

metrics::EvalReport evaluate_model(const runet::ModelConfig& model, const num::ParameterStore& params,
                                   const std::vector<Example>& data) {
  metrics::EvalReport report;
  for (const Example& ex : data) {
    const auto waves = runet::separate(ex.mixture, model, params);
    std::vector<std::vector<double>> separated;
    for (const auto& w : waves) {
      const auto ch = w.channel(0);
      separated.emplace_back(ch.begin(), ch.end());
    }
    const std::vector<std::vector<double>> targets(ex.targets.begin(), ex.targets.end());
    report.utterances.push_back(
        metrics::evaluate(separated, targets, ex.mixture.channel(model.reference_channel), ex.id));
  }
  return report;
}

}  // namespace trunet::cli
