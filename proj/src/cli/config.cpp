#include "trunet/cli/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace trunet::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("config: " + key + " = '" + value + "' is not " + expected);
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }
std::string fmt(const datagen::Vec3& v) { return fmt(v.x) + "," + fmt(v.y) + "," + fmt(v.z); }

double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) bad_value(key, s, "a number");
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) bad_value(key, s, "a non-negative integer");
  return v;
}

std::size_t parse_size(const std::string& key, const std::string& s) {
  return static_cast<std::size_t>(parse_u64(key, s));
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  bad_value(key, s, "a boolean");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(trim(item));
  return parts;
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& p : split(s, ',')) out.push_back(parse_size(key, p));
  if (out.empty()) bad_value(key, s, "a comma-separated list");
  return out;
}

datagen::Vec3 parse_vec3(const std::string& key, const std::string& s) {
  const auto p = split(s, ',');
  if (p.size() != 3) bad_value(key, s, "three comma-separated numbers");
  return {parse_double(key, p[0]), parse_double(key, p[1]), parse_double(key, p[2])};
}

std::string fmt_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string filter_name(dsp::FilterMode m) { return m == dsp::FilterMode::kMultiChannel ? "multi" : "single"; }

dsp::FilterMode parse_filter(const std::string& key, const std::string& s) {
  if (s == "multi") return dsp::FilterMode::kMultiChannel;
  if (s == "single") return dsp::FilterMode::kSingleChannel;
  bad_value(key, s, "multi or single");
}

struct Key {
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define TRUNET_NUM_KEY(name, field, parser) \
  Key { name, [](const RunConfig& c) { return fmt(c.field); }, [](RunConfig& c, const std::string& v) { c.field = parser(name, v); } }

const std::vector<Key>& table() {
  static const std::vector<Key> t = {
      {"preset", [](const RunConfig& c) { return c.preset; }, [](RunConfig& c, const std::string& v) { c.preset = v; }},
      {"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
       [](RunConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); }},
      {"model.variant", [](const RunConfig& c) { return tnet::to_string(c.model.tnet.variant); },
       [](RunConfig& c, const std::string& v) {
         try {
           c.model.tnet.variant = tnet::parse_variant(v);
         } catch (const tnet::ConfigError&) {
           bad_value("model.variant", v, "cat, realimag or magphase");
         }
       }},
      {"model.filter", [](const RunConfig& c) { return filter_name(c.model.runet.mode); },
       [](RunConfig& c, const std::string& v) { c.model.runet.mode = parse_filter("model.filter", v); }},
      TRUNET_NUM_KEY("model.use_tnet", model.use_tnet, parse_bool),
      TRUNET_NUM_KEY("model.mics", model.runet.mics, parse_size),
      TRUNET_NUM_KEY("model.reference_channel", model.reference_channel, parse_size),
      TRUNET_NUM_KEY("tnet.blocks", model.tnet.blocks, parse_size),
      TRUNET_NUM_KEY("tnet.heads", model.tnet.heads, parse_size),
      TRUNET_NUM_KEY("tnet.dim", model.tnet.dim, parse_size),
      TRUNET_NUM_KEY("tnet.ff_dim", model.tnet.ff_dim, parse_size),
      TRUNET_NUM_KEY("tnet.positional_encoding", model.tnet.positional_encoding, parse_bool),
      {"runet.channels", [](const RunConfig& c) { return fmt_sizes(c.model.runet.channels); },
       [](RunConfig& c, const std::string& v) { c.model.runet.channels = parse_sizes("runet.channels", v); }},
      TRUNET_NUM_KEY("runet.kernel_time", model.runet.kernel_time, parse_size),
      TRUNET_NUM_KEY("runet.kernel_freq", model.runet.kernel_freq, parse_size),
      TRUNET_NUM_KEY("runet.lstm_hidden", model.runet.lstm_hidden, parse_size),
      TRUNET_NUM_KEY("stft.frame", model.stft.frame, parse_size),
      TRUNET_NUM_KEY("stft.hop", model.stft.hop, parse_size),
      {"loss.mode", [](const RunConfig& c) { return loss::to_string(c.loss.mode); },
       [](RunConfig& c, const std::string& v) {
         try {
           c.loss.mode = loss::parse_mode(v);
         } catch (const loss::LossError&) {
           bad_value("loss.mode", v, "cmse or combined");
         }
       }},
      TRUNET_NUM_KEY("loss.c", loss.c, parse_double),
      TRUNET_NUM_KEY("loss.alpha", loss.alpha, parse_double),
      TRUNET_NUM_KEY("train.steps", train.steps, parse_size),
      TRUNET_NUM_KEY("train.lr", train.learning_rate, parse_double),
      TRUNET_NUM_KEY("train.beta1", train.beta1, parse_double),
      TRUNET_NUM_KEY("train.beta2", train.beta2, parse_double),
      TRUNET_NUM_KEY("train.epsilon", train.epsilon, parse_double),
      TRUNET_NUM_KEY("train.clip", train.clip, parse_double),
      TRUNET_NUM_KEY("train.batch", train.batch, parse_size),
      TRUNET_NUM_KEY("train.checkpoint_every", train.checkpoint_every, parse_size),
      TRUNET_NUM_KEY("train.consistent", train.consistent, parse_bool),
      TRUNET_NUM_KEY("data.count", data_count, parse_size),
      TRUNET_NUM_KEY("data.seconds", data.seconds, parse_double),
      {"data.sample_rate", [](const RunConfig& c) { return std::to_string(c.data.sample_rate); },
       [](RunConfig& c, const std::string& v) { c.data.sample_rate = static_cast<int>(parse_size("data.sample_rate", v)); }},
      TRUNET_NUM_KEY("data.array_radius", data.array_radius, parse_double),
      TRUNET_NUM_KEY("data.room_min", data.room_min, parse_vec3),
      TRUNET_NUM_KEY("data.room_max", data.room_max, parse_vec3),
      TRUNET_NUM_KEY("data.rt60_min", data.rt60_min, parse_double),
      TRUNET_NUM_KEY("data.rt60_max", data.rt60_max, parse_double),
      TRUNET_NUM_KEY("data.wall_margin", data.wall_margin, parse_double),
      TRUNET_NUM_KEY("data.min_source_distance", data.min_source_distance, parse_double),
      TRUNET_NUM_KEY("data.energy_ratio_mean", data.energy_ratio.mean, parse_double),
      TRUNET_NUM_KEY("data.energy_ratio_std", data.energy_ratio.stddev, parse_double),
      TRUNET_NUM_KEY("data.snr_mean", data.snr.mean, parse_double),
      TRUNET_NUM_KEY("data.snr_std", data.snr.stddev, parse_double),
      TRUNET_NUM_KEY("data.level_mean", data.level.mean, parse_double),
      TRUNET_NUM_KEY("data.level_std", data.level.stddev, parse_double),
      TRUNET_NUM_KEY("data.max_level", data.max_level, parse_double),
  };
  return t;
}

#undef TRUNET_NUM_KEY

}  // namespace

void TrainConfig::validate() const {
  if (!(clip > 0.0)) throw ConfigError("train: clip norm must be positive");
  if (!(learning_rate >= 0.0)) throw ConfigError("train: learning rate must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train: Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("train: Adam epsilon must be positive");
  if (batch == 0) throw ConfigError("train: batch size must be positive");
}

void RunConfig::finalize() {
  if (preset != "toy" && preset != "paper") throw ConfigError("config: preset must be toy or paper, got '" + preset + "'");
  const std::size_t m = model.runet.mics;
  model.tnet.bins = model.stft.bins();
  model.runet.bins = model.stft.bins();
  model.runet.input_channels = model.use_tnet ? 3 * m : 2 * m;
  data.mics = m;
  try {
    model.validate();
    loss.validate();
    data.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  train.validate();
  if (model.runet.sources != 2) throw ConfigError("config: the data pipeline produces two sources");
}

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "toy") {
    c.model = runet::toy_preset();
    c.data.seconds = 2.0;
    c.data_count = 4;
  } else if (name == "paper") {
    c.model = runet::paper_preset();
    c.data.seconds = 30.0;
    c.data_count = 1000;
    c.train.steps = 100000;
    c.train.checkpoint_every = 5000;
  } else {
    throw ConfigError("config: unknown preset '" + name + "' (expected toy or paper)");
  }
  c.data.mics = c.model.mics();
  return c;
}

KeyValues parse_key_values(const std::string& text) {
  KeyValues out;
  std::istringstream is(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(is, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: line " + std::to_string(number) + " is not 'key = value': " + line);
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

void set_key(RunConfig& config, const std::string& key, const std::string& value) {
  for (const Key& k : table()) {
    if (k.name == key) {
      k.set(config, value);
      return;
    }
  }
  throw ConfigError("config: unknown key '" + key + "'");
}

RunConfig resolve(const KeyValues& pairs) {
  std::string preset = "toy";
  for (const auto& [k, v] : pairs) {
    if (k == "preset") preset = v;
  }
  RunConfig c = preset_config(preset);
  for (const auto& [k, v] : pairs) {
    if (k != "preset") set_key(c, k, v);
  }
  c.finalize();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return resolve(parse_key_values(ss.str()));
}

std::string to_text(const RunConfig& config) {
  std::string out;
  for (const Key& k : table()) out += k.name + " = " + k.get(config) + "\n";
  return out;
}

const std::vector<std::string>& keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const Key& k : table()) n.push_back(k.name);
    return n;
  }();
  return names;
}

}  // namespace trunet::cli
