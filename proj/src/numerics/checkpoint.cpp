#include "trunet/numerics/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace trunet::num {

namespace {

constexpr char kMagic[8] = {'T', 'R', 'U', 'N', 'E', 'T', 'C', 'K'};

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <class T>
  void le(T v) {
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s, bool wide) {
    if (wide) {
      le<std::uint64_t>(s.size());
    } else {
      le<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    }
    raw(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  template <class T>
  T le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.le<std::uint32_t>(Checkpoint::kVersion);
  w.str(ckpt.config_text, true);
  w.le<std::uint64_t>(ckpt.step);
  const auto& names = ckpt.params.names();
  w.le<std::uint32_t>(static_cast<std::uint32_t>(names.size()));
  for (const auto& name : names) {
    const Tensor& t = ckpt.params.get(name);
    w.str(name, false);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.le<std::uint64_t>(d);
    for (double v : t.data()) w.f64(v);
  }
  if (!ckpt.optimizer) {
    w.le<std::uint8_t>(0);
    return w.take();
  }
  const OptimizerState& opt = *ckpt.optimizer;
  if (opt.first_moment.size() != names.size() || opt.second_moment.size() != names.size()) {
    throw CheckpointError("optimizer state does not match parameter count");
  }
  w.le<std::uint8_t>(1);
  w.le<std::uint64_t>(opt.step);
  for (const auto* moments : {&opt.first_moment, &opt.second_moment}) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if ((*moments)[i].size() != ckpt.params.get(names[i]).size()) {
        throw CheckpointError("optimizer moment size mismatch for '" + names[i] + "'");
      }
      for (double v : (*moments)[i].data()) w.f64(v);
    }
  }
  return w.take();
}

Checkpoint deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.str(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) throw CheckpointError("not a checkpoint (bad magic)");
  const auto version = r.le<std::uint32_t>();
  if (version != Checkpoint::kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.config_text = r.str(r.le<std::uint64_t>());
  ckpt.step = r.le<std::uint64_t>();
  const auto count = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.le<std::uint32_t>());
    const auto rank = r.le<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.le<std::uint64_t>();
    Tensor t(shape);
    r.need(t.size() * 8);
    for (double& v : t.data()) v = r.f64();
    ckpt.params.add(name, std::move(t));
  }
  if (r.le<std::uint8_t>()) {
    OptimizerState opt;
    opt.step = r.le<std::uint64_t>();
    for (auto* moments : {&opt.first_moment, &opt.second_moment}) {
      for (const auto& name : ckpt.params.names()) {
        Tensor t(ckpt.params.get(name).shape());
        r.need(t.size() * 8);
        for (double& v : t.data()) v = r.f64();
        moments->push_back(std::move(t));
      }
    }
    ckpt.optimizer = std::move(opt);
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint payload");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = serialize(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace trunet::num
