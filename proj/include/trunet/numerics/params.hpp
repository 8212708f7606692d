#pragma once

#include <map>
#include <string>
#include <vector>

#include "trunet/numerics/rng.hpp"
#include "trunet/numerics/tape.hpp"

namespace trunet::num {

// Named model parameters in insertion order.
class ParameterStore {
 public:
  Tensor& add(const std::string& name, Tensor value);
  // Uniform in +-sqrt(1/fan_in).
  Tensor& add_uniform(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng);
  Tensor& add_zeros(const std::string& name, Shape shape) { return add(name, Tensor(std::move(shape), 0.0)); }
  Tensor& add_ones(const std::string& name, Shape shape) { return add(name, Tensor(std::move(shape), 1.0)); }

  bool contains(const std::string& name) const { return values_.count(name) != 0; }
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  std::size_t total_scalars() const;

  // Same names, shapes and bit-identical values.
  bool operator==(const ParameterStore& other) const;

 private:
  std::vector<std::string> names_;
  std::map<std::string, Tensor> values_;
};

// Binds parameters for one forward pass: as tape leaves when a tape is
// given, as constants otherwise. Leaves are created on first use.
class ParamView {
 public:
  ParamView(const ParameterStore& store, Tape* tape) : store_(&store), tape_(tape) {}

  Var operator()(const std::string& name);
  // Uses `value` for `name` in place of the stored tensor.
  void bind(const std::string& name, const Var& value);
  Tape* tape() const { return tape_; }

  // Gradient of a bound parameter; zeros when it was never used.
  Tensor grad(const std::string& name) const;

 private:
  const ParameterStore* store_;
  Tape* tape_;
  std::map<std::string, Var> bound_;
};

}  // namespace trunet::num
