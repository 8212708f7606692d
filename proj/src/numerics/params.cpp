#include "trunet/numerics/params.hpp"

#include <cmath>
#include <cstring>

namespace trunet::num {

Tensor& ParameterStore::add(const std::string& name, Tensor value) {
  if (values_.count(name)) throw std::invalid_argument("ParameterStore: duplicate parameter '" + name + "'");
  names_.push_back(name);
  return values_.emplace(name, std::move(value)).first->second;
}

Tensor& ParameterStore::add_uniform(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in == 0 ? 1 : fan_in));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return add(name, std::move(t));
}

Tensor& ParameterStore::get(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) throw std::out_of_range("ParameterStore: unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw std::out_of_range("ParameterStore: unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterStore::total_scalars() const {
  std::size_t n = 0;
  for (const auto& [name, t] : values_) n += t.size();
  return n;
}

bool ParameterStore::operator==(const ParameterStore& other) const {
  if (names_ != other.names_) return false;
  for (const auto& name : names_) {
    const Tensor& a = get(name);
    const Tensor& b = other.get(name);
    if (a.shape() != b.shape()) return false;
    if (std::memcmp(a.ptr(), b.ptr(), a.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

Var ParamView::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  const Tensor& value = store_->get(name);
  Var v = tape_ ? tape_->leaf(value) : constant(value);
  bound_.emplace(name, v);
  return v;
}

void ParamView::bind(const std::string& name, const Var& value) {
  if (value.shape() != store_->get(name).shape()) {
    throw ShapeError("ParamView::bind", name + ": " + to_string(value.shape()) + " vs stored " +
                                            to_string(store_->get(name).shape()));
  }
  bound_[name] = value;
}

Tensor ParamView::grad(const std::string& name) const {
  auto it = bound_.find(name);
  if (it == bound_.end()) return Tensor(store_->get(name).shape(), 0.0);
  return it->second.grad();
}

}  // namespace trunet::num
