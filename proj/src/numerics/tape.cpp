#include "trunet/numerics/tape.hpp"

#include <string>

namespace trunet::num {

Tensor& Node::grad_buffer() {
  if (!grad_allocated) {
    grad = Tensor(value.shape(), 0.0);
    grad_allocated = true;
  }
  return grad;
}

Tensor Var::grad() const {
  if (node_->grad_allocated) return node_->grad;
  return Tensor(node_->value.shape(), 0.0);
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = "constant";
  return Var(std::move(node));
}

Var Tape::leaf(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->tape = this;
  node->op = "leaf";
  nodes_.push_back(node);
  return Var(std::move(node));
}

Var Tape::record(Tensor value, const char* op, std::function<void(Node&)> backward) {
#ifndef NDEBUG
  if (!value.all_finite()) throw NumericError(std::string(op) + ": produced a non-finite value");
#endif
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->tape = this;
  node->op = op;
  node->backward = std::move(backward);
  nodes_.push_back(node);
  return Var(std::move(node));
}

void Tape::backward(const Var& loss) {
  if (backward_done_) throw NumericError("Tape::backward called twice on the same tape");
  if (loss.tape() != this) throw NumericError("Tape::backward: loss is not recorded on this tape");
  if (loss.size() != 1) throw ShapeError("Tape::backward", "loss must be scalar, got " + to_string(loss.shape()));
  backward_done_ = true;
  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (n.grad_allocated && n.backward) n.backward(n);
  }
}

namespace detail {

namespace {

Tape* common_tape(const char* op, Tape* current, const Var& v) {
  if (!v.valid()) throw ShapeError(op, "uninitialised operand");
  if (!v.requires_grad()) return current;
  if (current && current != v.tape()) throw NumericError(std::string(op) + ": operands recorded on different tapes");
  return v.tape();
}

}  // namespace

Var make_result(const char* op, Tensor value, std::initializer_list<const Var*> inputs,
                std::function<void(Node&)> backward) {
  Tape* tape = nullptr;
  for (const Var* v : inputs) tape = common_tape(op, tape, *v);
  if (!tape) {
    Var out = constant(std::move(value));
    out.node()->op = op;
    return out;
  }
  return tape->record(std::move(value), op, std::move(backward));
}

Var make_result(const char* op, Tensor value, const std::vector<Var>& inputs, std::function<void(Node&)> backward) {
  Tape* tape = nullptr;
  for (const Var& v : inputs) tape = common_tape(op, tape, v);
  if (!tape) {
    Var out = constant(std::move(value));
    out.node()->op = op;
    return out;
  }
  return tape->record(std::move(value), op, std::move(backward));
}

}  // namespace detail

}  // namespace trunet::num
