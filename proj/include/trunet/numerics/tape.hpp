#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <vector>

#include "trunet/numerics/tensor.hpp"

namespace trunet::num {

class Tape;

// One recorded value. Constants (no tape) never receive gradients.
struct Node {
  Tensor value;
  Tensor grad;
  bool grad_allocated = false;
  bool requires_grad = false;
  const char* op = "leaf";
  Tape* tape = nullptr;
  // Reads this node's grad and accumulates into its inputs.
  std::function<void(Node&)> backward;

  Tensor& grad_buffer();
};

// Handle to a node. Cheap to copy; copies alias the same node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  Tape* tape() const { return node_->tape; }
  Node* node() const { return node_.get(); }
  bool valid() const { return node_ != nullptr; }

  // Accumulated gradient; zeros when the node was not on a path to the loss.
  Tensor grad() const;

 private:
  std::shared_ptr<Node> node_;
};

// Wraps a value that never receives gradient.
Var constant(Tensor value);

// Ordered record of the nodes of one forward pass. Backward walks the record
// in reverse creation order, which is a valid topological order because a
// node can only consume nodes that already exist.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);

  // Seeds d(loss)/d(loss) = 1 and propagates. The loss must be a scalar on
  // this tape. May be called once per tape.
  void backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }

  Var record(Tensor value, const char* op, std::function<void(Node&)> backward);

 private:
  std::vector<std::shared_ptr<Node>> nodes_;
  bool backward_done_ = false;
};

namespace detail {

// Creates the result node for an op. The node is recorded on the tape shared
// by the inputs that require grad; if none do, the result is a constant and
// `backward` is dropped.
Var make_result(const char* op, Tensor value, std::initializer_list<const Var*> inputs,
                std::function<void(Node&)> backward);
Var make_result(const char* op, Tensor value, const std::vector<Var>& inputs,
                std::function<void(Node&)> backward);

}  // namespace detail

}  // namespace trunet::num
