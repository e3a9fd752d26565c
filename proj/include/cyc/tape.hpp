#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "cyc/tensor.hpp"

namespace cyc {

class Tape;

// Named trainable tensor with its accumulated gradient.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string name_, Tensor value_)
      : name(std::move(name_)), value(std::move(value_)), grad(value.shape()) {}

  void zero_grad() { grad.fill(0.0); }
};

// Handle to a node recorded on a Tape. Cheap to copy; invalidated by
// Tape::clear().
class Value {
 public:
  Value() = default;
  Value(Tape* tape, std::size_t node) : tape_(tape), node_(node) {}

  bool valid() const { return tape_ != nullptr; }
  const Tensor& val() const;
  const Tensor& grad() const;
  std::size_t node() const { return node_; }
  Tape* tape() const { return tape_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

// Reverse-mode tape: operations append nodes with backward closures; one
// backward sweep walks the nodes in reverse creation order. A tape holds
// one forward/backward pass and is cleared between optimizer steps.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Value constant(Tensor v);
  Value leaf(Param& p);
  Value make(Tensor value, BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse; afterwards
  // every leaf's Param::grad has received its contribution.
  void backward(const Value& loss);

  void clear();
  std::size_t size() const { return nodes_.size(); }

  const Tensor& value(std::size_t node) const { return nodes_[node].value; }
  Tensor& grad(std::size_t node) { return nodes_[node].grad; }
  const Tensor& grad(std::size_t node) const { return nodes_[node].grad; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;  // empty for constants and leaves
    Param* param = nullptr;
  };
  std::vector<Node> nodes_;
};

}  // namespace cyc
