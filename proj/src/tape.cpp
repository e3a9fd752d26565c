#include "cyc/tape.hpp"

#include "cyc/error.hpp"

namespace cyc {

const Tensor& Value::val() const {
  if (!tape_) throw Error(Error::Kind::contract, "val() on empty Value");
  return tape_->value(node_);
}

const Tensor& Value::grad() const {
  if (!tape_) throw Error(Error::Kind::contract, "grad() on empty Value");
  return tape_->grad(node_);
}

Value Tape::constant(Tensor v) {
  nodes_.push_back(Node{std::move(v), Tensor{}, nullptr, nullptr});
  return Value(this, nodes_.size() - 1);
}

Value Tape::leaf(Param& p) {
  nodes_.push_back(Node{p.value, Tensor{}, nullptr, &p});
  return Value(this, nodes_.size() - 1);
}

Value Tape::make(Tensor value, BackwardFn backward) {
  nodes_.push_back(Node{std::move(value), Tensor{}, std::move(backward), nullptr});
  return Value(this, nodes_.size() - 1);
}

void Tape::backward(const Value& loss) {
  if (loss.tape() != this)
    throw Error(Error::Kind::contract, "backward() on Value from another tape");
  if (nodes_[loss.node()].value.size() != 1)
    throw Error(Error::Kind::contract, "backward() requires a scalar loss");

  for (Node& n : nodes_) n.grad = Tensor::zeros(n.value.shape());
  grad(loss.node()).fill(1.0);

  for (std::size_t i = loss.node() + 1; i-- > 0;) {
    if (nodes_[i].backward) nodes_[i].backward(*this, i);
  }
  for (Node& n : nodes_) {
    if (n.param) {
      double* dst = n.param->grad.data();
      const double* src = n.grad.data();
      for (std::size_t k = 0; k < n.grad.size(); ++k) dst[k] += src[k];
    }
  }
}

void Tape::clear() { nodes_.clear(); }

}  // namespace cyc
