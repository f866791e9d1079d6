#include "vnt/tape.hpp"

#include "vnt/errors.hpp"

namespace vnt {

Var Tape::constant(Tensor value) { return leaf(std::move(value), false); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), requires_grad && record_, {}, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward fn) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward fn) {
  bool needs = false;
  if (record_) {
    for (const Var& in : inputs) {
      if (&in.tape() != this) throw ContractError("op mixes variables from different tapes");
      needs = needs || nodes_[in.id()].requires_grad;
    }
  }
  nodes_.push_back(Node{std::move(value), needs, needs ? std::move(fn) : Backward{}, {}});
  return Var(this, nodes_.size() - 1);
}

std::vector<double>& Tape::grad_buffer(Var v) {
  Node& n = nodes_[v.id()];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return Tensor::zeros(n.value.shape());
  return Tensor(n.value.shape(), n.grad);
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
  if (nodes_[loss.id()].value.size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_str(nodes_[loss.id()].value.shape()));
  }
  if (!nodes_[loss.id()].requires_grad) return;
  grad_buffer(loss)[0] += 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    // Rules only touch buffers of earlier nodes, so the output grad can be
    // moved out while the rule runs.
    std::vector<double> g = std::move(n.grad);
    n.backward(g, *this);
    nodes_[i].grad = std::move(g);
  }
}

}  // namespace vnt
