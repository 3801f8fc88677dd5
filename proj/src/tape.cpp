#include "emoattr/tape.hpp"

#include "emoattr/error.hpp"

namespace emoattr {

const Tensor& Var::value() const { return tape->value(id); }

const std::vector<std::size_t>& Var::shape() const { return tape->value(id).shape(); }

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr});
  return Var{this, static_cast<NodeId>(nodes_.size() - 1)};
}

Var Tape::node(Tensor value, std::vector<NodeId> parents, BackwardFn backward) {
  nodes_.push_back(Node{std::move(value), std::move(parents), std::move(backward)});
  return Var{this, static_cast<NodeId>(nodes_.size() - 1)};
}

std::vector<Tensor> Tape::backward(const Var& output) const {
  if (output.tape != this) {
    throw ArgumentError("backward: output does not belong to this tape");
  }
  const Tensor& out_value = value(output.id);
  if (out_value.size() != 1) {
    throw ShapeError("backward requires a scalar output, got shape " +
                     shape_str(out_value.shape()));
  }

  std::vector<Tensor> grads;
  grads.reserve(nodes_.size());
  for (const Node& n : nodes_) grads.emplace_back(n.value.shape());

  grads[static_cast<std::size_t>(output.id)][0] = 1.0;
  for (NodeId id = output.id; id >= 0; --id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.backward) n.backward(*this, id, grads);
  }
  return grads;
}

}  // namespace emoattr
