#pragma once

#include <functional>
#include <vector>

#include "emoattr/tensor.hpp"

namespace emoattr {

class Tape;

using NodeId = int;

// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  NodeId id = -1;

  const Tensor& value() const;
  const std::vector<std::size_t>& shape() const;
};

// Reverse-mode tape. Nodes are appended in forward order, so walking ids from
// high to low visits every node after all of its consumers — one sweep
// suffices for the backward pass.
class Tape {
 public:
  // Receives the tape, the node's own id, and the gradient buffers for every
  // node; accumulates into the parents' buffers.
  using BackwardFn =
      std::function<void(const Tape& tape, NodeId id, std::vector<Tensor>& grads)>;

  // Leaf node: no parents, no backward function.
  Var leaf(Tensor value);

  // Interior node produced by an operation.
  Var node(Tensor value, std::vector<NodeId> parents, BackwardFn backward);

  const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const std::vector<NodeId>& parents(NodeId id) const {
    return nodes_[static_cast<std::size_t>(id)].parents;
  }
  std::size_t size() const { return nodes_.size(); }

  // Gradients of a scalar output with respect to every node, indexed by id.
  std::vector<Tensor> backward(const Var& output) const;

 private:
  struct Node {
    Tensor value;
    std::vector<NodeId> parents;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
};

}  // namespace emoattr
