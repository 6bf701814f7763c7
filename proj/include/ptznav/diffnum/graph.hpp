#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "ptznav/diffnum/tensor.hpp"

namespace ptznav::diffnum {

// Define-by-run reverse-mode tape. Each op appends a node holding its output
// value, a zeroed gradient buffer, and a closure that scatters the node's
// gradient to its parents. A graph is built per forward pass and discarded
// after backward; parameters live outside (see TrainableModel) and receive
// their gradients through bound leaves.
class Graph {
 public:
  using NodeId = int;

  // Constant leaf (inputs, targets); no gradient is exported.
  NodeId input(Tensor value);

  // Leaf bound to an external parameter: on backward, the node gradient is
  // accumulated into *grad_sink (explicit zeroing is the caller's business).
  NodeId param(const Tensor& value, Tensor* grad_sink);

  // y = x W^T + b with x [N,n], w [m,n], b [m] -> [N,m].
  NodeId affine(NodeId x, NodeId w, NodeId b);

  // 2-D convolution, zero padding: x [N,C,H,W], w [F,C,kh,kw], b [F].
  NodeId conv2d(NodeId x, NodeId w, NodeId b, int stride, int pad);

  NodeId relu(NodeId x);
  NodeId sigmoid(NodeId x);
  NodeId tanh_op(NodeId x);

  // Global average pool: [N,C,H,W] -> [N,C].
  NodeId gap(NodeId x);

  // Reshape to [N, everything-else]; gradients pass through untouched.
  NodeId flatten2(NodeId x);

  // Concatenation along axis 1 (channels / features).
  NodeId concat1(NodeId a, NodeId b);

  // Slice along axis 1 of a rank >= 2 tensor: [N,C,...] -> [N,to-from,...].
  NodeId slice1(NodeId x, int from, int to);

  // Per-location channel dot product against a per-example descriptor:
  // x [N,C,H,W], d [N,C] -> [N,1,H,W]. The multiplicative interaction that
  // turns shared-trunk features into a match heat map.
  NodeId corr_channels(NodeId x, NodeId d);

  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId x, double factor);

  // Row-wise softmax of a rank-2 tensor.
  NodeId softmax1(NodeId x);

  // Mean squared error over all elements; returns a scalar node.
  NodeId mse_loss(NodeId pred, const Tensor& target);
  // Mean absolute error over all elements (sign(0) treated as 0).
  NodeId mae_loss(NodeId pred, const Tensor& target);
  // Mean softmax cross-entropy: logits [N,K], labels in [0,K).
  NodeId softmax_ce_loss(NodeId logits, const std::vector<int>& labels);

  // Standard LSTM cell (gates i,f,g,o): x [N,in], h,c [N,H], w [4H,in+H],
  // b [4H]. Returns {h_next, c_next}.
  std::pair<NodeId, NodeId> lstm_cell(NodeId x, NodeId h, NodeId c, NodeId w,
                                      NodeId b, int hidden);

  // Reverse sweep from a scalar node; repeated calls keep accumulating into
  // bound parameter sinks.
  void backward(NodeId loss);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  const Tensor& grad(NodeId id) const { return nodes_[id].grad; }
  double scalar(NodeId id) const;

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Graph&, NodeId)> backprop;  // may be empty (leaf)
  };

  NodeId push(Tensor value, std::function<void(Graph&, NodeId)> backprop);
  Tensor& grad_mut(NodeId id) { return nodes_[id].grad; }

  std::vector<Node> nodes_;
};

// Softmax over the last axis of a rank-2 tensor (inference helper).
Tensor softmax_rows(const Tensor& logits);

}  // namespace ptznav::diffnum
