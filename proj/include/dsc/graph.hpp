#pragma once

#include <functional>
#include <vector>

#include "dsc/tensor.hpp"

namespace dsc {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff over a per-sample expression arena. Nodes are stored
// in creation order, which is a topological order by construction; backward()
// walks it in reverse. Parameter leaves reference tensors owned elsewhere.
class Graph {
public:
  Graph() { nodes_.reserve(1024); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor v);
  Var external(const Tensor* v, bool needs_grad);

  const Tensor& val(Var v) const;
  bool needs_grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].requires_grad; }

  // Gradient of the last backward() target w.r.t. node v; zeros if the node
  // never received a contribution.
  Tensor grad(Var v) const;

  void backward(Var loss);

  size_t size() const { return nodes_.size(); }

  // Elementwise.
  Var add(Var a, Var b);
  Var add_many(const std::vector<Var>& vs);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_rowvec(Var m, Var v);
  Var relu(Var a);
  Var gelu(Var a);
  Var sigmoid(Var a);

  // Linear algebra (rank-2 operands).
  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);  // a * b^T

  // Shape ops.
  Var reshape(Var a, std::vector<long> shape);
  Var gather_rows(Var m, std::vector<long> idx);
  Var concat_cols(Var a, Var b);
  Var slice_cols(Var a, long c0, long c1);
  Var stack_rows(const std::vector<Var>& rows);
  Var mean_rows(Var a);

  // Row-wise normalizations.
  Var softmax_rows(Var a);
  Var layer_norm_rows(Var x, Var gamma, Var beta, double eps);

  // Image ops (rank-3 operands, {channels, height, width}).
  Var conv2d(Var x, Var w, Var b, long kernel, long stride, long pad);
  Var avg_pool2d(Var x, long k);
  Var global_avg_pool(Var x);

  // Losses (scalar 1x1 outputs).
  Var cross_entropy(Var logits, long target);
  Var bce_with_logits(Var logit, double target);

private:
  // Backward callback: receives the node's accumulated output gradient and
  // pushes contributions into parent slots via accum().
  using BackwardFn = std::function<void(Graph&, const Tensor&)>;

  struct Node {
    Tensor value;                 // owned value; unused when ext != nullptr
    const Tensor* ext = nullptr;  // external (parameter) storage
    Tensor grad;                  // lazily allocated accumulator
    bool requires_grad = false;
    BackwardFn backward;
  };

  const Tensor& v(int id) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    return n.ext ? *n.ext : n.value;
  }

  Var make(Tensor value, bool needs, BackwardFn bwd);
  void accum(int id, const Tensor& g);
  void accum_scaled(int id, const Tensor& g, double s);
  Tensor& grad_slot(int id);
  bool req(Var a) const { return nodes_[static_cast<size_t>(a.id)].requires_grad; }

  std::vector<Node> nodes_;
};

}  // namespace dsc
