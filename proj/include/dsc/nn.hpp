#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dsc/graph.hpp"
#include "dsc/rng.hpp"
#include "dsc/tensor.hpp"

namespace dsc {

// Trainable tensor. `no_decay` exempts it from weight decay (biases,
// normalization coefficients, embeddings).
struct Param {
  std::string name;
  Tensor value;
  bool no_decay = false;
};

using ParamVisitor = std::function<void(Param&)>;
using ConstParamVisitor = std::function<void(const Param&)>;

// Per-sample forward context. Binds parameters into the graph exactly once
// so gradients accumulate across repeated uses; records the bindings so the
// trainer can pull gradients out afterwards.
struct Ctx {
  explicit Ctx(Graph& graph, bool train_mode = true) : g(graph), train(train_mode) {}

  Graph& g;
  bool train;
  std::vector<std::pair<const Param*, Var>> bindings;

  Var bind(const Param& p) {
    auto it = index_.find(&p);
    if (it != index_.end()) return bindings[it->second].second;
    Var v = g.external(&p.value, train);
    index_.emplace(&p, bindings.size());
    bindings.emplace_back(&p, v);
    return v;
  }

private:
  std::unordered_map<const Param*, size_t> index_;
};

void init_glorot(Tensor& t, long fan_in, long fan_out, Rng& rng);
void init_he(Tensor& t, long fan_in, Rng& rng);
void init_normal(Tensor& t, double stddev, Rng& rng);

// y = x W^T + b, with W stored (out x in). A layer can be made without a
// bias; that is used where a bias would be cancelled by a downstream
// softmax and so could never receive gradient.
struct LinearParams {
  Param W;
  Param b;

  static LinearParams make(const std::string& name, long in, long out, Rng& rng,
                           bool zero_init = false, bool with_bias = true);
  Var apply(Ctx& ctx, Var x) const;
  void visit(const ParamVisitor& fn);
  bool has_bias() const { return !b.value.empty(); }
  long in_dim() const { return W.value.cols(); }
  long out_dim() const { return W.value.rows(); }
};

struct LayerNormParams {
  Param gamma;
  Param beta;
  double eps = 1e-5;

  static LayerNormParams make(const std::string& name, long dim);
  Var apply(Ctx& ctx, Var x) const;
  void visit(const ParamVisitor& fn);
};

// fc2(gelu(fc1(x)))
struct FeedForwardParams {
  LinearParams fc1;
  LinearParams fc2;

  static FeedForwardParams make(const std::string& name, long dim, long hidden, Rng& rng);
  Var apply(Ctx& ctx, Var x) const;
  void visit(const ParamVisitor& fn);
};

struct MhaParams {
  long d_model = 0;
  long heads = 0;
  LinearParams wq, wk, wv, wo;

  static MhaParams make(const std::string& name, long d_model, long heads, Rng& rng);
  void visit(const ParamVisitor& fn);
};

// Scaled dot-product attention with `heads` heads over row-major sequences:
// q (Sq x d), k/v (Sk x d) -> (Sq x d). Per-head attention probabilities are
// appended to `attn_probs` when given (each Sq x Sk, rows sum to 1).
Var multi_head_attention(Ctx& ctx, const MhaParams& p, Var q, Var k, Var v,
                         std::vector<Var>* attn_probs = nullptr);

// Post-norm transformer encoder block:
//   h = LN1(x + MHA(x, x, x)); out = LN2(h + FF(h))
struct AttentionBlockParams {
  MhaParams mha;
  LayerNormParams ln1, ln2;
  FeedForwardParams ff;

  static AttentionBlockParams make(const std::string& name, long dim, long heads, long ff_hidden,
                                   Rng& rng);
  Var apply(Ctx& ctx, Var x, std::vector<Var>* attn_probs = nullptr) const;
  void visit(const ParamVisitor& fn);
};

// Conv2d layer over {C,H,W} planes; weights stored (Cout x Cin*k*k).
struct ConvParams {
  Param W;
  Param b;
  long cin = 0, cout = 0, kernel = 0, stride = 1, pad = 0;

  static ConvParams make(const std::string& name, long cin, long cout, long kernel, long stride,
                         long pad, Rng& rng);
  Var apply(Ctx& ctx, Var x) const;
  void visit(const ParamVisitor& fn);
};

}  // namespace dsc
