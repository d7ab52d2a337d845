#include "dsc/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace dsc {

void init_glorot(Tensor& t, long fan_in, long fan_out, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
  for (long i = 0; i < t.numel(); ++i) t[i] = rng.normal() * stddev;
}

void init_he(Tensor& t, long fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (long i = 0; i < t.numel(); ++i) t[i] = rng.normal() * stddev;
}

void init_normal(Tensor& t, double stddev, Rng& rng) {
  for (long i = 0; i < t.numel(); ++i) t[i] = rng.normal() * stddev;
}

LinearParams LinearParams::make(const std::string& name, long in, long out, Rng& rng,
                                bool zero_init, bool with_bias) {
  LinearParams p;
  p.W.name = name + ".W";
  p.W.value = Tensor::zeros({out, in});
  if (!zero_init) init_glorot(p.W.value, in, out, rng);
  p.b.name = name + ".b";
  if (with_bias) p.b.value = Tensor::zeros({1, out});
  p.b.no_decay = true;
  return p;
}

Var LinearParams::apply(Ctx& ctx, Var x) const {
  Var y = ctx.g.matmul_nt(x, ctx.bind(W));
  if (!has_bias()) return y;
  return ctx.g.add_rowvec(y, ctx.bind(b));
}

void LinearParams::visit(const ParamVisitor& fn) {
  fn(W);
  if (has_bias()) fn(b);
}

LayerNormParams LayerNormParams::make(const std::string& name, long dim) {
  LayerNormParams p;
  p.gamma.name = name + ".gamma";
  p.gamma.value = Tensor::full({1, dim}, 1.0);
  p.gamma.no_decay = true;
  p.beta.name = name + ".beta";
  p.beta.value = Tensor::zeros({1, dim});
  p.beta.no_decay = true;
  return p;
}

Var LayerNormParams::apply(Ctx& ctx, Var x) const {
  return ctx.g.layer_norm_rows(x, ctx.bind(gamma), ctx.bind(beta), eps);
}

void LayerNormParams::visit(const ParamVisitor& fn) {
  fn(gamma);
  fn(beta);
}

FeedForwardParams FeedForwardParams::make(const std::string& name, long dim, long hidden,
                                          Rng& rng) {
  FeedForwardParams p;
  p.fc1 = LinearParams::make(name + ".fc1", dim, hidden, rng);
  p.fc2 = LinearParams::make(name + ".fc2", hidden, dim, rng);
  return p;
}

Var FeedForwardParams::apply(Ctx& ctx, Var x) const {
  return fc2.apply(ctx, ctx.g.gelu(fc1.apply(ctx, x)));
}

void FeedForwardParams::visit(const ParamVisitor& fn) {
  fc1.visit(fn);
  fc2.visit(fn);
}

MhaParams MhaParams::make(const std::string& name, long d_model, long heads, Rng& rng) {
  if (heads < 1 || d_model % heads != 0)
    throw std::invalid_argument("multi_head_attention: d_model " + std::to_string(d_model) +
                                " not divisible by heads " + std::to_string(heads));
  MhaParams p;
  p.d_model = d_model;
  p.heads = heads;
  p.wq = LinearParams::make(name + ".wq", d_model, d_model, rng);
  // A key-projection bias shifts every score in a row by the same amount,
  // which softmax cancels; it would be a permanently dead parameter.
  p.wk = LinearParams::make(name + ".wk", d_model, d_model, rng, false, /*with_bias=*/false);
  p.wv = LinearParams::make(name + ".wv", d_model, d_model, rng);
  p.wo = LinearParams::make(name + ".wo", d_model, d_model, rng);
  return p;
}

void MhaParams::visit(const ParamVisitor& fn) {
  wq.visit(fn);
  wk.visit(fn);
  wv.visit(fn);
  wo.visit(fn);
}

Var multi_head_attention(Ctx& ctx, const MhaParams& p, Var q, Var k, Var v,
                         std::vector<Var>* attn_probs) {
  Graph& g = ctx.g;
  if (g.val(q).cols() != p.d_model || g.val(k).cols() != p.d_model ||
      g.val(v).cols() != p.d_model)
    throw std::invalid_argument("multi_head_attention: operand width != d_model");
  if (g.val(k).rows() != g.val(v).rows())
    throw std::invalid_argument("multi_head_attention: key/value row mismatch");

  Var qp = p.wq.apply(ctx, q);
  Var kp = p.wk.apply(ctx, k);
  Var vp = p.wv.apply(ctx, v);

  const long dh = p.d_model / p.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> head_outs;
  head_outs.reserve(static_cast<size_t>(p.heads));
  Var concat;
  for (long h = 0; h < p.heads; ++h) {
    Var qh = g.slice_cols(qp, h * dh, (h + 1) * dh);
    Var kh = g.slice_cols(kp, h * dh, (h + 1) * dh);
    Var vh = g.slice_cols(vp, h * dh, (h + 1) * dh);
    Var scores = g.scale(g.matmul_nt(qh, kh), scale);
    Var probs = g.softmax_rows(scores);
    if (attn_probs) attn_probs->push_back(probs);
    Var oh = g.matmul(probs, vh);
    concat = (h == 0) ? oh : g.concat_cols(concat, oh);
  }
  return p.wo.apply(ctx, concat);
}

AttentionBlockParams AttentionBlockParams::make(const std::string& name, long dim, long heads,
                                                long ff_hidden, Rng& rng) {
  AttentionBlockParams p;
  p.mha = MhaParams::make(name + ".mha", dim, heads, rng);
  p.ln1 = LayerNormParams::make(name + ".ln1", dim);
  p.ln2 = LayerNormParams::make(name + ".ln2", dim);
  p.ff = FeedForwardParams::make(name + ".ff", dim, ff_hidden, rng);
  return p;
}

Var AttentionBlockParams::apply(Ctx& ctx, Var x, std::vector<Var>* attn_probs) const {
  Graph& g = ctx.g;
  Var a = multi_head_attention(ctx, mha, x, x, x, attn_probs);
  Var h = ln1.apply(ctx, g.add(x, a));
  Var f = ff.apply(ctx, h);
  return ln2.apply(ctx, g.add(h, f));
}

void AttentionBlockParams::visit(const ParamVisitor& fn) {
  mha.visit(fn);
  ln1.visit(fn);
  ln2.visit(fn);
  ff.visit(fn);
}

ConvParams ConvParams::make(const std::string& name, long cin, long cout, long kernel, long stride,
                            long pad, Rng& rng) {
  ConvParams p;
  p.cin = cin;
  p.cout = cout;
  p.kernel = kernel;
  p.stride = stride;
  p.pad = pad;
  p.W.name = name + ".W";
  p.W.value = Tensor::zeros({cout, cin * kernel * kernel});
  init_he(p.W.value, cin * kernel * kernel, rng);
  p.b.name = name + ".b";
  p.b.value = Tensor::zeros({1, cout});
  p.b.no_decay = true;
  return p;
}

Var ConvParams::apply(Ctx& ctx, Var x) const {
  return ctx.g.conv2d(x, ctx.bind(W), ctx.bind(b), kernel, stride, pad);
}

void ConvParams::visit(const ParamVisitor& fn) {
  fn(W);
  fn(b);
}

}  // namespace dsc
