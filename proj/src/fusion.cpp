#include "dsc/fusion.hpp"

#include <stdexcept>

namespace dsc {

FusionParams FusionParams::make(const std::string& name, long d_visual, long d_meta, long d_attn,
                                long d_out, long heads, Rng& rng) {
  FusionParams p;
  p.d_visual = d_visual;
  p.d_meta = d_meta;
  p.d_attn = d_attn;
  p.d_out = d_out;
  p.proj_v = LinearParams::make(name + ".proj_v", d_visual, d_attn, rng);
  p.proj_m = LinearParams::make(name + ".proj_m", d_meta, d_attn, rng);
  p.mha_v = MhaParams::make(name + ".mha_v", d_attn, heads, rng);
  p.mha_m = MhaParams::make(name + ".mha_m", d_attn, heads, rng);
  p.ff_v = FeedForwardParams::make(name + ".ff_v", d_attn, 4 * d_attn, rng);
  p.ff_m = FeedForwardParams::make(name + ".ff_m", d_attn, 4 * d_attn, rng);
  p.ln_v = LayerNormParams::make(name + ".ln_v", d_attn);
  p.ln_m = LayerNormParams::make(name + ".ln_m", d_attn);
  p.fuse = LinearParams::make(name + ".fuse", 2 * d_attn, d_out, rng);
  p.ln_fuse = LayerNormParams::make(name + ".ln_fuse", d_out);
  return p;
}

void FusionParams::visit(const ParamVisitor& fn) {
  proj_v.visit(fn);
  proj_m.visit(fn);
  mha_v.visit(fn);
  mha_m.visit(fn);
  ff_v.visit(fn);
  ff_m.visit(fn);
  ln_v.visit(fn);
  ln_m.visit(fn);
  fuse.visit(fn);
  ln_fuse.visit(fn);
}

Var bca_forward(Ctx& ctx, const FusionParams& p, Var visual, Var meta, FusionTrace* trace) {
  Graph& g = ctx.g;
  const Tensor& vv = g.val(visual);
  const Tensor& mv = g.val(meta);
  if (vv.ndim() != 2 || vv.cols() != p.d_visual)
    throw std::invalid_argument("bca_forward: visual width != " + std::to_string(p.d_visual));
  if (mv.ndim() != 2 || mv.cols() != p.d_meta)
    throw std::invalid_argument("bca_forward: metadata width != " + std::to_string(p.d_meta));
  if (vv.rows() != mv.rows())
    throw std::invalid_argument("bca_forward: visual and metadata slice counts differ");

  Var vt = p.proj_v.apply(ctx, visual);
  Var mt = p.proj_m.apply(ctx, meta);

  Var v1 = multi_head_attention(ctx, p.mha_v, vt, mt, mt,
                                trace ? &trace->visual_over_meta : nullptr);
  Var vsum = g.add(v1, vt);
  Var v2 = p.ln_v.apply(ctx, g.add(vsum, p.ff_v.apply(ctx, vsum)));

  Var m1 = multi_head_attention(ctx, p.mha_m, mt, vt, vt,
                                trace ? &trace->meta_over_visual : nullptr);
  Var msum = g.add(m1, mt);
  Var m2 = p.ln_m.apply(ctx, g.add(msum, p.ff_m.apply(ctx, msum)));

  return g.gelu(p.ln_fuse.apply(ctx, p.fuse.apply(ctx, g.concat_cols(v2, m2))));
}

PoolParams PoolParams::make(const std::string& name, long dim, long hidden, Rng& rng) {
  PoolParams p;
  p.fc1 = LinearParams::make(name + ".fc1", dim, hidden, rng);
  // The logit bias is constant across slices and cancelled by the softmax.
  p.fc2 = LinearParams::make(name + ".fc2", hidden, 1, rng, false, /*with_bias=*/false);
  return p;
}

void PoolParams::visit(const ParamVisitor& fn) {
  fc1.visit(fn);
  fc2.visit(fn);
}

Var pool_series(Ctx& ctx, const PoolParams& p, Var fused, Var* weights_out) {
  Graph& g = ctx.g;
  const Tensor& fv = g.val(fused);
  if (fv.ndim() != 2 || fv.rows() < 1) throw std::invalid_argument("pool_series: bad input");
  Var logits = p.fc2.apply(ctx, g.gelu(p.fc1.apply(ctx, fused)));  // (S x 1)
  Var weights = g.softmax_rows(g.reshape(logits, {1, fv.rows()}));  // (1 x S)
  if (weights_out) *weights_out = weights;
  return g.matmul(weights, fused);  // (1 x d)
}

}  // namespace dsc
