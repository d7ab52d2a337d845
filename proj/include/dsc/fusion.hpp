#pragma once

#include <vector>

#include "dsc/nn.hpp"

namespace dsc {

// Bi-directional cross-modal attention. Both streams are projected to a
// shared width d, each attends over the other, and the refined streams are
// concatenated and fused per slice:
//   Vt = V Wv, Mt = M Wm
//   V' = MHA(q=Vt, k=Mt, v=Mt);  V'' = LN(V' + Vt + FF(V' + Vt))
//   M' = MHA(q=Mt, k=Vt, v=Vt);  M'' = LN(M' + Mt + FF(M' + Mt))
//   fused = GELU(LN([V'', M''] Wf))
struct FusionParams {
  long d_visual = 0;
  long d_meta = 0;
  long d_attn = 0;
  long d_out = 0;

  LinearParams proj_v;  // d_visual -> d_attn
  LinearParams proj_m;  // d_meta -> d_attn
  MhaParams mha_v;      // visual queries over metadata
  MhaParams mha_m;      // metadata queries over visual
  FeedForwardParams ff_v, ff_m;
  LayerNormParams ln_v, ln_m;
  LinearParams fuse;    // 2*d_attn -> d_out
  LayerNormParams ln_fuse;

  static FusionParams make(const std::string& name, long d_visual, long d_meta, long d_attn,
                           long d_out, long heads, Rng& rng);
  void visit(const ParamVisitor& fn);
};

// Attention probabilities captured during fusion, for inspection.
struct FusionTrace {
  std::vector<Var> visual_over_meta;  // per head, (S x S)
  std::vector<Var> meta_over_visual;  // per head, (S x S)
};

// visual (S x d_visual), meta (S x d_meta) -> fused (S x d_out).
Var bca_forward(Ctx& ctx, const FusionParams& p, Var visual, Var meta,
                FusionTrace* trace = nullptr);

// Learned attention pooling over slice rows: per-row MLP logits, softmax
// across slices, weighted sum. Output z is a convex combination of rows.
struct PoolParams {
  LinearParams fc1;  // d -> hidden
  LinearParams fc2;  // hidden -> 1

  static PoolParams make(const std::string& name, long dim, long hidden, Rng& rng);
  void visit(const ParamVisitor& fn);
};

// fused (S x d) -> (1 x d); weights_out, when given, receives the (1 x S)
// softmax weights.
Var pool_series(Ctx& ctx, const PoolParams& p, Var fused, Var* weights_out = nullptr);

}  // namespace dsc
