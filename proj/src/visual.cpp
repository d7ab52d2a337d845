#include "dsc/visual.hpp"

#include <numeric>
#include <stdexcept>

namespace dsc {

SmallCnnBackbone::SmallCnnBackbone(const std::string& name, long stem_pool, Rng& rng)
    : stem_pool_(stem_pool) {
  if (stem_pool < 1) throw std::invalid_argument("SmallCnnBackbone: stem_pool must be >= 1");
  const long channels[5] = {1, 16, 32, 64, 128};
  for (int i = 0; i < 4; ++i) {
    stages_.push_back(ConvParams::make(name + ".conv" + std::to_string(i + 1), channels[i],
                                       channels[i + 1], 3, 2, 1, rng));
  }
}

Var SmallCnnBackbone::forward(Ctx& ctx, Var plane) const {
  Graph& g = ctx.g;
  const Tensor& pv = g.val(plane);
  if (pv.ndim() != 3 || pv.shape()[0] != 1)
    throw std::invalid_argument("SmallCnnBackbone: expected a {1,H,W} plane, got " +
                                pv.shape_string());
  Var x = plane;
  if (stem_pool_ > 1) x = g.avg_pool2d(x, stem_pool_);
  for (const ConvParams& c : stages_) x = g.relu(c.apply(ctx, x));
  return g.global_avg_pool(x);
}

void SmallCnnBackbone::visit_params(const ParamVisitor& fn) {
  for (ConvParams& c : stages_) c.visit(fn);
}

std::unique_ptr<SliceBackbone> make_backbone(const std::string& id, const std::string& param_name,
                                             Rng& rng) {
  const std::string prefix = "small_cnn_p";
  if (id.rfind(prefix, 0) == 0) {
    const long pool = std::stol(id.substr(prefix.size()));
    return std::make_unique<SmallCnnBackbone>(param_name, pool, rng);
  }
  throw std::invalid_argument("make_backbone: unknown backbone id '" + id + "'");
}

Var encode_slices(Ctx& ctx, const SliceBackbone& backbone, const LinearParams& proj,
                  const std::vector<Tensor>& planes) {
  if (planes.empty()) throw std::invalid_argument("encode_slices: no planes");
  std::vector<Var> feats;
  feats.reserve(planes.size());
  for (const Tensor& p : planes)
    feats.push_back(backbone.forward(ctx, ctx.g.constant(p)));
  return proj.apply(ctx, ctx.g.stack_rows(feats));
}

CrossSliceParams CrossSliceParams::make(const std::string& name, long dim, long heads,
                                        long max_slices, bool use_positional, Rng& rng) {
  CrossSliceParams p;
  p.dim = dim;
  p.max_slices = max_slices;
  p.use_positional = use_positional;
  p.positional.name = name + ".positional";
  p.positional.value = Tensor::zeros({max_slices, dim});
  init_normal(p.positional.value, 0.02, rng);
  p.positional.no_decay = true;
  p.block = AttentionBlockParams::make(name + ".block", dim, heads, 4 * dim, rng);
  return p;
}

void CrossSliceParams::visit(const ParamVisitor& fn) {
  fn(positional);
  block.visit(fn);
}

Var cross_slice_attend(Ctx& ctx, const CrossSliceParams& p, Var tokens,
                       std::vector<Var>* attn_probs) {
  Graph& g = ctx.g;
  const Tensor& tv = g.val(tokens);
  if (tv.ndim() != 2 || tv.cols() != p.dim)
    throw std::invalid_argument("cross_slice_attend: token width != " + std::to_string(p.dim));
  const long S = tv.rows();
  if (S > p.max_slices)
    throw std::invalid_argument("cross_slice_attend: " + std::to_string(S) +
                                " slices exceed max_slices " + std::to_string(p.max_slices));
  Var x = tokens;
  if (p.use_positional) {
    std::vector<long> idx(static_cast<size_t>(S));
    std::iota(idx.begin(), idx.end(), 0L);
    x = g.add(x, g.gather_rows(ctx.bind(p.positional), idx));
  }
  return p.block.apply(ctx, x, attn_probs);
}

}  // namespace dsc
