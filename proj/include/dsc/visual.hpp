#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dsc/nn.hpp"

namespace dsc {

// Per-slice feature extractor over a single-channel plane {1, H, W}.
// Implementations are interchangeable; the checkpoint records id() and
// refuses to load into a model built with a different one.
class SliceBackbone {
public:
  virtual ~SliceBackbone() = default;
  virtual std::string id() const = 0;
  virtual long output_dim() const = 0;
  virtual Var forward(Ctx& ctx, Var plane) const = 0;
  virtual void visit_params(const ParamVisitor& fn) = 0;
};

// Compact CNN: average-pool stem to cut resolution, then four stride-2 3x3
// conv stages (16/32/64/128 channels) with ReLU, then global average pool.
class SmallCnnBackbone : public SliceBackbone {
public:
  SmallCnnBackbone(const std::string& name, long stem_pool, Rng& rng);

  std::string id() const override { return "small_cnn_p" + std::to_string(stem_pool_); }
  long output_dim() const override { return 128; }
  Var forward(Ctx& ctx, Var plane) const override;
  void visit_params(const ParamVisitor& fn) override;

private:
  long stem_pool_;
  std::vector<ConvParams> stages_;
};

// Factory over backbone ids; throws on unknown ids.
std::unique_ptr<SliceBackbone> make_backbone(const std::string& id, const std::string& param_name,
                                             Rng& rng);

// Backbone features for each plane, stacked and projected to the visual
// token width: planes (each {1,H,W}) -> (S x proj.out_dim()).
Var encode_slices(Ctx& ctx, const SliceBackbone& backbone, const LinearParams& proj,
                  const std::vector<Tensor>& planes);

// Cross-slice context: learned positional embeddings (optional) followed by
// one post-norm self-attention block over the slice axis.
struct CrossSliceParams {
  long dim = 0;
  long max_slices = 0;
  bool use_positional = true;

  Param positional;  // (max_slices x dim)
  AttentionBlockParams block;

  static CrossSliceParams make(const std::string& name, long dim, long heads, long max_slices,
                               bool use_positional, Rng& rng);
  void visit(const ParamVisitor& fn);
};

// tokens (S x dim) -> (S x dim); S > max_slices is an error.
Var cross_slice_attend(Ctx& ctx, const CrossSliceParams& p, Var tokens,
                       std::vector<Var>* attn_probs = nullptr);

}  // namespace dsc
