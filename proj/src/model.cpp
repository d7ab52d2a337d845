#include "dsc/model.hpp"

#include <stdexcept>

#include "json.hpp"

namespace dsc {

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "full") return ModelKind::full;
  if (s == "image_only") return ModelKind::image_only;
  if (s == "metadata_only") return ModelKind::metadata_only;
  if (s == "concat_zero") return ModelKind::concat_zero;
  if (s == "concat_learned") return ModelKind::concat_learned;
  throw std::invalid_argument("unknown model kind '" + s + "'");
}

LabelMode label_mode_from_string(const std::string& s) {
  if (s == "joint") return LabelMode::joint;
  if (s == "multilabel") return LabelMode::multilabel;
  throw std::invalid_argument("unknown label mode '" + s + "'");
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::full: return "full";
    case ModelKind::image_only: return "image_only";
    case ModelKind::metadata_only: return "metadata_only";
    case ModelKind::concat_zero: return "concat_zero";
    case ModelKind::concat_learned: return "concat_learned";
  }
  return "?";
}

std::string to_string(LabelMode m) {
  return m == LabelMode::joint ? "joint" : "multilabel";
}

void ModelConfig::validate() const {
  if (slices < 1) throw std::invalid_argument("model: slices must be >= 1");
  if (target < 16) throw std::invalid_argument("model: target must be >= 16");
  if (d_visual < 1 || d_meta < 1 || d_attn < 1 || d_out < 1 || sme_dim < 1 ||
      pool_hidden < 1 || concat_hidden < 1)
    throw std::invalid_argument("model: widths must be positive");
  if (heads < 1 || d_attn % heads != 0 || d_visual % heads != 0)
    throw std::invalid_argument(
        "model: heads must divide d_attn and d_visual");
  if (kind != ModelKind::image_only && feature_count < 1)
    throw std::invalid_argument(
        "model: feature_count required for metadata-consuming models");
  if (backbone.empty())
    throw std::invalid_argument("model: backbone id must be set");
}

std::string ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["kind"] = to_string(kind);
  j["label_mode"] = to_string(label_mode);
  j["backbone"] = backbone;
  j["slices"] = slices;
  j["target"] = target;
  j["feature_count"] = feature_count;
  j["d_visual"] = d_visual;
  j["d_meta"] = d_meta;
  j["d_attn"] = d_attn;
  j["d_out"] = d_out;
  j["sme_dim"] = sme_dim;
  j["heads"] = heads;
  j["pool_hidden"] = pool_hidden;
  j["concat_hidden"] = concat_hidden;
  j["use_positional"] = use_positional;
  return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("model config parse failure: ") +
                                e.what());
  }
  if (!doc.is_object())
    throw std::invalid_argument("model config: expected a JSON object");
  ModelConfig c;
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "kind") c.kind = model_kind_from_string(value.get<std::string>());
      else if (key == "label_mode")
        c.label_mode = label_mode_from_string(value.get<std::string>());
      else if (key == "backbone") c.backbone = value.get<std::string>();
      else if (key == "slices") c.slices = value.get<long>();
      else if (key == "target") c.target = value.get<long>();
      else if (key == "feature_count") c.feature_count = value.get<long>();
      else if (key == "d_visual") c.d_visual = value.get<long>();
      else if (key == "d_meta") c.d_meta = value.get<long>();
      else if (key == "d_attn") c.d_attn = value.get<long>();
      else if (key == "d_out") c.d_out = value.get<long>();
      else if (key == "sme_dim") c.sme_dim = value.get<long>();
      else if (key == "heads") c.heads = value.get<long>();
      else if (key == "pool_hidden") c.pool_hidden = value.get<long>();
      else if (key == "concat_hidden") c.concat_hidden = value.get<long>();
      else if (key == "use_positional") c.use_positional = value.get<bool>();
      else
        throw std::invalid_argument("model config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("model config type error: ") +
                                e.what());
  }
  return c;
}

namespace {

// Output heads for one label mode; only the active mode's layers exist, so
// every allocated parameter sits on the loss path.
struct Heads {
  LabelMode mode = LabelMode::joint;
  LinearParams joint;
  std::vector<LinearParams> per_head;

  static Heads make(const std::string& name, LabelMode mode, long in_dim,
                    Rng& rng) {
    Heads h;
    h.mode = mode;
    if (mode == LabelMode::joint) {
      h.joint = LinearParams::make(name + ".joint", in_dim, kNumClasses, rng);
      return h;
    }
    for (int i = 0; i < kNumHeads; ++i) {
      int card = head_cardinality(i);
      h.per_head.push_back(LinearParams::make(name + "." + head_names()[static_cast<size_t>(i)],
                                              in_dim, card == 2 ? 1 : card, rng));
    }
    return h;
  }

  ModelOutput apply(Ctx& ctx, Var z, std::optional<Var> weights) const {
    ModelOutput out;
    out.pool_weights = weights;
    if (mode == LabelMode::joint) {
      out.joint = joint.apply(ctx, z);
      return out;
    }
    for (const auto& layer : per_head) out.heads.push_back(layer.apply(ctx, z));
    return out;
  }

  void visit(const ParamVisitor& fn) {
    if (mode == LabelMode::joint) {
      joint.visit(fn);
      return;
    }
    for (auto& layer : per_head) layer.visit(fn);
  }
};

void check_slice_count(const ModelConfig& cfg, size_t got, const char* what) {
  if (static_cast<long>(got) != cfg.slices)
    throw std::invalid_argument("model: expected " +
                                std::to_string(cfg.slices) + " " + what +
                                ", got " + std::to_string(got));
}

class FullModel : public Classifier {
 public:
  FullModel(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    Rng rng(seed);
    backbone_ = make_backbone(cfg.backbone, "backbone", rng);
    proj_ = LinearParams::make("visual_proj", backbone_->output_dim(),
                               cfg.d_visual, rng);
    context_ = CrossSliceParams::make("context", cfg.d_visual, cfg.heads,
                                      cfg.slices, cfg.use_positional, rng);
    sme_ = SmeParams::make("sme", cfg.feature_count, cfg.sme_dim, cfg.d_meta,
                           rng);
    fusion_ = FusionParams::make("fusion", cfg.d_visual, cfg.d_meta,
                                 cfg.d_attn, cfg.d_out, cfg.heads, rng);
    pool_ = PoolParams::make("pool", cfg.d_out, cfg.pool_hidden, rng);
    heads_ = Heads::make("head", cfg.label_mode, cfg.d_out, rng);
  }

  const ModelConfig& config() const override { return cfg_; }
  bool needs_images() const override { return true; }
  bool needs_metadata() const override { return true; }

  ModelOutput forward(Ctx& ctx, const SeriesSample& s) const override {
    check_slice_count(cfg_, s.planes.size(), "planes");
    check_slice_count(cfg_, s.rows.size(), "metadata rows");
    Var visual = encode_slices(ctx, *backbone_, proj_, s.planes);
    Var context = cross_slice_attend(ctx, context_, visual);
    Var meta = encode_metadata(ctx, sme_, s.rows);
    Var fused = bca_forward(ctx, fusion_, context, meta);
    Var weights;
    Var z = pool_series(ctx, pool_, fused, &weights);
    return heads_.apply(ctx, z, weights);
  }

  void visit_params(const ParamVisitor& fn) override {
    backbone_->visit_params(fn);
    proj_.visit(fn);
    context_.visit(fn);
    sme_.visit(fn);
    fusion_.visit(fn);
    pool_.visit(fn);
    heads_.visit(fn);
  }

 private:
  ModelConfig cfg_;
  std::unique_ptr<SliceBackbone> backbone_;
  LinearParams proj_;
  CrossSliceParams context_;
  SmeParams sme_;
  FusionParams fusion_;
  PoolParams pool_;
  Heads heads_;
};

class ImageOnlyModel : public Classifier {
 public:
  ImageOnlyModel(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    Rng rng(seed);
    backbone_ = make_backbone(cfg.backbone, "backbone", rng);
    proj_ = LinearParams::make("visual_proj", backbone_->output_dim(),
                               cfg.d_visual, rng);
    heads_ = Heads::make("head", cfg.label_mode, cfg.d_visual, rng);
  }

  const ModelConfig& config() const override { return cfg_; }
  bool needs_images() const override { return true; }
  bool needs_metadata() const override { return false; }

  ModelOutput forward(Ctx& ctx, const SeriesSample& s) const override {
    check_slice_count(cfg_, s.planes.size(), "planes");
    Var visual = encode_slices(ctx, *backbone_, proj_, s.planes);
    return heads_.apply(ctx, ctx.g.mean_rows(visual), std::nullopt);
  }

  void visit_params(const ParamVisitor& fn) override {
    backbone_->visit_params(fn);
    proj_.visit(fn);
    heads_.visit(fn);
  }

 private:
  ModelConfig cfg_;
  std::unique_ptr<SliceBackbone> backbone_;
  LinearParams proj_;
  Heads heads_;
};

class MetadataOnlyModel : public Classifier {
 public:
  MetadataOnlyModel(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    Rng rng(seed);
    sme_ = SmeParams::make("sme", cfg.feature_count, cfg.sme_dim, cfg.d_meta,
                           rng);
    pool_ = PoolParams::make("pool", cfg.d_meta, cfg.pool_hidden, rng);
    heads_ = Heads::make("head", cfg.label_mode, cfg.d_meta, rng);
  }

  const ModelConfig& config() const override { return cfg_; }
  bool needs_images() const override { return false; }
  bool needs_metadata() const override { return true; }

  ModelOutput forward(Ctx& ctx, const SeriesSample& s) const override {
    check_slice_count(cfg_, s.rows.size(), "metadata rows");
    Var meta = encode_metadata(ctx, sme_, s.rows);
    Var weights;
    Var z = pool_series(ctx, pool_, meta, &weights);
    return heads_.apply(ctx, z, weights);
  }

  void visit_params(const ParamVisitor& fn) override {
    sme_.visit(fn);
    pool_.visit(fn);
    heads_.visit(fn);
  }

 private:
  ModelConfig cfg_;
  SmeParams sme_;
  PoolParams pool_;
  Heads heads_;
};

// Dense-imputation concatenation baseline: mean-pooled visual tokens next to
// an MLP over the mean of per-slice dense feature rows. Missing value
// columns stay zero, or receive a learned fill that never overwrites an
// observed value.
class ConcatModel : public Classifier {
 public:
  ConcatModel(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    learned_ = cfg.kind == ModelKind::concat_learned;
    Rng rng(seed);
    backbone_ = make_backbone(cfg.backbone, "backbone", rng);
    proj_ = LinearParams::make("visual_proj", backbone_->output_dim(),
                               cfg.d_visual, rng);
    if (learned_) {
      baseline_ = Param{"imputer.baseline",
                        Tensor::zeros({1, cfg.feature_count}), true};
      fill1_ = LinearParams::make("imputer.fc1", cfg.feature_count,
                                  cfg.sme_dim, rng);
      fill2_ = LinearParams::make("imputer.fc2", cfg.sme_dim,
                                  cfg.feature_count, rng, /*zero_init=*/true);
    }
    meta1_ = LinearParams::make("meta_mlp.fc1", cfg.feature_count,
                                cfg.concat_hidden, rng);
    meta2_ = LinearParams::make("meta_mlp.fc2", cfg.concat_hidden, cfg.d_meta,
                                rng);
    trunk_ = LinearParams::make("trunk", cfg.d_visual + cfg.d_meta,
                                cfg.concat_hidden, rng);
    heads_ = Heads::make("head", cfg.label_mode, cfg.concat_hidden, rng);
  }

  const ModelConfig& config() const override { return cfg_; }
  bool needs_images() const override { return true; }
  bool needs_metadata() const override { return true; }

  ModelOutput forward(Ctx& ctx, const SeriesSample& s) const override {
    check_slice_count(cfg_, s.planes.size(), "planes");
    check_slice_count(cfg_, s.rows.size(), "metadata rows");
    Graph& g = ctx.g;
    Var visual = encode_slices(ctx, *backbone_, proj_, s.planes);
    Var v = g.mean_rows(visual);

    long S = cfg_.slices, F = cfg_.feature_count;
    Tensor dense = Tensor::zeros({S, F});
    Tensor missing = Tensor::full({S, F}, 1.0);
    for (long r = 0; r < S; ++r) {
      const SparseRow& row = s.rows[static_cast<size_t>(r)];
      for (size_t k = 0; k < row.size(); ++k) {
        if (row.idx[k] < 0 || row.idx[k] >= F)
          throw std::out_of_range("model: feature index out of range");
        dense.at(r, row.idx[k]) = row.val[k];
        missing.at(r, row.idx[k]) = 0.0;
      }
    }
    Var x = g.constant(dense);
    if (learned_) {
      Var fill = fill2_.apply(ctx, g.gelu(fill1_.apply(ctx, x)));
      fill = g.add_rowvec(fill, ctx.bind(baseline_));
      x = g.add(x, g.mul(g.constant(missing), fill));
    }
    Var m = meta2_.apply(ctx, g.gelu(meta1_.apply(ctx, g.mean_rows(x))));
    Var h = g.gelu(trunk_.apply(ctx, g.concat_cols(v, m)));
    return heads_.apply(ctx, h, std::nullopt);
  }

  void visit_params(const ParamVisitor& fn) override {
    backbone_->visit_params(fn);
    proj_.visit(fn);
    if (learned_) {
      fn(baseline_);
      fill1_.visit(fn);
      fill2_.visit(fn);
    }
    meta1_.visit(fn);
    meta2_.visit(fn);
    trunk_.visit(fn);
    heads_.visit(fn);
  }

 private:
  ModelConfig cfg_;
  bool learned_ = false;
  std::unique_ptr<SliceBackbone> backbone_;
  LinearParams proj_;
  Param baseline_;
  LinearParams fill1_, fill2_;
  LinearParams meta1_, meta2_;
  LinearParams trunk_;
  Heads heads_;
};

}  // namespace

std::unique_ptr<Classifier> make_classifier(const ModelConfig& cfg,
                                            uint64_t seed) {
  cfg.validate();
  switch (cfg.kind) {
    case ModelKind::full: return std::make_unique<FullModel>(cfg, seed);
    case ModelKind::image_only:
      return std::make_unique<ImageOnlyModel>(cfg, seed);
    case ModelKind::metadata_only:
      return std::make_unique<MetadataOnlyModel>(cfg, seed);
    case ModelKind::concat_zero:
    case ModelKind::concat_learned:
      return std::make_unique<ConcatModel>(cfg, seed);
  }
  throw std::invalid_argument("model: unhandled kind");
}

Var classification_loss(Ctx& ctx, const ModelOutput& out, LabelMode mode,
                        int class_id) {
  if (class_id < 0 || class_id >= kNumClasses)
    throw std::invalid_argument("loss: class id out of range");
  if (mode == LabelMode::joint) {
    if (!out.joint) throw std::invalid_argument("loss: joint logits missing");
    return ctx.g.cross_entropy(*out.joint, class_id);
  }
  if (out.heads.size() != static_cast<size_t>(kNumHeads))
    throw std::invalid_argument("loss: per-head logits missing");
  auto targets = head_targets(multilabel_target(class_id));
  std::vector<Var> terms;
  for (int h = 0; h < kNumHeads; ++h) {
    Var logits = out.heads[static_cast<size_t>(h)];
    int t = targets[static_cast<size_t>(h)];
    if (head_cardinality(h) == 2)
      terms.push_back(ctx.g.bce_with_logits(logits, static_cast<double>(t)));
    else
      terms.push_back(ctx.g.cross_entropy(logits, t));
  }
  return ctx.g.add_many(terms);
}

int predict_class(const Graph& g, const ModelOutput& out) {
  if (!out.joint)
    throw std::invalid_argument("predict: model has no joint head");
  const Tensor& logits = g.val(*out.joint);
  int best = 0;
  for (long j = 1; j < logits.cols(); ++j)
    if (logits.at(0, j) > logits.at(0, best)) best = static_cast<int>(j);
  return best;
}

std::array<int, kNumHeads> predict_heads(const Graph& g,
                                         const ModelOutput& out) {
  if (out.heads.size() != static_cast<size_t>(kNumHeads))
    throw std::invalid_argument("predict: model has no per-head logits");
  std::array<int, kNumHeads> preds{};
  for (int h = 0; h < kNumHeads; ++h) {
    const Tensor& logits = g.val(out.heads[static_cast<size_t>(h)]);
    if (head_cardinality(h) == 2) {
      preds[static_cast<size_t>(h)] = logits.at(0, 0) > 0.0 ? 1 : 0;
      continue;
    }
    int best = 0;
    for (long j = 1; j < logits.cols(); ++j)
      if (logits.at(0, j) > logits.at(0, best)) best = static_cast<int>(j);
    preds[static_cast<size_t>(h)] = best;
  }
  return preds;
}

}  // namespace dsc
