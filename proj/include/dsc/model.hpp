#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dsc/fusion.hpp"
#include "dsc/labels.hpp"
#include "dsc/sme.hpp"
#include "dsc/visual.hpp"

namespace dsc {

// full: 2.5D visual path + sparse metadata encoder fused by bi-directional
// cross-modal attention. The others are ablations: one modality alone, or
// both modalities concatenated after dense imputation (zero or learned).
enum class ModelKind { full, image_only, metadata_only, concat_zero, concat_learned };

// joint: one 13-way head. multilabel: independent per-attribute heads.
enum class LabelMode { joint, multilabel };

ModelKind model_kind_from_string(const std::string& s);
LabelMode label_mode_from_string(const std::string& s);
std::string to_string(ModelKind k);
std::string to_string(LabelMode m);

struct ModelConfig {
  ModelKind kind = ModelKind::full;
  LabelMode label_mode = LabelMode::joint;
  std::string backbone = "small_cnn_p4";
  long slices = 10;        // sampled slices per series
  long target = 128;       // preprocessed plane edge length
  long feature_count = 0;  // metadata feature columns
  long d_visual = 256;
  long d_meta = 128;
  long d_attn = 256;
  long d_out = 128;
  long sme_dim = 64;
  long heads = 4;
  long pool_hidden = 64;
  long concat_hidden = 256;
  bool use_positional = true;

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

// One series as the models consume it: equidistantly sampled preprocessed
// planes (each {1, target, target}) and per-slice observed feature pairs.
// class_id is -1 for unlabeled inputs.
struct SeriesSample {
  std::vector<Tensor> planes;
  std::vector<SparseRow> rows;
  int class_id = -1;
};

struct ModelOutput {
  std::optional<Var> joint;         // (1 x kNumClasses), joint mode
  std::vector<Var> heads;           // kNumHeads logits, multilabel mode
  std::optional<Var> pool_weights;  // (1 x S) for attention-pooled models
};

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual const ModelConfig& config() const = 0;
  virtual bool needs_images() const = 0;
  virtual bool needs_metadata() const = 0;
  virtual ModelOutput forward(Ctx& ctx, const SeriesSample& sample) const = 0;
  virtual void visit_params(const ParamVisitor& fn) = 0;
};

// Builds the classifier for `cfg` with freshly initialized parameters.
// Parameter names are unique and stable across builds of the same config.
std::unique_ptr<Classifier> make_classifier(const ModelConfig& cfg,
                                            uint64_t seed);

// Joint mode: softmax cross-entropy. Multilabel mode: the unweighted sum of
// per-head losses (logistic for binary heads, cross-entropy for plane and
// phase), with targets derived from the joint class.
Var classification_loss(Ctx& ctx, const ModelOutput& out, LabelMode mode,
                        int class_id);

// Joint prediction, or the per-head argmax/threshold decisions.
int predict_class(const Graph& g, const ModelOutput& out);
std::array<int, kNumHeads> predict_heads(const Graph& g,
                                         const ModelOutput& out);

}  // namespace dsc
