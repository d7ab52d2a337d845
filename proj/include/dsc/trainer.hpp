#pragma once

#include <filesystem>
#include <ostream>
#include <unordered_map>

#include "dsc/data.hpp"
#include "dsc/model.hpp"

namespace dsc {

struct TrainConfig {
  long epochs = 30;
  long batch_size = 64;
  double base_lr = 1e-4;
  double weight_decay = 0.01;
  double warmup_fraction = 0.10;
  double grad_clip = 0.5;
  double val_fraction = 0.15;
  uint64_t seed = 1;

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

// Linear warmup from zero over warmup_fraction of the schedule, then cosine
// decay to zero; continuous at the joint, where it equals base_lr.
double lr_at_step(long step, long total_steps, double base_lr,
                  double warmup_fraction);

// Element-wise clamp to [-limit, limit].
void clip_gradients(std::vector<double>& grads, double limit);

// Adam with decoupled weight decay. Decay multiplies eligible parameters by
// (1 - lr * weight_decay) before the moment update; no_decay parameters are
// exempt. Moments start at zero per parameter; bias correction uses a shared
// step counter.
class AdamW {
 public:
  explicit AdamW(double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8);
  void step(const std::vector<Param*>& params,
            const std::vector<std::vector<double>>& grads, double lr);

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  double wd_, b1_, b2_, eps_;
  long t_ = 0;
  std::unordered_map<const Param*, Moments> state_;
};

// Series indices split into train/val without splitting any patient.
// val_fraction <= 0 or a single-patient dataset yields an empty val split.
std::pair<std::vector<long>, std::vector<long>> split_by_patient(
    const DataProvider& data, const std::vector<long>& indices,
    double val_fraction, uint64_t seed);

// Forward-only pass collecting predictions. primary_f1 is the weighted F1
// of the joint head, or the per-head mean of weighted F1s in multilabel
// mode.
struct EvalOutcome {
  std::vector<int> y_true, y_pred;
  std::vector<std::array<int, kNumHeads>> head_true, head_pred;
  double primary_f1 = 0.0;
};

EvalOutcome evaluate_model(Classifier& model, DataProvider& data,
                           const std::vector<long>& indices);

double multilabel_mean_f1(
    const std::vector<std::array<int, kNumHeads>>& head_true,
    const std::vector<std::array<int, kNumHeads>>& head_pred);

struct EpochStats {
  long epoch = 0;
  double mean_loss = 0.0;
  double train_f1 = 0.0;
  double val_f1 = 0.0;
  double lr_last = 0.0;
};

struct TrainResult {
  double best_f1 = 0.0;
  long best_epoch = -1;
  std::vector<EpochStats> epochs;
};

// Mini-batch training with the cosine schedule, gradient clipping and AdamW.
// Logs one JSON line per optimizer step and per epoch to metrics.jsonl under
// out_dir (skipped when out_dir is empty); the log contains no wall-clock
// state, so equal seeds produce byte-identical files. The epoch whose
// validation F1 is best (training F1 when the val split is empty) is
// restored at the end, then parameters are rounded to f32 so a checkpoint
// written afterwards reloads bit-identically. A non-finite loss aborts,
// naming the epoch and batch.
TrainResult train_model(Classifier& model, DataProvider& data,
                        const std::vector<long>& train_idx,
                        const std::vector<long>& val_idx,
                        const TrainConfig& cfg,
                        const std::filesystem::path& out_dir,
                        std::ostream* log = nullptr);

}  // namespace dsc
