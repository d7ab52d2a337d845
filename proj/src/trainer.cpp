#include "dsc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "dsc/checkpoint.hpp"
#include "dsc/evalkit.hpp"
#include "json.hpp"

namespace dsc {

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (batch_size < 1)
    throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(base_lr > 0.0))
    throw std::invalid_argument("train: base_lr must be positive");
  if (!(weight_decay >= 0.0))
    throw std::invalid_argument("train: weight_decay must be >= 0");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0))
    throw std::invalid_argument("train: warmup_fraction must lie in [0, 1)");
  if (!(grad_clip > 0.0))
    throw std::invalid_argument("train: grad_clip must be positive");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    throw std::invalid_argument("train: val_fraction must lie in [0, 1)");
}

std::string TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["base_lr"] = base_lr;
  j["weight_decay"] = weight_decay;
  j["warmup_fraction"] = warmup_fraction;
  j["grad_clip"] = grad_clip;
  j["val_fraction"] = val_fraction;
  j["seed"] = seed;
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("train config parse failure: ") +
                                e.what());
  }
  if (!doc.is_object())
    throw std::invalid_argument("train config: expected a JSON object");
  TrainConfig c;
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "epochs") c.epochs = value.get<long>();
      else if (key == "batch_size") c.batch_size = value.get<long>();
      else if (key == "base_lr") c.base_lr = value.get<double>();
      else if (key == "weight_decay") c.weight_decay = value.get<double>();
      else if (key == "warmup_fraction")
        c.warmup_fraction = value.get<double>();
      else if (key == "grad_clip") c.grad_clip = value.get<double>();
      else if (key == "val_fraction") c.val_fraction = value.get<double>();
      else if (key == "seed") c.seed = value.get<uint64_t>();
      else
        throw std::invalid_argument("train config: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("train config type error: ") +
                                e.what());
  }
  return c;
}

double lr_at_step(long step, long total_steps, double base_lr,
                  double warmup_fraction) {
  if (total_steps < 1)
    throw std::invalid_argument("lr_at_step: total_steps must be >= 1");
  if (step < 0) throw std::invalid_argument("lr_at_step: negative step");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0))
    throw std::invalid_argument("lr_at_step: warmup_fraction out of range");
  long warm = std::llround(warmup_fraction * static_cast<double>(total_steps));
  if (step < warm)
    return base_lr * static_cast<double>(step) / static_cast<double>(warm);
  double span = std::max(1.0, static_cast<double>(total_steps - warm));
  double progress =
      std::min(1.0, static_cast<double>(step - warm) / span);
  return base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

void clip_gradients(std::vector<double>& grads, double limit) {
  if (!(limit > 0.0))
    throw std::invalid_argument("clip_gradients: limit must be positive");
  for (double& g : grads) g = std::clamp(g, -limit, limit);
}

AdamW::AdamW(double weight_decay, double beta1, double beta2, double eps)
    : wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
  if (!(weight_decay >= 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) ||
      !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0))
    throw std::invalid_argument("adamw: bad hyperparameters");
}

void AdamW::step(const std::vector<Param*>& params,
                 const std::vector<std::vector<double>>& grads, double lr) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adamw: param/grad count mismatch");
  ++t_;
  double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    auto& vals = p.value.vec();
    const auto& g = grads[i];
    if (g.size() != vals.size())
      throw std::invalid_argument("adamw: gradient size mismatch on " +
                                  p.name);
    Moments& mom = state_[params[i]];
    if (mom.m.empty()) {
      mom.m.assign(vals.size(), 0.0);
      mom.v.assign(vals.size(), 0.0);
    }
    double keep = 1.0 - lr * wd_;
    for (size_t k = 0; k < vals.size(); ++k) {
      if (!p.no_decay) vals[k] *= keep;
      mom.m[k] = b1_ * mom.m[k] + (1.0 - b1_) * g[k];
      mom.v[k] = b2_ * mom.v[k] + (1.0 - b2_) * g[k] * g[k];
      double mhat = mom.m[k] / c1;
      double vhat = mom.v[k] / c2;
      vals[k] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

std::pair<std::vector<long>, std::vector<long>> split_by_patient(
    const DataProvider& data, const std::vector<long>& indices,
    double val_fraction, uint64_t seed) {
  std::pair<std::vector<long>, std::vector<long>> out;
  if (val_fraction <= 0.0) {
    out.first = indices;
    return out;
  }
  std::vector<FoldItem> items;
  std::map<std::string, bool> patients;
  items.reserve(indices.size());
  for (long i : indices) {
    const SeriesMeta& m = data.info(i);
    items.push_back({m.patient, std::max(0, m.class_id)});
    patients[m.patient] = true;
  }
  if (patients.size() < 2) {
    out.first = indices;
    return out;
  }
  long k = std::clamp<long>(std::llround(1.0 / val_fraction), 2,
                            static_cast<long>(patients.size()));
  std::vector<int> folds =
      stratified_patient_folds(items, static_cast<int>(k), seed);
  for (size_t j = 0; j < indices.size(); ++j)
    (folds[j] == 0 ? out.second : out.first).push_back(indices[j]);
  return out;
}

EvalOutcome evaluate_model(Classifier& model, DataProvider& data,
                           const std::vector<long>& indices) {
  const ModelConfig& mc = model.config();
  EvalOutcome out;
  for (long i : indices) {
    SeriesSample s =
        data.sample(i, mc.slices, mc.target, model.needs_images());
    if (s.class_id < 0)
      throw std::invalid_argument("evaluate: series " + data.info(i).uid +
                                  " has no label");
    Graph g;
    Ctx ctx(g, /*train=*/false);
    ModelOutput mo = model.forward(ctx, s);
    if (mc.label_mode == LabelMode::joint) {
      out.y_true.push_back(s.class_id);
      out.y_pred.push_back(predict_class(g, mo));
    } else {
      out.head_true.push_back(head_targets(multilabel_target(s.class_id)));
      out.head_pred.push_back(predict_heads(g, mo));
    }
  }
  if (mc.label_mode == LabelMode::joint)
    out.primary_f1 = out.y_true.empty()
                         ? 0.0
                         : weighted_f1(out.y_true, out.y_pred, kNumClasses);
  else
    out.primary_f1 = multilabel_mean_f1(out.head_true, out.head_pred);
  return out;
}

double multilabel_mean_f1(
    const std::vector<std::array<int, kNumHeads>>& head_true,
    const std::vector<std::array<int, kNumHeads>>& head_pred) {
  if (head_true.size() != head_pred.size())
    throw std::invalid_argument("multilabel_mean_f1: size mismatch");
  if (head_true.empty()) return 0.0;
  double sum = 0.0;
  std::vector<int> t(head_true.size()), p(head_true.size());
  for (int h = 0; h < kNumHeads; ++h) {
    for (size_t i = 0; i < head_true.size(); ++i) {
      t[i] = head_true[i][static_cast<size_t>(h)];
      p[i] = head_pred[i][static_cast<size_t>(h)];
    }
    sum += weighted_f1(t, p, head_cardinality(h));
  }
  return sum / static_cast<double>(kNumHeads);
}

namespace {

std::vector<Tensor> snapshot_params(Classifier& model) {
  std::vector<Tensor> snap;
  model.visit_params([&](Param& p) { snap.push_back(p.value); });
  return snap;
}

void restore_params(Classifier& model, const std::vector<Tensor>& snap) {
  size_t i = 0;
  model.visit_params([&](Param& p) { p.value = snap[i++]; });
}

}  // namespace

TrainResult train_model(Classifier& model, DataProvider& data,
                        const std::vector<long>& train_idx,
                        const std::vector<long>& val_idx,
                        const TrainConfig& cfg,
                        const std::filesystem::path& out_dir,
                        std::ostream* log) {
  cfg.validate();
  if (train_idx.empty())
    throw std::invalid_argument("train: empty training split");
  const ModelConfig& mc = model.config();

  std::vector<Param*> params;
  model.visit_params([&](Param& p) { params.push_back(&p); });
  std::vector<std::vector<double>> grads(params.size());
  std::unordered_map<const Param*, size_t> param_index;
  for (size_t i = 0; i < params.size(); ++i) param_index[params[i]] = i;

  long steps_per_epoch =
      (static_cast<long>(train_idx.size()) + cfg.batch_size - 1) /
      cfg.batch_size;
  long total_steps = cfg.epochs * steps_per_epoch;
  AdamW opt(cfg.weight_decay);

  std::ofstream metrics;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    metrics.open(out_dir / "metrics.jsonl", std::ios::trunc);
    if (!metrics)
      throw std::runtime_error("train: cannot write metrics under " +
                               out_dir.string());
  }

  TrainResult result;
  std::vector<Tensor> best_snap;
  long global_step = 0;
  double last_lr = 0.0;

  for (long epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<long> order = train_idx;
    Rng(cfg.seed).child(static_cast<uint64_t>(epoch) + 1).shuffle(order);

    double epoch_loss = 0.0;
    long seen = 0;
    std::vector<int> y_true, y_pred;
    std::vector<std::array<int, kNumHeads>> h_true, h_pred;

    for (long start = 0; start < static_cast<long>(order.size());
         start += cfg.batch_size) {
      long stop = std::min<long>(start + cfg.batch_size,
                                 static_cast<long>(order.size()));
      long batch_n = stop - start;
      for (auto& g : grads) g.clear();
      double batch_loss = 0.0;

      for (long j = start; j < stop; ++j) {
        SeriesSample s = data.sample(order[static_cast<size_t>(j)], mc.slices,
                                     mc.target, model.needs_images());
        if (s.class_id < 0)
          throw std::invalid_argument("train: unlabeled series in split");
        Graph g;
        Ctx ctx(g, /*train=*/true);
        ModelOutput mo = model.forward(ctx, s);
        Var loss = classification_loss(ctx, mo, mc.label_mode, s.class_id);
        double lv = g.val(loss).vec()[0];
        if (!std::isfinite(lv))
          throw std::runtime_error(
              "train: non-finite loss in epoch " + std::to_string(epoch) +
              " batch " + std::to_string(start / cfg.batch_size));
        batch_loss += lv;
        if (mc.label_mode == LabelMode::joint) {
          y_true.push_back(s.class_id);
          y_pred.push_back(predict_class(g, mo));
        } else {
          h_true.push_back(head_targets(multilabel_target(s.class_id)));
          h_pred.push_back(predict_heads(g, mo));
        }
        g.backward(loss);
        // Each parameter binds at most once, so this sums per-sample
        // gradients; dividing by batch_n below gives the mean-loss gradient.
        for (const auto& [param, var] : ctx.bindings) {
          auto it = param_index.find(param);
          if (it == param_index.end()) continue;
          const Tensor gt = g.grad(var);
          const auto& gv = gt.vec();
          auto& acc = grads[it->second];
          if (acc.empty()) acc.assign(gv.size(), 0.0);
          for (size_t k = 0; k < gv.size(); ++k) acc[k] += gv[k];
        }
      }

      for (size_t pi = 0; pi < params.size(); ++pi) {
        if (grads[pi].empty())
          grads[pi].assign(params[pi]->value.vec().size(), 0.0);
        for (double& v : grads[pi]) v /= static_cast<double>(batch_n);
        clip_gradients(grads[pi], cfg.grad_clip);
      }
      last_lr = lr_at_step(global_step, total_steps, cfg.base_lr,
                           cfg.warmup_fraction);
      opt.step(params, grads, last_lr);

      epoch_loss += batch_loss;
      seen += batch_n;
      if (metrics.is_open()) {
        nlohmann::ordered_json line;
        line["type"] = "step";
        line["epoch"] = epoch;
        line["step"] = global_step;
        line["lr"] = last_lr;
        line["loss"] = batch_loss / static_cast<double>(batch_n);
        metrics << line.dump() << "\n";
      }
      ++global_step;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = epoch_loss / static_cast<double>(seen);
    stats.train_f1 = mc.label_mode == LabelMode::joint
                         ? weighted_f1(y_true, y_pred, kNumClasses)
                         : multilabel_mean_f1(h_true, h_pred);
    stats.lr_last = last_lr;
    if (!val_idx.empty())
      stats.val_f1 = evaluate_model(model, data, val_idx).primary_f1;

    double selection = val_idx.empty() ? stats.train_f1 : stats.val_f1;
    bool best = result.best_epoch < 0 || selection > result.best_f1;
    if (best) {
      result.best_f1 = selection;
      result.best_epoch = epoch;
      best_snap = snapshot_params(model);
    }
    result.epochs.push_back(stats);

    if (metrics.is_open()) {
      nlohmann::ordered_json line;
      line["type"] = "epoch";
      line["epoch"] = epoch;
      line["mean_loss"] = stats.mean_loss;
      line["train_f1"] = stats.train_f1;
      if (val_idx.empty())
        line["val_f1"] = nullptr;
      else
        line["val_f1"] = stats.val_f1;
      line["lr_last"] = stats.lr_last;
      line["best"] = best;
      metrics << line.dump() << "\n";
    }
    if (log)
      (*log) << "epoch " << epoch << " loss " << stats.mean_loss
             << " train_f1 " << stats.train_f1 << " val_f1 "
             << (val_idx.empty() ? -1.0 : stats.val_f1) << "\n";
  }

  restore_params(model, best_snap);
  snap_params_to_f32(model);
  return result;
}

}  // namespace dsc
