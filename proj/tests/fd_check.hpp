#pragma once

// Central finite-difference gradient checking. The relative error metric is
//   ||analytic - fd||_2 / max(||analytic||_2, ||fd||_2, 1e-12)
// computed per parameter tensor; the harness returns the worst one.

#include <cmath>
#include <functional>
#include <vector>

#include "dsc/graph.hpp"
#include "dsc/nn.hpp"
#include "dsc/rng.hpp"
#include "dsc/tensor.hpp"

namespace fdtest {

using LossBuilder = std::function<dsc::Var(dsc::Graph&, const std::vector<dsc::Var>&)>;

inline double run_loss(const std::vector<dsc::Tensor*>& params, const LossBuilder& build,
                       std::vector<dsc::Tensor>* grads_out = nullptr) {
  dsc::Graph g;
  std::vector<dsc::Var> vars;
  vars.reserve(params.size());
  for (const dsc::Tensor* p : params) vars.push_back(g.external(p, true));
  dsc::Var loss = build(g, vars);
  if (grads_out) {
    g.backward(loss);
    grads_out->clear();
    for (dsc::Var v : vars) grads_out->push_back(g.grad(v));
  }
  return g.val(loss)[0];
}

inline double fd_max_rel_err(const std::vector<dsc::Tensor*>& params, const LossBuilder& build,
                             double h = 1e-3) {
  std::vector<dsc::Tensor> analytic;
  run_loss(params, build, &analytic);

  double worst = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    dsc::Tensor& p = *params[pi];
    dsc::Tensor fd = dsc::Tensor::zeros(p.shape());
    for (long i = 0; i < p.numel(); ++i) {
      const double orig = p[i];
      p[i] = orig + h;
      const double up = run_loss(params, build);
      p[i] = orig - h;
      const double dn = run_loss(params, build);
      p[i] = orig;
      fd[i] = (up - dn) / (2.0 * h);
    }
    double num = 0.0, na = 0.0, nf = 0.0;
    for (long i = 0; i < p.numel(); ++i) {
      const double d = analytic[pi][i] - fd[i];
      num += d * d;
      na += analytic[pi][i] * analytic[pi][i];
      nf += fd[i] * fd[i];
    }
    const double rel = std::sqrt(num) / std::max({std::sqrt(na), std::sqrt(nf), 1e-12});
    worst = std::max(worst, rel);
  }
  return worst;
}

// Variant over named parameters bound through a Ctx. Parameters the loss
// never touches contribute zero to both sides.
using CtxLossBuilder = std::function<dsc::Var(dsc::Ctx&)>;

inline double run_ctx_loss(const std::vector<dsc::Param*>& params, const CtxLossBuilder& build,
                           std::vector<dsc::Tensor>* grads_out = nullptr) {
  dsc::Graph g;
  dsc::Ctx ctx(g, /*train_mode=*/true);
  dsc::Var loss = build(ctx);
  if (grads_out) {
    g.backward(loss);
    grads_out->clear();
    for (const dsc::Param* p : params) {
      dsc::Tensor grad = dsc::Tensor::zeros(p->value.shape());
      for (const auto& [bp, var] : ctx.bindings)
        if (bp == p) grad.add_inplace(g.grad(var));
      grads_out->push_back(std::move(grad));
    }
  }
  return g.val(loss)[0];
}

struct FdReport {
  double max_rel_err = 0.0;
  std::vector<std::pair<std::string, double>> per_param;
};

inline FdReport fd_report_params(const std::vector<dsc::Param*>& params,
                                 const CtxLossBuilder& build, double h = 1e-3) {
  std::vector<dsc::Tensor> analytic;
  run_ctx_loss(params, build, &analytic);
  FdReport report;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    dsc::Tensor& t = params[pi]->value;
    double num = 0.0, na = 0.0, nf = 0.0;
    for (long i = 0; i < t.numel(); ++i) {
      const double orig = t[i];
      t[i] = orig + h;
      const double up = run_ctx_loss(params, build);
      t[i] = orig - h;
      const double dn = run_ctx_loss(params, build);
      t[i] = orig;
      const double fd = (up - dn) / (2.0 * h);
      const double d = analytic[pi][i] - fd;
      num += d * d;
      na += analytic[pi][i] * analytic[pi][i];
      nf += fd * fd;
    }
    const double rel = std::sqrt(num) / std::max({std::sqrt(na), std::sqrt(nf), 1e-12});
    report.per_param.emplace_back(params[pi]->name, rel);
    report.max_rel_err = std::max(report.max_rel_err, rel);
  }
  return report;
}

inline double fd_max_rel_err_params(const std::vector<dsc::Param*>& params,
                                    const CtxLossBuilder& build, double h = 1e-3) {
  return fd_report_params(params, build, h).max_rel_err;
}

inline dsc::Tensor random_tensor(std::vector<long> shape, dsc::Rng& rng, double scale = 1.0) {
  dsc::Tensor t(std::move(shape));
  for (long i = 0; i < t.numel(); ++i) t[i] = rng.normal() * scale;
  return t;
}

// Random values kept away from zero; for ops with a kink at the origin.
inline dsc::Tensor random_tensor_off_origin(std::vector<long> shape, dsc::Rng& rng,
                                            double min_abs = 0.02) {
  dsc::Tensor t = random_tensor(std::move(shape), rng);
  for (long i = 0; i < t.numel(); ++i) {
    if (std::abs(t[i]) < min_abs) t[i] = t[i] < 0.0 ? -min_abs : min_abs;
  }
  return t;
}

// Reduces an arbitrary tensor to a scalar by a fixed weighted sum, so any op
// output can be gradient-checked.
inline dsc::Var scalarize(dsc::Graph& g, dsc::Var y, const dsc::Tensor& weights) {
  dsc::Var flat = g.reshape(y, {1, weights.numel()});
  dsc::Var w = g.constant(dsc::Tensor::from({weights.numel(), 1}, weights.vec()));
  return g.matmul(flat, w);
}

}  // namespace fdtest
