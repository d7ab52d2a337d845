#include "dsc/sme.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace dsc {

void SparseRow::sort_by_index() {
  std::vector<size_t> order(idx.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return idx[a] < idx[b]; });
  std::vector<long> ni(idx.size());
  std::vector<double> nv(val.size());
  for (size_t i = 0; i < order.size(); ++i) {
    ni[i] = idx[order[i]];
    nv[i] = val[order[i]];
  }
  idx = std::move(ni);
  val = std::move(nv);
}

SmeParams SmeParams::make(const std::string& name, long feature_count, long dim, long out_dim,
                          Rng& rng) {
  if (feature_count < 1 || dim < 1 || out_dim < 1)
    throw std::invalid_argument("SmeParams: dimensions must be positive");
  SmeParams p;
  p.feature_count = feature_count;
  p.dim = dim;
  p.out_dim = out_dim;
  p.dictionary.name = name + ".dictionary";
  p.dictionary.value = Tensor::zeros({feature_count, dim});
  init_normal(p.dictionary.value, 1.0 / std::sqrt(static_cast<double>(dim)), rng);
  p.dictionary.no_decay = true;
  p.null_embedding.name = name + ".null_embedding";
  p.null_embedding.value = Tensor::zeros({1, dim});
  init_normal(p.null_embedding.value, 0.02, rng);
  p.null_embedding.no_decay = true;
  p.val1 = LinearParams::make(name + ".val1", 1 + dim, 2 * dim, rng);
  p.val2 = LinearParams::make(name + ".val2", 2 * dim, 2 * dim, rng, /*zero_init=*/true);
  p.res1 = LinearParams::make(name + ".res1", dim, dim, rng);
  p.res2 = LinearParams::make(name + ".res2", dim, dim, rng);
  p.ln = LayerNormParams::make(name + ".ln", dim);
  p.out_proj = LinearParams::make(name + ".out_proj", dim, out_dim, rng);
  return p;
}

void SmeParams::visit(const ParamVisitor& fn) {
  fn(dictionary);
  fn(null_embedding);
  val1.visit(fn);
  val2.visit(fn);
  res1.visit(fn);
  res2.visit(fn);
  ln.visit(fn);
  out_proj.visit(fn);
}

Var film_modulate(Ctx& ctx, const SmeParams& p, Var values, Var embeddings) {
  Graph& g = ctx.g;
  const Tensor& vv = g.val(values);
  const Tensor& ev = g.val(embeddings);
  if (vv.ndim() != 2 || vv.cols() != 1 || ev.ndim() != 2 || ev.cols() != p.dim ||
      vv.rows() != ev.rows())
    throw std::invalid_argument("film_modulate: expected (n x 1) values and (n x d) embeddings");
  Var x = g.concat_cols(values, embeddings);
  Var ab = p.val2.apply(ctx, g.gelu(p.val1.apply(ctx, x)));
  Var alpha = g.slice_cols(ab, 0, p.dim);
  Var beta = g.slice_cols(ab, p.dim, 2 * p.dim);
  return g.add(g.add(embeddings, g.mul(embeddings, alpha)), beta);
}

Var encode_slice_metadata(Ctx& ctx, const SmeParams& p, const SparseRow& row) {
  Graph& g = ctx.g;
  Var pooled;
  if (row.empty()) {
    pooled = ctx.bind(p.null_embedding);
  } else {
    // Pairs are processed in canonical order so the result does not depend
    // on how the caller assembled the row.
    SparseRow canon;
    const SparseRow* r = &row;
    if (!std::is_sorted(row.idx.begin(), row.idx.end())) {
      canon = row;
      canon.sort_by_index();
      r = &canon;
    }
    for (size_t i = 0; i < r->idx.size(); ++i) {
      if (r->idx[i] < 0 || r->idx[i] >= p.feature_count)
        throw std::out_of_range("encode_slice_metadata: feature index " +
                                std::to_string(r->idx[i]) + " outside [0, " +
                                std::to_string(p.feature_count) + ")");
      if (i + 1 < r->idx.size() && r->idx[i] >= r->idx[i + 1])
        throw std::invalid_argument("encode_slice_metadata: duplicate feature index " +
                                    std::to_string(r->idx[i]));
    }
    Var emb = g.gather_rows(ctx.bind(p.dictionary), r->idx);
    Var values = g.constant(Tensor::from({static_cast<long>(r->val.size()), 1}, r->val));
    Var modulated = film_modulate(ctx, p, values, emb);
    pooled = g.mean_rows(modulated);
  }
  Var h = g.add(pooled, p.res2.apply(ctx, g.gelu(p.res1.apply(ctx, pooled))));
  return p.out_proj.apply(ctx, p.ln.apply(ctx, h));
}

Var encode_metadata(Ctx& ctx, const SmeParams& p, const std::vector<SparseRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("encode_metadata: no slices");
  std::vector<Var> tokens;
  tokens.reserve(rows.size());
  for (const SparseRow& r : rows) tokens.push_back(encode_slice_metadata(ctx, p, r));
  return ctx.g.stack_rows(tokens);
}

}  // namespace dsc
