#pragma once

#include <vector>

#include "dsc/nn.hpp"

namespace dsc {

// Observed (feature index, value) pairs for one slice, kept sorted by index.
struct SparseRow {
  std::vector<long> idx;
  std::vector<double> val;

  void add(long i, double v) {
    idx.push_back(i);
    val.push_back(v);
  }
  size_t size() const { return idx.size(); }
  bool empty() const { return idx.empty(); }
  void sort_by_index();
};

// Sparse metadata encoder. Each observed feature modulates its dictionary
// embedding through a FiLM value network; the modulated embeddings are
// mean-pooled, refined by a residual MLP, normalized and projected to the
// metadata token width. Slices with nothing observed map to a learned
// embedding instead.
struct SmeParams {
  long feature_count = 0;
  long dim = 0;      // dictionary width d
  long out_dim = 0;  // metadata token width

  Param dictionary;      // (F x d)
  Param null_embedding;  // (1 x d)
  LinearParams val1;     // (1+d) -> 2d
  LinearParams val2;     // 2d -> 2d, zero-initialized so modulation starts as identity
  LinearParams res1;     // d -> d
  LinearParams res2;     // d -> d
  LayerNormParams ln;    // over d
  LinearParams out_proj; // d -> out_dim

  static SmeParams make(const std::string& name, long feature_count, long dim, long out_dim,
                        Rng& rng);
  void visit(const ParamVisitor& fn);
};

// FiLM modulation of gathered embeddings by their observed values:
//   (alpha, beta) = g([v_i, e_i]);  out_i = e_i * (1 + alpha) + beta
// values: (n x 1), embeddings: (n x d) -> (n x d).
Var film_modulate(Ctx& ctx, const SmeParams& p, Var values, Var embeddings);

// One slice's observed pairs -> metadata token (1 x out_dim).
Var encode_slice_metadata(Ctx& ctx, const SmeParams& p, const SparseRow& row);

// Stack of per-slice tokens (S x out_dim); row s depends only on rows[s].
Var encode_metadata(Ctx& ctx, const SmeParams& p, const std::vector<SparseRow>& rows);

}  // namespace dsc
