#include "dsc/graph.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dsc {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;

ConstMatMap mat(const Tensor& t) { return ConstMatMap(t.data(), t.rows(), t.cols()); }
MatMap mat(Tensor& t) { return MatMap(t.data(), t.rows(), t.cols()); }

[[noreturn]] void shape_error(const std::string& op, const Tensor& a) {
  throw std::invalid_argument("graph: " + op + ": bad operand shape " + a.shape_string());
}

[[noreturn]] void shape_error(const std::string& op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument("graph: " + op + ": incompatible shapes " + a.shape_string() +
                              " and " + b.shape_string());
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

Var Graph::make(Tensor value, bool needs, BackwardFn bwd) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(bwd);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::constant(Tensor v) { return make(std::move(v), false, nullptr); }

Var Graph::external(const Tensor* v, bool needs_grad) {
  Node n;
  n.ext = v;
  n.requires_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Graph::val(Var a) const { return v(a.id); }

Tensor Graph::grad(Var a) const {
  const Node& n = nodes_[static_cast<size_t>(a.id)];
  if (!n.grad.empty()) return n.grad;
  return Tensor::zeros(v(a.id).shape());
}

Tensor& Graph::grad_slot(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.empty()) n.grad = Tensor::zeros(v(id).shape());
  return n.grad;
}

void Graph::accum(int id, const Tensor& g) {
  if (!nodes_[static_cast<size_t>(id)].requires_grad) return;
  grad_slot(id).add_inplace(g);
}

void Graph::accum_scaled(int id, const Tensor& g, double s) {
  if (!nodes_[static_cast<size_t>(id)].requires_grad) return;
  Tensor& slot = grad_slot(id);
  const double* src = g.data();
  double* dst = slot.data();
  const long n = slot.numel();
  for (long i = 0; i < n; ++i) dst[i] += s * src[i];
}

void Graph::backward(Var loss) {
  const Tensor& lv = v(loss.id);
  if (lv.numel() != 1) throw std::invalid_argument("graph: backward target must be scalar");
  if (!nodes_[static_cast<size_t>(loss.id)].requires_grad)
    throw std::invalid_argument("graph: backward target does not require grad");
  grad_slot(loss.id)[0] += 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

Var Graph::add(Var a, Var b) {
  const Tensor& av = v(a.id);
  const Tensor& bv = v(b.id);
  if (!av.same_shape(bv)) shape_error("add", av, bv);
  Tensor out = av;
  out.add_inplace(bv);
  const int ia = a.id, ib = b.id;
  return make(std::move(out), req(a) || req(b), [ia, ib](Graph& g, const Tensor& go) {
    g.accum(ia, go);
    g.accum(ib, go);
  });
}

Var Graph::add_many(const std::vector<Var>& vs) {
  if (vs.empty()) throw std::invalid_argument("graph: add_many: empty input");
  Tensor out = v(vs[0].id);
  bool needs = req(vs[0]);
  for (size_t i = 1; i < vs.size(); ++i) {
    const Tensor& t = v(vs[i].id);
    if (!t.same_shape(out)) shape_error("add_many", out, t);
    out.add_inplace(t);
    needs = needs || req(vs[i]);
  }
  std::vector<int> ids;
  ids.reserve(vs.size());
  for (Var x : vs) ids.push_back(x.id);
  return make(std::move(out), needs, [ids](Graph& g, const Tensor& go) {
    for (int id : ids) g.accum(id, go);
  });
}

Var Graph::sub(Var a, Var b) {
  const Tensor& av = v(a.id);
  const Tensor& bv = v(b.id);
  if (!av.same_shape(bv)) shape_error("sub", av, bv);
  Tensor out = av;
  const double* src = bv.data();
  double* dst = out.data();
  for (long i = 0; i < out.numel(); ++i) dst[i] -= src[i];
  const int ia = a.id, ib = b.id;
  return make(std::move(out), req(a) || req(b), [ia, ib](Graph& g, const Tensor& go) {
    g.accum(ia, go);
    g.accum_scaled(ib, go, -1.0);
  });
}

Var Graph::mul(Var a, Var b) {
  const Tensor& av = v(a.id);
  const Tensor& bv = v(b.id);
  if (!av.same_shape(bv)) shape_error("mul", av, bv);
  Tensor out = av;
  double* dst = out.data();
  const double* src = bv.data();
  for (long i = 0; i < out.numel(); ++i) dst[i] *= src[i];
  const int ia = a.id, ib = b.id;
  return make(std::move(out), req(a) || req(b), [ia, ib](Graph& g, const Tensor& go) {
    const Tensor& av2 = g.v(ia);
    const Tensor& bv2 = g.v(ib);
    if (g.nodes_[static_cast<size_t>(ia)].requires_grad) {
      Tensor da = go;
      double* d = da.data();
      const double* o = bv2.data();
      for (long i = 0; i < da.numel(); ++i) d[i] *= o[i];
      g.accum(ia, da);
    }
    if (g.nodes_[static_cast<size_t>(ib)].requires_grad) {
      Tensor db = go;
      double* d = db.data();
      const double* o = av2.data();
      for (long i = 0; i < db.numel(); ++i) d[i] *= o[i];
      g.accum(ib, db);
    }
  });
}

Var Graph::scale(Var a, double s) {
  Tensor out = v(a.id);
  double* dst = out.data();
  for (long i = 0; i < out.numel(); ++i) dst[i] *= s;
  const int ia = a.id;
  return make(std::move(out), req(a), [ia, s](Graph& g, const Tensor& go) {
    g.accum_scaled(ia, go, s);
  });
}

Var Graph::add_rowvec(Var m, Var vvar) {
  const Tensor& mv = v(m.id);
  const Tensor& vv = v(vvar.id);
  if (mv.ndim() != 2 || vv.ndim() != 2 || vv.rows() != 1 || vv.cols() != mv.cols())
    shape_error("add_rowvec", mv, vv);
  Tensor out = mv;
  const long R = mv.rows(), C = mv.cols();
  for (long i = 0; i < R; ++i)
    for (long j = 0; j < C; ++j) out.at(i, j) += vv.at(0, j);
  const int im = m.id, iv = vvar.id;
  return make(std::move(out), req(m) || req(vvar), [im, iv, R, C](Graph& g, const Tensor& go) {
    g.accum(im, go);
    if (g.nodes_[static_cast<size_t>(iv)].requires_grad) {
      Tensor dv = Tensor::zeros({1, C});
      for (long i = 0; i < R; ++i)
        for (long j = 0; j < C; ++j) dv.at(0, j) += go.at(i, j);
      g.accum(iv, dv);
    }
  });
}

Var Graph::relu(Var a) {
  Tensor out = v(a.id);
  double* dst = out.data();
  for (long i = 0; i < out.numel(); ++i) dst[i] = dst[i] > 0.0 ? dst[i] : 0.0;
  const int ia = a.id;
  return make(std::move(out), req(a), [ia](Graph& g, const Tensor& go) {
    const Tensor& x = g.v(ia);
    Tensor dx = go;
    double* d = dx.data();
    const double* xv = x.data();
    for (long i = 0; i < dx.numel(); ++i)
      if (xv[i] <= 0.0) d[i] = 0.0;
    g.accum(ia, dx);
  });
}

Var Graph::gelu(Var a) {
  Tensor out = v(a.id);
  double* dst = out.data();
  for (long i = 0; i < out.numel(); ++i) {
    const double x = dst[i];
    dst[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  const int ia = a.id;
  return make(std::move(out), req(a), [ia](Graph& g, const Tensor& go) {
    const Tensor& x = g.v(ia);
    Tensor dx = go;
    double* d = dx.data();
    const double* xv = x.data();
    for (long i = 0; i < dx.numel(); ++i) {
      const double xi = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(xi * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xi * xi);
      d[i] *= cdf + xi * pdf;
    }
    g.accum(ia, dx);
  });
}

Var Graph::sigmoid(Var a) {
  Tensor out = v(a.id);
  double* dst = out.data();
  for (long i = 0; i < out.numel(); ++i) dst[i] = 1.0 / (1.0 + std::exp(-dst[i]));
  const int ia = a.id;
  Tensor saved = out;
  return make(std::move(out), req(a), [ia, saved](Graph& g, const Tensor& go) {
    Tensor dx = go;
    double* d = dx.data();
    const double* y = saved.data();
    for (long i = 0; i < dx.numel(); ++i) d[i] *= y[i] * (1.0 - y[i]);
    g.accum(ia, dx);
  });
}

Var Graph::matmul(Var a, Var b) {
  const Tensor& av = v(a.id);
  const Tensor& bv = v(b.id);
  if (av.ndim() != 2 || bv.ndim() != 2 || av.cols() != bv.rows()) shape_error("matmul", av, bv);
  Tensor out({av.rows(), bv.cols()});
  mat(out).noalias() = mat(av) * mat(bv);
  const int ia = a.id, ib = b.id;
  return make(std::move(out), req(a) || req(b), [ia, ib](Graph& g, const Tensor& go) {
    const Tensor& av2 = g.v(ia);
    const Tensor& bv2 = g.v(ib);
    if (g.nodes_[static_cast<size_t>(ia)].requires_grad) {
      Tensor da({av2.rows(), av2.cols()});
      mat(da).noalias() = mat(go) * mat(bv2).transpose();
      g.accum(ia, da);
    }
    if (g.nodes_[static_cast<size_t>(ib)].requires_grad) {
      Tensor db({bv2.rows(), bv2.cols()});
      mat(db).noalias() = mat(av2).transpose() * mat(go);
      g.accum(ib, db);
    }
  });
}

Var Graph::matmul_nt(Var a, Var b) {
  const Tensor& av = v(a.id);
  const Tensor& bv = v(b.id);
  if (av.ndim() != 2 || bv.ndim() != 2 || av.cols() != bv.cols()) shape_error("matmul_nt", av, bv);
  Tensor out({av.rows(), bv.rows()});
  mat(out).noalias() = mat(av) * mat(bv).transpose();
  const int ia = a.id, ib = b.id;
  return make(std::move(out), req(a) || req(b), [ia, ib](Graph& g, const Tensor& go) {
    const Tensor& av2 = g.v(ia);
    const Tensor& bv2 = g.v(ib);
    if (g.nodes_[static_cast<size_t>(ia)].requires_grad) {
      Tensor da({av2.rows(), av2.cols()});
      mat(da).noalias() = mat(go) * mat(bv2);
      g.accum(ia, da);
    }
    if (g.nodes_[static_cast<size_t>(ib)].requires_grad) {
      Tensor db({bv2.rows(), bv2.cols()});
      mat(db).noalias() = mat(go).transpose() * mat(av2);
      g.accum(ib, db);
    }
  });
}

Var Graph::reshape(Var a, std::vector<long> shape) {
  const Tensor& av = v(a.id);
  if (Tensor::count(shape) != av.numel()) shape_error("reshape", av);
  Tensor out = Tensor::from(shape, av.vec());
  const int ia = a.id;
  std::vector<long> in_shape = av.shape();
  return make(std::move(out), req(a), [ia, in_shape](Graph& g, const Tensor& go) {
    g.accum(ia, Tensor::from(in_shape, go.vec()));
  });
}

Var Graph::gather_rows(Var m, std::vector<long> idx) {
  const Tensor& mv = v(m.id);
  if (mv.ndim() != 2) shape_error("gather_rows", mv);
  const long C = mv.cols();
  Tensor out({static_cast<long>(idx.size()), C});
  for (size_t i = 0; i < idx.size(); ++i) {
    const long r = idx[i];
    if (r < 0 || r >= mv.rows())
      throw std::out_of_range("graph: gather_rows: index " + std::to_string(r));
    for (long j = 0; j < C; ++j) out.at(static_cast<long>(i), j) = mv.at(r, j);
  }
  const int im = m.id;
  std::vector<long> in_shape = mv.shape();
  return make(std::move(out), req(m), [im, idx, in_shape](Graph& g, const Tensor& go) {
    Tensor dm = Tensor::zeros(in_shape);
    const long C2 = in_shape[1];
    for (size_t i = 0; i < idx.size(); ++i)
      for (long j = 0; j < C2; ++j) dm.at(idx[i], j) += go.at(static_cast<long>(i), j);
    g.accum(im, dm);
  });
}

Var Graph::concat_cols(Var a, Var b) {
  const Tensor& av = v(a.id);
  const Tensor& bv = v(b.id);
  if (av.ndim() != 2 || bv.ndim() != 2 || av.rows() != bv.rows()) shape_error("concat_cols", av, bv);
  const long R = av.rows(), Ca = av.cols(), Cb = bv.cols();
  Tensor out({R, Ca + Cb});
  for (long i = 0; i < R; ++i) {
    for (long j = 0; j < Ca; ++j) out.at(i, j) = av.at(i, j);
    for (long j = 0; j < Cb; ++j) out.at(i, Ca + j) = bv.at(i, j);
  }
  const int ia = a.id, ib = b.id;
  return make(std::move(out), req(a) || req(b), [ia, ib, R, Ca, Cb](Graph& g, const Tensor& go) {
    if (g.nodes_[static_cast<size_t>(ia)].requires_grad) {
      Tensor da({R, Ca});
      for (long i = 0; i < R; ++i)
        for (long j = 0; j < Ca; ++j) da.at(i, j) = go.at(i, j);
      g.accum(ia, da);
    }
    if (g.nodes_[static_cast<size_t>(ib)].requires_grad) {
      Tensor db({R, Cb});
      for (long i = 0; i < R; ++i)
        for (long j = 0; j < Cb; ++j) db.at(i, j) = go.at(i, Ca + j);
      g.accum(ib, db);
    }
  });
}

Var Graph::slice_cols(Var a, long c0, long c1) {
  const Tensor& av = v(a.id);
  if (av.ndim() != 2 || c0 < 0 || c1 > av.cols() || c0 >= c1) shape_error("slice_cols", av);
  const long R = av.rows();
  Tensor out({R, c1 - c0});
  for (long i = 0; i < R; ++i)
    for (long j = c0; j < c1; ++j) out.at(i, j - c0) = av.at(i, j);
  const int ia = a.id;
  std::vector<long> in_shape = av.shape();
  return make(std::move(out), req(a), [ia, c0, c1, in_shape](Graph& g, const Tensor& go) {
    Tensor da = Tensor::zeros(in_shape);
    for (long i = 0; i < in_shape[0]; ++i)
      for (long j = c0; j < c1; ++j) da.at(i, j) = go.at(i, j - c0);
    g.accum(ia, da);
  });
}

Var Graph::stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw std::invalid_argument("graph: stack_rows: empty input");
  const long C = v(rows[0].id).cols();
  bool needs = false;
  for (Var r : rows) {
    const Tensor& t = v(r.id);
    if (t.ndim() != 2 || t.rows() != 1 || t.cols() != C) shape_error("stack_rows", t);
    needs = needs || req(r);
  }
  Tensor out({static_cast<long>(rows.size()), C});
  for (size_t i = 0; i < rows.size(); ++i) {
    const Tensor& t = v(rows[i].id);
    for (long j = 0; j < C; ++j) out.at(static_cast<long>(i), j) = t.at(0, j);
  }
  std::vector<int> ids;
  ids.reserve(rows.size());
  for (Var r : rows) ids.push_back(r.id);
  return make(std::move(out), needs, [ids, C](Graph& g, const Tensor& go) {
    for (size_t i = 0; i < ids.size(); ++i) {
      if (!g.nodes_[static_cast<size_t>(ids[i])].requires_grad) continue;
      Tensor dr({1, C});
      for (long j = 0; j < C; ++j) dr.at(0, j) = go.at(static_cast<long>(i), j);
      g.accum(ids[i], dr);
    }
  });
}

Var Graph::mean_rows(Var a) {
  const Tensor& av = v(a.id);
  if (av.ndim() != 2 || av.rows() < 1) shape_error("mean_rows", av);
  const long R = av.rows(), C = av.cols();
  Tensor out({1, C});
  for (long i = 0; i < R; ++i)
    for (long j = 0; j < C; ++j) out.at(0, j) += av.at(i, j);
  for (long j = 0; j < C; ++j) out.at(0, j) /= static_cast<double>(R);
  const int ia = a.id;
  return make(std::move(out), req(a), [ia, R, C](Graph& g, const Tensor& go) {
    Tensor da({R, C});
    const double inv = 1.0 / static_cast<double>(R);
    for (long i = 0; i < R; ++i)
      for (long j = 0; j < C; ++j) da.at(i, j) = go.at(0, j) * inv;
    g.accum(ia, da);
  });
}

Var Graph::softmax_rows(Var a) {
  const Tensor& av = v(a.id);
  if (av.ndim() != 2) shape_error("softmax_rows", av);
  const long R = av.rows(), C = av.cols();
  Tensor out = av;
  for (long i = 0; i < R; ++i) {
    double m = out.at(i, 0);
    for (long j = 1; j < C; ++j) m = std::max(m, out.at(i, j));
    double z = 0.0;
    for (long j = 0; j < C; ++j) {
      const double e = std::exp(out.at(i, j) - m);
      out.at(i, j) = e;
      z += e;
    }
    for (long j = 0; j < C; ++j) out.at(i, j) /= z;
  }
  const int ia = a.id;
  Tensor saved = out;
  return make(std::move(out), req(a), [ia, saved, R, C](Graph& g, const Tensor& go) {
    Tensor dx({R, C});
    for (long i = 0; i < R; ++i) {
      double dot = 0.0;
      for (long j = 0; j < C; ++j) dot += go.at(i, j) * saved.at(i, j);
      for (long j = 0; j < C; ++j) dx.at(i, j) = saved.at(i, j) * (go.at(i, j) - dot);
    }
    g.accum(ia, dx);
  });
}

Var Graph::layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = v(x.id);
  const Tensor& gv = v(gamma.id);
  const Tensor& bv = v(beta.id);
  if (xv.ndim() != 2) shape_error("layer_norm_rows", xv);
  const long R = xv.rows(), C = xv.cols();
  if (gv.ndim() != 2 || gv.rows() != 1 || gv.cols() != C) shape_error("layer_norm_rows", xv, gv);
  if (!gv.same_shape(bv)) shape_error("layer_norm_rows", gv, bv);
  Tensor out({R, C});
  Tensor xhat({R, C});
  Tensor inv_std({R, 1});
  for (long i = 0; i < R; ++i) {
    double mean = 0.0;
    for (long j = 0; j < C; ++j) mean += xv.at(i, j);
    mean /= static_cast<double>(C);
    double var = 0.0;
    for (long j = 0; j < C; ++j) {
      const double d = xv.at(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(C);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std.at(i, 0) = is;
    for (long j = 0; j < C; ++j) {
      const double h = (xv.at(i, j) - mean) * is;
      xhat.at(i, j) = h;
      out.at(i, j) = gv.at(0, j) * h + bv.at(0, j);
    }
  }
  const int ix = x.id, ig = gamma.id, ib = beta.id;
  return make(std::move(out), req(x) || req(gamma) || req(beta),
              [ix, ig, ib, xhat, inv_std, R, C](Graph& g, const Tensor& go) {
    const Tensor& gv2 = g.v(ig);
    if (g.nodes_[static_cast<size_t>(ig)].requires_grad) {
      Tensor dg = Tensor::zeros({1, C});
      for (long i = 0; i < R; ++i)
        for (long j = 0; j < C; ++j) dg.at(0, j) += go.at(i, j) * xhat.at(i, j);
      g.accum(ig, dg);
    }
    if (g.nodes_[static_cast<size_t>(ib)].requires_grad) {
      Tensor db = Tensor::zeros({1, C});
      for (long i = 0; i < R; ++i)
        for (long j = 0; j < C; ++j) db.at(0, j) += go.at(i, j);
      g.accum(ib, db);
    }
    if (g.nodes_[static_cast<size_t>(ix)].requires_grad) {
      Tensor dx({R, C});
      for (long i = 0; i < R; ++i) {
        double m1 = 0.0, m2 = 0.0;
        for (long j = 0; j < C; ++j) {
          const double dh = go.at(i, j) * gv2.at(0, j);
          m1 += dh;
          m2 += dh * xhat.at(i, j);
        }
        m1 /= static_cast<double>(C);
        m2 /= static_cast<double>(C);
        for (long j = 0; j < C; ++j) {
          const double dh = go.at(i, j) * gv2.at(0, j);
          dx.at(i, j) = inv_std.at(i, 0) * (dh - m1 - xhat.at(i, j) * m2);
        }
      }
      g.accum(ix, dx);
    }
  });
}

namespace {

// im2col over a {C,H,W} plane stack: output rows index output pixels
// (row-major over Ho x Wo), columns index (c, ky, kx).
Tensor im2col(const Tensor& x, long k, long stride, long pad, long Ho, long Wo) {
  const long C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
  Tensor cols({Ho * Wo, C * k * k});
  const double* xd = x.data();
  double* cd = cols.data();
  const long row_len = C * k * k;
  for (long oy = 0; oy < Ho; ++oy) {
    for (long ox = 0; ox < Wo; ++ox) {
      double* row = cd + (oy * Wo + ox) * row_len;
      long col = 0;
      for (long c = 0; c < C; ++c) {
        const double* plane = xd + c * H * W;
        for (long ky = 0; ky < k; ++ky) {
          const long iy = oy * stride - pad + ky;
          for (long kx = 0; kx < k; ++kx, ++col) {
            const long ix = ox * stride - pad + kx;
            row[col] = (iy >= 0 && iy < H && ix >= 0 && ix < W) ? plane[iy * W + ix] : 0.0;
          }
        }
      }
    }
  }
  return cols;
}

void col2im_accum(const Tensor& dcols, long C, long H, long W, long k, long stride, long pad,
                  long Ho, long Wo, Tensor& dx) {
  const double* cd = dcols.data();
  double* xd = dx.data();
  const long row_len = C * k * k;
  for (long oy = 0; oy < Ho; ++oy) {
    for (long ox = 0; ox < Wo; ++ox) {
      const double* row = cd + (oy * Wo + ox) * row_len;
      long col = 0;
      for (long c = 0; c < C; ++c) {
        double* plane = xd + c * H * W;
        for (long ky = 0; ky < k; ++ky) {
          const long iy = oy * stride - pad + ky;
          for (long kx = 0; kx < k; ++kx, ++col) {
            const long ix = ox * stride - pad + kx;
            if (iy >= 0 && iy < H && ix >= 0 && ix < W) plane[iy * W + ix] += row[col];
          }
        }
      }
    }
  }
}

}  // namespace

Var Graph::conv2d(Var x, Var w, Var b, long kernel, long stride, long pad) {
  const Tensor& xv = v(x.id);
  const Tensor& wv = v(w.id);
  const Tensor& bv = v(b.id);
  if (xv.ndim() != 3) shape_error("conv2d", xv);
  const long C = xv.shape()[0], H = xv.shape()[1], W = xv.shape()[2];
  if (wv.ndim() != 2 || wv.cols() != C * kernel * kernel) shape_error("conv2d", xv, wv);
  const long Cout = wv.rows();
  if (bv.ndim() != 2 || bv.rows() != 1 || bv.cols() != Cout) shape_error("conv2d", wv, bv);
  const long Ho = (H + 2 * pad - kernel) / stride + 1;
  const long Wo = (W + 2 * pad - kernel) / stride + 1;
  if (Ho < 1 || Wo < 1) shape_error("conv2d", xv);

  Tensor cols = im2col(xv, kernel, stride, pad, Ho, Wo);
  Tensor out2d({Ho * Wo, Cout});
  mat(out2d).noalias() = mat(cols) * mat(wv).transpose();
  for (long r = 0; r < Ho * Wo; ++r)
    for (long c = 0; c < Cout; ++c) out2d.at(r, c) += bv.at(0, c);

  Tensor out({Cout, Ho, Wo});
  double* od = out.data();
  for (long c = 0; c < Cout; ++c)
    for (long r = 0; r < Ho * Wo; ++r) od[c * Ho * Wo + r] = out2d.at(r, c);

  const int ix = x.id, iw = w.id, ib2 = b.id;
  return make(std::move(out), req(x) || req(w) || req(b),
              [ix, iw, ib2, cols, C, H, W, kernel, stride, pad, Ho, Wo, Cout](Graph& g,
                                                                              const Tensor& go) {
    Tensor dout2d({Ho * Wo, Cout});
    const double* gd = go.data();
    for (long c = 0; c < Cout; ++c)
      for (long r = 0; r < Ho * Wo; ++r) dout2d.at(r, c) = gd[c * Ho * Wo + r];

    if (g.nodes_[static_cast<size_t>(iw)].requires_grad) {
      Tensor dw({Cout, C * kernel * kernel});
      mat(dw).noalias() = mat(dout2d).transpose() * mat(cols);
      g.accum(iw, dw);
    }
    if (g.nodes_[static_cast<size_t>(ib2)].requires_grad) {
      Tensor db = Tensor::zeros({1, Cout});
      for (long r = 0; r < Ho * Wo; ++r)
        for (long c = 0; c < Cout; ++c) db.at(0, c) += dout2d.at(r, c);
      g.accum(ib2, db);
    }
    if (g.nodes_[static_cast<size_t>(ix)].requires_grad) {
      const Tensor& wv2 = g.v(iw);
      Tensor dcols({Ho * Wo, C * kernel * kernel});
      mat(dcols).noalias() = mat(dout2d) * mat(wv2);
      Tensor dx = Tensor::zeros({C, H, W});
      col2im_accum(dcols, C, H, W, kernel, stride, pad, Ho, Wo, dx);
      g.accum(ix, dx);
    }
  });
}

Var Graph::avg_pool2d(Var x, long k) {
  const Tensor& xv = v(x.id);
  if (xv.ndim() != 3) shape_error("avg_pool2d", xv);
  const long C = xv.shape()[0], H = xv.shape()[1], W = xv.shape()[2];
  if (H % k != 0 || W % k != 0)
    throw std::invalid_argument("graph: avg_pool2d: size not divisible by " + std::to_string(k));
  const long Ho = H / k, Wo = W / k;
  Tensor out({C, Ho, Wo});
  const double* xd = xv.data();
  double* od = out.data();
  const double inv = 1.0 / static_cast<double>(k * k);
  for (long c = 0; c < C; ++c)
    for (long oy = 0; oy < Ho; ++oy)
      for (long ox = 0; ox < Wo; ++ox) {
        double s = 0.0;
        for (long dy = 0; dy < k; ++dy)
          for (long dx = 0; dx < k; ++dx) s += xd[c * H * W + (oy * k + dy) * W + ox * k + dx];
        od[c * Ho * Wo + oy * Wo + ox] = s * inv;
      }
  const int ix = x.id;
  return make(std::move(out), req(x), [ix, C, H, W, k, Ho, Wo, inv](Graph& g, const Tensor& go) {
    Tensor dx = Tensor::zeros({C, H, W});
    const double* gd = go.data();
    double* dd = dx.data();
    for (long c = 0; c < C; ++c)
      for (long oy = 0; oy < Ho; ++oy)
        for (long ox = 0; ox < Wo; ++ox) {
          const double gval = gd[c * Ho * Wo + oy * Wo + ox] * inv;
          for (long dy = 0; dy < k; ++dy)
            for (long dx2 = 0; dx2 < k; ++dx2)
              dd[c * H * W + (oy * k + dy) * W + ox * k + dx2] += gval;
        }
    g.accum(ix, dx);
  });
}

Var Graph::global_avg_pool(Var x) {
  const Tensor& xv = v(x.id);
  if (xv.ndim() != 3) shape_error("global_avg_pool", xv);
  const long C = xv.shape()[0], H = xv.shape()[1], W = xv.shape()[2];
  Tensor out({1, C});
  const double* xd = xv.data();
  const double inv = 1.0 / static_cast<double>(H * W);
  for (long c = 0; c < C; ++c) {
    double s = 0.0;
    for (long i = 0; i < H * W; ++i) s += xd[c * H * W + i];
    out.at(0, c) = s * inv;
  }
  const int ix = x.id;
  return make(std::move(out), req(x), [ix, C, H, W, inv](Graph& g, const Tensor& go) {
    Tensor dx({C, H, W});
    double* dd = dx.data();
    for (long c = 0; c < C; ++c) {
      const double gval = go.at(0, c) * inv;
      for (long i = 0; i < H * W; ++i) dd[c * H * W + i] = gval;
    }
    g.accum(ix, dx);
  });
}

Var Graph::cross_entropy(Var logits, long target) {
  const Tensor& lv = v(logits.id);
  if (lv.ndim() != 2 || lv.rows() != 1) shape_error("cross_entropy", lv);
  const long K = lv.cols();
  if (target < 0 || target >= K)
    throw std::out_of_range("graph: cross_entropy: target " + std::to_string(target));
  double m = lv.at(0, 0);
  for (long j = 1; j < K; ++j) m = std::max(m, lv.at(0, j));
  double z = 0.0;
  Tensor p({1, K});
  for (long j = 0; j < K; ++j) {
    const double e = std::exp(lv.at(0, j) - m);
    p.at(0, j) = e;
    z += e;
  }
  for (long j = 0; j < K; ++j) p.at(0, j) /= z;
  Tensor out = Tensor::scalar(m + std::log(z) - lv.at(0, target));
  const int il = logits.id;
  return make(std::move(out), req(logits), [il, p, target, K](Graph& g, const Tensor& go) {
    const double s = go[0];
    Tensor dl({1, K});
    for (long j = 0; j < K; ++j) dl.at(0, j) = s * (p.at(0, j) - (j == target ? 1.0 : 0.0));
    g.accum(il, dl);
  });
}

Var Graph::bce_with_logits(Var logit, double target) {
  const Tensor& lv = v(logit.id);
  if (lv.numel() != 1) shape_error("bce_with_logits", lv);
  const double x = lv[0];
  const double loss = std::max(x, 0.0) - x * target + std::log1p(std::exp(-std::abs(x)));
  const int il = logit.id;
  return make(Tensor::scalar(loss), req(logit), [il, x, target](Graph& g, const Tensor& go) {
    const double sig = 1.0 / (1.0 + std::exp(-x));
    Tensor dl = Tensor::scalar(go[0] * (sig - target));
    g.accum(il, dl);
  });
}

}  // namespace dsc
