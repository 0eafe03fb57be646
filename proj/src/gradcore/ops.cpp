#include "tsasr/gradcore/ops.hpp"

#include "tsasr/errors.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace tsasr {

namespace {

template <typename Scalar>
Graph<Scalar>& graph_of(Var<Scalar> a, Var<Scalar> b, const char* op) {
  if (a.graph == nullptr || a.graph != b.graph) throw ContractError(std::string(op) + ": operands from different graphs");
  return *a.graph;
}

[[noreturn]] void shape_fail(const char* op, Shape a, Shape b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
}

}  // namespace

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  auto& g = graph_of(a, b, "matmul");
  if (a.cols() != b.rows()) shape_fail("matmul", a.shape(), b.shape());
  Matrix<Scalar> out = a.value() * b.value();
  return g.emit("matmul", std::move(out), {a, b}, [ia = a.id, ib = b.id](Graph<Scalar>& g, const Matrix<Scalar>& d) {
    if (g.requires_grad(ia)) g.grad(ia).noalias() += d * g.value(ib).transpose();
    if (g.requires_grad(ib)) g.grad(ib).noalias() += g.value(ia).transpose() * d;
  });
}

template <typename Scalar>
Var<Scalar> matmul_nt(Var<Scalar> a, Var<Scalar> b) {
  auto& g = graph_of(a, b, "matmul_nt");
  if (a.cols() != b.cols()) shape_fail("matmul_nt", a.shape(), b.shape());
  Matrix<Scalar> out = a.value() * b.value().transpose();
  return g.emit("matmul_nt", std::move(out), {a, b},
                [ia = a.id, ib = b.id](Graph<Scalar>& g, const Matrix<Scalar>& d) {
                  if (g.requires_grad(ia)) g.grad(ia).noalias() += d * g.value(ib);
                  if (g.requires_grad(ib)) g.grad(ib).noalias() += d.transpose() * g.value(ia);
                });
}

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  auto& g = graph_of(a, b, "add");
  if (a.shape() != b.shape()) shape_fail("add", a.shape(), b.shape());
  Matrix<Scalar> out = a.value() + b.value();
  return g.emit("add", std::move(out), {a, b}, [ia = a.id, ib = b.id](Graph<Scalar>& g, const Matrix<Scalar>& d) {
    if (g.requires_grad(ia)) g.grad(ia) += d;
    if (g.requires_grad(ib)) g.grad(ib) += d;
  });
}

template <typename Scalar>
Var<Scalar> add_row(Var<Scalar> a, Var<Scalar> row) {
  auto& g = graph_of(a, row, "add_row");
  if (row.rows() != 1 || row.cols() != a.cols()) shape_fail("add_row", a.shape(), row.shape());
  Matrix<Scalar> out = a.value().rowwise() + row.value().row(0);
  return g.emit("add_row", std::move(out), {a, row},
                [ia = a.id, ir = row.id](Graph<Scalar>& g, const Matrix<Scalar>& d) {
                  if (g.requires_grad(ia)) g.grad(ia) += d;
                  if (g.requires_grad(ir)) g.grad(ir) += d.colwise().sum();
                });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar factor) {
  Matrix<Scalar> out = a.value() * factor;
  return a.graph->emit("scale", std::move(out), {a}, [ia = a.id, factor](Graph<Scalar>& g, const Matrix<Scalar>& d) {
    g.grad(ia) += d * factor;
  });
}

template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
  auto& g = graph_of(a, b, "mul");
  if (a.shape() != b.shape()) shape_fail("mul", a.shape(), b.shape());
  Matrix<Scalar> out = a.value().cwiseProduct(b.value());
  return g.emit("mul", std::move(out), {a, b}, [ia = a.id, ib = b.id](Graph<Scalar>& g, const Matrix<Scalar>& d) {
    if (g.requires_grad(ia)) g.grad(ia) += d.cwiseProduct(g.value(ib));
    if (g.requires_grad(ib)) g.grad(ib) += d.cwiseProduct(g.value(ia));
  });
}

template <typename Scalar>
Var<Scalar> sum(Var<Scalar> a) {
  Matrix<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  return a.graph->emit("sum", std::move(out), {a}, [ia = a.id](Graph<Scalar>& g, const Matrix<Scalar>& d) {
    g.grad(ia).array() += d(0, 0);
  });
}

template <typename Scalar>
Var<Scalar> gelu(Var<Scalar> a) {
  const Scalar c = static_cast<Scalar>(kSqrtTwoOverPi);
  const Scalar k = static_cast<Scalar>(kGeluCoeff);
  const auto& x = a.value();
  Matrix<Scalar> t = (c * (x.array() + k * x.array().cube())).tanh().matrix();
  Matrix<Scalar> out = (Scalar(0.5) * x.array() * (Scalar(1) + t.array())).matrix();
  return a.graph->emit("gelu", std::move(out), {a},
                       [ia = a.id, t = std::move(t), c, k](Graph<Scalar>& g, const Matrix<Scalar>& d) {
                         const auto x = g.value(ia).array();
                         auto dydx = Scalar(0.5) * (Scalar(1) + t.array()) +
                                     Scalar(0.5) * x * (Scalar(1) - t.array().square()) * c *
                                         (Scalar(1) + Scalar(3) * k * x.square());
                         g.grad(ia).array() += d.array() * dydx;
                       });
}

template <typename Scalar>
Var<Scalar> layer_norm(Var<Scalar> x, Var<Scalar> gain, Var<Scalar> bias, Scalar eps) {
  auto& g = graph_of(x, gain, "layer_norm");
  const Index n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n) shape_fail("layer_norm", x.shape(), gain.shape());
  if (bias.rows() != 1 || bias.cols() != n) shape_fail("layer_norm", x.shape(), bias.shape());
  const auto& xv = x.value();
  Matrix<Scalar> xhat(xv.rows(), n);
  RowVector<Scalar> inv_std(xv.rows());
  for (Index r = 0; r < xv.rows(); ++r) {
    const Scalar mean = xv.row(r).mean();
    const Scalar var = (xv.row(r).array() - mean).square().mean();
    inv_std(r) = Scalar(1) / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mean) * inv_std(r);
  }
  Matrix<Scalar> out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  return g.emit("layer_norm", std::move(out), {x, gain, bias},
                [ix = x.id, ig = gain.id, ib = bias.id, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                    Graph<Scalar>& g, const Matrix<Scalar>& d) {
                  if (g.requires_grad(ig)) g.grad(ig) += d.cwiseProduct(xhat).colwise().sum();
                  if (g.requires_grad(ib)) g.grad(ib) += d.colwise().sum();
                  if (g.requires_grad(ix)) {
                    const auto& gv = g.value(ig);
                    auto& gx = g.grad(ix);
                    for (Index r = 0; r < d.rows(); ++r) {
                      RowVector<Scalar> dxhat = d.row(r).cwiseProduct(gv.row(0));
                      const Scalar m1 = dxhat.mean();
                      const Scalar m2 = dxhat.cwiseProduct(xhat.row(r)).mean();
                      gx.row(r).array() += inv_std(r) * (dxhat.array() - m1 - xhat.row(r).array() * m2);
                    }
                  }
                });
}

template <typename Scalar>
Var<Scalar> softmax_cross_entropy(Var<Scalar> logits, std::span<const int> targets, Scalar scale) {
  const auto& z = logits.value();
  if (static_cast<Index>(targets.size()) != z.rows())
    throw ShapeError("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(z.rows()) + " rows");
  Matrix<Scalar> probs(z.rows(), z.cols());
  Scalar total = 0;
  std::vector<int> tgt(targets.begin(), targets.end());
  for (Index r = 0; r < z.rows(); ++r) {
    const int t = tgt[static_cast<std::size_t>(r)];
    if (t < 0) continue;
    if (t >= z.cols()) throw ContractError("softmax_cross_entropy: target id " + std::to_string(t) + " out of range");
    const Scalar mx = z.row(r).maxCoeff();
    probs.row(r) = (z.row(r).array() - mx).exp();
    const Scalar s = probs.row(r).sum();
    probs.row(r) /= s;
    total += (mx + std::log(s)) - z(r, t);
  }
  Matrix<Scalar> out(1, 1);
  out(0, 0) = scale * total;
  return logits.graph->emit(
      "softmax_cross_entropy", std::move(out), {logits},
      [il = logits.id, probs = std::move(probs), tgt = std::move(tgt), scale](Graph<Scalar>& g,
                                                                             const Matrix<Scalar>& d) {
        auto& gz = g.grad(il);
        const Scalar f = scale * d(0, 0);
        for (Index r = 0; r < probs.rows(); ++r) {
          const int t = tgt[static_cast<std::size_t>(r)];
          if (t < 0) continue;
          gz.row(r) += f * probs.row(r);
          gz(r, t) -= f;
        }
      });
}

template <typename Scalar>
Var<Scalar> conv1d(Var<Scalar> x, Var<Scalar> weight, Var<Scalar> bias, int kernel, int stride, int pad) {
  auto& g = graph_of(x, weight, "conv1d");
  if (kernel <= 0 || stride <= 0 || pad < 0) throw ContractError("conv1d: invalid kernel/stride/pad");
  const Index cin = x.cols();
  const Index cout = weight.cols();
  if (weight.rows() != kernel * cin) shape_fail("conv1d", x.shape(), weight.shape());
  if (bias.rows() != 1 || bias.cols() != cout) shape_fail("conv1d", weight.shape(), bias.shape());
  const Index t_in = x.rows();
  const Index span = t_in + 2 * pad - kernel;
  if (span < 0) throw ShapeError("conv1d: input of " + std::to_string(t_in) + " rows is shorter than the kernel");
  const Index t_out = span / stride + 1;
  const auto& xv = x.value();
  Matrix<Scalar> cols = Matrix<Scalar>::Zero(t_out, kernel * cin);
  for (Index t = 0; t < t_out; ++t)
    for (int tap = 0; tap < kernel; ++tap) {
      const Index src = t * stride + tap - pad;
      if (src >= 0 && src < t_in) cols.block(t, tap * cin, 1, cin) = xv.row(src);
    }
  Matrix<Scalar> out = cols * weight.value();
  out.rowwise() += bias.value().row(0);
  return g.emit("conv1d", std::move(out), {x, weight, bias},
                [ix = x.id, iw = weight.id, ib = bias.id, cols = std::move(cols), kernel, stride, pad, cin,
                 t_in](Graph<Scalar>& g, const Matrix<Scalar>& d) {
                  if (g.requires_grad(iw)) g.grad(iw).noalias() += cols.transpose() * d;
                  if (g.requires_grad(ib)) g.grad(ib) += d.colwise().sum();
                  if (g.requires_grad(ix)) {
                    Matrix<Scalar> dcols = d * g.value(iw).transpose();
                    auto& gx = g.grad(ix);
                    for (Index t = 0; t < dcols.rows(); ++t)
                      for (int tap = 0; tap < kernel; ++tap) {
                        const Index src = t * stride + tap - pad;
                        if (src >= 0 && src < t_in) gx.row(src) += dcols.block(t, tap * cin, 1, cin);
                      }
                  }
                });
}

template <typename Scalar>
Var<Scalar> embedding(Var<Scalar> table, std::span<const int> ids) {
  const auto& tv = table.value();
  Matrix<Scalar> out(static_cast<Index>(ids.size()), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tv.rows())
      throw ContractError("embedding: id " + std::to_string(ids[i]) + " outside table of " +
                          std::to_string(tv.rows()) + " rows");
    out.row(static_cast<Index>(i)) = tv.row(ids[i]);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return table.graph->emit("embedding", std::move(out), {table},
                           [it = table.id, idv = std::move(idv)](Graph<Scalar>& g, const Matrix<Scalar>& d) {
                             auto& gt = g.grad(it);
                             for (std::size_t i = 0; i < idv.size(); ++i) gt.row(idv[i]) += d.row(static_cast<Index>(i));
                           });
}

template <typename Scalar>
Var<Scalar> concat_rows(std::span<const Var<Scalar>> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no operands");
  Graph<Scalar>& g = *parts[0].graph;
  const Index c = parts[0].cols();
  Index total = 0;
  for (const auto& p : parts) {
    if (p.graph != &g) throw ContractError("concat_rows: operands from different graphs");
    if (p.cols() != c) shape_fail("concat_rows", parts[0].shape(), p.shape());
    total += p.rows();
  }
  Matrix<Scalar> out(total, c);
  std::vector<std::pair<std::size_t, Index>> spans;  // (node id, first row)
  Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    spans.emplace_back(p.id, at);
    at += p.rows();
  }
  std::vector<Var<Scalar>> parents(parts.begin(), parts.end());
  return g.emit("concat_rows", std::move(out), parents,
                [spans = std::move(spans)](Graph<Scalar>& g, const Matrix<Scalar>& d) {
                  for (const auto& [id, first] : spans) {
                    if (!g.requires_grad(id)) continue;
                    const Index n = g.value(id).rows();
                    if (n > 0) g.grad(id) += d.middleRows(first, n);
                  }
                });
}

template <typename Scalar>
Var<Scalar> replace_rows(Var<Scalar> m, Index start, Var<Scalar> fresh) {
  auto& g = graph_of(m, fresh, "replace_rows");
  if (fresh.cols() != m.cols()) shape_fail("replace_rows", m.shape(), fresh.shape());
  const Index k = fresh.rows();
  if (start < 0 || start + k > m.rows())
    throw ShapeError("replace_rows: window [" + std::to_string(start) + ", " + std::to_string(start + k) +
                     ") exceeds " + std::to_string(m.rows()) + " rows");
  Matrix<Scalar> out = m.value();
  if (k > 0) out.middleRows(start, k) = fresh.value();
  return g.emit("replace_rows", std::move(out), {m, fresh},
                [im = m.id, ifr = fresh.id, start, k](Graph<Scalar>& g, const Matrix<Scalar>& d) {
                  if (g.requires_grad(im)) {
                    auto& gm = g.grad(im);
                    gm.topRows(start) += d.topRows(start);
                    const Index tail = d.rows() - start - k;
                    gm.bottomRows(tail) += d.bottomRows(tail);
                  }
                  if (g.requires_grad(ifr) && k > 0) g.grad(ifr) += d.middleRows(start, k);
                });
}

template <typename Scalar>
Var<Scalar> slice_rows(Var<Scalar> m, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > m.rows())
    throw ShapeError("slice_rows: window [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") exceeds " + std::to_string(m.rows()) + " rows");
  Matrix<Scalar> out = m.value().middleRows(start, count);
  return m.graph->emit("slice_rows", std::move(out), {m},
                       [im = m.id, start, count](Graph<Scalar>& g, const Matrix<Scalar>& d) {
                         if (count > 0) g.grad(im).middleRows(start, count) += d;
                       });
}

template <typename Scalar>
Var<Scalar> attention(Var<Scalar> q, Var<Scalar> k, Var<Scalar> v, int heads, bool causal) {
  auto& g = graph_of(q, k, "attention");
  graph_of(k, v, "attention");
  const Index d = q.cols();
  if (heads <= 0 || d % heads != 0) throw ShapeError("attention: width " + std::to_string(d) + " not divisible by heads");
  if (k.cols() != d || v.cols() != d) shape_fail("attention", q.shape(), k.shape());
  if (k.rows() != v.rows()) shape_fail("attention", k.shape(), v.shape());
  if (causal && q.rows() != k.rows()) shape_fail("attention(causal)", q.shape(), k.shape());
  const Index n = q.rows();
  const Index m = k.rows();
  const Index dh = d / heads;
  const Scalar inv = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  const auto& qv = q.value();
  const auto& kv = k.value();
  const auto& vv = v.value();
  Matrix<Scalar> out(n, d);
  std::vector<Matrix<Scalar>> probs(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Matrix<Scalar> s = (qv.middleCols(h * dh, dh) * kv.middleCols(h * dh, dh).transpose()) * inv;
    for (Index i = 0; i < n; ++i) {
      const Index visible = causal ? i + 1 : m;
      const Scalar mx = s.row(i).head(visible).maxCoeff();
      s.row(i).head(visible) = (s.row(i).head(visible).array() - mx).exp();
      s.row(i).tail(m - visible).setZero();
      s.row(i) /= s.row(i).sum();
    }
    out.middleCols(h * dh, dh).noalias() = s * vv.middleCols(h * dh, dh);
    probs[static_cast<std::size_t>(h)] = std::move(s);
  }
  return g.emit("attention", std::move(out), {q, k, v},
                [iq = q.id, ik = k.id, iv = v.id, probs = std::move(probs), heads, dh, inv](
                    Graph<Scalar>& g, const Matrix<Scalar>& dout) {
                  const auto& qv = g.value(iq);
                  const auto& kv = g.value(ik);
                  const auto& vv = g.value(iv);
                  const bool need_q = g.requires_grad(iq), need_k = g.requires_grad(ik), need_v = g.requires_grad(iv);
                  for (int h = 0; h < heads; ++h) {
                    const auto& p = probs[static_cast<std::size_t>(h)];
                    const auto dO = dout.middleCols(h * dh, dh);
                    if (need_v) g.grad(iv).middleCols(h * dh, dh).noalias() += p.transpose() * dO;
                    if (!need_q && !need_k) continue;
                    Matrix<Scalar> dp = dO * vv.middleCols(h * dh, dh).transpose();
                    Matrix<Scalar> ds = p.cwiseProduct(dp);
                    const Matrix<Scalar> row_dot = ds.rowwise().sum();
                    ds -= (p.array().colwise() * row_dot.col(0).array()).matrix();
                    ds *= inv;
                    if (need_q) g.grad(iq).middleCols(h * dh, dh).noalias() += ds * kv.middleCols(h * dh, dh);
                    if (need_k) g.grad(ik).middleCols(h * dh, dh).noalias() += ds.transpose() * qv.middleCols(h * dh, dh);
                  }
                });
}

#define TSASR_INSTANTIATE_OPS(S)                                                               \
  template Var<S> matmul(Var<S>, Var<S>);                                                      \
  template Var<S> matmul_nt(Var<S>, Var<S>);                                                   \
  template Var<S> add(Var<S>, Var<S>);                                                         \
  template Var<S> add_row(Var<S>, Var<S>);                                                     \
  template Var<S> scale(Var<S>, S);                                                            \
  template Var<S> mul(Var<S>, Var<S>);                                                         \
  template Var<S> sum(Var<S>);                                                                 \
  template Var<S> gelu(Var<S>);                                                                \
  template Var<S> layer_norm(Var<S>, Var<S>, Var<S>, S);                                       \
  template Var<S> softmax_cross_entropy(Var<S>, std::span<const int>, S);                      \
  template Var<S> conv1d(Var<S>, Var<S>, Var<S>, int, int, int);                               \
  template Var<S> embedding(Var<S>, std::span<const int>);                                     \
  template Var<S> concat_rows(std::span<const Var<S>>);                                        \
  template Var<S> replace_rows(Var<S>, Index, Var<S>);                                         \
  template Var<S> slice_rows(Var<S>, Index, Index);                                            \
  template Var<S> attention(Var<S>, Var<S>, Var<S>, int, bool);

TSASR_INSTANTIATE_OPS(float)
TSASR_INSTANTIATE_OPS(double)

#undef TSASR_INSTANTIATE_OPS

}  // namespace tsasr
