#include "icd/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "icd/error.hpp"
#include "icd/rng.hpp"

namespace icd::ad {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kConstant: return "constant";
    case OpKind::kParameter: return "parameter";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kAddBias: return "add_bias";
    case OpKind::kScale: return "scale";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kRowSum: return "row_sum";
    case OpKind::kMeanRows: return "mean_rows";
    case OpKind::kSelectRow: return "select_row";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kStackRows: return "stack_rows";
    case OpKind::kReshape: return "reshape";
    case OpKind::kConv1d: return "conv1d";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kCrossEntropy: return "cross_entropy";
    case OpKind::kBinaryCrossEntropy: return "binary_cross_entropy";
  }
  return "unknown";
}

const Tensor& Var::value() const { return graph->value(id); }

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{OpKind::kConstant, std::move(value), nullptr, {}, nullptr, {}, false});
  return Var{this, nodes_.size() - 1};
}

Var Graph::parameter(Tensor& param) {
  nodes_.push_back(Node{OpKind::kParameter, Tensor{}, &param, {}, nullptr, {},
                        track_gradients_ && param.requires_grad()});
  return Var{this, nodes_.size() - 1};
}

Var Graph::push(OpKind kind, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  bool needs = false;
  for (auto in : inputs) needs = needs || nodes_[in].needs_grad;
  nodes_.push_back(Node{kind, std::move(value), nullptr, std::move(inputs), needs ? std::move(backward) : nullptr,
                        {}, needs});
  return Var{this, nodes_.size() - 1};
}

const Tensor& Graph::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.value;
}

std::vector<double>& Graph::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(value(id).size(), 0.0);
  return n.grad;
}

void Graph::record_relu_signs(const Tensor& input) {
  std::uint64_t h = relu_signature_;
  std::uint64_t word = 0;
  std::size_t bits = 0;
  for (double v : input.data()) {
    word = (word << 1) | (v > 0.0 ? 1u : 0u);
    if (++bits == 64) {
      h = splitmix64(h ^ word);
      word = 0;
      bits = 0;
    }
  }
  relu_signature_ = splitmix64(h ^ word ^ (bits << 56));
}

void Graph::backward(Var loss) {
  if (loss.graph != this) throw ValidationError("backward: loss belongs to a different graph");
  if (value(loss.id).size() != 1) {
    throw ValidationError("backward needs a scalar loss, got shape " + shape_to_string(value(loss.id).shape()));
  }
  for (auto& n : nodes_) n.grad.clear();
  grad(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.external) {
      if (n.external->requires_grad()) {
        auto g = n.external->grad();
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += n.grad[j];
      }
      continue;
    }
    if (n.backward) n.backward(*this, i);
  }
}

namespace {

void require_same_graph(Var a, Var b) {
  if (a.graph != b.graph) throw ValidationError("operands belong to different graphs");
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + " shape mismatch: " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

std::size_t last_dim(const Tensor& t) { return t.rank() == 1 ? t.size() : t.shape().back(); }

}  // namespace

Var matmul(Var a, Var b) {
  require_same_graph(a, b);
  Graph& g = *a.graph;
  Tensor out = kernels::matmul(a.value(), b.value());
  return g.push(OpKind::kMatmul, std::move(out), {a.id, b.id}, [](Graph& g, std::size_t self) {
    const auto ia = g.inputs(self)[0], ib = g.inputs(self)[1];
    const Tensor& A = g.value(ia);
    const Tensor& B = g.value(ib);
    const auto& dc = g.grad(self);
    const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
    if (g.needs_grad(ia)) {
      auto& da = g.grad(ia);
      for (std::size_t i = 0; i < m; ++i) {
        const double* dci = dc.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* bp = B.data().data() + p * n;
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += dci[j] * bp[j];
          da[i * k + p] += s;
        }
      }
    }
    if (g.needs_grad(ib)) {
      auto& db = g.grad(ib);
      for (std::size_t i = 0; i < m; ++i) {
        const double* dci = dc.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A(i, p);
          if (av == 0.0) continue;
          double* dbp = db.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) dbp[j] += av * dci[j];
        }
      }
    }
  });
}

Var transpose(Var a) {
  Graph& g = *a.graph;
  return g.push(OpKind::kTranspose, kernels::transpose(a.value()), {a.id}, [](Graph& g, std::size_t self) {
    const auto ia = g.inputs(self)[0];
    const Tensor& A = g.value(ia);
    const std::size_t m = A.dim(0), n = A.dim(1);
    const auto& d = g.grad(self);
    auto& da = g.grad(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) da[i * n + j] += d[j * m + i];
  });
}

Var add(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape("add", a, b);
  Graph& g = *a.graph;
  return g.push(OpKind::kAdd, kernels::add(a.value(), b.value()), {a.id, b.id}, [](Graph& g, std::size_t self) {
    const auto& d = g.grad(self);
    for (auto in : g.inputs(self)) {
      if (!g.needs_grad(in)) continue;
      auto& di = g.grad(in);
      for (std::size_t i = 0; i < d.size(); ++i) di[i] += d[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape("sub", a, b);
  Graph& g = *a.graph;
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return g.push(OpKind::kSub, std::move(out), {a.id, b.id}, [](Graph& g, std::size_t self) {
    const auto& d = g.grad(self);
    const auto ia = g.inputs(self)[0], ib = g.inputs(self)[1];
    if (g.needs_grad(ia)) {
      auto& da = g.grad(ia);
      for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i];
    }
    if (g.needs_grad(ib)) {
      auto& db = g.grad(ib);
      for (std::size_t i = 0; i < d.size(); ++i) db[i] -= d[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape("mul", a, b);
  Graph& g = *a.graph;
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return g.push(OpKind::kMul, std::move(out), {a.id, b.id}, [](Graph& g, std::size_t self) {
    const auto& d = g.grad(self);
    const auto ia = g.inputs(self)[0], ib = g.inputs(self)[1];
    const Tensor& A = g.value(ia);
    const Tensor& B = g.value(ib);
    if (g.needs_grad(ia)) {
      auto& da = g.grad(ia);
      for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i] * B[i];
    }
    if (g.needs_grad(ib)) {
      auto& db = g.grad(ib);
      for (std::size_t i = 0; i < d.size(); ++i) db[i] += d[i] * A[i];
    }
  });
}

Var add_bias(Var x, Var bias) {
  require_same_graph(x, bias);
  Graph& g = *x.graph;
  return g.push(OpKind::kAddBias, kernels::add_bias(x.value(), bias.value()), {x.id, bias.id},
                [](Graph& g, std::size_t self) {
                  const auto& d = g.grad(self);
                  const auto ix = g.inputs(self)[0], ib = g.inputs(self)[1];
                  if (g.needs_grad(ix)) {
                    auto& dx = g.grad(ix);
                    for (std::size_t i = 0; i < d.size(); ++i) dx[i] += d[i];
                  }
                  if (g.needs_grad(ib)) {
                    auto& db = g.grad(ib);
                    const std::size_t c = db.size();
                    for (std::size_t i = 0; i < d.size(); ++i) db[i % c] += d[i];
                  }
                });
}

Var scale(Var x, double factor) {
  Graph& g = *x.graph;
  Tensor out = x.value();
  for (auto& v : out.data()) v *= factor;
  return g.push(OpKind::kScale, std::move(out), {x.id}, [factor](Graph& g, std::size_t self) {
    const auto& d = g.grad(self);
    auto& dx = g.grad(g.inputs(self)[0]);
    for (std::size_t i = 0; i < d.size(); ++i) dx[i] += factor * d[i];
  });
}

Var sum(Var x) {
  Graph& g = *x.graph;
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return g.push(OpKind::kSum, Tensor::scalar(s), {x.id}, [](Graph& g, std::size_t self) {
    const double d = g.grad(self)[0];
    for (auto& v : g.grad(g.inputs(self)[0])) v += d;
  });
}

Var mean(Var x) {
  Graph& g = *x.graph;
  const double n = static_cast<double>(x.value().size());
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return g.push(OpKind::kMean, Tensor::scalar(s / n), {x.id}, [n](Graph& g, std::size_t self) {
    const double d = g.grad(self)[0] / n;
    for (auto& v : g.grad(g.inputs(self)[0])) v += d;
  });
}

Var row_sum(Var x) {
  Graph& g = *x.graph;
  const Tensor& X = x.value();
  if (X.rank() != 2) throw DimensionError("row_sum expects rank 2, got " + shape_to_string(X.shape()));
  const std::size_t r = X.dim(0), c = X.dim(1);
  Tensor out({r});
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += X(i, j);
    out[i] = s;
  }
  return g.push(OpKind::kRowSum, std::move(out), {x.id}, [c](Graph& g, std::size_t self) {
    const auto& d = g.grad(self);
    auto& dx = g.grad(g.inputs(self)[0]);
    for (std::size_t i = 0; i < d.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += d[i];
  });
}

Var mean_rows(Var x) {
  Graph& g = *x.graph;
  const Tensor& X = x.value();
  if (X.rank() != 2) throw DimensionError("mean_rows expects rank 2, got " + shape_to_string(X.shape()));
  const std::size_t r = X.dim(0), c = X.dim(1);
  Tensor out({c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += X(i, j);
  for (auto& v : out.data()) v /= static_cast<double>(r);
  return g.push(OpKind::kMeanRows, std::move(out), {x.id}, [r, c](Graph& g, std::size_t self) {
    const auto& d = g.grad(self);
    auto& dx = g.grad(g.inputs(self)[0]);
    const double inv = 1.0 / static_cast<double>(r);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += d[j] * inv;
  });
}

Var select_row(Var x, std::size_t r) {
  Graph& g = *x.graph;
  const Tensor& X = x.value();
  if (X.rank() != 2 || r >= X.dim(0)) {
    throw DimensionError("select_row " + std::to_string(r) + " out of range for " + shape_to_string(X.shape()));
  }
  const std::size_t c = X.dim(1);
  auto row = X.row(r);
  Tensor out({c}, std::vector<double>(row.begin(), row.end()));
  return g.push(OpKind::kSelectRow, std::move(out), {x.id}, [r, c](Graph& g, std::size_t self) {
    const auto& d = g.grad(self);
    auto& dx = g.grad(g.inputs(self)[0]);
    for (std::size_t j = 0; j < c; ++j) dx[r * c + j] += d[j];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValidationError("concat_cols needs at least one operand");
  Graph& g = *parts.front().graph;
  const std::size_t rows = parts.front().value().dim(0);
  std::size_t total = 0;
  std::vector<std::size_t> widths, ids;
  for (const auto& p : parts) {
    require_same_graph(parts.front(), p);
    if (p.value().rank() != 2 || p.value().dim(0) != rows) {
      throw DimensionError("concat_cols height mismatch: " + shape_to_string(p.shape()));
    }
    widths.push_back(p.value().dim(1));
    ids.push_back(p.id);
    total += widths.back();
  }
  Tensor out({rows, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& P = parts[k].value();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy(P.row(i).begin(), P.row(i).end(), out.row(i).begin() + static_cast<std::ptrdiff_t>(off));
    off += widths[k];
  }
  return g.push(OpKind::kConcatCols, std::move(out), std::move(ids),
                [widths, rows, total](Graph& g, std::size_t self) {
                  const auto& d = g.grad(self);
                  std::size_t off = 0;
                  for (std::size_t k = 0; k < widths.size(); ++k) {
                    const auto in = g.inputs(self)[k];
                    if (g.needs_grad(in)) {
                      auto& di = g.grad(in);
                      for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < widths[k]; ++j) di[i * widths[k] + j] += d[i * total + off + j];
                    }
                    off += widths[k];
                  }
                });
}

Var stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw ValidationError("stack_rows needs at least one operand");
  Graph& g = *rows.front().graph;
  const std::size_t c = rows.front().value().size();
  std::vector<std::size_t> ids;
  Tensor out({rows.size(), c});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require_same_graph(rows.front(), rows[i]);
    const Tensor& r = rows[i].value();
    if (r.rank() != 1 || r.size() != c) {
      throw DimensionError("stack_rows length mismatch: " + shape_to_string(r.shape()));
    }
    std::copy(r.data().begin(), r.data().end(), out.row(i).begin());
    ids.push_back(rows[i].id);
  }
  return g.push(OpKind::kStackRows, std::move(out), std::move(ids), [c](Graph& g, std::size_t self) {
    const auto& d = g.grad(self);
    const auto& ins = g.inputs(self);
    for (std::size_t i = 0; i < ins.size(); ++i) {
      if (!g.needs_grad(ins[i])) continue;
      auto& di = g.grad(ins[i]);
      for (std::size_t j = 0; j < c; ++j) di[j] += d[i * c + j];
    }
  });
}

Var reshape(Var x, Shape shape) {
  Graph& g = *x.graph;
  if (shape_size(shape) != x.value().size()) {
    throw DimensionError("cannot reshape " + shape_to_string(x.shape()) + " to " + shape_to_string(shape));
  }
  const auto& src = x.value().storage();
  return g.push(OpKind::kReshape, Tensor(std::move(shape), src), {x.id}, [](Graph& g, std::size_t self) {
    const auto& d = g.grad(self);
    auto& dx = g.grad(g.inputs(self)[0]);
    for (std::size_t i = 0; i < d.size(); ++i) dx[i] += d[i];
  });
}

Var conv1d(Var x, Var w, Var bias, Padding padding) {
  require_same_graph(x, w);
  require_same_graph(x, bias);
  Graph& g = *x.graph;
  Tensor out = kernels::conv1d(x.value(), w.value(), bias.value(), padding);
  return g.push(OpKind::kConv1d, std::move(out), {x.id, w.id, bias.id}, [padding](Graph& g, std::size_t self) {
    const auto ix = g.inputs(self)[0], iw = g.inputs(self)[1], ib = g.inputs(self)[2];
    const Tensor& X = g.value(ix);
    const Tensor& W = g.value(iw);
    const auto& dy = g.grad(self);
    const std::size_t len = X.dim(0), cin = X.dim(1), k = W.dim(0), cout = W.dim(2);
    const std::size_t pad = padding == Padding::kSame ? (k - 1) / 2 : 0;
    const std::size_t out_len = dy.size() / cout;
    const bool gx = g.needs_grad(ix), gw = g.needs_grad(iw);
    std::vector<double>* dx = gx ? &g.grad(ix) : nullptr;
    std::vector<double>* dw = gw ? &g.grad(iw) : nullptr;
    for (std::size_t t = 0; t < out_len; ++t) {
      const double* dyt = dy.data() + t * cout;
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(pad);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
        const std::size_t s = static_cast<std::size_t>(src);
        const double* xrow = X.data().data() + s * cin;
        const double* wj = W.data().data() + j * cin * cout;
        for (std::size_t c = 0; c < cin; ++c) {
          const double* wrow = wj + c * cout;
          if (gx) {
            double acc = 0.0;
            for (std::size_t o = 0; o < cout; ++o) acc += dyt[o] * wrow[o];
            (*dx)[s * cin + c] += acc;
          }
          if (gw) {
            const double xv = xrow[c];
            if (xv == 0.0) continue;
            double* dwrow = dw->data() + j * cin * cout + c * cout;
            for (std::size_t o = 0; o < cout; ++o) dwrow[o] += xv * dyt[o];
          }
        }
      }
    }
    if (g.needs_grad(ib)) {
      auto& db = g.grad(ib);
      for (std::size_t t = 0; t < out_len; ++t)
        for (std::size_t o = 0; o < cout; ++o) db[o] += dy[t * cout + o];
    }
  });
}

Var relu(Var x) {
  Graph& g = *x.graph;
  g.record_relu_signs(x.value());
  Tensor out = x.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return g.push(OpKind::kRelu, std::move(out), {x.id}, [](Graph& g, std::size_t self) {
    const auto ix = g.inputs(self)[0];
    const Tensor& X = g.value(ix);
    const auto& d = g.grad(self);
    auto& dx = g.grad(ix);
    for (std::size_t i = 0; i < d.size(); ++i)
      if (X[i] > 0.0) dx[i] += d[i];
  });
}

Var sigmoid(Var x) {
  Graph& g = *x.graph;
  Tensor out = x.value();
  for (auto& v : out.data()) v = kernels::sigmoid(v);
  return g.push(OpKind::kSigmoid, std::move(out), {x.id}, [](Graph& g, std::size_t self) {
    const Tensor& Y = g.value(self);
    const auto& d = g.grad(self);
    auto& dx = g.grad(g.inputs(self)[0]);
    for (std::size_t i = 0; i < d.size(); ++i) dx[i] += d[i] * Y[i] * (1.0 - Y[i]);
  });
}

Var tanh(Var x) {
  Graph& g = *x.graph;
  Tensor out = x.value();
  for (auto& v : out.data()) v = std::tanh(v);
  return g.push(OpKind::kTanh, std::move(out), {x.id}, [](Graph& g, std::size_t self) {
    const Tensor& Y = g.value(self);
    const auto& d = g.grad(self);
    auto& dx = g.grad(g.inputs(self)[0]);
    for (std::size_t i = 0; i < d.size(); ++i) dx[i] += d[i] * (1.0 - Y[i] * Y[i]);
  });
}

Var softmax(Var x) {
  Graph& g = *x.graph;
  return g.push(OpKind::kSoftmax, kernels::softmax_rows(x.value()), {x.id}, [](Graph& g, std::size_t self) {
    const Tensor& Y = g.value(self);
    const auto& d = g.grad(self);
    auto& dx = g.grad(g.inputs(self)[0]);
    const std::size_t c = last_dim(Y);
    for (std::size_t r = 0; r < Y.size() / c; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += d[r * c + j] * Y[r * c + j];
      for (std::size_t j = 0; j < c; ++j) dx[r * c + j] += Y[r * c + j] * (d[r * c + j] - dot);
    }
  });
}

Var cross_entropy(Var probs, const Tensor& target) {
  const Tensor& P = probs.value();
  if (P.shape() != target.shape()) {
    throw DimensionError("cross_entropy shape mismatch: " + shape_to_string(P.shape()) + " vs " +
                         shape_to_string(target.shape()));
  }
  const std::size_t c = last_dim(P);
  const std::size_t n = P.size() / c;
  for (std::size_t r = 0; r < n; ++r) {
    int ones = 0;
    for (std::size_t j = 0; j < c; ++j) {
      const double y = target[r * c + j];
      if (y == 1.0) {
        ++ones;
      } else if (y != 0.0) {
        throw ValidationError("cross_entropy target row " + std::to_string(r) + " is not one-hot");
      }
    }
    if (ones != 1) throw ValidationError("cross_entropy target row " + std::to_string(r) + " is not one-hot");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i)
    if (target[i] != 0.0) loss -= target[i] * std::log(std::max(P[i], kLogFloor));
  loss /= static_cast<double>(n);
  Graph& g = *probs.graph;
  return g.push(OpKind::kCrossEntropy, Tensor::scalar(loss), {probs.id}, [target, n](Graph& g, std::size_t self) {
    const auto ip = g.inputs(self)[0];
    const Tensor& P = g.value(ip);
    const double d = g.grad(self)[0] / static_cast<double>(n);
    auto& dp = g.grad(ip);
    for (std::size_t i = 0; i < P.size(); ++i)
      if (target[i] != 0.0 && P[i] > kLogFloor) dp[i] -= d * target[i] / P[i];
  });
}

Var binary_cross_entropy(Var probs, const Tensor& target) {
  const Tensor& P = probs.value();
  if (P.shape() != target.shape()) {
    throw DimensionError("binary_cross_entropy shape mismatch: " + shape_to_string(P.shape()) + " vs " +
                         shape_to_string(target.shape()));
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] != 0.0 && target[i] != 1.0) {
      throw ValidationError("binary_cross_entropy target entry " + std::to_string(i) + " is not in {0,1}");
    }
  }
  const double n = static_cast<double>(P.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    loss -= target[i] == 1.0 ? std::log(std::max(P[i], kLogFloor)) : std::log(std::max(1.0 - P[i], kLogFloor));
  }
  Graph& g = *probs.graph;
  return g.push(OpKind::kBinaryCrossEntropy, Tensor::scalar(loss / n), {probs.id},
                [target, n](Graph& g, std::size_t self) {
                  const auto ip = g.inputs(self)[0];
                  const Tensor& P = g.value(ip);
                  const double d = g.grad(self)[0] / n;
                  auto& dp = g.grad(ip);
                  for (std::size_t i = 0; i < P.size(); ++i) {
                    if (target[i] == 1.0) {
                      if (P[i] > kLogFloor) dp[i] -= d / P[i];
                    } else if (1.0 - P[i] > kLogFloor) {
                      dp[i] += d / (1.0 - P[i]);
                    }
                  }
                });
}

namespace {

struct Probe {
  double value;
  std::uint64_t signature;
};

Probe evaluate(const GraphBuilder& f) {
  Graph g;
  Var loss = f(g);
  if (loss.value().size() != 1) throw ValidationError("grad_check: builder must return a scalar");
  return {loss.value()[0], g.relu_signature()};
}

}  // namespace

GradCheckResult grad_check(const GraphBuilder& f, const std::vector<Tensor*>& params,
                           const GradCheckOptions& options) {
  std::vector<bool> had_grad;
  for (Tensor* p : params) {
    had_grad.push_back(p->requires_grad());
    p->set_requires_grad(true);
    p->zero_grad();
  }
  std::uint64_t base_signature;
  {
    Graph g;
    Var loss = f(g);
    base_signature = g.relu_signature();
    g.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (Tensor* p : params) analytic.emplace_back(p->grad().begin(), p->grad().end());

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t pi = 0; pi < params.size(); ++pi)
    for (std::size_t i = 0; i < params[pi]->size(); ++i) coords.emplace_back(pi, i);
  std::size_t wanted = coords.size();
  if (options.probes > 0 && options.probes < coords.size()) {
    CounterRng rng(options.seed, 0x67726164);
    auto order = permutation(coords.size(), rng);
    std::vector<std::pair<std::size_t, std::size_t>> shuffled;
    for (auto o : order) shuffled.push_back(coords[o]);
    coords = std::move(shuffled);
    wanted = options.probes;
  }

  GradCheckResult result;
  for (const auto& [pi, i] : coords) {
    if (result.checked == wanted) break;
    double& theta = (*params[pi])[i];
    const double saved = theta;
    theta = saved + options.eps;
    const Probe plus = evaluate(f);
    theta = saved - options.eps;
    const Probe minus = evaluate(f);
    theta = saved;
    if (!std::isfinite(plus.value) || !std::isfinite(minus.value)) {
      std::ostringstream os;
      os << "grad_check: non-finite loss probing parameter " << pi << " coordinate " << i;
      throw ProbeError(os.str());
    }
    if (plus.signature != base_signature || minus.signature != base_signature) {
      ++result.skipped_nonsmooth;
      continue;
    }
    const double fd = (plus.value - minus.value) / (2.0 * options.eps);
    const double ad = analytic[pi][i];
    const double denom = std::max({std::abs(ad), std::abs(fd), 1e-8});
    const double rel = std::abs(ad - fd) / denom;
    if (rel > result.max_rel_error || result.checked == 0) {
      result.max_rel_error = std::max(result.max_rel_error, rel);
      result.worst_param = pi;
      result.worst_index = i;
    }
    ++result.checked;
  }
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    if (!had_grad[pi]) params[pi]->set_requires_grad(false);
  }
  return result;
}

}  // namespace icd::ad
