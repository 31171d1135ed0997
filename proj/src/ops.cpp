#include "moto/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "moto/error.hpp"

namespace moto::ops {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(x.shape()));
  }
}

// out[m x n] += a[m x k] . b[k x n]
void gemm_acc(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
              std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(bv, 2, "matmul");
  if (av.rank() != 1 && av.rank() != 2) {
    throw ShapeError("matmul: left operand must be rank 1 or 2, got " + shape_str(av.shape()));
  }
  const bool vec = av.rank() == 1;
  const std::size_t m = vec ? 1 : av.shape()[0];
  const std::size_t k = vec ? av.shape()[0] : av.shape()[1];
  const std::size_t n = bv.shape()[1];
  if (bv.shape()[0] != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(av.shape()) + " . " +
                     shape_str(bv.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_acc(av.data(), bv.data(), out.data(), m, k, n);
  Shape shape = vec ? Shape{n} : Shape{m, n};
  return a.tape().record(
      Tensor(std::move(shape), std::move(out)), {a.id(), b.id()}, "matmul",
      [ia = a.id(), ib = b.id(), av, bv, m, k, n](std::span<const double> g, Gradients& grads) {
        // da = g . b^T
        if (auto da = grads.accum(ia); !da.empty()) {
          const double* bp = bv.data();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              double s = 0.0;
              for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bp[p * n + j];
              da[i * k + p] += s;
            }
          }
        }
        // db = a^T . g
        if (auto db = grads.accum(ib); !db.empty()) {
          const double* ap = av.data();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              const double a_ip = ap[i * k + p];
              if (a_ip == 0.0) continue;
              for (std::size_t j = 0; j < n; ++j) db[p * n + j] += a_ip * g[i * n + j];
            }
          }
        }
      });
}

Var transpose(Var x) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "transpose");
  const std::size_t r = xv.rows(), c = xv.cols();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  return x.tape().record(Tensor({c, r}, std::move(out)), {x.id()}, "transpose",
                         [ix = x.id(), r, c](std::span<const double> g, Gradients& grads) {
                           auto dx = grads.accum(ix);
                           if (dx.empty()) return;
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += g[j * r + i];
                         });
}

Var add(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "add");
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return a.tape().record(Tensor(av.shape(), std::move(out)), {a.id(), b.id()}, "add",
                         [ia = a.id(), ib = b.id()](std::span<const double> g, Gradients& grads) {
                           for (NodeId id : {ia, ib}) {
                             auto d = grads.accum(id);
                             for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
                           }
                         });
}

Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "multiply");
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return a.tape().record(
      Tensor(av.shape(), std::move(out)), {a.id(), b.id()}, "multiply",
      [ia = a.id(), ib = b.id(), av, bv](std::span<const double> g, Gradients& grads) {
        if (auto da = grads.accum(ia); !da.empty())
          for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[i] * bv[i];
        if (auto db = grads.accum(ib); !db.empty())
          for (std::size_t i = 0; i < db.size(); ++i) db[i] += g[i] * av[i];
      });
}

Var scale(Var x, double factor) {
  const Tensor& xv = x.value();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor;
  return x.tape().record(Tensor(xv.shape(), std::move(out)), {x.id()}, "scale",
                         [ix = x.id(), factor](std::span<const double> g, Gradients& grads) {
                           auto d = grads.accum(ix);
                           for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * factor;
                         });
}

Var sigmoid(Var x) {
  const Tensor& xv = x.value();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid(xv[i]);
  Tensor y(xv.shape(), std::move(out));
  return x.tape().record(y, {x.id()}, "sigmoid",
                         [ix = x.id(), y](std::span<const double> g, Gradients& grads) {
                           auto d = grads.accum(ix);
                           for (std::size_t i = 0; i < d.size(); ++i)
                             d[i] += g[i] * y[i] * (1.0 - y[i]);
                         });
}

Var tanh(Var x) {
  const Tensor& xv = x.value();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
  Tensor y(xv.shape(), std::move(out));
  return x.tape().record(y, {x.id()}, "tanh",
                         [ix = x.id(), y](std::span<const double> g, Gradients& grads) {
                           auto d = grads.accum(ix);
                           for (std::size_t i = 0; i < d.size(); ++i)
                             d[i] += g[i] * (1.0 - y[i] * y[i]);
                         });
}

Var add_rowwise(Var x, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require_rank(xv, 2, "add_rowwise");
  require_rank(bv, 1, "add_rowwise");
  const std::size_t m = xv.rows(), n = xv.cols();
  if (bv.size() != n) {
    throw ShapeError("add_rowwise: bias " + shape_str(bv.shape()) + " for rows of " +
                     shape_str(xv.shape()));
  }
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] + bv[j];
  return x.tape().record(Tensor(xv.shape(), std::move(out)), {x.id(), bias.id()}, "add_rowwise",
                         [ix = x.id(), ib = bias.id(), m, n](std::span<const double> g,
                                                             Gradients& grads) {
                           if (auto dx = grads.accum(ix); !dx.empty())
                             for (std::size_t i = 0; i < m * n; ++i) dx[i] += g[i];
                           if (auto db = grads.accum(ib); !db.empty())
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < n; ++j) db[j] += g[i * n + j];
                         });
}

Var concat(std::initializer_list<Var> parts, std::size_t axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Tape& tape = parts.front().tape();
  const std::size_t rank = parts.front().value().rank();
  if (rank != 1 && rank != 2) throw ShapeError("concat: only rank 1 and 2 are supported");
  if (axis >= rank) throw ShapeError("concat: axis out of range");
  std::vector<NodeId> ids;
  ids.reserve(parts.size());
  for (const Var& p : parts) ids.push_back(p.id());

  if (rank == 1) {
    std::vector<double> out;
    std::vector<std::size_t> sizes;
    for (const Var& p : parts) {
      const Tensor& v = p.value();
      require_rank(v, 1, "concat");
      sizes.push_back(v.size());
      out.insert(out.end(), v.values().begin(), v.values().end());
    }
    const std::size_t n = out.size();
    return tape.record(Tensor({n}, std::move(out)), ids, "concat",
                       [ids, sizes](std::span<const double> g, Gradients& grads) {
                         std::size_t off = 0;
                         for (std::size_t k = 0; k < ids.size(); ++k) {
                           auto d = grads.accum(ids[k]);
                           for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[off + i];
                           off += sizes[k];
                         }
                       });
  }

  // rank 2
  std::vector<Shape> shapes;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    require_rank(v, 2, "concat");
    const std::size_t other = 1 - axis;
    if (v.shape()[other] != parts.front().value().shape()[other]) {
      throw ShapeError("concat: non-axis dimension mismatch " + shape_str(v.shape()) + " vs " +
                       shape_str(parts.front().value().shape()));
    }
    shapes.push_back(v.shape());
  }
  const std::size_t rows = axis == 0 ? [&] {
    std::size_t r = 0;
    for (const auto& s : shapes) r += s[0];
    return r;
  }()
                                     : shapes.front()[0];
  const std::size_t cols = axis == 1 ? [&] {
    std::size_t c = 0;
    for (const auto& s : shapes) c += s[1];
    return c;
  }()
                                     : shapes.front()[1];
  std::vector<double> out(rows * cols);
  // Column offset of each part (axis 1) or row offset (axis 0).
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    offsets.push_back(off);
    const Tensor& v = parts[k].value();
    const std::size_t r = shapes[k][0], c = shapes[k][1];
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        if (axis == 0)
          out[(off + i) * cols + j] = v[i * c + j];
        else
          out[i * cols + off + j] = v[i * c + j];
      }
    off += axis == 0 ? r : c;
  }
  return tape.record(Tensor({rows, cols}, std::move(out)), ids, "concat",
                     [ids, shapes, offsets, axis, cols](std::span<const double> g,
                                                        Gradients& grads) {
                       for (std::size_t k = 0; k < ids.size(); ++k) {
                         auto d = grads.accum(ids[k]);
                         if (d.empty()) continue;
                         const std::size_t r = shapes[k][0], c = shapes[k][1];
                         for (std::size_t i = 0; i < r; ++i)
                           for (std::size_t j = 0; j < c; ++j) {
                             d[i * c + j] += axis == 0 ? g[(offsets[k] + i) * cols + j]
                                                       : g[i * cols + offsets[k] + j];
                           }
                       }
                     });
}

Var slice(Var x, std::size_t offset, std::size_t length) {
  const Tensor& xv = x.value();
  require_rank(xv, 1, "slice");
  if (offset + length > xv.size()) {
    throw ShapeError("slice [" + std::to_string(offset) + ", " + std::to_string(offset + length) +
                     ") out of range for " + shape_str(xv.shape()));
  }
  std::vector<double> out(xv.values().begin() + offset, xv.values().begin() + offset + length);
  return x.tape().record(Tensor({length}, std::move(out)), {x.id()}, "slice",
                         [ix = x.id(), offset](std::span<const double> g, Gradients& grads) {
                           auto d = grads.accum(ix);
                           if (d.empty()) return;
                           for (std::size_t i = 0; i < g.size(); ++i) d[offset + i] += g[i];
                         });
}

Var row(Var x, std::size_t i) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "row");
  const std::size_t n = xv.cols();
  if (i >= xv.rows()) throw ShapeError("row index out of range");
  std::vector<double> out(xv.values().begin() + i * n, xv.values().begin() + (i + 1) * n);
  return x.tape().record(Tensor({n}, std::move(out)), {x.id()}, "row",
                         [ix = x.id(), i, n](std::span<const double> g, Gradients& grads) {
                           auto d = grads.accum(ix);
                           if (d.empty()) return;
                           for (std::size_t j = 0; j < n; ++j) d[i * n + j] += g[j];
                         });
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows");
  const std::size_t n = rows.front().value().size();
  std::vector<double> out;
  out.reserve(rows.size() * n);
  std::vector<NodeId> ids;
  for (const Var& r : rows) {
    const Tensor& v = r.value();
    require_rank(v, 1, "stack_rows");
    if (v.size() != n) throw ShapeError("stack_rows: rows of different length");
    out.insert(out.end(), v.values().begin(), v.values().end());
    ids.push_back(r.id());
  }
  const std::size_t m = rows.size();
  return rows.front().tape().record(Tensor({m, n}, std::move(out)), ids, "stack_rows",
                                    [ids, n](std::span<const double> g, Gradients& grads) {
                                      for (std::size_t k = 0; k < ids.size(); ++k) {
                                        auto d = grads.accum(ids[k]);
                                        for (std::size_t j = 0; j < d.size(); ++j)
                                          d[j] += g[k * n + j];
                                      }
                                    });
}

Var reshape(Var x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  return x.tape().record(y, {x.id()}, "reshape",
                         [ix = x.id()](std::span<const double> g, Gradients& grads) {
                           auto d = grads.accum(ix);
                           for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
                         });
}

Var gather_rows(Var table, std::span<const std::size_t> ids) {
  const Tensor& tv = table.value();
  require_rank(tv, 2, "gather_rows");
  const std::size_t rows = tv.rows(), n = tv.cols();
  std::vector<double> out;
  out.reserve(ids.size() * n);
  for (std::size_t id : ids) {
    if (id >= rows) {
      throw ShapeError("gather_rows: id " + std::to_string(id) + " out of range for " +
                       std::to_string(rows) + " rows");
    }
    out.insert(out.end(), tv.values().begin() + id * n, tv.values().begin() + (id + 1) * n);
  }
  std::vector<std::size_t> picked(ids.begin(), ids.end());
  const std::size_t m = picked.size();
  return table.tape().record(Tensor({m, n}, std::move(out)), {table.id()}, "gather_rows",
                             [it = table.id(), picked, n](std::span<const double> g,
                                                          Gradients& grads) {
                               auto d = grads.accum(it);
                               if (d.empty()) return;
                               for (std::size_t k = 0; k < picked.size(); ++k)
                                 for (std::size_t j = 0; j < n; ++j)
                                   d[picked[k] * n + j] += g[k * n + j];
                             });
}

std::vector<double> softmax_values(std::span<const double> x) {
  if (x.empty()) throw ShapeError("softmax of an empty vector");
  const double mx = *std::max_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

Var softmax(Var x) {
  const Tensor& xv = x.value();
  require_rank(xv, 1, "softmax");
  Tensor y = Tensor::vector(softmax_values(xv.values()));
  return x.tape().record(y, {x.id()}, "softmax",
                         [ix = x.id(), y](std::span<const double> g, Gradients& grads) {
                           auto d = grads.accum(ix);
                           if (d.empty()) return;
                           double dot = 0.0;
                           for (std::size_t i = 0; i < y.size(); ++i) dot += g[i] * y[i];
                           for (std::size_t i = 0; i < y.size(); ++i) d[i] += y[i] * (g[i] - dot);
                         });
}

Var softmax_columns(Var x) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "softmax_columns");
  const std::size_t m = xv.rows(), n = xv.cols();
  if (m == 0) throw ShapeError("softmax_columns: no rows");
  std::vector<double> out(m * n);
  std::vector<double> column(m);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) column[i] = xv[i * n + j];
    const auto sm = softmax_values(column);
    for (std::size_t i = 0; i < m; ++i) out[i * n + j] = sm[i];
  }
  Tensor y({m, n}, std::move(out));
  return x.tape().record(y, {x.id()}, "softmax_columns",
                         [ix = x.id(), y, m, n](std::span<const double> g, Gradients& grads) {
                           auto d = grads.accum(ix);
                           if (d.empty()) return;
                           for (std::size_t j = 0; j < n; ++j) {
                             double dot = 0.0;
                             for (std::size_t i = 0; i < m; ++i) dot += g[i * n + j] * y[i * n + j];
                             for (std::size_t i = 0; i < m; ++i)
                               d[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
                           }
                         });
}

Var sum(Var x) {
  const Tensor& xv = x.value();
  double total = 0.0;
  for (double v : xv.values()) total += v;
  return x.tape().record(Tensor::scalar(total), {x.id()}, "sum",
                         [ix = x.id()](std::span<const double> g, Gradients& grads) {
                           auto d = grads.accum(ix);
                           for (double& v : d) v += g[0];
                         });
}

Var lstm_cell(Var z, Var c_prev) {
  const Tensor& zv = z.value();
  const Tensor& cv = c_prev.value();
  require_rank(zv, 1, "lstm_cell");
  require_rank(cv, 1, "lstm_cell");
  const std::size_t h = cv.size();
  if (zv.size() != 4 * h) {
    throw ShapeError("lstm_cell: pre-activations " + shape_str(zv.shape()) + " for state " +
                     shape_str(cv.shape()));
  }
  // gates: i, f, o, candidate, then tanh(c)
  std::vector<double> gates(5 * h);
  std::vector<double> out(2 * h);
  for (std::size_t k = 0; k < h; ++k) {
    const double i = sigmoid(zv[k]);
    const double f = sigmoid(zv[h + k]);
    const double o = sigmoid(zv[2 * h + k]);
    const double g = std::tanh(zv[3 * h + k]);
    const double c = f * cv[k] + i * g;
    const double tc = std::tanh(c);
    gates[k] = i;
    gates[h + k] = f;
    gates[2 * h + k] = o;
    gates[3 * h + k] = g;
    gates[4 * h + k] = tc;
    out[k] = o * tc;
    out[h + k] = c;
  }
  return z.tape().record(
      Tensor({2 * h}, std::move(out)), {z.id(), c_prev.id()}, "lstm_cell",
      [iz = z.id(), ic = c_prev.id(), gates = std::move(gates), cv, h](std::span<const double> g,
                                                                      Gradients& grads) {
        auto dz = grads.accum(iz);
        auto dc_prev = grads.accum(ic);
        for (std::size_t k = 0; k < h; ++k) {
          const double i = gates[k], f = gates[h + k], o = gates[2 * h + k];
          const double cand = gates[3 * h + k], tc = gates[4 * h + k];
          const double dh = g[k];
          const double dc = g[h + k] + dh * o * (1.0 - tc * tc);
          if (!dz.empty()) {
            dz[k] += dc * cand * i * (1.0 - i);
            dz[h + k] += dc * cv[k] * f * (1.0 - f);
            dz[2 * h + k] += dh * tc * o * (1.0 - o);
            dz[3 * h + k] += dc * i * (1.0 - cand * cand);
          }
          if (!dc_prev.empty()) dc_prev[k] += dc * f;
        }
      });
}

Var neg_log_prob(Var probs, std::size_t gold, double floor) {
  const Tensor& pv = probs.value();
  require_rank(pv, 1, "neg_log_prob");
  if (gold >= pv.size()) {
    throw ShapeError("gold class " + std::to_string(gold) + " out of range for " +
                     std::to_string(pv.size()) + " classes");
  }
  const double p = pv[gold];
  const bool clamped = p < floor;
  const double loss = -std::log(clamped ? floor : p);
  return probs.tape().record(Tensor::scalar(loss), {probs.id()}, "neg_log_prob",
                             [ip = probs.id(), gold, p, clamped](std::span<const double> g,
                                                                 Gradients& grads) {
                               auto d = grads.accum(ip);
                               if (d.empty() || clamped) return;
                               d[gold] += -g[0] / p;
                             });
}

}  // namespace moto::ops
