#include "akd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <utility>

#include "akd/kernels.hpp"

namespace akd {

namespace {

void check_same_dims(const char* op, const Tensor& a, const Tensor& b) {
  if (a.dims() != b.dims())
    throw ShapeError(std::string(op) + ": dimension mismatch " + shape_str(a.dims()) + " vs " +
                     shape_str(b.dims()));
}

void accumulate(detail::TensorImpl* t, const double* g, int64_t n) {
  if (t->grad.empty()) t->grad.assign(t->values.size(), 0.0);
  for (int64_t i = 0; i < n; ++i) t->grad[i] += g[i];
}

}  // namespace

Tensor Tensor::zeros(Shape dims, bool requires_grad) {
  return full(std::move(dims), 0.0, requires_grad);
}

Tensor Tensor::full(Shape dims, double value, bool requires_grad) {
  auto impl = std::make_shared<detail::TensorImpl>();
  int64_t n = shape_numel(dims);
  impl->dims = std::move(dims);
  impl->values.assign(static_cast<size_t>(n), value);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from_values(Shape dims, std::vector<double> values, bool requires_grad) {
  if (shape_numel(dims) != static_cast<int64_t>(values.size()))
    throw ShapeError("from_values: " + shape_str(dims) + " holds " +
                     std::to_string(shape_numel(dims)) + " entries, got " +
                     std::to_string(values.size()));
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->dims = std::move(dims);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor " + shape_str(dims()) + " is not scalar");
  return impl_->values[0];
}

void Tensor::ensure_grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
}

void Tensor::zero_grad() { impl_->grad.assign(impl_->values.size(), 0.0); }

Tensor Tensor::detached_copy() const {
  return from_values(impl_->dims, impl_->values, false);
}

Tensor Graph::record(const char* kind, Tensor out, std::initializer_list<Tensor> inputs,
                     std::function<void()> backprop) {
  bool needs_grad = false;
  for (const Tensor& in : inputs) needs_grad |= in.requires_grad();
  if (needs_grad) {
    out.set_requires_grad(true);
    nodes_.push_back(Node{kind, out.handle(), std::move(backprop)});
  }
  return out;
}

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dims()[1] != b.dims()[0])
    throw ShapeError("matmul: incompatible dims " + shape_str(a.dims()) + " vs " +
                     shape_str(b.dims()));
  int64_t m = a.dims()[0], k = a.dims()[1], n = b.dims()[1];
  Tensor out = Tensor::zeros({m, n});
  kernels::matmul_nn(a.data(), b.data(), out.data(), m, k, n, false);
  return record("matmul", out, {a, b}, [a, b, out, m, k, n]() {
    const double* g = out.impl()->grad.data();
    if (a.requires_grad()) {
      a.impl()->grad.resize(a.values().size(), 0.0);
      kernels::matmul_nt(g, b.data(), a.impl()->grad.data(), m, n, k, true);
    }
    if (b.requires_grad()) {
      b.impl()->grad.resize(b.values().size(), 0.0);
      kernels::matmul_tn(a.data(), g, b.impl()->grad.data(), k, m, n, true);
    }
  });
}

Tensor Graph::elementwise(EwKind kind, const Tensor& a, const Tensor& b) {
  const char* names[] = {"add", "sub", "mul"};
  check_same_dims(names[static_cast<int>(kind)], a, b);
  int64_t n = a.numel();
  Tensor out = Tensor::zeros(a.dims());
  kernels::ew_binary(static_cast<int>(kind), a.data(), b.data(), out.data(), n);
  return record(names[static_cast<int>(kind)], out, {a, b}, [kind, a, b, out, n]() {
    const double* g = out.impl()->grad.data();
    switch (kind) {
      case EwKind::add:
        if (a.requires_grad()) accumulate(a.impl(), g, n);
        if (b.requires_grad()) accumulate(b.impl(), g, n);
        break;
      case EwKind::sub:
        if (a.requires_grad()) accumulate(a.impl(), g, n);
        if (b.requires_grad()) {
          b.impl()->grad.resize(b.values().size(), 0.0);
          kernels::acc_scale(b.impl()->grad.data(), g, -1.0, n);
        }
        break;
      case EwKind::mul:
        if (a.requires_grad()) {
          a.impl()->grad.resize(a.values().size(), 0.0);
          kernels::acc_mul(a.impl()->grad.data(), g, b.data(), n);
        }
        if (b.requires_grad()) {
          b.impl()->grad.resize(b.values().size(), 0.0);
          kernels::acc_mul(b.impl()->grad.data(), g, a.data(), n);
        }
        break;
    }
  });
}

Tensor Graph::divide(const Tensor& a, const Tensor& b) {
  check_same_dims("divide", a, b);
  int64_t n = a.numel();
  Tensor out = Tensor::zeros(a.dims());
  kernels::ew_binary(3, a.data(), b.data(), out.data(), n);
  return record("divide", out, {a, b}, [a, b, out, n]() {
    const double* g = out.impl()->grad.data();
    if (a.requires_grad()) {
      a.impl()->grad.resize(a.values().size(), 0.0);
      kernels::acc_div(a.impl()->grad.data(), g, b.data(), n);
    }
    if (b.requires_grad()) {
      b.impl()->grad.resize(b.values().size(), 0.0);
      kernels::acc_div_den(b.impl()->grad.data(), g, a.data(), b.data(), n);
    }
  });
}

Tensor Graph::add_scalar(const Tensor& a, double c) {
  int64_t n = a.numel();
  Tensor out = Tensor::zeros(a.dims());
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + c;
  return record("add_scalar", out, {a}, [a, out, n]() {
    accumulate(a.impl(), out.impl()->grad.data(), n);
  });
}

Tensor Graph::mul_scalar(const Tensor& a, double c) {
  int64_t n = a.numel();
  Tensor out = Tensor::zeros(a.dims());
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * c;
  return record("mul_scalar", out, {a}, [a, out, c, n]() {
    a.impl()->grad.resize(a.values().size(), 0.0);
    kernels::acc_scale(a.impl()->grad.data(), out.impl()->grad.data(), c, n);
  });
}

Tensor Graph::relu(const Tensor& x) {
  int64_t n = x.numel();
  Tensor out = Tensor::zeros(x.dims());
  kernels::relu_fwd(x.data(), out.data(), n);
  return record("relu", out, {x}, [x, out, n]() {
    x.impl()->grad.resize(x.values().size(), 0.0);
    kernels::relu_bwd(x.impl()->grad.data(), out.impl()->grad.data(), x.data(), n);
  });
}

Tensor Graph::log(const Tensor& x) {
  int64_t n = x.numel();
  Tensor out = Tensor::zeros(x.dims());
  for (int64_t i = 0; i < n; ++i) {
    if (!(x.data()[i] > 0.0))
      throw NumericError("log: non-positive input " + std::to_string(x.data()[i]));
    out.data()[i] = std::log(x.data()[i]);
  }
  return record("log", out, {x}, [x, out, n]() {
    x.impl()->grad.resize(x.values().size(), 0.0);
    kernels::acc_div(x.impl()->grad.data(), out.impl()->grad.data(), x.data(), n);
  });
}

Tensor Graph::sqrt(const Tensor& x) {
  int64_t n = x.numel();
  Tensor out = Tensor::zeros(x.dims());
  for (int64_t i = 0; i < n; ++i) {
    if (x.data()[i] < 0.0)
      throw NumericError("sqrt: negative input " + std::to_string(x.data()[i]));
    out.data()[i] = std::sqrt(x.data()[i]);
  }
  return record("sqrt", out, {x}, [x, out, n]() {
    auto& gx = x.impl()->grad;
    gx.resize(x.values().size(), 0.0);
    const double* g = out.impl()->grad.data();
    for (int64_t i = 0; i < n; ++i) gx[i] += g[i] / (2.0 * out.data()[i]);
  });
}

Tensor Graph::softmax_t(const Tensor& logits, double temperature) {
  if (!(temperature > 0.0))
    throw ParamError("softmax_t: temperature must be > 0, got " + std::to_string(temperature));
  if (logits.rank() != 1 && logits.rank() != 2)
    throw ShapeError("softmax_t: expected rank 1 or 2, got " + shape_str(logits.dims()));
  int64_t rows = logits.rank() == 2 ? logits.dims()[0] : 1;
  int64_t cols = logits.rank() == 2 ? logits.dims()[1] : logits.dims()[0];
  Tensor out = Tensor::zeros(logits.dims());
  kernels::softmax_rows(logits.data(), out.data(), rows, cols, temperature);
  return record("softmax_t", out, {logits}, [logits, out, rows, cols, temperature]() {
    logits.impl()->grad.resize(logits.values().size(), 0.0);
    kernels::softmax_rows_bwd(logits.impl()->grad.data(), out.impl()->grad.data(), out.data(),
                              rows, cols, temperature);
  });
}

Tensor Graph::log_softmax_t(const Tensor& logits, double temperature) {
  if (!(temperature > 0.0))
    throw ParamError("log_softmax_t: temperature must be > 0, got " + std::to_string(temperature));
  if (logits.rank() != 1 && logits.rank() != 2)
    throw ShapeError("log_softmax_t: expected rank 1 or 2, got " + shape_str(logits.dims()));
  int64_t rows = logits.rank() == 2 ? logits.dims()[0] : 1;
  int64_t cols = logits.rank() == 2 ? logits.dims()[1] : logits.dims()[0];
  Tensor out = Tensor::zeros(logits.dims());
  kernels::log_softmax_rows(logits.data(), out.data(), rows, cols, temperature);
  return record("log_softmax_t", out, {logits}, [logits, out, rows, cols, temperature]() {
    logits.impl()->grad.resize(logits.values().size(), 0.0);
    kernels::log_softmax_rows_bwd(logits.impl()->grad.data(), out.impl()->grad.data(), out.data(),
                                  rows, cols, temperature);
  });
}

Tensor Graph::xlogx(const Tensor& x) {
  int64_t n = x.numel();
  Tensor out = Tensor::zeros(x.dims());
  for (int64_t i = 0; i < n; ++i) {
    double v = x.data()[i];
    if (v < 0.0) throw NumericError("xlogx: negative input " + std::to_string(v));
    out.data()[i] = v == 0.0 ? 0.0 : v * std::log(v);
  }
  return record("xlogx", out, {x}, [x, out, n]() {
    auto& gx = x.impl()->grad;
    gx.resize(x.values().size(), 0.0);
    const double* g = out.impl()->grad.data();
    for (int64_t i = 0; i < n; ++i) {
      double v = x.data()[i];
      if (v > 0.0) gx[i] += g[i] * (std::log(v) + 1.0);
    }
  });
}

Tensor Graph::sum(const Tensor& x) {
  int64_t n = x.numel();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += x.data()[i];
  Tensor out = Tensor::scalar(acc);
  return record("sum", out, {x}, [x, out, n]() {
    double g = out.impl()->grad[0];
    auto& gx = x.impl()->grad;
    gx.resize(x.values().size(), 0.0);
    for (int64_t i = 0; i < n; ++i) gx[i] += g;
  });
}

Tensor Graph::mean(const Tensor& x) {
  int64_t n = x.numel();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += x.data()[i];
  Tensor out = Tensor::scalar(acc / static_cast<double>(n));
  return record("mean", out, {x}, [x, out, n]() {
    double g = out.impl()->grad[0] / static_cast<double>(n);
    auto& gx = x.impl()->grad;
    gx.resize(x.values().size(), 0.0);
    for (int64_t i = 0; i < n; ++i) gx[i] += g;
  });
}

Tensor Graph::reshape(const Tensor& x, Shape dims) {
  if (shape_numel(dims) != x.numel())
    throw ShapeError("reshape: " + shape_str(x.dims()) + " -> " + shape_str(dims) +
                     " changes element count");
  Tensor out = Tensor::from_values(std::move(dims), x.values());
  return record("reshape", out, {x}, [x, out]() {
    accumulate(x.impl(), out.impl()->grad.data(), x.numel());
  });
}

Tensor Graph::row(const Tensor& m, int64_t i) {
  if (m.rank() != 2) throw ShapeError("row: expected rank 2, got " + shape_str(m.dims()));
  int64_t r = m.dims()[0], c = m.dims()[1];
  if (i < 0 || i >= r) throw ShapeError("row: index " + std::to_string(i) + " out of range");
  Tensor out = Tensor::zeros({c});
  std::memcpy(out.data(), m.data() + i * c, sizeof(double) * static_cast<size_t>(c));
  return record("row", out, {m}, [m, out, i, c]() {
    auto& gm = m.impl()->grad;
    gm.resize(m.values().size(), 0.0);
    const double* g = out.impl()->grad.data();
    for (int64_t j = 0; j < c; ++j) gm[i * c + j] += g[j];
  });
}

Tensor Graph::col(const Tensor& m, int64_t j) {
  if (m.rank() != 2) throw ShapeError("col: expected rank 2, got " + shape_str(m.dims()));
  int64_t r = m.dims()[0], c = m.dims()[1];
  if (j < 0 || j >= c) throw ShapeError("col: index " + std::to_string(j) + " out of range");
  Tensor out = Tensor::zeros({r});
  for (int64_t i = 0; i < r; ++i) out.data()[i] = m.data()[i * c + j];
  return record("col", out, {m}, [m, out, j, r, c]() {
    auto& gm = m.impl()->grad;
    gm.resize(m.values().size(), 0.0);
    const double* g = out.impl()->grad.data();
    for (int64_t i = 0; i < r; ++i) gm[i * c + j] += g[i];
  });
}

Tensor Graph::concat_cols(const std::vector<Tensor>& cols) {
  if (cols.empty()) throw ShapeError("concat_cols: empty input");
  int64_t r = cols[0].numel();
  int64_t m = static_cast<int64_t>(cols.size());
  for (const Tensor& c : cols)
    if (c.rank() != 1 || c.numel() != r)
      throw ShapeError("concat_cols: mismatched column " + shape_str(c.dims()));
  Tensor out = Tensor::zeros({r, m});
  for (int64_t j = 0; j < m; ++j)
    for (int64_t i = 0; i < r; ++i) out.data()[i * m + j] = cols[static_cast<size_t>(j)].data()[i];
  bool needs_grad = false;
  for (const Tensor& c : cols) needs_grad |= c.requires_grad();
  if (!needs_grad) return out;
  out.set_requires_grad(true);
  Tensor out_handle = out;
  auto cols_copy = cols;
  nodes_.push_back(Node{"concat_cols", out.handle(), [cols_copy, out_handle, r, m]() {
                          const double* g = out_handle.impl()->grad.data();
                          for (int64_t j = 0; j < m; ++j) {
                            const Tensor& c = cols_copy[static_cast<size_t>(j)];
                            if (!c.requires_grad()) continue;
                            auto& gc = c.impl()->grad;
                            gc.resize(c.values().size(), 0.0);
                            for (int64_t i = 0; i < r; ++i) gc[i] += g[i * m + j];
                          }
                        }});
  return out;
}

Tensor Graph::scale_rows(const Tensor& m, const Tensor& s) {
  if (m.rank() != 2 || s.rank() != 1 || m.dims()[0] != s.dims()[0])
    throw ShapeError("scale_rows: " + shape_str(m.dims()) + " vs " + shape_str(s.dims()));
  int64_t r = m.dims()[0], c = m.dims()[1];
  Tensor out = Tensor::zeros(m.dims());
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out.data()[i * c + j] = m.data()[i * c + j] * s.data()[i];
  return record("scale_rows", out, {m, s}, [m, s, out, r, c]() {
    const double* g = out.impl()->grad.data();
    if (m.requires_grad()) {
      auto& gm = m.impl()->grad;
      gm.resize(m.values().size(), 0.0);
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) gm[i * c + j] += g[i * c + j] * s.data()[i];
    }
    if (s.requires_grad()) {
      auto& gs = s.impl()->grad;
      gs.resize(s.values().size(), 0.0);
      for (int64_t i = 0; i < r; ++i) {
        double acc = 0.0;
        for (int64_t j = 0; j < c; ++j) acc += g[i * c + j] * m.data()[i * c + j];
        gs[i] += acc;
      }
    }
  });
}

Tensor Graph::bias_add(const Tensor& m, const Tensor& b) {
  if (m.rank() != 2 || b.rank() != 1 || m.dims()[1] != b.dims()[0])
    throw ShapeError("bias_add: " + shape_str(m.dims()) + " vs " + shape_str(b.dims()));
  int64_t r = m.dims()[0], c = m.dims()[1];
  Tensor out = Tensor::zeros(m.dims());
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out.data()[i * c + j] = m.data()[i * c + j] + b.data()[j];
  return record("bias_add", out, {m, b}, [m, b, out, r, c]() {
    const double* g = out.impl()->grad.data();
    if (m.requires_grad()) accumulate(m.impl(), g, r * c);
    if (b.requires_grad()) {
      auto& gb = b.impl()->grad;
      gb.resize(b.values().size(), 0.0);
      for (int64_t j = 0; j < c; ++j) {
        double acc = 0.0;
        for (int64_t i = 0; i < r; ++i) acc += g[i * c + j];
        gb[j] += acc;
      }
    }
  });
}

Tensor Graph::gather_classes(const Tensor& m, const std::vector<int>& labels) {
  if (m.rank() != 2) throw ShapeError("gather_classes: expected rank 2, got " + shape_str(m.dims()));
  int64_t r = m.dims()[0], c = m.dims()[1];
  if (static_cast<int64_t>(labels.size()) != r)
    throw ShapeError("gather_classes: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(r) + " rows");
  for (int64_t i = 0; i < r; ++i)
    if (labels[static_cast<size_t>(i)] < 0 || labels[static_cast<size_t>(i)] >= c)
      throw DataError("gather_classes: label " + std::to_string(labels[static_cast<size_t>(i)]) +
                      " out of range [0," + std::to_string(c) + ") at row " + std::to_string(i));
  Tensor out = Tensor::zeros({r});
  for (int64_t i = 0; i < r; ++i) out.data()[i] = m.data()[i * c + labels[static_cast<size_t>(i)]];
  return record("gather_classes", out, {m}, [m, out, labels, r, c]() {
    auto& gm = m.impl()->grad;
    gm.resize(m.values().size(), 0.0);
    const double* g = out.impl()->grad.data();
    for (int64_t i = 0; i < r; ++i) gm[i * c + labels[static_cast<size_t>(i)]] += g[i];
  });
}

Tensor Graph::global_max_pool(const Tensor& x) {
  if (x.rank() != 3)
    throw ShapeError("global_max_pool: expected rank 3 [C,H,W], got " + shape_str(x.dims()));
  int64_t c = x.dims()[0], plane = x.dims()[1] * x.dims()[2];
  Tensor out = Tensor::zeros({c});
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(c));
  kernels::maxpool_planes(x.data(), out.data(), argmax->data(), c, plane);
  return record("global_max_pool", out, {x}, [x, out, argmax, c, plane]() {
    auto& gx = x.impl()->grad;
    gx.resize(x.values().size(), 0.0);
    const double* g = out.impl()->grad.data();
    for (int64_t r = 0; r < c; ++r) gx[r * plane + (*argmax)[static_cast<size_t>(r)]] += g[r];
  });
}

Tensor Graph::global_max_pool_batch(const Tensor& x) {
  if (x.rank() != 4)
    throw ShapeError("global_max_pool_batch: expected rank 4 [B,C,H,W], got " +
                     shape_str(x.dims()));
  int64_t rows = x.dims()[0] * x.dims()[1], plane = x.dims()[2] * x.dims()[3];
  Tensor out = Tensor::zeros({x.dims()[0], x.dims()[1]});
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(rows));
  kernels::maxpool_planes(x.data(), out.data(), argmax->data(), rows, plane);
  return record("global_max_pool_batch", out, {x}, [x, out, argmax, rows, plane]() {
    auto& gx = x.impl()->grad;
    gx.resize(x.values().size(), 0.0);
    const double* g = out.impl()->grad.data();
    for (int64_t r = 0; r < rows; ++r) gx[r * plane + (*argmax)[static_cast<size_t>(r)]] += g[r];
  });
}

Tensor Graph::conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 4) throw ShapeError("conv2d: input must be [B,Ci,H,W], got " + shape_str(x.dims()));
  if (w.rank() != 4 || w.dims()[2] != 3 || w.dims()[3] != 3)
    throw ShapeError("conv2d: weight must be [Co,Ci,3,3], got " + shape_str(w.dims()));
  if (x.dims()[1] != w.dims()[1])
    throw ShapeError("conv2d: channel mismatch " + shape_str(x.dims()) + " vs " +
                     shape_str(w.dims()));
  if (b.rank() != 1 || b.dims()[0] != w.dims()[0])
    throw ShapeError("conv2d: bias must be [Co], got " + shape_str(b.dims()));
  int64_t B = x.dims()[0], Ci = x.dims()[1], H = x.dims()[2], W = x.dims()[3], Co = w.dims()[0];
  Tensor out = Tensor::zeros({B, Co, H, W});
  kernels::conv3x3_fwd(x.data(), w.data(), b.data(), out.data(), B, Ci, Co, H, W);
  return record("conv2d", out, {x, w, b}, [x, w, b, out, B, Ci, Co, H, W]() {
    const double* g = out.impl()->grad.data();
    if (x.requires_grad()) {
      x.impl()->grad.resize(x.values().size(), 0.0);
      kernels::conv3x3_bwd_input(x.impl()->grad.data(), g, w.data(), B, Ci, Co, H, W);
    }
    if (w.requires_grad()) {
      w.impl()->grad.resize(w.values().size(), 0.0);
      kernels::conv3x3_bwd_weight(w.impl()->grad.data(), g, x.data(), B, Ci, Co, H, W);
    }
    if (b.requires_grad()) {
      auto& gb = b.impl()->grad;
      gb.resize(b.values().size(), 0.0);
      for (int64_t co = 0; co < Co; ++co) {
        double acc = 0.0;
        for (int64_t bi = 0; bi < B; ++bi) {
          const double* gp = g + ((bi * Co + co) * H) * W;
          for (int64_t i = 0; i < H * W; ++i) acc += gp[i];
        }
        gb[co] += acc;
      }
    }
  });
}

void Graph::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ShapeError("backward: loss must be scalar, got " +
                     (loss.defined() ? shape_str(loss.dims()) : std::string("undefined")));
  // Intermediate grads are per-pass scratch; leaf grads persist and
  // accumulate across calls.
  for (Node& n : nodes_)
    if (!n.out->grad.empty()) std::fill(n.out->grad.begin(), n.out->grad.end(), 0.0);
  loss.impl()->grad.resize(1, 0.0);
  loss.impl()->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->out->grad.empty()) continue;  // nothing flowed here
    it->backprop();
  }
}

}  // namespace akd
