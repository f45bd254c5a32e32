// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cczsl/numcore/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <string>

#include "cczsl/common/errors.hpp"
#include "cczsl/numcore/tape.hpp"

namespace cczsl::numcore {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::RowVectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::RowVectorXd>;

ConstMatMap cmat(const std::vector<double>& v, std::size_t r, std::size_t c) {
  return ConstMatMap(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
MatMap mmat(std::vector<double>& v, std::size_t r, std::size_t c) {
  return MatMap(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

using Backprop = std::function<void(const TensorStorage& out)>;

// Gradient buffer of an input, or nullptr when it does not take gradients.
double* grad_of(TensorStorage* s) { return s->requires_grad ? s->grad.data() : nullptr; }

Tensor finish(const char* op, Shape shape, std::vector<double> values,
              std::initializer_list<const Tensor*> inputs, Backprop backprop) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + " produced a non-finite value");
  }
  auto out = std::make_shared<TensorStorage>();
  out->shape = std::move(shape);
  out->value = std::move(values);

  Tape* tape = Tape::active();
  bool needs_grad = false;
  for (const Tensor* t : inputs) needs_grad = needs_grad || t->requires_grad();
  if (tape != nullptr && needs_grad) {
    out->requires_grad = true;
    out->leaf = false;
    Tape::Node node;
    for (const Tensor* t : inputs) node.inputs.push_back(t->storage());
    node.output = out;
    TensorStorage* raw = out.get();
    node.backprop = [raw, fn = std::move(backprop)]() { fn(*raw); };
    tape->record(std::move(node));
  }
  return Tensor::wrap(std::move(out));
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* name) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + name + " must have rank " +
                         std::to_string(rank) + ", got " + shape_string(t.shape()));
  }
}

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                       " vs " + shape_string(b.shape()));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) mismatch(op, a, b);
}

void require_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw DomainError("softmax temperature must be positive, got " + std::to_string(tau));
  }
}

thread_local KinkProbe* t_probe = nullptr;

template <typename F>
Tensor unary(const char* op, const Tensor& x, F&& f, std::function<double(double x, double y)> dydx) {
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  TensorStorage* xs = x.storage().get();
  return finish(op, x.shape(), std::move(out), {&x}, [xs, dydx](const TensorStorage& o) {
    double* gx = grad_of(xs);
    if (!gx) return;
    for (std::size_t i = 0; i < o.value.size(); ++i) gx[i] += o.grad[i] * dydx(xs->value[i], o.value[i]);
  });
}

}  // namespace

KinkProbe::KinkProbe() : previous_(t_probe), margin_(std::numeric_limits<double>::infinity()) {
  t_probe = this;
}
KinkProbe::~KinkProbe() { t_probe = previous_; }
double KinkProbe::min_margin() const { return margin_; }

void note_kink_margin(double distance) {
  for (KinkProbe* p = t_probe; p != nullptr; p = p->previous_) {
    p->margin_ = std::min(p->margin_, distance);
  }
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank(x, 2, "affine", "x");
  require_rank(w, 2, "affine", "W");
  require_rank(b, 1, "affine", "b");
  if (x.cols() != w.rows() || b.size() != w.cols()) {
    throw DimensionError("affine: x " + shape_string(x.shape()) + " * W " +
                         shape_string(w.shape()) + " + b " + shape_string(b.shape()));
  }
  const std::size_t n = x.rows(), p = x.cols(), q = w.cols();
  std::vector<double> out(n * q);
  auto& xv = x.storage()->value;
  auto& wv = w.storage()->value;
  auto& bv = b.storage()->value;
  mmat(out, n, q).noalias() = cmat(xv, n, p) * cmat(wv, p, q);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < q; ++j) out[i * q + j] += bv[j];
  TensorStorage *xs = x.storage().get(), *ws = w.storage().get(), *bs = b.storage().get();
  return finish("affine", {n, q}, std::move(out), {&x, &w, &b},
                [xs, ws, bs, n, p, q](const TensorStorage& o) {
                  auto dout = cmat(o.grad, n, q);
                  if (xs->requires_grad)
                    mmat(xs->grad, n, p).noalias() += dout * cmat(ws->value, p, q).transpose();
                  if (ws->requires_grad)
                    mmat(ws->grad, p, q).noalias() += cmat(xs->value, n, p).transpose() * dout;
                  if (bs->requires_grad)
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j < q; ++j) bs->grad[j] += o.grad[i * q + j];
                });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul", "a");
  require_rank(b, 2, "matmul", "b");
  if (a.cols() != b.rows()) mismatch("matmul", a, b);
  const std::size_t n = a.rows(), p = a.cols(), q = b.cols();
  std::vector<double> out(n * q);
  mmat(out, n, q).noalias() = cmat(a.storage()->value, n, p) * cmat(b.storage()->value, p, q);
  TensorStorage *as = a.storage().get(), *bs = b.storage().get();
  return finish("matmul", {n, q}, std::move(out), {&a, &b}, [as, bs, n, p, q](const TensorStorage& o) {
    auto dout = cmat(o.grad, n, q);
    if (as->requires_grad)
      mmat(as->grad, n, p).noalias() += dout * cmat(bs->value, p, q).transpose();
    if (bs->requires_grad)
      mmat(bs->grad, p, q).noalias() += cmat(as->value, n, p).transpose() * dout;
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt", "a");
  require_rank(b, 2, "matmul_nt", "b");
  if (a.cols() != b.cols()) mismatch("matmul_nt", a, b);
  const std::size_t n = a.rows(), d = a.cols(), k = b.rows();
  std::vector<double> out(n * k);
  mmat(out, n, k).noalias() = cmat(a.storage()->value, n, d) * cmat(b.storage()->value, k, d).transpose();
  TensorStorage *as = a.storage().get(), *bs = b.storage().get();
  return finish("matmul_nt", {n, k}, std::move(out), {&a, &b}, [as, bs, n, d, k](const TensorStorage& o) {
    auto dout = cmat(o.grad, n, k);
    if (as->requires_grad) mmat(as->grad, n, d).noalias() += dout * cmat(bs->value, k, d);
    if (bs->requires_grad) mmat(bs->grad, k, d).noalias() += dout.transpose() * cmat(as->value, n, d);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  TensorStorage *as = a.storage().get(), *bs = b.storage().get();
  return finish("add", a.shape(), std::move(out), {&a, &b}, [as, bs](const TensorStorage& o) {
    if (double* g = grad_of(as)) for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    if (double* g = grad_of(bs)) for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  TensorStorage *as = a.storage().get(), *bs = b.storage().get();
  return finish("sub", a.shape(), std::move(out), {&a, &b}, [as, bs](const TensorStorage& o) {
    if (double* g = grad_of(as)) for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    if (double* g = grad_of(bs)) for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] -= o.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  TensorStorage *as = a.storage().get(), *bs = b.storage().get();
  return finish("mul", a.shape(), std::move(out), {&a, &b}, [as, bs](const TensorStorage& o) {
    if (double* g = grad_of(as))
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * bs->value[i];
    if (double* g = grad_of(bs))
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * as->value[i];
  });
}

Tensor add_row(const Tensor& x, const Tensor& r) {
  require_rank(x, 2, "add_row", "x");
  require_rank(r, 1, "add_row", "r");
  if (x.cols() != r.size()) mismatch("add_row", x, r);
  const std::size_t n = x.rows(), q = x.cols();
  std::vector<double> out(n * q);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < q; ++j) out[i * q + j] = x[i * q + j] + r[j];
  TensorStorage *xs = x.storage().get(), *rs = r.storage().get();
  return finish("add_row", x.shape(), std::move(out), {&x, &r}, [xs, rs, n, q](const TensorStorage& o) {
    if (double* g = grad_of(xs)) for (std::size_t i = 0; i < n * q; ++i) g[i] += o.grad[i];
    if (double* g = grad_of(rs))
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < q; ++j) g[j] += o.grad[i * q + j];
  });
}

Tensor scale(const Tensor& x, double c) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * x[i];
  TensorStorage* xs = x.storage().get();
  return finish("scale", x.shape(), std::move(out), {&x}, [xs, c](const TensorStorage& o) {
    if (double* g = grad_of(xs)) for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += c * o.grad[i];
  });
}

Tensor mul_scalar(const Tensor& x, const Tensor& s) {
  if (s.size() != 1) mismatch("mul_scalar", x, s);
  const double c = s[0];
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * x[i];
  TensorStorage *xs = x.storage().get(), *ss = s.storage().get();
  return finish("mul_scalar", x.shape(), std::move(out), {&x, &s}, [xs, ss](const TensorStorage& o) {
    const double c = ss->value[0];
    if (double* g = grad_of(xs)) for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += c * o.grad[i];
    if (double* g = grad_of(ss)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < o.grad.size(); ++i) acc += o.grad[i] * xs->value[i];
      g[0] += acc;
    }
  });
}

Tensor exp(const Tensor& x) {
  return unary("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.values()) {
    if (!(v > 0.0)) throw DomainError("log of a non-positive value " + std::to_string(v));
  }
  return unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor log_clamped(const Tensor& x, double floor) {
  if (!(floor > 0.0)) throw DomainError("log_clamped floor must be positive");
  return unary(
      "log_clamped", x, [floor](double v) { return std::log(std::max(v, floor)); },
      [floor](double v, double) { return v > floor ? 1.0 / v : 0.0; });
}

Tensor tanh(const Tensor& x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  if (t_probe != nullptr)
    for (double v : x.values()) note_kink_margin(std::fabs(v));
  return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor abs(const Tensor& x) {
  if (t_probe != nullptr)
    for (double v : x.values()) note_kink_margin(std::fabs(v));
  return unary("abs", x, [](double v) { return std::fabs(v); },
               [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  TensorStorage* xs = x.storage().get();
  return finish("sum", {1}, {acc}, {&x}, [xs](const TensorStorage& o) {
    if (double* g = grad_of(xs)) for (std::size_t i = 0; i < xs->value.size(); ++i) g[i] += o.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor sum_rows(const Tensor& x) {
  require_rank(x, 2, "sum_rows", "x");
  const std::size_t n = x.rows(), q = x.cols();
  std::vector<double> out(q, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < q; ++j) out[j] += x[i * q + j];
  TensorStorage* xs = x.storage().get();
  return finish("sum_rows", {q}, std::move(out), {&x}, [xs, n, q](const TensorStorage& o) {
    if (double* g = grad_of(xs))
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < q; ++j) g[i * q + j] += o.grad[j];
  });
}

Tensor mean_rows(const Tensor& x) {
  require_rank(x, 2, "mean_rows", "x");
  return scale(sum_rows(x), 1.0 / static_cast<double>(x.rows()));
}

Tensor pool_groups(const Tensor& x, std::size_t group) {
  require_rank(x, 2, "pool_groups", "x");
  if (group == 0 || x.rows() % group != 0) {
    throw DimensionError("pool_groups: " + shape_string(x.shape()) + " is not divisible into groups of " +
                         std::to_string(group));
  }
  const std::size_t n = x.rows() / group, q = x.cols();
  const double inv = 1.0 / static_cast<double>(group);
  std::vector<double> out(n * q, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t l = 0; l < group; ++l)
      for (std::size_t j = 0; j < q; ++j) out[s * q + j] += x[(s * group + l) * q + j];
  for (double& v : out) v *= inv;
  TensorStorage* xs = x.storage().get();
  return finish("pool_groups", {n, q}, std::move(out), {&x}, [xs, n, q, group, inv](const TensorStorage& o) {
    if (double* g = grad_of(xs))
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t l = 0; l < group; ++l)
          for (std::size_t j = 0; j < q; ++j) g[(s * group + l) * q + j] += inv * o.grad[s * q + j];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (element_count(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  TensorStorage* xs = x.storage().get();
  return finish("reshape", std::move(shape), std::move(out), {&x}, [xs](const TensorStorage& o) {
    if (double* g = grad_of(xs)) for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t q = parts[0].cols();
  std::size_t n = 0;
  for (const Tensor& t : parts) {
    if (t.rank() > 2 || t.cols() != q) mismatch("concat_rows", parts[0], t);
    n += t.rows();
  }
  std::vector<double> out;
  out.reserve(n * q);
  std::vector<TensorStorage*> storages;
  for (const Tensor& t : parts) {
    out.insert(out.end(), t.values().begin(), t.values().end());
    storages.push_back(t.storage().get());
  }
  // finish() takes an initializer list, so record the node by hand.
  for (double v : out) {
    if (!std::isfinite(v)) throw NumericError("concat_rows produced a non-finite value");
  }
  auto result = std::make_shared<TensorStorage>();
  result->shape = {n, q};
  result->value = std::move(out);
  Tape* tape = Tape::active();
  bool needs_grad = false;
  for (const Tensor& t : parts) needs_grad = needs_grad || t.requires_grad();
  if (tape != nullptr && needs_grad) {
    result->requires_grad = true;
    result->leaf = false;
    Tape::Node node;
    for (const Tensor& t : parts) node.inputs.push_back(t.storage());
    node.output = result;
    TensorStorage* raw = result.get();
    node.backprop = [raw, storages]() {
      std::size_t offset = 0;
      for (TensorStorage* s : storages) {
        const std::size_t len = s->value.size();
        if (double* g = grad_of(s))
          for (std::size_t i = 0; i < len; ++i) g[i] += raw->grad[offset + i];
        offset += len;
      }
    };
    tape->record(std::move(node));
  }
  return Tensor::wrap(std::move(result));
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t n = parts[0].rows();
  std::size_t q = 0;
  std::vector<std::size_t> widths;
  for (const Tensor& t : parts) {
    require_rank(t, 2, "concat_cols", "part");
    if (t.rows() != n) mismatch("concat_cols", parts[0], t);
    widths.push_back(t.cols());
    q += t.cols();
  }
  std::vector<double> out(n * q);
  std::vector<TensorStorage*> storages;
  std::size_t col = 0;
  for (const Tensor& t : parts) {
    const std::size_t w = t.cols();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * q + col + j] = t[i * w + j];
    col += w;
    storages.push_back(t.storage().get());
  }
  auto result = std::make_shared<TensorStorage>();
  result->shape = {n, q};
  result->value = std::move(out);
  Tape* tape = Tape::active();
  bool needs_grad = false;
  for (const Tensor& t : parts) needs_grad = needs_grad || t.requires_grad();
  if (tape != nullptr && needs_grad) {
    result->requires_grad = true;
    result->leaf = false;
    Tape::Node node;
    for (const Tensor& t : parts) node.inputs.push_back(t.storage());
    node.output = result;
    TensorStorage* raw = result.get();
    node.backprop = [raw, storages, widths, n, q]() {
      std::size_t col = 0;
      for (std::size_t p = 0; p < storages.size(); ++p) {
        const std::size_t w = widths[p];
        if (double* g = grad_of(storages[p]))
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < w; ++j) g[i * w + j] += raw->grad[i * q + col + j];
        col += w;
      }
    };
    tape->record(std::move(node));
  }
  return Tensor::wrap(std::move(result));
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_rows", "x");
  if (begin >= end || end > x.rows()) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") outside " + shape_string(x.shape()));
  }
  const std::size_t q = x.cols();
  std::vector<double> out(x.values().begin() + begin * q, x.values().begin() + end * q);
  TensorStorage* xs = x.storage().get();
  return finish("slice_rows", {end - begin, q}, std::move(out), {&x}, [xs, begin, q](const TensorStorage& o) {
    if (double* g = grad_of(xs))
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[begin * q + i] += o.grad[i];
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_rank(x, 2, "gather_rows", "x");
  if (rows.empty()) throw DimensionError("gather_rows: empty index list");
  const std::size_t q = x.cols();
  std::vector<double> out(rows.size() * q);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.rows()) {
      throw IndexError("gather_rows: row " + std::to_string(rows[i]) + " outside " + shape_string(x.shape()));
    }
    std::copy_n(x.values().begin() + rows[i] * q, q, out.begin() + i * q);
  }
  TensorStorage* xs = x.storage().get();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return finish("gather_rows", {rows.size(), q}, std::move(out), {&x}, [xs, idx, q](const TensorStorage& o) {
    if (double* g = grad_of(xs))
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < q; ++j) g[idx[i] * q + j] += o.grad[i * q + j];
  });
}

Tensor gather_cols(const Tensor& x, std::span<const std::size_t> cols) {
  require_rank(x, 2, "gather_cols", "x");
  if (cols.empty()) throw DimensionError("gather_cols: empty index list");
  const std::size_t n = x.rows(), q = x.cols(), k = cols.size();
  for (std::size_t c : cols) {
    if (c >= q) throw IndexError("gather_cols: column " + std::to_string(c) + " outside " + shape_string(x.shape()));
  }
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = x[i * q + cols[j]];
  TensorStorage* xs = x.storage().get();
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  return finish("gather_cols", {n, k}, std::move(out), {&x}, [xs, idx, n, q, k](const TensorStorage& o) {
    if (double* g = grad_of(xs))
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) g[i * q + idx[j]] += o.grad[i * k + j];
  });
}

Tensor tile_rows(const Tensor& x, std::size_t times) {
  require_rank(x, 2, "tile_rows", "x");
  if (times == 0) throw DimensionError("tile_rows: zero repetitions");
  const std::size_t block = x.size();
  std::vector<double> out;
  out.reserve(block * times);
  for (std::size_t t = 0; t < times; ++t) out.insert(out.end(), x.values().begin(), x.values().end());
  TensorStorage* xs = x.storage().get();
  return finish("tile_rows", {x.rows() * times, x.cols()}, std::move(out), {&x},
                [xs, block, times](const TensorStorage& o) {
                  if (double* g = grad_of(xs))
                    for (std::size_t t = 0; t < times; ++t)
                      for (std::size_t i = 0; i < block; ++i) g[i] += o.grad[t * block + i];
                });
}

Tensor pick(const Tensor& x, std::span<const std::size_t> index) {
  require_rank(x, 2, "pick", "x");
  const std::size_t n = x.rows(), k = x.cols();
  if (index.size() != n) {
    throw DimensionError("pick: " + std::to_string(index.size()) + " indices for " + shape_string(x.shape()));
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (index[i] >= k) throw IndexError("pick: column " + std::to_string(index[i]) + " outside " + shape_string(x.shape()));
    out[i] = x[i * k + index[i]];
  }
  TensorStorage* xs = x.storage().get();
  std::vector<std::size_t> idx(index.begin(), index.end());
  return finish("pick", {n}, std::move(out), {&x}, [xs, idx, k](const TensorStorage& o) {
    if (double* g = grad_of(xs))
      for (std::size_t i = 0; i < idx.size(); ++i) g[i * k + idx[i]] += o.grad[i];
  });
}

Tensor l2_normalize(const Tensor& x) {
  require_rank(x, 1, "l2_normalize", "x");
  return reshape(l2_normalize_rows(reshape(x, {1, x.size()})), {x.size()});
}

Tensor l2_normalize_rows(const Tensor& x) {
  require_rank(x, 2, "l2_normalize_rows", "x");
  const std::size_t n = x.rows(), q = x.cols();
  std::vector<double> out(n * q), norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < q; ++j) s += x[i * q + j] * x[i * q + j];
    norms[i] = std::sqrt(s);
    if (!(norms[i] > 0.0)) throw DegenerateVectorError("l2_normalize: row " + std::to_string(i) + " has zero norm");
    for (std::size_t j = 0; j < q; ++j) out[i * q + j] = x[i * q + j] / norms[i];
  }
  TensorStorage* xs = x.storage().get();
  return finish("l2_normalize_rows", x.shape(), std::move(out), {&x}, [xs, norms, n, q](const TensorStorage& o) {
    double* g = grad_of(xs);
    if (!g) return;
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < q; ++j) dot += o.value[i * q + j] * o.grad[i * q + j];
      for (std::size_t j = 0; j < q; ++j)
        g[i * q + j] += (o.grad[i * q + j] - o.value[i * q + j] * dot) / norms[i];
    }
  });
}

namespace {

void softmax_row(const double* z, double* p, std::size_t k, double tau) {
  double mx = z[0];
  for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, z[j]);
  double s = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    p[j] = std::exp((z[j] - mx) / tau);
    s += p[j];
  }
  for (std::size_t j = 0; j < k; ++j) p[j] /= s;
}

Tensor softmax_impl(const char* op, const Tensor& x, double tau, std::size_t n, std::size_t k) {
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i) softmax_row(x.values().data() + i * k, out.data() + i * k, k, tau);
  TensorStorage* xs = x.storage().get();
  return finish(op, x.shape(), std::move(out), {&x}, [xs, n, k, tau](const TensorStorage& o) {
    double* g = grad_of(xs);
    if (!g) return;
    for (std::size_t i = 0; i < n; ++i) {
      const double* p = o.value.data() + i * k;
      const double* dp = o.grad.data() + i * k;
      double dot = 0.0;
      for (std::size_t j = 0; j < k; ++j) dot += p[j] * dp[j];
      for (std::size_t j = 0; j < k; ++j) g[i * k + j] += p[j] * (dp[j] - dot) / tau;
    }
  });
}

}  // namespace

Tensor softmax_t(const Tensor& z, double tau) {
  require_tau(tau);
  require_rank(z, 1, "softmax_t", "z");
  return softmax_impl("softmax_t", z, tau, 1, z.size());
}

Tensor softmax_rows(const Tensor& x, double tau) {
  require_tau(tau);
  require_rank(x, 2, "softmax_rows", "x");
  return softmax_impl("softmax_rows", x, tau, x.rows(), x.cols());
}

Tensor log_softmax_rows(const Tensor& x, double tau) {
  require_tau(tau);
  require_rank(x, 2, "log_softmax_rows", "x");
  const std::size_t n = x.rows(), k = x.cols();
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = x.values().data() + i * k;
    double mx = z[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, z[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp((z[j] - mx) / tau);
    const double lse = std::log(s);
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = (z[j] - mx) / tau - lse;
  }
  TensorStorage* xs = x.storage().get();
  return finish("log_softmax_rows", x.shape(), std::move(out), {&x}, [xs, n, k, tau](const TensorStorage& o) {
    double* g = grad_of(xs);
    if (!g) return;
    for (std::size_t i = 0; i < n; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < k; ++j) total += o.grad[i * k + j];
      for (std::size_t j = 0; j < k; ++j)
        g[i * k + j] += (o.grad[i * k + j] - std::exp(o.value[i * k + j]) * total) / tau;
    }
  });
}

Tensor cosine(const Tensor& u, const Tensor& v) {
  if (u.rank() != 1 || u.shape() != v.shape()) mismatch("cosine", u, v);
  double uu = 0.0, vv = 0.0, uv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uu += u[i] * u[i];
    vv += v[i] * v[i];
    uv += u[i] * v[i];
  }
  const double nu = std::sqrt(uu), nv = std::sqrt(vv);
  if (!(nu > 0.0) || !(nv > 0.0)) throw DegenerateVectorError("cosine of a zero-norm vector");
  const double c = uv / (nu * nv);
  TensorStorage *us = u.storage().get(), *vs = v.storage().get();
  return finish("cosine", {1}, {c}, {&u, &v}, [us, vs, nu, nv, c](const TensorStorage& o) {
    const double g0 = o.grad[0];
    const std::size_t d = us->value.size();
    if (double* g = grad_of(us))
      for (std::size_t i = 0; i < d; ++i)
        g[i] += g0 * (vs->value[i] / (nu * nv) - c * us->value[i] / (nu * nu));
    if (double* g = grad_of(vs))
      for (std::size_t i = 0; i < d; ++i)
        g[i] += g0 * (us->value[i] / (nu * nv) - c * vs->value[i] / (nv * nv));
  });
}

Tensor cross_attention(const Tensor& q, const Tensor& keys, const Tensor& values, std::size_t group) {
  require_rank(q, 2, "cross_attention", "queries");
  require_rank(keys, 2, "cross_attention", "keys");
  require_rank(values, 2, "cross_attention", "values");
  if (q.cols() != keys.cols()) mismatch("cross_attention", q, keys);
  if (keys.rows() != values.rows()) mismatch("cross_attention", keys, values);
  if (group == 0 || keys.rows() % group != 0) {
    throw DimensionError("cross_attention: " + std::to_string(keys.rows()) + " key rows are not groups of " +
                         std::to_string(group));
  }
  const std::size_t k = q.rows(), d = q.cols(), dv = values.cols(), n = keys.rows() / group;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  auto weights = std::make_shared<std::vector<double>>(n * k * group);
  std::vector<double> out(n * k * dv);
  auto qm = cmat(q.storage()->value, k, d);
  for (std::size_t s = 0; s < n; ++s) {
    auto ks = cmat(keys.storage()->value, keys.rows(), d).middleRows(s * group, group);
    auto vs = cmat(values.storage()->value, values.rows(), dv).middleRows(s * group, group);
    auto a = mmat(*weights, n * k, group).middleRows(s * k, k);
    a.noalias() = (qm * ks.transpose()) * inv_sqrt_d;
    for (std::size_t i = 0; i < k; ++i) {
      double* row = weights->data() + (s * k + i) * group;
      softmax_row(row, row, group, 1.0);
    }
    mmat(out, n * k, dv).middleRows(s * k, k).noalias() = a * vs;
  }
  TensorStorage *qs = q.storage().get(), *kst = keys.storage().get(), *vst = values.storage().get();
  return finish("cross_attention", {n * k, dv}, std::move(out), {&q, &keys, &values},
                [qs, kst, vst, weights, k, d, dv, n, group, inv_sqrt_d](const TensorStorage& o) {
                  RowMat da(k, group), ds(k, group);
                  for (std::size_t s = 0; s < n; ++s) {
                    auto dout = cmat(o.grad, n * k, dv).middleRows(s * k, k);
                    auto a = cmat(*weights, n * k, group).middleRows(s * k, k);
                    auto ks = cmat(kst->value, n * group, d).middleRows(s * group, group);
                    auto vs = cmat(vst->value, n * group, dv).middleRows(s * group, group);
                    da.noalias() = dout * vs.transpose();
                    if (vst->requires_grad)
                      mmat(vst->grad, n * group, dv).middleRows(s * group, group).noalias() += a.transpose() * dout;
                    for (std::size_t i = 0; i < k; ++i) {
                      double dot = 0.0;
                      for (std::size_t l = 0; l < group; ++l) dot += da(i, l) * a(i, l);
                      for (std::size_t l = 0; l < group; ++l) ds(i, l) = a(i, l) * (da(i, l) - dot) * inv_sqrt_d;
                    }
                    if (qs->requires_grad) mmat(qs->grad, k, d).noalias() += ds * ks;
                    if (kst->requires_grad)
                      mmat(kst->grad, n * group, d).middleRows(s * group, group).noalias() +=
                          ds.transpose() * cmat(qs->value, k, d);
                  }
                });
}

Tensor group_dot(const Tensor& v, const Tensor& e) {
  require_rank(v, 2, "group_dot", "v");
  require_rank(e, 2, "group_dot", "e");
  if (v.cols() != e.cols() || e.rows() % v.rows() != 0) mismatch("group_dot", v, e);
  const std::size_t n = v.rows(), d = v.cols(), k = e.rows() / n;
  std::vector<double> out(n * k);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < k; ++i) {
      double acc = 0.0;
      const double* vr = v.values().data() + s * d;
      const double* er = e.values().data() + (s * k + i) * d;
      for (std::size_t j = 0; j < d; ++j) acc += vr[j] * er[j];
      out[s * k + i] = acc;
    }
  TensorStorage *vs = v.storage().get(), *es = e.storage().get();
  return finish("group_dot", {n, k}, std::move(out), {&v, &e}, [vs, es, n, d, k](const TensorStorage& o) {
    double* gv = grad_of(vs);
    double* ge = grad_of(es);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t i = 0; i < k; ++i) {
        const double go = o.grad[s * k + i];
        const std::size_t er = (s * k + i) * d;
        if (gv) for (std::size_t j = 0; j < d; ++j) gv[s * d + j] += go * es->value[er + j];
        if (ge) for (std::size_t j = 0; j < d; ++j) ge[er + j] += go * vs->value[s * d + j];
      }
  });
}

Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                        BatchStatistics* stats) {
  require_rank(x, 2, "batch_norm", "x");
  const std::size_t n = x.rows(), d = x.cols();
  if (gamma.size() != d || beta.size() != d) mismatch("batch_norm", x, gamma);
  if (n < 2) throw DimensionError("batch_norm: batch statistics need at least two rows");
  std::vector<double> mu(d, 0.0), var(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mu[j] += x[i * d + j];
  for (double& m : mu) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x[i * d + j] - mu[j];
      var[j] += c * c;
    }
  for (double& v : var) v /= static_cast<double>(n);
  std::vector<double> inv_std(d);
  for (std::size_t j = 0; j < d; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
  auto xhat = std::make_shared<std::vector<double>>(n * d);
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (x[i * d + j] - mu[j]) * inv_std[j];
      (*xhat)[i * d + j] = h;
      out[i * d + j] = gamma[j] * h + beta[j];
    }
  if (stats != nullptr) {
    stats->mean = mu;
    stats->unbiased_var.resize(d);
    for (std::size_t j = 0; j < d; ++j) stats->unbiased_var[j] = var[j] * n / static_cast<double>(n - 1);
  }
  TensorStorage *xs = x.storage().get(), *gs = gamma.storage().get(), *bs = beta.storage().get();
  return finish("batch_norm", x.shape(), std::move(out), {&x, &gamma, &beta},
                [xs, gs, bs, xhat, inv_std, n, d](const TensorStorage& o) {
                  std::vector<double> sum_dh(d, 0.0), sum_dh_h(d, 0.0);
                  for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < d; ++j) {
                      const double dy = o.grad[i * d + j];
                      const double h = (*xhat)[i * d + j];
                      if (gs->requires_grad) gs->grad[j] += dy * h;
                      if (bs->requires_grad) bs->grad[j] += dy;
                      const double dh = dy * gs->value[j];
                      sum_dh[j] += dh;
                      sum_dh_h[j] += dh * h;
                    }
                  double* gx = grad_of(xs);
                  if (!gx) return;
                  const double nn = static_cast<double>(n);
                  for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < d; ++j) {
                      const double dh = o.grad[i * d + j] * gs->value[j];
                      const double h = (*xhat)[i * d + j];
                      gx[i * d + j] += inv_std[j] / nn * (nn * dh - sum_dh[j] - h * sum_dh_h[j]);
                    }
                });
}

Tensor batch_norm_eval(const Tensor& x, std::span<const double> mean, std::span<const double> var,
                       const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank(x, 2, "batch_norm", "x");
  const std::size_t n = x.rows(), d = x.cols();
  if (gamma.size() != d || beta.size() != d || mean.size() != d || var.size() != d) mismatch("batch_norm", x, gamma);
  std::vector<double> inv_std(d), mu(mean.begin(), mean.end());
  for (std::size_t j = 0; j < d; ++j) {
    if (!(var[j] > 0.0)) throw DomainError("batch_norm: running variance must be positive");
    inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
  }
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = gamma[j] * (x[i * d + j] - mu[j]) * inv_std[j] + beta[j];
  TensorStorage *xs = x.storage().get(), *gs = gamma.storage().get(), *bs = beta.storage().get();
  return finish("batch_norm", x.shape(), std::move(out), {&x, &gamma, &beta},
                [xs, gs, bs, mu, inv_std, n, d](const TensorStorage& o) {
                  for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < d; ++j) {
                      const double dy = o.grad[i * d + j];
                      const double h = (xs->value[i * d + j] - mu[j]) * inv_std[j];
                      if (gs->requires_grad) gs->grad[j] += dy * h;
                      if (bs->requires_grad) bs->grad[j] += dy;
                      if (xs->requires_grad) xs->grad[i * d + j] += dy * gs->value[j] * inv_std[j];
                    }
                });
}

}  // namespace cczsl::numcore
