#include "dialoglab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace dialoglab {

namespace {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (int d : s) {
    if (d <= 0) throw dimension_error("non-positive dimension in shape " + shape_str(s));
    n *= static_cast<size_t>(d);
  }
  return n;
}

thread_local GradTape* g_active_tape = nullptr;

bool tracking(std::initializer_list<Tensor> inputs) {
  if (!g_active_tape) return false;
  for (const Tensor& t : inputs)
    if (t.requires_grad() || t.has_grad()) return true;
  return false;
}

bool tracking(const std::vector<Tensor>& inputs) {
  if (!g_active_tape) return false;
  for (const Tensor& t : inputs)
    if (t.requires_grad() || t.has_grad()) return true;
  return false;
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  size_t n = shape_numel(shape);
  if (n != values.size())
    throw dimension_error("shape " + shape_str(shape) + " expects " + std::to_string(n) +
                          " values, got " + std::to_string(values.size()));
  impl_ = std::make_shared<TensorData>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

int Tensor::rows() const {
  if (ndim() == 2) return dim(0);
  if (ndim() == 1) return 1;
  throw dimension_error("rows() on tensor of rank " + std::to_string(ndim()));
}

int Tensor::cols() const {
  if (ndim() == 2) return dim(1);
  if (ndim() == 1) return dim(0);
  throw dimension_error("cols() on tensor of rank " + std::to_string(ndim()));
}

double Tensor::item() const {
  if (size() != 1) throw contract_error("item() on non-scalar tensor " + shape_str(shape()));
  return impl_->data[0];
}

bool Tensor::all_finite() const {
  for (double v : impl_->data)
    if (!std::isfinite(v)) return false;
  return true;
}

GradTape::GradTape() {
  prev_ = g_active_tape;
  g_active_tape = this;
}

GradTape::~GradTape() { g_active_tape = prev_; }

GradTape* GradTape::active() { return g_active_tape; }

void GradTape::record(std::function<void()> backward_fn) {
  nodes_.push_back(std::move(backward_fn));
}

void GradTape::backward(const Tensor& loss) {
  if (consumed_)
    throw contract_error("backward called twice on the same computation record");
  if (loss.size() != 1)
    throw contract_error("backward requires a scalar loss, got shape rank " +
                         std::to_string(loss.ndim()));
  consumed_ = true;
  loss.impl()->ensure_grad();
  loss.impl()->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

namespace ops {

namespace {

using Impl = std::shared_ptr<TensorData>;

void record(const Impl& out, std::function<void()> fn) {
  out->requires_grad = true;  // marks the tensor as tape-tracked
  g_active_tape->record(std::move(fn));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw dimension_error("matmul shape mismatch " + shape_str(a.shape()) + " x " +
                          shape_str(b.shape()));
  int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      double av = a.at(i, p);
      if (av == 0.0) continue;
      for (int j = 0; j < n; ++j) out.at(i, j) += av * b.at(p, j);
    }
  if (tracking({a, b})) {
    Impl ai = a.impl(), bi = b.impl(), oi = out.impl();
    record(oi, [ai, bi, oi, m, k, n] {
      if (oi->grad.empty()) return;
      ai->ensure_grad();
      bi->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          double go = oi->grad[static_cast<size_t>(i) * n + j];
          if (go == 0.0) continue;
          for (int p = 0; p < k; ++p) {
            ai->grad[static_cast<size_t>(i) * k + p] += go * bi->data[static_cast<size_t>(p) * n + j];
            bi->grad[static_cast<size_t>(p) * n + j] += go * ai->data[static_cast<size_t>(i) * k + p];
          }
        }
    });
  }
  return out;
}

Tensor matvec(const Tensor& w, const Tensor& x) {
  if (w.ndim() != 2 || x.ndim() != 1 || w.dim(1) != x.dim(0))
    throw dimension_error("matvec shape mismatch " + shape_str(w.shape()) + " x " +
                          shape_str(x.shape()));
  int m = w.dim(0), n = w.dim(1);
  Tensor out = Tensor::zeros({m});
  for (int i = 0; i < m; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += w.at(i, j) * x.at(j);
    out.at(i) = s;
  }
  if (tracking({w, x})) {
    Impl wi = w.impl(), xi = x.impl(), oi = out.impl();
    record(oi, [wi, xi, oi, m, n] {
      if (oi->grad.empty()) return;
      wi->ensure_grad();
      xi->ensure_grad();
      for (int i = 0; i < m; ++i) {
        double go = oi->grad[static_cast<size_t>(i)];
        if (go == 0.0) continue;
        for (int j = 0; j < n; ++j) {
          wi->grad[static_cast<size_t>(i) * n + j] += go * xi->data[static_cast<size_t>(j)];
          xi->grad[static_cast<size_t>(j)] += go * wi->data[static_cast<size_t>(i) * n + j];
        }
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.ndim() != 2) throw dimension_error("transpose requires a 2-D tensor");
  int r = a.dim(0), c = a.dim(1);
  Tensor out = Tensor::zeros({c, r});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.at(j, i) = a.at(i, j);
  if (tracking({a})) {
    Impl ai = a.impl(), oi = out.impl();
    record(oi, [ai, oi, r, c] {
      if (oi->grad.empty()) return;
      ai->ensure_grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          ai->grad[static_cast<size_t>(i) * c + j] += oi->grad[static_cast<size_t>(j) * r + i];
    });
  }
  return out;
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw dimension_error(std::string(op) + " shape mismatch " + shape_str(a.shape()) +
                          " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  for (size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (tracking({a, b})) {
    Impl ai = a.impl(), bi = b.impl(), oi = out.impl();
    record(oi, [ai, bi, oi] {
      if (oi->grad.empty()) return;
      ai->ensure_grad();
      bi->ensure_grad();
      for (size_t i = 0; i < oi->grad.size(); ++i) {
        ai->grad[i] += oi->grad[i];
        bi->grad[i] += oi->grad[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  for (size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
  if (tracking({a, b})) {
    Impl ai = a.impl(), bi = b.impl(), oi = out.impl();
    record(oi, [ai, bi, oi] {
      if (oi->grad.empty()) return;
      ai->ensure_grad();
      bi->ensure_grad();
      for (size_t i = 0; i < oi->grad.size(); ++i) {
        ai->grad[i] += oi->grad[i];
        bi->grad[i] -= oi->grad[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  for (size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (tracking({a, b})) {
    Impl ai = a.impl(), bi = b.impl(), oi = out.impl();
    record(oi, [ai, bi, oi] {
      if (oi->grad.empty()) return;
      ai->ensure_grad();
      bi->ensure_grad();
      for (size_t i = 0; i < oi->grad.size(); ++i) {
        ai->grad[i] += oi->grad[i] * bi->data[i];
        bi->grad[i] += oi->grad[i] * ai->data[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double s) { return affine(a, s, 0.0); }

Tensor affine(const Tensor& a, double m, double c) {
  Tensor out = Tensor::zeros(a.shape());
  for (size_t i = 0; i < a.size(); ++i) out.data()[i] = m * a.data()[i] + c;
  if (tracking({a})) {
    Impl ai = a.impl(), oi = out.impl();
    record(oi, [ai, oi, m] {
      if (oi->grad.empty()) return;
      ai->ensure_grad();
      for (size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += m * oi->grad[i];
    });
  }
  return out;
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
  if (m.ndim() != 2 || v.ndim() != 1 || m.dim(1) != v.dim(0))
    throw dimension_error("add_rowvec shape mismatch " + shape_str(m.shape()) + " + " +
                          shape_str(v.shape()));
  int r = m.dim(0), c = m.dim(1);
  Tensor out = Tensor::zeros({r, c});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.at(i, j) = m.at(i, j) + v.at(j);
  if (tracking({m, v})) {
    Impl mi = m.impl(), vi = v.impl(), oi = out.impl();
    record(oi, [mi, vi, oi, r, c] {
      if (oi->grad.empty()) return;
      mi->ensure_grad();
      vi->ensure_grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) {
          double g = oi->grad[static_cast<size_t>(i) * c + j];
          mi->grad[static_cast<size_t>(i) * c + j] += g;
          vi->grad[static_cast<size_t>(j)] += g;
        }
    });
  }
  return out;
}

namespace {

Tensor unary(const Tensor& a, double (*fwd)(double),
             const std::function<double(double x, double y)>& dydx) {
  Tensor out = Tensor::zeros(a.shape());
  for (size_t i = 0; i < a.size(); ++i) out.data()[i] = fwd(a.data()[i]);
  if (tracking({a})) {
    Impl ai = a.impl(), oi = out.impl();
    record(oi, [ai, oi, dydx] {
      if (oi->grad.empty()) return;
      ai->ensure_grad();
      for (size_t i = 0; i < oi->grad.size(); ++i)
        ai->grad[i] += oi->grad[i] * dydx(ai->data[i], oi->data[i]);
    });
  }
  return out;
}

}  // namespace

Tensor tanh_(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Tensor exp_(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); },
               [](double, double y) { return y; });
}

Tensor log_(const Tensor& a) {
  return unary(a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Tensor sqrt_(const Tensor& a) {
  return unary(a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / y; });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "div");
  Tensor out = Tensor::zeros(a.shape());
  for (size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] / b.data()[i];
  if (tracking({a, b})) {
    Impl ai = a.impl(), bi = b.impl(), oi = out.impl();
    record(oi, [ai, bi, oi] {
      if (oi->grad.empty()) return;
      ai->ensure_grad();
      bi->ensure_grad();
      for (size_t i = 0; i < oi->grad.size(); ++i) {
        ai->grad[i] += oi->grad[i] / bi->data[i];
        bi->grad[i] -= oi->grad[i] * ai->data[i] / (bi->data[i] * bi->data[i]);
      }
    });
  }
  return out;
}

namespace {

void softmax_span(const double* in, double* out, int n) {
  double mx = in[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, in[i]);
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = std::exp(in[i] - mx);
    z += out[i];
  }
  for (int i = 0; i < n; ++i) out[i] /= z;
}

// dx_j = y_j * (dy_j - sum_k dy_k y_k)
void softmax_backward_span(const double* y, const double* gy, double* gx, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += gy[i] * y[i];
  for (int i = 0; i < n; ++i) gx[i] += y[i] * (gy[i] - s);
}

}  // namespace

Tensor softmax(const Tensor& x) {
  if (x.ndim() != 1 || x.dim(0) < 1) throw dimension_error("softmax requires a non-empty vector");
  int n = x.dim(0);
  Tensor out = Tensor::zeros({n});
  softmax_span(x.data().data(), out.data().data(), n);
  if (tracking({x})) {
    Impl xi = x.impl(), oi = out.impl();
    record(oi, [xi, oi, n] {
      if (oi->grad.empty()) return;
      xi->ensure_grad();
      softmax_backward_span(oi->data.data(), oi->grad.data(), xi->grad.data(), n);
    });
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  if (x.ndim() != 2) throw dimension_error("softmax_rows requires a 2-D tensor");
  int r = x.dim(0), c = x.dim(1);
  Tensor out = Tensor::zeros({r, c});
  for (int i = 0; i < r; ++i)
    softmax_span(x.data().data() + static_cast<size_t>(i) * c,
                 out.data().data() + static_cast<size_t>(i) * c, c);
  if (tracking({x})) {
    Impl xi = x.impl(), oi = out.impl();
    record(oi, [xi, oi, r, c] {
      if (oi->grad.empty()) return;
      xi->ensure_grad();
      for (int i = 0; i < r; ++i)
        softmax_backward_span(oi->data.data() + static_cast<size_t>(i) * c,
                              oi->grad.data() + static_cast<size_t>(i) * c,
                              xi->grad.data() + static_cast<size_t>(i) * c, c);
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw dimension_error("concat of zero tensors");
  std::vector<double> data;
  for (const Tensor& p : parts) {
    if (p.ndim() != 1) throw dimension_error("concat requires 1-D tensors");
    data.insert(data.end(), p.data().begin(), p.data().end());
  }
  int total = static_cast<int>(data.size());
  Tensor out({total}, std::move(data));
  if (tracking(parts)) {
    std::vector<Impl> ins;
    for (const Tensor& p : parts) ins.push_back(p.impl());
    Impl oi = out.impl();
    record(oi, [ins, oi] {
      if (oi->grad.empty()) return;
      size_t off = 0;
      for (const Impl& in : ins) {
        in->ensure_grad();
        for (size_t i = 0; i < in->data.size(); ++i) in->grad[i] += oi->grad[off + i];
        off += in->data.size();
      }
    });
  }
  return out;
}

Tensor stack_rows(const std::vector<Tensor>& rows_) {
  if (rows_.empty()) throw dimension_error("stack_rows of zero tensors");
  int d = rows_[0].ndim() == 1 ? rows_[0].dim(0) : -1;
  if (d < 0) throw dimension_error("stack_rows requires 1-D tensors");
  std::vector<double> data;
  for (const Tensor& r : rows_) {
    if (r.ndim() != 1 || r.dim(0) != d) throw dimension_error("stack_rows width mismatch");
    data.insert(data.end(), r.data().begin(), r.data().end());
  }
  Tensor out({static_cast<int>(rows_.size()), d}, std::move(data));
  if (tracking(rows_)) {
    std::vector<Impl> ins;
    for (const Tensor& r : rows_) ins.push_back(r.impl());
    Impl oi = out.impl();
    record(oi, [ins, oi, d] {
      if (oi->grad.empty()) return;
      for (size_t k = 0; k < ins.size(); ++k) {
        ins[k]->ensure_grad();
        for (int j = 0; j < d; ++j)
          ins[k]->grad[static_cast<size_t>(j)] += oi->grad[k * static_cast<size_t>(d) + j];
      }
    });
  }
  return out;
}

Tensor row(const Tensor& a, int i) {
  if (a.ndim() != 2 || i < 0 || i >= a.dim(0))
    throw dimension_error("row index " + std::to_string(i) + " out of range for " +
                          shape_str(a.shape()));
  int c = a.dim(1);
  std::vector<double> data(a.data().begin() + static_cast<size_t>(i) * c,
                           a.data().begin() + static_cast<size_t>(i + 1) * c);
  Tensor out({c}, std::move(data));
  if (tracking({a})) {
    Impl ai = a.impl(), oi = out.impl();
    record(oi, [ai, oi, i, c] {
      if (oi->grad.empty()) return;
      ai->ensure_grad();
      for (int j = 0; j < c; ++j) ai->grad[static_cast<size_t>(i) * c + j] += oi->grad[static_cast<size_t>(j)];
    });
  }
  return out;
}

Tensor col_slice(const Tensor& a, int from, int to) {
  if (a.ndim() != 2 || from < 0 || to > a.dim(1) || from >= to)
    throw dimension_error("col_slice [" + std::to_string(from) + "," + std::to_string(to) +
                          ") out of range for " + shape_str(a.shape()));
  int r = a.dim(0), c = a.dim(1), w = to - from;
  Tensor out = Tensor::zeros({r, w});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < w; ++j) out.at(i, j) = a.at(i, from + j);
  if (tracking({a})) {
    Impl ai = a.impl(), oi = out.impl();
    record(oi, [ai, oi, r, c, w, from] {
      if (oi->grad.empty()) return;
      ai->ensure_grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < w; ++j)
          ai->grad[static_cast<size_t>(i) * c + from + j] += oi->grad[static_cast<size_t>(i) * w + j];
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw dimension_error("concat_cols of zero tensors");
  int r = parts[0].rows();
  int total = 0;
  for (const Tensor& p : parts) {
    if (p.ndim() != 2 || p.dim(0) != r) throw dimension_error("concat_cols row mismatch");
    total += p.dim(1);
  }
  Tensor out = Tensor::zeros({r, total});
  int off = 0;
  for (const Tensor& p : parts) {
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < p.dim(1); ++j) out.at(i, off + j) = p.at(i, j);
    off += p.dim(1);
  }
  if (tracking(parts)) {
    std::vector<Impl> ins;
    std::vector<int> widths;
    for (const Tensor& p : parts) {
      ins.push_back(p.impl());
      widths.push_back(p.dim(1));
    }
    Impl oi = out.impl();
    record(oi, [ins, widths, oi, r, total] {
      if (oi->grad.empty()) return;
      int off = 0;
      for (size_t k = 0; k < ins.size(); ++k) {
        ins[k]->ensure_grad();
        int w = widths[k];
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < w; ++j)
            ins[k]->grad[static_cast<size_t>(i) * w + j] +=
                oi->grad[static_cast<size_t>(i) * total + off + j];
        off += w;
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  double s = std::accumulate(a.data().begin(), a.data().end(), 0.0);
  Tensor out = Tensor::scalar(s);
  if (tracking({a})) {
    Impl ai = a.impl(), oi = out.impl();
    record(oi, [ai, oi] {
      if (oi->grad.empty()) return;
      ai->ensure_grad();
      for (size_t i = 0; i < ai->grad.size(); ++i) ai->grad[i] += oi->grad[0];
    });
  }
  return out;
}

Tensor dot(const Tensor& a, const Tensor& b) { return sum(mul(a, b)); }

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
  if (table.ndim() != 2) throw dimension_error("embedding table must be 2-D");
  int v = table.dim(0), d = table.dim(1);
  for (int id : ids)
    if (id < 0 || id >= v)
      throw lookup_error("token id " + std::to_string(id) + " outside vocabulary of size " +
                         std::to_string(v));
  Tensor out = Tensor::zeros({static_cast<int>(ids.size()), d});
  for (size_t i = 0; i < ids.size(); ++i)
    for (int j = 0; j < d; ++j) out.at(static_cast<int>(i), j) = table.at(ids[i], j);
  if (tracking({table})) {
    Impl ti = table.impl(), oi = out.impl();
    record(oi, [ti, oi, ids, d] {
      if (oi->grad.empty()) return;
      ti->ensure_grad();
      for (size_t i = 0; i < ids.size(); ++i)
        for (int j = 0; j < d; ++j)
          ti->grad[static_cast<size_t>(ids[i]) * d + j] += oi->grad[i * static_cast<size_t>(d) + j];
    });
  }
  return out;
}

Tensor dropout(const Tensor& a, double p, RngPool& rng, std::string_view stream,
               bool training) {
  if (p < 0.0 || p >= 1.0)
    throw config_error("dropout probability must be in [0,1), got " + std::to_string(p));
  if (!training || p == 0.0) return a;  // identity in evaluation mode
  std::vector<double> mask(a.size());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto& gen = rng.stream(stream);
  double keep = 1.0 - p;
  for (size_t i = 0; i < mask.size(); ++i) mask[i] = (u(gen) < p) ? 0.0 : 1.0 / keep;
  Tensor out = Tensor::zeros(a.shape());
  for (size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * mask[i];
  if (tracking({a})) {
    Impl ai = a.impl(), oi = out.impl();
    record(oi, [ai, oi, mask] {
      if (oi->grad.empty()) return;
      ai->ensure_grad();
      for (size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i] * mask[i];
    });
  }
  return out;
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.ndim() != 2 || gamma.ndim() != 1 || beta.ndim() != 1 || gamma.dim(0) != x.dim(1) ||
      beta.dim(0) != x.dim(1))
    throw dimension_error("layer_norm shape mismatch");
  int r = x.dim(0), c = x.dim(1);
  Tensor out = Tensor::zeros({r, c});
  std::vector<double> mean(r), istd(r);
  for (int i = 0; i < r; ++i) {
    double mu = 0.0;
    for (int j = 0; j < c; ++j) mu += x.at(i, j);
    mu /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) var += (x.at(i, j) - mu) * (x.at(i, j) - mu);
    var /= c;
    mean[i] = mu;
    istd[i] = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < c; ++j)
      out.at(i, j) = gamma.at(j) * (x.at(i, j) - mu) * istd[i] + beta.at(j);
  }
  if (tracking({x, gamma, beta})) {
    Impl xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), oi = out.impl();
    record(oi, [xi, gi, bi, oi, r, c, mean, istd] {
      if (oi->grad.empty()) return;
      xi->ensure_grad();
      gi->ensure_grad();
      bi->ensure_grad();
      for (int i = 0; i < r; ++i) {
        const double* xr = xi->data.data() + static_cast<size_t>(i) * c;
        const double* go = oi->grad.data() + static_cast<size_t>(i) * c;
        double* gx = xi->grad.data() + static_cast<size_t>(i) * c;
        double sum_gh = 0.0, sum_gh_xhat = 0.0;
        for (int j = 0; j < c; ++j) {
          double xhat = (xr[j] - mean[i]) * istd[i];
          double gh = go[j] * gi->data[static_cast<size_t>(j)];
          sum_gh += gh;
          sum_gh_xhat += gh * xhat;
          gi->grad[static_cast<size_t>(j)] += go[j] * xhat;
          bi->grad[static_cast<size_t>(j)] += go[j];
        }
        for (int j = 0; j < c; ++j) {
          double xhat = (xr[j] - mean[i]) * istd[i];
          double gh = go[j] * gi->data[static_cast<size_t>(j)];
          gx[j] += istd[i] * (gh - sum_gh / c - xhat * sum_gh_xhat / c);
        }
      }
    });
  }
  return out;
}

Tensor cross_entropy_mean(const Tensor& logits, const std::vector<int>& targets, int pad_id) {
  if (logits.ndim() != 2 || static_cast<size_t>(logits.dim(0)) != targets.size())
    throw dimension_error("cross_entropy: logits rows must match target count");
  int t = logits.dim(0), v = logits.dim(1);
  int count = 0;
  double total = 0.0;
  std::vector<double> probs(static_cast<size_t>(t) * v);
  for (int i = 0; i < t; ++i) {
    softmax_span(logits.data().data() + static_cast<size_t>(i) * v,
                 probs.data() + static_cast<size_t>(i) * v, v);
    if (targets[static_cast<size_t>(i)] == pad_id) continue;
    int tgt = targets[static_cast<size_t>(i)];
    if (tgt < 0 || tgt >= v) throw lookup_error("target id outside vocabulary");
    total += -std::log(std::max(probs[static_cast<size_t>(i) * v + tgt], 1e-300));
    ++count;
  }
  if (count == 0) throw validation_error("cross_entropy: all target positions are PAD");
  Tensor out = Tensor::scalar(total / count);
  if (tracking({logits})) {
    Impl li = logits.impl(), oi = out.impl();
    record(oi, [li, oi, probs, targets, pad_id, t, v, count] {
      if (oi->grad.empty()) return;
      li->ensure_grad();
      double g = oi->grad[0] / count;
      for (int i = 0; i < t; ++i) {
        if (targets[static_cast<size_t>(i)] == pad_id) continue;
        for (int j = 0; j < v; ++j) {
          double p = probs[static_cast<size_t>(i) * v + j];
          double ind = (j == targets[static_cast<size_t>(i)]) ? 1.0 : 0.0;
          li->grad[static_cast<size_t>(i) * v + j] += g * (p - ind);
        }
      }
    });
  }
  return out;
}

}  // namespace ops

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double h) {
  if (h <= 0.0) throw contract_error("grad_check step must be positive");
  x.impl()->requires_grad = true;
  std::vector<double> analytic(x.size());
  {
    GradTape tape;
    x.zero_grad();
    Tensor loss = f(x);
    tape.backward(loss);
    for (size_t i = 0; i < x.size(); ++i) analytic[i] = x.grad_at(static_cast<int>(i));
  }
  double worst = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    double saved = x.data()[i];
    x.data()[i] = saved + h;
    double up = f(x).item();
    x.data()[i] = saved - h;
    double down = f(x).item();
    x.data()[i] = saved;
    double numeric = (up - down) / (2.0 * h);
    double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace dialoglab
