#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dialoglab/error.hpp"
#include "dialoglab/rng.hpp"

namespace dialoglab {

using Shape = std::vector<int>;

struct TensorData {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until backward touches it
  bool requires_grad = false;

  size_t size() const { return data.size(); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

// Shared handle to a dense row-major f64 array. 1-D tensors are [n],
// 2-D tensors are [rows x cols]; scalars are [1].
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  size_t size() const { return impl_->data.size(); }
  int rows() const;
  int cols() const;

  const std::vector<double>& data() const { return impl_->data; }
  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& grad() const { return impl_->grad; }
  bool has_grad() const { return !impl_->grad.empty(); }
  bool requires_grad() const { return impl_->requires_grad; }

  double at(int i) const { return impl_->data[static_cast<size_t>(i)]; }
  double at(int r, int c) const { return impl_->data[static_cast<size_t>(r) * cols() + c]; }
  double& at(int i) { return impl_->data[static_cast<size_t>(i)]; }
  double& at(int r, int c) { return impl_->data[static_cast<size_t>(r) * cols() + c]; }
  double item() const;

  void zero_grad() { impl_->grad.clear(); }
  double grad_at(int i) const { return impl_->grad.empty() ? 0.0 : impl_->grad[static_cast<size_t>(i)]; }

  std::shared_ptr<TensorData> impl() const { return impl_; }

  bool all_finite() const;

 private:
  std::shared_ptr<TensorData> impl_;
};

// Tape of recorded primitive operations. Ops append to the innermost active
// tape; backward() replays them in reverse. A tape may be consumed once.
class GradTape {
 public:
  GradTape();
  ~GradTape();
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  void record(std::function<void()> backward_fn);
  void backward(const Tensor& loss);
  size_t num_nodes() const { return nodes_.size(); }

  static GradTape* active();

 private:
  std::vector<std::function<void()>> nodes_;
  bool consumed_ = false;
  GradTape* prev_ = nullptr;
};

namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matvec(const Tensor& w, const Tensor& x);  // [m x n] * [n] -> [m]
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor affine(const Tensor& a, double mul, double add);  // mul*a + add elementwise
Tensor add_rowvec(const Tensor& m, const Tensor& v);     // broadcast v over rows

Tensor tanh_(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp_(const Tensor& a);
Tensor log_(const Tensor& a);
Tensor sqrt_(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor div(const Tensor& a, const Tensor& b);

Tensor softmax(const Tensor& x);       // 1-D
Tensor softmax_rows(const Tensor& x);  // per-row over 2-D

Tensor concat(const std::vector<Tensor>& parts);       // 1-D vectors
Tensor stack_rows(const std::vector<Tensor>& rows);    // k vectors [d] -> [k x d]
Tensor row(const Tensor& a, int i);                    // [r x c] -> [c]
Tensor col_slice(const Tensor& a, int from, int to);   // columns [from, to)
Tensor concat_cols(const std::vector<Tensor>& parts);  // [n x w_i] -> [n x sum(w_i)]

Tensor sum(const Tensor& a);  // -> scalar
Tensor dot(const Tensor& a, const Tensor& b);

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);
Tensor dropout(const Tensor& a, double p, RngPool& rng, std::string_view stream,
               bool training);
Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps = 1e-5);

// Mean token-level cross entropy over non-pad target positions.
Tensor cross_entropy_mean(const Tensor& logits, const std::vector<int>& targets,
                          int pad_id);

}  // namespace ops

// Max over coordinates of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8),
// with numeric gradients from central differences of step h.
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double h);

}  // namespace dialoglab
