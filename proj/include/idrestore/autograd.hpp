#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace idr::nn {

// Dense row-major tensor of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);
  Tensor(std::vector<int> shape, std::vector<double> data);

  const std::vector<int>& shape() const { return shape_; }
  int dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  void fill(double v);
  Tensor reshaped(std::vector<int> shape) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

std::string shape_string(const std::vector<int>& shape);

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor& ensure_grad();
};

// Handle to a node in the dynamically built computation graph.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  Tensor& mutable_grad() { return node_->ensure_grad(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  const std::vector<int>& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  void zero_grad();

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// While alive on this thread, ops record no graph edges.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

Var constant(Tensor value);
Var parameter(Tensor value);

// Runs reverse-mode accumulation from a scalar.
void backward(const Var& scalar);

// Elementwise / structural ops. Shapes are checked; mismatches throw
// std::invalid_argument.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var gelu(const Var& x);

// x: [rows, in], w: [in, out], b: [out] (optional, may be undefined) -> [rows, out]
Var linear(const Var& x, const Var& w, const Var& b);

// Same-padded 2D convolution. x: [C, H, W], w: [O, C, k, k], b: [O].
Var conv2d(const Var& x, const Var& w, const Var& b);

// x: [C, H, W] plus per-channel bias of any shape holding C values.
Var add_channel_bias(const Var& x, const Var& bias);

// Stacks [n_i, d] blocks along rows.
Var concat_rows(std::span<const Var> parts);
// Joins [r, d_i] blocks along columns.
Var concat_cols(std::span<const Var> parts);
// Rows [begin, end) of a [n, d] matrix.
Var slice_rows(const Var& x, int begin, int end);

// Single-head cross-attention from a feature map onto a token sequence.
// h: [C, H, W], tokens: [N, D], wq: [C, K], wk: [D, K], wv: [D, C] -> [C, H, W].
// Per pixel p: out[:, p] = sum_j softmax_j(q_p . k_j / sqrt(K)) v_j.
Var cross_attention(const Var& h, const Var& tokens, const Var& wq, const Var& wk, const Var& wv);

// Euclidean norm of (a - b) flattened.
Var l2_distance(const Var& a, const Var& b);

// Sum of scalars.
Var sum_scalars(std::span<const Var> scalars);

}  // namespace idr::nn
