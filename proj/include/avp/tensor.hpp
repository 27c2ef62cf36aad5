#pragma once

// Dense row-major tensors with tape-free reverse-mode autodiff.
//
// Every op returns a fresh Tensor whose node remembers its inputs and a
// closure that pushes the node's gradient back into them. A graph belongs to
// the thread that built it; parameters can be cloned per worker.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace avp {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized iff requires_grad
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// Builds a tensor from nested rows; every row must have the same length.
  static Tensor matrix(const std::vector<std::vector<double>>& rows, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t dim(std::size_t axis) const;

  std::span<const double> values() const;
  /// Direct write access. Only meaningful on leaves (parameters, inputs).
  std::span<double> values_mut();
  double item() const;
  double at(std::size_t i) const { return values()[i]; }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  bool is_leaf() const;
  std::span<const double> grad() const;
  std::span<double> grad_mut();
  void zero_grad();

  /// Same values, no graph history, no gradient.
  Tensor detach() const;
  /// Deep copy of values as a new leaf.
  Tensor clone(bool requires_grad) const;

  /// Reverse sweep from a scalar; leaf gradients accumulate across calls.
  void backward() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph construction on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

void backward(const Tensor& loss);

// --- arithmetic ---------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// x[m×n] + bias[n] broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& bias);
Tensor reshape(const Tensor& x, Shape shape);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

// --- reductions ---------------------------------------------------------
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Sum over axis 0 of a 2-D tensor: [m×n] -> [n].
Tensor sum_rows(const Tensor& x);
Tensor mean_rows(const Tensor& x);

// --- activations --------------------------------------------------------
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
/// Inverted dropout. Identity when rate == 0.
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng);

// --- structure ----------------------------------------------------------
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_cols(std::span<const Tensor> parts);
/// Stacks equal-shape tensors along a new leading axis.
Tensor stack(std::span<const Tensor> parts);
/// Index along axis 0, dropping that axis.
Tensor select(const Tensor& x, std::size_t index);

// --- losses -------------------------------------------------------------
inline constexpr double kBceClampLo = 1e-7;
inline constexpr double kBceClampHi = 1.0 - 1e-7;

/// Mean binary cross entropy over all elements, with p clamped to [1e-7, 1-1e-7].
Tensor bce(const Tensor& p, const Tensor& y);
/// Sum over rows of KL(teacher_row || student_row); rows are the last axis.
/// Gradient reaches the student only.
Tensor kl_div(const Tensor& q_teacher, const Tensor& q_student);

}  // namespace avp
