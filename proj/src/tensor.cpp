#include "avp/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "avp/errors.hpp"

namespace avp {

namespace {

using detail::Node;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

thread_local bool t_grad_enabled = true;

std::shared_ptr<Node> make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_str(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->value.size(), 0.0);
  return node;
}

/// Wraps an op result, wiring the graph only when some input needs gradients.
Tensor make_result(Shape shape, std::vector<double> values, std::initializer_list<const Tensor*> inputs,
                   std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  bool needs = false;
  if (t_grad_enabled) {
    for (const Tensor* in : inputs) needs = needs || in->requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->grad.assign(node->value.size(), 0.0);
    for (const Tensor* in : inputs) node->parents.push_back(in->node());
    node->backward = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

Tensor make_result_multi(Shape shape, std::vector<double> values, std::span<const Tensor> inputs,
                         std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  bool needs = false;
  if (t_grad_enabled) {
    for (const Tensor& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->grad.assign(node->value.size(), 0.0);
    for (const Tensor& in : inputs) node->parents.push_back(in.node());
    node->backward = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw UsageError(std::string(op) + ": undefined tensor");
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  require_defined(t, op);
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

// --- Tensor -----------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(make_leaf(std::move(shape), std::move(values), requires_grad)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor(Shape{}, {value}, requires_grad); }

Tensor Tensor::matrix(const std::vector<std::vector<double>>& rows, bool requires_grad) {
  if (rows.empty()) throw DimensionError("matrix: no rows");
  const std::size_t cols = rows.front().size();
  std::vector<double> values;
  values.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw DimensionError("matrix: ragged rows");
    values.insert(values.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const {
  require_defined(*this, "shape");
  return node_->shape;
}

std::size_t Tensor::numel() const { return node_ ? node_->value.size() : 0; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape()));
  }
  return node_->shape[axis];
}

std::span<const double> Tensor::values() const {
  require_defined(*this, "values");
  return node_->value;
}

std::span<double> Tensor::values_mut() {
  require_defined(*this, "values_mut");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  require_rank(*this, 2, "at");
  return node_->value[r * node_->shape[1] + c];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::is_leaf() const { return node_ && node_->parents.empty(); }

std::span<const double> Tensor::grad() const {
  require_defined(*this, "grad");
  return node_->grad;
}

std::span<double> Tensor::grad_mut() {
  require_defined(*this, "grad_mut");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->value, false); }

Tensor Tensor::clone(bool requires_grad) const { return Tensor(shape(), node_->value, requires_grad); }

void Tensor::backward() const { avp::backward(*this); }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

void backward(const Tensor& loss) {
  require_defined(loss, "backward");
  if (loss.numel() != 1) {
    throw UsageError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // Post-order DFS gives a topological order with inputs before outputs.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients are recomputed from scratch each sweep; leaves accumulate.
  for (Node* n : order) {
    if (!n->parents.empty()) std::fill(n->grad.begin(), n->grad.end(), 0.0);
  }
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) n->backward(*n);
  }
}

// --- arithmetic -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  MapMat(out.data(), m, n).noalias() = ConstMapMat(a.values().data(), m, k) * ConstMapMat(b.values().data(), k, n);
  return make_result({m, n}, std::move(out), {&a, &b}, [m, k, n](Node& self) {
    ConstMapMat dc(self.grad.data(), m, n);
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      MapMat(pa.grad.data(), m, k).noalias() += dc * ConstMapMat(pb.value.data(), k, n).transpose();
    }
    if (pb.requires_grad) {
      MapMat(pb.grad.data(), k, n).noalias() += ConstMapMat(pa.value.data(), m, k).transpose() * dc;
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  const auto v = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = v[i * n + j];
  return make_result({n, m}, std::move(out), {&a}, [m, n](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += self.grad[j * m + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    for (auto& parent : self.parents) {
      if (!parent->requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) parent->grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
    if (pb.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return make_result(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.value[i];
    if (pb.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.value[i];
  });
}

Tensor scale(const Tensor& a, double factor) {
  require_defined(a, "scale");
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& x : out) x *= factor;
  return make_result(a.shape(), std::move(out), {&a}, [factor](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * factor;
  });
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  require_rank(x, 2, "add_row");
  require_rank(bias, 1, "add_row");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (bias.dim(0) != n) {
    throw DimensionError("add_row: bias " + shape_str(bias.shape()) + " does not match " + shape_str(x.shape()));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  const auto bv = bias.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  return make_result(x.shape(), std::move(out), {&x, &bias}, [m, n](Node& self) {
    Node& px = *self.parents[0];
    Node& pb = *self.parents[1];
    if (px.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i];
    if (pb.requires_grad)
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) pb.grad[j] += self.grad[i * n + j];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require_defined(x, "reshape");
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  return make_result(std::move(shape), std::vector<double>(x.values().begin(), x.values().end()), {&x},
                     [](Node& self) {
                       Node& p = *self.parents[0];
                       for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
                     });
}

// --- reductions -------------------------------------------------------------

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  double total = 0.0;
  for (double v : x.values()) total += v;
  return make_result({}, {total}, {&x}, [](Node& self) {
    Node& p = *self.parents[0];
    for (double& g : p.grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum_rows(const Tensor& x) {
  require_rank(x, 2, "sum_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(n, 0.0);
  const auto v = x.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += v[i * n + j];
  return make_result({n}, std::move(out), {&x}, [m, n](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += self.grad[j];
  });
}

Tensor mean_rows(const Tensor& x) {
  require_rank(x, 2, "mean_rows");
  return scale(sum_rows(x), 1.0 / static_cast<double>(x.dim(0)));
}

// --- activations ------------------------------------------------------------

Tensor sigmoid(const Tensor& x) {
  require_defined(x, "sigmoid");
  std::vector<double> out(x.numel());
  const auto v = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double z = v[i];
    if (z >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-z));
    } else {
      const double e = std::exp(z);
      out[i] = e / (1.0 + e);
    }
  }
  return make_result(x.shape(), std::move(out), {&x}, [](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double s = self.value[i];
      p.grad[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Tensor relu(const Tensor& x) {
  require_defined(x, "relu");
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return make_result(x.shape(), std::move(out), {&x}, [](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (p.value[i] > 0.0) p.grad[i] += self.grad[i];
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  require_defined(x, "softmax");
  const Shape& shape = x.shape();
  if (axis >= shape.size()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t len = shape[axis];

  const auto v = x.values();
  std::vector<double> out(v.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = v[base];
      for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, v[base + k * inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        const double e = std::exp(v[base + k * inner] - mx);
        out[base + k * inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= total;
    }
  }
  return make_result(shape, std::move(out), {&x}, [outer, inner, len](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < len; ++k) dot += self.grad[base + k * inner] * self.value[base + k * inner];
        for (std::size_t k = 0; k < len; ++k) {
          const std::size_t idx = base + k * inner;
          p.grad[idx] += self.value[idx] * (self.grad[idx] - dot);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_defined(x, "layer_norm");
  require_rank(gain, 1, "layer_norm");
  require_rank(bias, 1, "layer_norm");
  if (x.rank() == 0) throw DimensionError("layer_norm: scalar input");
  const std::size_t n = x.shape().back();
  if (gain.dim(0) != n || bias.dim(0) != n) {
    throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                         " do not match last axis of " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / n;
  const auto v = x.values();
  const auto g = gain.values();
  const auto b = bias.values();
  std::vector<double> out(v.size());
  std::vector<double> normed(v.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = v.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (row[j] - mu) * is;
      normed[r * n + j] = h;
      out[r * n + j] = g[j] * h + b[j];
    }
  }
  return make_result(x.shape(), std::move(out), {&x, &gain, &bias},
                     [rows, n, normed = std::move(normed), inv_std = std::move(inv_std)](Node& self) {
                       Node& px = *self.parents[0];
                       Node& pg = *self.parents[1];
                       Node& pb = *self.parents[2];
                       const double inv_n = 1.0 / static_cast<double>(n);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* dy = self.grad.data() + r * n;
                         const double* h = normed.data() + r * n;
                         if (pg.requires_grad)
                           for (std::size_t j = 0; j < n; ++j) pg.grad[j] += dy[j] * h[j];
                         if (pb.requires_grad)
                           for (std::size_t j = 0; j < n; ++j) pb.grad[j] += dy[j];
                         if (px.requires_grad) {
                           double mean_dh = 0.0, mean_dh_h = 0.0;
                           for (std::size_t j = 0; j < n; ++j) {
                             const double dh = dy[j] * pg.value[j];
                             mean_dh += dh;
                             mean_dh_h += dh * h[j];
                           }
                           mean_dh *= inv_n;
                           mean_dh_h *= inv_n;
                           for (std::size_t j = 0; j < n; ++j) {
                             const double dh = dy[j] * pg.value[j];
                             px.grad[r * n + j] += inv_std[r] * (dh - mean_dh - h[j] * mean_dh_h);
                           }
                         }
                       }
                     });
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng) {
  require_defined(x, "dropout");
  if (rate < 0.0 || rate >= 1.0) throw UsageError("dropout: rate must be in [0, 1)");
  if (rate == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.numel());
  for (double& m : mask) m = keep(rng) ? s : 0.0;
  std::vector<double> out(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return make_result(x.shape(), std::move(out), {&x}, [mask = std::move(mask)](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * mask[i];
  });
}

// --- structure --------------------------------------------------------------

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank(x, 2, "slice_cols");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (count == 0 || start + count > n) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") outside " + shape_str(x.shape()));
  }
  std::vector<double> out(m * count);
  const auto v = x.values();
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(v.data() + i * n + start, count, out.data() + i * count);
  return make_result({m, count}, std::move(out), {&x}, [m, n, start, count](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) p.grad[i * n + start + j] += self.grad[i * count + j];
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts.front().dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != m) throw DimensionError("concat_cols: row counts differ");
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].values();
    for (std::size_t i = 0; i < m; ++i) std::copy_n(v.data() + i * widths[k], widths[k], out.data() + i * total + offset);
    offset += widths[k];
  }
  return make_result_multi({m, total}, std::move(out), parts, [m, total, widths](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      Node& p = *self.parents[k];
      if (p.requires_grad)
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) p.grad[i * widths[k] + j] += self.grad[i * total + off + j];
      off += widths[k];
    }
  });
}

Tensor stack(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("stack: no inputs");
  const Shape inner = parts.front().shape();
  for (const Tensor& p : parts) require_same_shape(parts.front(), p, "stack");
  const std::size_t each = shape_numel(inner);
  Shape shape{parts.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  std::vector<double> out;
  out.reserve(each * parts.size());
  for (const Tensor& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return make_result_multi(std::move(shape), std::move(out), parts, [each](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = *self.parents[k];
      if (p.requires_grad)
        for (std::size_t i = 0; i < each; ++i) p.grad[i] += self.grad[k * each + i];
    }
  });
}

Tensor select(const Tensor& x, std::size_t index) {
  require_defined(x, "select");
  if (x.rank() == 0 || index >= x.dim(0)) {
    throw DimensionError("select: index " + std::to_string(index) + " outside " + shape_str(x.shape()));
  }
  Shape shape(x.shape().begin() + 1, x.shape().end());
  const std::size_t each = shape_numel(shape);
  const auto v = x.values();
  std::vector<double> out(v.begin() + static_cast<std::ptrdiff_t>(index * each),
                          v.begin() + static_cast<std::ptrdiff_t>((index + 1) * each));
  return make_result(std::move(shape), std::move(out), {&x}, [each, index](Node& self) {
    Node& p = *self.parents[0];
    for (std::size_t i = 0; i < each; ++i) p.grad[index * each + i] += self.grad[i];
  });
}

// --- losses -----------------------------------------------------------------

Tensor bce(const Tensor& p, const Tensor& y) {
  require_same_shape(p, y, "bce");
  const auto pv = p.values();
  const auto yv = y.values();
  const std::size_t n = pv.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pc = std::clamp(pv[i], kBceClampLo, kBceClampHi);
    total -= yv[i] * std::log(pc) + (1.0 - yv[i]) * std::log(1.0 - pc);
  }
  total /= static_cast<double>(n);
  return make_result({}, {total}, {&p, &y}, [n](Node& self) {
    Node& pp = *self.parents[0];
    Node& py = *self.parents[1];
    const double g = self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double raw = pp.value[i];
      const double pc = std::clamp(raw, kBceClampLo, kBceClampHi);
      const double yi = py.value[i];
      if (pp.requires_grad && raw >= kBceClampLo && raw <= kBceClampHi) {
        pp.grad[i] += g * (-yi / pc + (1.0 - yi) / (1.0 - pc));
      }
      if (py.requires_grad) py.grad[i] += g * (std::log(1.0 - pc) - std::log(pc));
    }
  });
}

namespace {

constexpr double kKlFloor = 1e-12;

void check_distribution_rows(const Tensor& q, const char* which) {
  const std::size_t n = q.shape().back();
  const auto v = q.values();
  for (std::size_t r = 0; r < v.size() / n; ++r) {
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double x = v[r * n + j];
      if (!(x >= -1e-12)) {
        throw ValidationError(std::string("kl_div: ") + which + " row " + std::to_string(r) + " has negative entry");
      }
      total += x;
    }
    if (std::abs(total - 1.0) > 1e-4) {
      throw ValidationError(std::string("kl_div: ") + which + " row " + std::to_string(r) + " sums to " +
                            std::to_string(total));
    }
  }
}

}  // namespace

Tensor kl_div(const Tensor& q_teacher, const Tensor& q_student) {
  require_same_shape(q_teacher, q_student, "kl_div");
  if (q_teacher.rank() == 0) throw DimensionError("kl_div: scalar input");
  check_distribution_rows(q_teacher, "teacher");
  check_distribution_rows(q_student, "student");
  const auto t = q_teacher.values();
  const auto s = q_student.values();
  double total = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] > 0.0) total += t[i] * (std::log(t[i]) - std::log(std::max(s[i], kKlFloor)));
  }
  // Teacher is a fixed target: only the student participates in the graph.
  const Tensor teacher_const = q_teacher.detach();
  return make_result({}, {total}, {&q_student}, [teacher = teacher_const](Node& self) {
    Node& ps = *self.parents[0];
    const auto tv = teacher.values();
    for (std::size_t i = 0; i < tv.size(); ++i) {
      if (tv[i] > 0.0) ps.grad[i] -= self.grad[0] * tv[i] / std::max(ps.value[i], kKlFloor);
    }
  });
}

}  // namespace avp
