#include "tcnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "tcnet/errors.hpp"
#include "tcnet/kernels.hpp"

namespace tcnet {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

Tensor make_tensor(std::shared_ptr<Node> node) {
  return Tensor(std::move(node));
}

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<Node> new_leaf(Shape shape, std::vector<double> data,
                               bool requires_grad) {
  if (shape.size() > 3) {
    throw DimensionError("tensor rank " + std::to_string(shape.size()) +
                         " exceeds 3");
  }
  if (shape_size(shape) != data.size()) {
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_string(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->data.size(), 0.0);
  return node;
}

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string("non-finite value produced by ") + op);
    }
  }
}

// Builds an op result. `backward` is only attached when some parent
// requires gradients and recording is enabled.
Tensor make_result(Shape shape, std::vector<double> data, const char* op,
                   std::vector<std::shared_ptr<Node>> parents,
                   std::function<void(Node&)> backward) {
  check_finite(data, op);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  const bool track =
      g_grad_enabled &&
      std::any_of(parents.begin(), parents.end(),
                  [](const auto& p) { return p->requires_grad; });
  if (track) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return make_tensor(std::move(node));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

std::size_t last_dim(const Tensor& x) {
  if (x.rank() == 0) return 1;
  return x.shape().back();
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << "×";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

// ---------------------------------------------------------------- Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_size(shape);
  return Tensor(new_leaf(std::move(shape), std::vector<double>(n, 0.0),
                         requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_size(shape);
  return Tensor(new_leaf(std::move(shape), std::vector<double>(n, value),
                         requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> data,
                    bool requires_grad) {
  return Tensor(new_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(new_leaf({}, {value}, requires_grad));
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->data.size(); }
std::span<const double> Tensor::data() const { return node_->data; }
std::span<double> Tensor::mutable_data() { return node_->data; }
bool Tensor::requires_grad() const { return node_->requires_grad; }

std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_->requires_grad) node_->grad.assign(node_->data.size(), 0.0);
}

double Tensor::item() const {
  if (size() != 1) {
    throw DimensionError("item() on tensor of shape " +
                         shape_string(shape()));
  }
  return node_->data[0];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  return node_->data.at(i * shape().at(1) + j);
}

double Tensor::at(std::size_t b, std::size_t i, std::size_t j) const {
  return node_->data.at((b * shape().at(1) + i) * shape().at(2) + j);
}

Tensor Tensor::clone(bool requires_grad) const {
  return Tensor(new_leaf(node_->shape, node_->data, requires_grad));
}

// ------------------------------------------------------------------ Mask

Mask::Mask(Shape shape, bool value)
    : shape_(std::move(shape)),
      live_(shape_size(shape_), value ? 1 : 0) {}

Mask::Mask(Shape shape, std::vector<unsigned char> live)
    : shape_(std::move(shape)), live_(std::move(live)) {
  if (shape_size(shape_) != live_.size()) {
    throw DimensionError("mask length does not match shape " +
                         shape_string(shape_));
  }
}

Mask Mask::expand_rows(std::size_t rows) const {
  if (shape_.size() != 2) throw DimensionError("expand_rows needs a [B×n] mask");
  const std::size_t batch = shape_[0];
  const std::size_t n = shape_[1];
  std::vector<unsigned char> out(batch * rows * n);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(live_.begin() + static_cast<std::ptrdiff_t>(b * n), n,
                  out.begin() + static_cast<std::ptrdiff_t>((b * rows + r) * n));
    }
  }
  return Mask({batch, rows, n}, std::move(out));
}

Tensor Mask::as_tensor() const {
  std::vector<double> v(live_.size());
  std::transform(live_.begin(), live_.end(), v.begin(),
                 [](unsigned char c) { return c ? 1.0 : 0.0; });
  return Tensor::from(shape_, std::move(v));
}

// ------------------------------------------------------------ grad mode

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

// ------------------------------------------------------------------ Tape

Tape::Tape(const Tensor& root) {
  // Iterative post-order DFS over recorded parents.
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  Node* start = root.node().get();
  stack.emplace_back(start, 0);
  seen.insert(start);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order_.push_back(node);
      stack.pop_back();
    }
  }
}

bool Tape::is_topological() const {
  std::unordered_set<const Node*> placed;
  for (const Node* node : order_) {
    for (const auto& p : node->parents) {
      if (!placed.count(p.get())) return false;
    }
    placed.insert(node);
  }
  return true;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw DimensionError("backward() needs a scalar loss");
  }
  Tape tape(loss);
  // Interior nodes start from zero each pass; leaves keep accumulating.
  for (Node* node : tape.nodes()) {
    if (node->backward) node->grad.assign(node->data.size(), 0.0);
  }
  Node* root = loss.node().get();
  if (!root->requires_grad) return;
  root->ensure_grad();
  root->grad[0] += 1.0;
  const auto& order = tape.nodes();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward) {
      for (auto& p : node->parents) {
        if (p->requires_grad) p->ensure_grad();
      }
      node->backward(*node);
    }
  }
}

// ------------------------------------------------------------------- ops

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() != 2) {
    throw DimensionError("matmul needs a[..×m×k] and b[k×n], got " +
                         shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t k = a.shape().back();
  if (b.dim(0) != k) {
    throw DimensionError("matmul inner dimensions " + shape_string(a.shape()) +
                         " · " + shape_string(b.shape()));
  }
  const std::size_t n = b.dim(1);
  const std::size_t m = a.size() / k;
  Shape out_shape = a.shape();
  out_shape.back() = n;
  std::vector<double> out(m * n, 0.0);
  kernels::gemm(a.data(), b.data(), out, m, k, n);
  auto an = a.node();
  auto bn = b.node();
  return make_result(std::move(out_shape), std::move(out), "matmul", {an, bn},
                     [an, bn, m, k, n](Node& self) {
                       if (an->requires_grad) {
                         kernels::gemm_nt(self.grad, bn->data, an->grad, m, n, k);
                       }
                       if (bn->requires_grad) {
                         kernels::gemm_tn(an->data, self.grad, bn->grad, m, k, n);
                       }
                     });
}

Tensor batched_matmul(const Tensor& a, const Tensor& b, Transpose transpose) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0)) {
    throw DimensionError("batched_matmul needs matching [B×..×..] operands, got " +
                         shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const bool nt = transpose == Transpose::kSecond;
  const std::size_t batch = a.dim(0);
  const std::size_t m = a.dim(1);
  const std::size_t k = a.dim(2);
  const std::size_t bk = nt ? b.dim(2) : b.dim(1);
  const std::size_t n = nt ? b.dim(1) : b.dim(2);
  if (bk != k) {
    throw DimensionError("batched_matmul inner dimensions " +
                         shape_string(a.shape()) + " · " +
                         shape_string(b.shape()));
  }
  std::vector<double> out(batch * m * n, 0.0);
  const std::size_t a_stride = m * k;
  const std::size_t b_stride = k * n;
  const std::size_t c_stride = m * n;
  for (std::size_t i = 0; i < batch; ++i) {
    auto ai = a.data().subspan(i * a_stride, a_stride);
    auto bi = b.data().subspan(i * b_stride, b_stride);
    std::span<double> ci(out.data() + i * c_stride, c_stride);
    if (nt) {
      kernels::gemm_nt(ai, bi, ci, m, k, n);
    } else {
      kernels::gemm(ai, bi, ci, m, k, n);
    }
  }
  auto an = a.node();
  auto bn = b.node();
  return make_result(
      {batch, m, n}, std::move(out), "batched_matmul", {an, bn},
      [=](Node& self) {
        for (std::size_t i = 0; i < batch; ++i) {
          std::span<const double> dc(self.grad.data() + i * c_stride, c_stride);
          std::span<const double> ai(an->data.data() + i * a_stride, a_stride);
          std::span<const double> bi(bn->data.data() + i * b_stride, b_stride);
          if (an->requires_grad) {
            std::span<double> da(an->grad.data() + i * a_stride, a_stride);
            if (nt) {
              // c = a·bᵀ → da = dc·b
              kernels::gemm(dc, bi, da, m, n, k);
            } else {
              kernels::gemm_nt(dc, bi, da, m, n, k);
            }
          }
          if (bn->requires_grad) {
            std::span<double> db(bn->grad.data() + i * b_stride, b_stride);
            if (nt) {
              // db[n×k] = dcᵀ·a
              kernels::gemm_tn(dc, ai, db, m, n, k);
            } else {
              kernels::gemm_tn(ai, dc, db, m, k, n);
            }
          }
        }
      });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (b.size() == 1 && a.size() != 1) {
    const double s = b.item();
    std::vector<double> out(a.data().begin(), a.data().end());
    for (double& v : out) v += s;
    auto an = a.node();
    auto bn = b.node();
    return make_result(a.shape(), std::move(out), "add", {an, bn},
                       [an, bn](Node& self) {
                         if (an->requires_grad) {
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             an->grad[i] += self.grad[i];
                         }
                         if (bn->requires_grad) {
                           bn->grad[0] += std::accumulate(
                               self.grad.begin(), self.grad.end(), 0.0);
                         }
                       });
  }
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  auto an = a.node();
  auto bn = b.node();
  return make_result(a.shape(), std::move(out), "add", {an, bn},
                     [an, bn](Node& self) {
                       for (auto* p : {an.get(), bn.get()}) {
                         if (!p->requires_grad) continue;
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           p->grad[i] += self.grad[i];
                       }
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  auto an = a.node();
  auto bn = b.node();
  return make_result(a.shape(), std::move(out), "mul", {an, bn},
                     [an, bn](Node& self) {
                       if (an->requires_grad) {
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           an->grad[i] += self.grad[i] * bn->data[i];
                       }
                       if (bn->requires_grad) {
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           bn->grad[i] += self.grad[i] * an->data[i];
                       }
                     });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= factor;
  auto an = a.node();
  return make_result(a.shape(), std::move(out), "scale", {an},
                     [an, factor](Node& self) {
                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                         an->grad[i] += factor * self.grad[i];
                     });
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  const std::size_t n = last_dim(x);
  if (bias.size() != n) {
    throw DimensionError("add_row: bias of length " +
                         std::to_string(bias.size()) + " for rows of " +
                         std::to_string(n));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias[i % n];
  auto xn = x.node();
  auto bn = bias.node();
  return make_result(x.shape(), std::move(out), "add_row", {xn, bn},
                     [xn, bn, n](Node& self) {
                       if (xn->requires_grad) {
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           xn->grad[i] += self.grad[i];
                       }
                       if (bn->requires_grad) {
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           bn->grad[i % n] += self.grad[i];
                       }
                     });
}

namespace {

Tensor relu_like(const Tensor& x, double offset, const char* op) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = offset + (x[i] > 0.0 ? x[i] : 0.0);
  }
  auto xn = x.node();
  return make_result(x.shape(), std::move(out), op, {xn}, [xn](Node& self) {
    // Subgradient 0 at the kink.
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (xn->data[i] > 0.0) xn->grad[i] += self.grad[i];
    }
  });
}

}  // namespace

Tensor relu(const Tensor& x) { return relu_like(x, 0.0, "relu"); }

Tensor one_plus_relu(const Tensor& x) {
  return relu_like(x, 1.0, "one_plus_relu");
}

Tensor apply_mask(const Tensor& x, const Mask& mask) {
  if (mask.shape() != x.shape()) {
    throw DimensionError("apply_mask: mask " + shape_string(mask.shape()) +
                         " for tensor " + shape_string(x.shape()));
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = mask.live(i) ? x[i] : 0.0;
  }
  auto xn = x.node();
  return make_result(x.shape(), std::move(out), "apply_mask", {xn},
                     [xn, mask](Node& self) {
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         if (mask.live(i)) xn->grad[i] += self.grad[i];
                       }
                     });
}

Tensor masked_softmax(const Tensor& x, const Mask& mask) {
  if (mask.shape() != x.shape() || x.rank() == 0) {
    throw DimensionError("masked_softmax: mask " + shape_string(mask.shape()) +
                         " for tensor " + shape_string(x.shape()));
  }
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.size() / cols;
  std::vector<double> out(x.size(), 0.0);
  if (!kernels::masked_softmax_rows(x.data(), mask.bytes(), out, rows, cols)) {
    throw DegenerateRowError("masked_softmax: a row has every entry masked");
  }
  auto xn = x.node();
  return make_result(x.shape(), std::move(out), "masked_softmax", {xn},
                     [xn, rows, cols](Node& self) {
                       // Dead outputs are exactly 0, so the restricted
                       // Jacobian y_j (g_j - Σ y g) needs no mask lookup.
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* y = self.data.data() + r * cols;
                         const double* g = self.grad.data() + r * cols;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < cols; ++j) dot += y[j] * g[j];
                         double* dx = xn->grad.data() + r * cols;
                         for (std::size_t j = 0; j < cols; ++j)
                           dx[j] += y[j] * (g[j] - dot);
                       }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  const std::size_t d = last_dim(x);
  if (d == 0 || gain.size() != d || bias.size() != d) {
    throw DimensionError("layer_norm: feature width " + std::to_string(d) +
                         " vs gain/bias " + std::to_string(gain.size()) + "/" +
                         std::to_string(bias.size()));
  }
  const std::size_t rows = x.size() / d;
  std::vector<double> normed(x.size());
  std::vector<double> inv_std(rows);
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xr[j] - mean) * inv_std[r];
      normed[r * d + j] = h;
      out[r * d + j] = gain[j] * h + bias[j];
    }
  }
  auto xn = x.node();
  auto gn = gain.node();
  auto bn = bias.node();
  return make_result(
      x.shape(), std::move(out), "layer_norm", {xn, gn, bn},
      [xn, gn, bn, d, rows, normed = std::move(normed),
       inv_std = std::move(inv_std)](Node& self) {
        for (std::size_t r = 0; r < rows; ++r) {
          const double* g = self.grad.data() + r * d;
          const double* h = normed.data() + r * d;
          if (gn->requires_grad || bn->requires_grad) {
            for (std::size_t j = 0; j < d; ++j) {
              if (gn->requires_grad) gn->grad[j] += g[j] * h[j];
              if (bn->requires_grad) bn->grad[j] += g[j];
            }
          }
          if (!xn->requires_grad) continue;
          double mean_dh = 0.0;
          double mean_dh_h = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dh = g[j] * gn->data[j];
            mean_dh += dh;
            mean_dh_h += dh * h[j];
          }
          mean_dh /= static_cast<double>(d);
          mean_dh_h /= static_cast<double>(d);
          double* dx = xn->grad.data() + r * d;
          for (std::size_t j = 0; j < d; ++j) {
            const double dh = g[j] * gn->data[j];
            dx[j] += inv_std[r] * (dh - mean_dh - h[j] * mean_dh_h);
          }
        }
      });
}

Tensor dropout(const Tensor& x, double rate, bool training,
               std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ValidationError("dropout rate must lie in [0, 1), got " +
                          std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<double> factor(x.size());
  for (double& f : factor) f = uniform(rng) < rate ? 0.0 : keep_scale;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor[i];
  auto xn = x.node();
  return make_result(x.shape(), std::move(out), "dropout", {xn},
                     [xn, factor = std::move(factor)](Node& self) {
                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                         xn->grad[i] += factor[i] * self.grad[i];
                     });
}

Tensor slice_last(const Tensor& x, std::size_t start, std::size_t length) {
  const std::size_t d = last_dim(x);
  if (x.rank() == 0 || start + length > d) {
    throw DimensionError("slice_last [" + std::to_string(start) + ", +" +
                         std::to_string(length) + ") out of width " +
                         std::to_string(d));
  }
  const std::size_t rows = x.size() / d;
  Shape shape = x.shape();
  shape.back() = length;
  std::vector<double> out(rows * length);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(r * d + start),
                length,
                out.begin() + static_cast<std::ptrdiff_t>(r * length));
  }
  auto xn = x.node();
  return make_result(std::move(shape), std::move(out), "slice_last", {xn},
                     [xn, rows, d, start, length](Node& self) {
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t j = 0; j < length; ++j)
                           xn->grad[r * d + start + j] +=
                               self.grad[r * length + j];
                     });
}

Tensor concat_last(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_last of nothing");
  if (parts.size() == 1) return parts.front();
  Shape lead = parts.front().shape();
  lead.pop_back();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    Shape pl = p.shape();
    pl.pop_back();
    if (pl != lead) throw DimensionError("concat_last: leading shapes differ");
    widths.push_back(p.shape().back());
    total += widths.back();
  }
  const std::size_t rows = shape_size(lead);
  std::vector<double> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t w = widths[k];
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(parts[k].data().begin() + static_cast<std::ptrdiff_t>(r * w),
                  w,
                  out.begin() + static_cast<std::ptrdiff_t>(r * total + offset));
    }
    offset += w;
  }
  Shape shape = lead;
  shape.push_back(total);
  std::vector<std::shared_ptr<Node>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return make_result(std::move(shape), std::move(out), "concat_last", nodes,
                     [nodes, widths, rows, total](Node& self) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < nodes.size(); ++k) {
                         const std::size_t w = widths[k];
                         if (nodes[k]->requires_grad) {
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t j = 0; j < w; ++j)
                               nodes[k]->grad[r * w + j] +=
                                   self.grad[r * total + off + j];
                         }
                         off += w;
                       }
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size() || shape.size() > 3) {
    throw DimensionError("reshape " + shape_string(x.shape()) + " → " +
                         shape_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  auto xn = x.node();
  return make_result(std::move(shape), std::move(out), "reshape", {xn},
                     [xn](Node& self) {
                       for (std::size_t i = 0; i < self.grad.size(); ++i)
                         xn->grad[i] += self.grad[i];
                     });
}

Tensor sum(const Tensor& x) {
  const double total = std::accumulate(x.data().begin(), x.data().end(), 0.0);
  auto xn = x.node();
  return make_result({}, {total}, "sum", {xn}, [xn](Node& self) {
    for (double& g : xn->grad) g += self.grad[0];
  });
}

Tensor gather(const Tensor& x, const std::vector<std::size_t>& flat) {
  std::vector<double> out(flat.size());
  for (std::size_t k = 0; k < flat.size(); ++k) {
    if (flat[k] >= x.size()) throw DimensionError("gather index out of range");
    out[k] = x[flat[k]];
  }
  auto xn = x.node();
  return make_result({flat.size()}, std::move(out), "gather", {xn},
                     [xn, flat](Node& self) {
                       for (std::size_t k = 0; k < flat.size(); ++k) {
                         xn->grad[flat[k]] += self.grad[k];
                       }
                     });
}

Tensor clamped_log(const Tensor& x, double floor, std::size_t* clamped) {
  std::vector<double> out(x.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (x[i] < floor) ++hits;
    out[i] = std::log(std::max(x[i], floor));
  }
  if (clamped) *clamped += hits;
  auto xn = x.node();
  return make_result(x.shape(), std::move(out), "clamped_log", {xn},
                     [xn, floor](Node& self) {
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         if (xn->data[i] >= floor) {
                           xn->grad[i] += self.grad[i] / xn->data[i];
                         }
                       }
                     });
}

Tensor softplus(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x[i];
    out[i] = std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
  }
  auto xn = x.node();
  return make_result(x.shape(), std::move(out), "softplus", {xn},
                     [xn](Node& self) {
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         const double v = xn->data[i];
                         const double sig = v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                                                   : std::exp(v) / (1.0 + std::exp(v));
                         xn->grad[i] += self.grad[i] * sig;
                       }
                     });
}

}  // namespace tcnet
