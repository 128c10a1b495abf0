#pragma once

// Dense float64 tensors (rank ≤ 3) with reverse-mode automatic
// differentiation.
//
// A Tensor is a cheap handle onto a shared graph node. Ops on tensors that
// require gradients record their parents and a backward closure; calling
// backward() on a scalar result orders the recorded graph topologically (the
// Tape) and replays the closures in reverse, accumulating into every leaf
// that requires gradients.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace tcnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

struct Node;

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }
  std::size_t size() const;

  std::span<const double> data() const;
  // Writable view for leaves (parameter updates, test perturbations).
  std::span<double> mutable_data();

  bool requires_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  double item() const;
  double operator[](std::size_t flat) const { return data()[flat]; }
  double at(std::size_t i, std::size_t j) const;
  double at(std::size_t b, std::size_t i, std::size_t j) const;

  // Deep copy of the values as a fresh leaf.
  Tensor clone(bool requires_grad) const;
  Tensor detach() const { return clone(false); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  friend Tensor make_tensor(std::shared_ptr<Node> node);

  std::shared_ptr<Node> node_;
};

// Boolean live/dead pattern. `live(i) == true` marks an entry that takes
// part in the computation; dead entries are the masked-out ones.
class Mask {
 public:
  Mask() = default;
  Mask(Shape shape, bool value);
  Mask(Shape shape, std::vector<unsigned char> live);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return live_.size(); }
  bool live(std::size_t flat) const { return live_[flat] != 0; }
  void set(std::size_t flat, bool value) { live_[flat] = value ? 1 : 0; }
  std::span<const unsigned char> bytes() const { return live_; }

  // [B×n] key mask repeated over `rows` query rows → [B×rows×n].
  Mask expand_rows(std::size_t rows) const;
  Tensor as_tensor() const;

 private:
  Shape shape_;
  std::vector<unsigned char> live_;
};

// Disables graph recording on this thread while alive.
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

// Topologically ordered view of the graph reachable from a root.
class Tape {
 public:
  explicit Tape(const Tensor& root);

  std::size_t size() const { return order_.size(); }
  const std::vector<Node*>& nodes() const { return order_; }
  // Parents of every node appear before it.
  bool is_topological() const;

 private:
  std::vector<Node*> order_;
};

// Accumulates d(loss)/d(leaf) into every requires_grad leaf reachable from
// `loss`. Throws DimensionError if loss is not a single element.
void backward(const Tensor& loss);

enum class Transpose { kNone, kSecond };

// a[m×k] or a[B×m×k] (rows flattened) times b[k×n].
Tensor matmul(const Tensor& a, const Tensor& b);
// a[B×m×k] · b[B×k×n], or a[B×m×k] · b[B×n×k]ᵀ with Transpose::kSecond.
Tensor batched_matmul(const Tensor& a, const Tensor& b,
                      Transpose transpose = Transpose::kNone);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// Adds `bias` (length = last dim) to every row.
Tensor add_row(const Tensor& x, const Tensor& bias);
Tensor relu(const Tensor& x);
Tensor one_plus_relu(const Tensor& x);
// Zeroes dead entries.
Tensor apply_mask(const Tensor& x, const Mask& mask);

Tensor masked_softmax(const Tensor& x, const Mask& mask);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps);
Tensor dropout(const Tensor& x, double rate, bool training,
               std::mt19937_64& rng);

Tensor slice_last(const Tensor& x, std::size_t start, std::size_t length);
Tensor concat_last(const std::vector<Tensor>& parts);
Tensor reshape(const Tensor& x, Shape shape);
Tensor sum(const Tensor& x);
// Entries at the given flat positions, as a vector.
Tensor gather(const Tensor& x, const std::vector<std::size_t>& flat);
// log(max(x, floor)); counts clamped entries into *clamped. Clamped entries
// receive no gradient.
Tensor clamped_log(const Tensor& x, double floor,
                   std::size_t* clamped = nullptr);
// log(1 + e^x), computed stably.
Tensor softplus(const Tensor& x);

}  // namespace tcnet
