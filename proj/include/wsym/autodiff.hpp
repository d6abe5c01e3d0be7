#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "wsym/tensor.hpp"

namespace wsym::ad {

// One vertex of the reverse-mode graph. `backward` reads this node's grad and
// accumulates into the parents' grads.
struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor& grad_buffer();
  void accumulate(std::span<const double> g);
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value);
  static Var param(Tensor value);

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }

  // Gradient after backward(); zeros if nothing reached this node.
  Tensor grad() const;
  void zero_grad();
  // Leaf parameters only: overwrite the value in place (optimizer updates).
  void assign(Tensor value);

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Builds a node from an already-computed value. Parents that do not require
// gradients are dropped together with the rule.
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward);

// Reverse sweep from a scalar root; each producing op runs exactly once.
void backward(const Var& root);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
// a * s for a one-element Var s.
Var mul_scalar(const Var& a, const Var& s);
// a[m x n] + b[n] on every row.
Var add_row_broadcast(const Var& a, const Var& b);
// a[m x n] + b[m] on every column.
Var add_col_broadcast(const Var& a, const Var& b);

Var relu(const Var& a);
Var sigmoid(const Var& a);
Var sin(const Var& a);
Var tanh(const Var& a);
Var asinh(const Var& a);
Var softmax_rows(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
Var reshape(const Var& a, Shape shape);
// Contiguous block of the flattened data, given a new shape.
Var slice(const Var& a, std::size_t offset, Shape shape);
// Row-wise concatenation of [B x k_i] blocks into [B x sum k_i].
Var concat_cols(const std::vector<Var>& parts);
// Flattened concatenation.
Var concat(const std::vector<Var>& parts);
Var inverse(const Var& a);

// Mean binary cross-entropy; predictions clamped to [1e-7, 1 - 1e-7].
Var bce_loss(const Var& pred, const Tensor& target);
Var mse_loss(const Var& pred, const Tensor& target);

inline constexpr double kBceClamp = 1e-7;

}  // namespace wsym::ad
