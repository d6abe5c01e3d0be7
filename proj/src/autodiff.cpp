#include "wsym/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "wsym/linalg.hpp"

namespace wsym::ad {

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape());
  return grad;
}

void Node::accumulate(std::span<const double> g) {
  auto dst = grad_buffer().data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

Var Var::constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var Var::param(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var(std::move(n));
}

Tensor Var::grad() const {
  if (node_->grad.empty()) return Tensor(node_->value.shape());
  return node_->grad;
}

void Var::zero_grad() { node_->grad = Tensor(); }

void Var::assign(Tensor value) {
  if (value.shape() != node_->value.shape()) throw ShapeError("assign shape mismatch");
  node_->value = std::move(value);
}

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p.requires_grad();
  if (n->requires_grad) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

void backward(const Var& root) {
  if (root.size() != 1) throw ShapeError("backward needs a scalar root");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

namespace {

Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

void require_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + " shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

template <typename F, typename D>
Var unary(const Var& a, F f, D dfdx) {
  const auto& x = a.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  Tensor value(x.shape(), std::move(out));
  return make_op(std::move(value), {a}, [dfdx](Node& n) {
    Node& p = parent(n, 0);
    if (!p.requires_grad) return;
    auto g = p.grad_buffer().data();
    const auto& xv = p.value;
    const auto& yv = n.value;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * dfdx(xv[i], yv[i]);
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tensor value = wsym::matmul(a.value(), b.value());
  return make_op(std::move(value), {a, b}, [](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    if (pa.requires_grad) pa.accumulate(wsym::matmul(n.grad, pb.value.transposed()).data());
    if (pb.requires_grad) pb.accumulate(wsym::matmul(pa.value.transposed(), n.grad).data());
  });
}

Var transpose(const Var& a) {
  return make_op(a.value().transposed(), {a}, [](Node& n) {
    parent(n, 0).accumulate(n.grad.transposed().data());
  });
}

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  return make_op(a.value() + b.value(), {a, b}, [](Node& n) {
    for (std::size_t i = 0; i < 2; ++i)
      if (parent(n, i).requires_grad) parent(n, i).accumulate(n.grad.data());
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  return make_op(a.value() - b.value(), {a, b}, [](Node& n) {
    if (parent(n, 0).requires_grad) parent(n, 0).accumulate(n.grad.data());
    if (parent(n, 1).requires_grad) parent(n, 1).accumulate((-1.0 * n.grad).data());
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_op(Tensor(a.shape(), std::move(out)), {a, b}, [](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    if (pa.requires_grad) {
      auto g = pa.grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto g = pb.grad_buffer().data();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pa.value[i];
    }
  });
}

Var scale(const Var& a, double s) {
  return make_op(s * a.value(), {a}, [s](Node& n) {
    parent(n, 0).accumulate((s * n.grad).data());
  });
}

Var add_scalar(const Var& a, double s) {
  std::vector<double> out(a.value().values());
  for (auto& v : out) v += s;
  return make_op(Tensor(a.shape(), std::move(out)), {a}, [](Node& n) {
    parent(n, 0).accumulate(n.grad.data());
  });
}

Var mul_scalar(const Var& a, const Var& s) {
  if (s.size() != 1) throw ShapeError("mul_scalar needs a one-element scale");
  const double sv = s.value()[0];
  return make_op(sv * a.value(), {a, s}, [](Node& n) {
    Node& pa = parent(n, 0);
    Node& ps = parent(n, 1);
    const double sv = ps.value[0];
    if (pa.requires_grad) pa.accumulate((sv * n.grad).data());
    if (ps.requires_grad) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n.grad.size(); ++i) acc += n.grad[i] * pa.value[i];
      ps.grad_buffer()[0] += acc;
    }
  });
}

Var add_row_broadcast(const Var& a, const Var& b) {
  if (a.value().rank() != 2 || b.size() != a.shape()[1]) {
    throw ShapeError("add_row_broadcast shape mismatch " + shape_str(a.shape()) + " + " +
                     shape_str(b.shape()));
  }
  const auto m = a.shape()[0], k = a.shape()[1];
  std::vector<double> out(a.value().values());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] += b.value()[j];
  return make_op(Tensor(a.shape(), std::move(out)), {a, b}, [m, k](Node& n) {
    if (parent(n, 0).requires_grad) parent(n, 0).accumulate(n.grad.data());
    Node& pb = parent(n, 1);
    if (pb.requires_grad) {
      auto g = pb.grad_buffer().data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) g[j] += n.grad[i * k + j];
    }
  });
}

Var add_col_broadcast(const Var& a, const Var& b) {
  if (a.value().rank() != 2 || b.size() != a.shape()[0]) {
    throw ShapeError("add_col_broadcast shape mismatch " + shape_str(a.shape()) + " + " +
                     shape_str(b.shape()));
  }
  const auto m = a.shape()[0], k = a.shape()[1];
  std::vector<double> out(a.value().values());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] += b.value()[i];
  return make_op(Tensor(a.shape(), std::move(out)), {a, b}, [m, k](Node& n) {
    if (parent(n, 0).requires_grad) parent(n, 0).accumulate(n.grad.data());
    Node& pb = parent(n, 1);
    if (pb.requires_grad) {
      auto g = pb.grad_buffer().data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) g[i] += n.grad[i * k + j];
    }
  });
}

Var relu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var sin(const Var& a) {
  return unary(
      a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Var tanh(const Var& a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var asinh(const Var& a) {
  return unary(
      a, [](double x) { return std::asinh(x); },
      [](double x, double) { return 1.0 / std::sqrt(1.0 + x * x); });
}

Var softmax_rows(const Var& a) {
  return make_op(wsym::softmax_rows(a.value()), {a}, [](Node& n) {
    const auto m = n.value.dim(0), k = n.value.dim(1);
    auto g = parent(n, 0).grad_buffer().data();
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < k; ++j) dot += n.grad[i * k + j] * n.value[i * k + j];
      for (std::size_t j = 0; j < k; ++j)
        g[i * k + j] += n.value[i * k + j] * (n.grad[i * k + j] - dot);
    }
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return make_op(Tensor::scalar(s), {a}, [](Node& n) {
    auto g = parent(n, 0).grad_buffer().data();
    for (auto& v : g) v += n.grad[0];
  });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Var reshape(const Var& a, Shape shape) {
  return make_op(a.value().reshaped(std::move(shape)), {a}, [](Node& n) {
    parent(n, 0).accumulate(n.grad.data());
  });
}

Var slice(const Var& a, std::size_t offset, Shape shape) {
  const auto count = shape_size(shape);
  if (offset + count > a.size()) throw ShapeError("slice out of range");
  const auto src = a.value().data();
  std::vector<double> out(src.begin() + offset, src.begin() + offset + count);
  return make_op(Tensor(std::move(shape), std::move(out)), {a}, [offset](Node& n) {
    auto g = parent(n, 0).grad_buffer().data();
    for (std::size_t i = 0; i < n.grad.size(); ++i) g[offset + i] += n.grad[i];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  const auto rows = parts[0].shape()[0];
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.value().rank() != 2 || p.shape()[0] != rows) throw ShapeError("concat_cols row mismatch");
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
  }
  std::vector<double> out(rows * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].value();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) out[i * total + off + j] = v.at(i, j);
    off += widths[k];
  }
  return make_op(Tensor({rows, total}, std::move(out)), parts, [rows, total, widths](Node& n) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      Node& p = parent(n, k);
      if (p.requires_grad) {
        auto g = p.grad_buffer().data();
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j)
            g[i * widths[k] + j] += n.grad[i * total + off + j];
      }
      off += widths[k];
    }
  });
}

Var concat(const std::vector<Var>& parts) {
  std::vector<double> out;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    sizes.push_back(p.size());
    out.insert(out.end(), p.value().data().begin(), p.value().data().end());
  }
  const auto total = out.size();
  return make_op(Tensor({total}, std::move(out)), parts, [sizes](Node& n) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      Node& p = parent(n, k);
      if (p.requires_grad) p.accumulate(n.grad.data().subspan(off, sizes[k]));
      off += sizes[k];
    }
  });
}

Var inverse(const Var& a) {
  Tensor inv = linalg::inverse(a.value());
  return make_op(inv, {a}, [](Node& n) {
    // d(A^-1) = -A^-1 dA A^-1  =>  grad_A = -A^-T G A^-T
    const Tensor invT = n.value.transposed();
    parent(n, 0).accumulate((-1.0 * wsym::matmul(wsym::matmul(invT, n.grad), invT)).data());
  });
}

Var bce_loss(const Var& pred, const Tensor& target) {
  if (pred.size() != target.size()) throw ShapeError("bce_loss size mismatch");
  const auto n = pred.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(pred.value()[i], kBceClamp, 1.0 - kBceClamp);
    const double t = target[i];
    loss -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  loss /= static_cast<double>(n);
  return make_op(Tensor::scalar(loss), {pred}, [target, n](Node& n_) {
    Node& p = parent(n_, 0);
    auto g = p.grad_buffer().data();
    for (std::size_t i = 0; i < n; ++i) {
      const double raw = p.value[i];
      if (raw < kBceClamp || raw > 1.0 - kBceClamp) continue;  // clamped: flat
      const double t = target[i];
      g[i] += n_.grad[0] * (-t / raw + (1.0 - t) / (1.0 - raw)) / static_cast<double>(n);
    }
  });
}

Var mse_loss(const Var& pred, const Tensor& target) {
  if (pred.size() != target.size()) throw ShapeError("mse_loss size mismatch");
  const auto n = pred.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pred.value()[i] - target[i];
    loss += d * d;
  }
  loss /= static_cast<double>(n);
  return make_op(Tensor::scalar(loss), {pred}, [target, n](Node& n_) {
    Node& p = parent(n_, 0);
    auto g = p.grad_buffer().data();
    for (std::size_t i = 0; i < n; ++i)
      g[i] += n_.grad[0] * 2.0 * (p.value[i] - target[i]) / static_cast<double>(n);
  });
}

}  // namespace wsym::ad
