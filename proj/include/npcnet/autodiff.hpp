#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "npcnet/tensor.hpp"

namespace npcnet {

// Reverse-mode differentiation over Tensor values. Each operation records
// its parents and a backward rule; backward() walks the graph once in
// reverse topological order. Parameter (leaf) gradients accumulate across
// backward calls until explicitly zeroed; intermediate gradients are
// scratch space owned by the batch graph.

struct Node {
  Tensor value;
  Tensor grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Node&)> backprop;
  const char* op = "leaf";
  std::string name;
  bool requires_grad = false;

  bool is_leaf() const { return parents.empty(); }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  Tensor& grad() { return node_->grad; }
  const std::vector<std::size_t>& shape() const { return node_->value.shape(); }
  const std::string& name() const { return node_->name; }
  bool requires_grad() const { return node_->requires_grad; }
  double scalar_value() const { return node_->value.scalar_value(); }

  std::shared_ptr<Node> node() const { return node_; }
  Node* raw() const { return node_.get(); }
  bool defined() const { return node_ != nullptr; }

  void zero_grad() { node_->grad.fill(0.0); }

 private:
  std::shared_ptr<Node> node_;
};

inline Var make_parameter(Tensor init, std::string name) {
  auto n = std::make_shared<Node>();
  n->grad = Tensor(init.shape());
  n->value = std::move(init);
  n->name = std::move(name);
  n->requires_grad = true;
  return Var(n);
}

inline Var make_constant(Tensor v, std::string name = {}) {
  auto n = std::make_shared<Node>();
  n->grad = Tensor(v.shape());
  n->value = std::move(v);
  n->name = std::move(name);
  n->requires_grad = false;
  return Var(n);
}

namespace detail {

inline std::shared_ptr<Node> new_op_node(const char* op, Tensor value,
                                         std::vector<std::shared_ptr<Node>> parents) {
  auto n = std::make_shared<Node>();
  n->grad = Tensor(value.shape());
  n->value = std::move(value);
  n->parents = std::move(parents);
  n->op = op;
  for (const auto& p : n->parents) {
    if (p->requires_grad) {
      n->requires_grad = true;
      break;
    }
  }
  return n;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                Tensor::shape_string(a.shape()) + " vs " +
                                Tensor::shape_string(b.shape()));
  }
}

using EigenMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<EigenMat>;
using ConstMatMap = Eigen::Map<const EigenMat>;

inline ConstMatMap as_matrix(const Tensor& t) {
  return ConstMatMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}

inline MatMap as_matrix(Tensor& t) {
  return MatMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.at(i) += b.value().at(i);
  auto n = detail::new_op_node("add", std::move(out), {a.node(), b.node()});
  Node* pa = a.raw();
  Node* pb = b.raw();
  n->backprop = [pa, pb](const Node& self) {
    if (pa->requires_grad) {
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pa->grad.at(i) += self.grad.at(i);
    }
    if (pb->requires_grad) {
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pb->grad.at(i) += self.grad.at(i);
    }
  };
  return Var(n);
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.at(i) -= b.value().at(i);
  auto n = detail::new_op_node("sub", std::move(out), {a.node(), b.node()});
  Node* pa = a.raw();
  Node* pb = b.raw();
  n->backprop = [pa, pb](const Node& self) {
    if (pa->requires_grad) {
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pa->grad.at(i) += self.grad.at(i);
    }
    if (pb->requires_grad) {
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pb->grad.at(i) -= self.grad.at(i);
    }
  };
  return Var(n);
}

inline Var mul(const Var& a, const Var& b) {
  detail::require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.at(i) *= b.value().at(i);
  auto n = detail::new_op_node("mul", std::move(out), {a.node(), b.node()});
  Node* pa = a.raw();
  Node* pb = b.raw();
  n->backprop = [pa, pb](const Node& self) {
    if (pa->requires_grad) {
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pa->grad.at(i) += self.grad.at(i) * pb->value.at(i);
    }
    if (pb->requires_grad) {
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pb->grad.at(i) += self.grad.at(i) * pa->value.at(i);
    }
  };
  return Var(n);
}

inline Var scale(const Var& a, double c) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.at(i) *= c;
  auto n = detail::new_op_node("scale", std::move(out), {a.node()});
  Node* pa = a.raw();
  n->backprop = [pa, c](const Node& self) {
    if (!pa->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      pa->grad.at(i) += c * self.grad.at(i);
  };
  return Var(n);
}

inline Var add_const(const Var& a, double c) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.at(i) += c;
  auto n = detail::new_op_node("add_const", std::move(out), {a.node()});
  Node* pa = a.raw();
  n->backprop = [pa](const Node& self) {
    if (!pa->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      pa->grad.at(i) += self.grad.at(i);
  };
  return Var(n);
}

// Elementwise product with a fixed tensor (no gradient to the mask).
inline Var mul_tensor(const Var& a, Tensor mask) {
  detail::require_same_shape(a.value(), mask, "mul_tensor");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.at(i) *= mask.at(i);
  auto n = detail::new_op_node("mul_tensor", std::move(out), {a.node()});
  Node* pa = a.raw();
  auto m = std::make_shared<Tensor>(std::move(mask));
  n->backprop = [pa, m](const Node& self) {
    if (!pa->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      pa->grad.at(i) += self.grad.at(i) * m->at(i);
  };
  return Var(n);
}

inline Var add_tensor(const Var& a, const Tensor& t) {
  detail::require_same_shape(a.value(), t, "add_tensor");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.at(i) += t.at(i);
  auto n = detail::new_op_node("add_tensor", std::move(out), {a.node()});
  Node* pa = a.raw();
  n->backprop = [pa](const Node& self) {
    if (!pa->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      pa->grad.at(i) += self.grad.at(i);
  };
  return Var(n);
}

// ---------------------------------------------------------------------------
// Matrix operations

inline Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) {
    throw std::invalid_argument("matmul: incompatible shapes " +
                                Tensor::shape_string(av.shape()) + " x " +
                                Tensor::shape_string(bv.shape()));
  }
  Tensor out = Tensor::matrix(av.rows(), bv.cols());
  detail::as_matrix(out).noalias() =
      detail::as_matrix(av) * detail::as_matrix(bv);
  auto n = detail::new_op_node("matmul", std::move(out), {a.node(), b.node()});
  Node* pa = a.raw();
  Node* pb = b.raw();
  n->backprop = [pa, pb](const Node& self) {
    auto g = detail::as_matrix(self.grad);
    if (pa->requires_grad) {
      detail::as_matrix(pa->grad).noalias() +=
          g * detail::as_matrix(pb->value).transpose();
    }
    if (pb->requires_grad) {
      detail::as_matrix(pb->grad).noalias() +=
          detail::as_matrix(pa->value).transpose() * g;
    }
  };
  return Var(n);
}

// Broadcast-add a 1 x n row vector to every row of an m x n matrix.
inline Var add_row(const Var& a, const Var& r) {
  const Tensor& av = a.value();
  const Tensor& rv = r.value();
  if (av.rank() != 2 || rv.rank() != 2 || rv.rows() != 1 ||
      rv.cols() != av.cols()) {
    throw std::invalid_argument("add_row: incompatible shapes " +
                                Tensor::shape_string(av.shape()) + " + " +
                                Tensor::shape_string(rv.shape()));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) += rv(0, j);
  auto n = detail::new_op_node("add_row", std::move(out), {a.node(), r.node()});
  Node* pa = a.raw();
  Node* pr = r.raw();
  n->backprop = [pa, pr](const Node& self) {
    const std::size_t rows = self.grad.rows();
    const std::size_t cols = self.grad.cols();
    if (pa->requires_grad) {
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        pa->grad.at(i) += self.grad.at(i);
    }
    if (pr->requires_grad) {
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
          pr->grad(0, j) += self.grad(i, j);
    }
  };
  return Var(n);
}

// ---------------------------------------------------------------------------
// Nonlinearities

inline Var vtanh(const Var& a) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = std::tanh(out.at(i));
  auto n = detail::new_op_node("tanh", std::move(out), {a.node()});
  Node* pa = a.raw();
  n->backprop = [pa](const Node& self) {
    if (!pa->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.value.at(i);
      pa->grad.at(i) += self.grad.at(i) * (1.0 - y * y);
    }
  };
  return Var(n);
}

inline Var vrelu(const Var& a) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i)
    out.at(i) = out.at(i) > 0.0 ? out.at(i) : 0.0;
  auto n = detail::new_op_node("relu", std::move(out), {a.node()});
  Node* pa = a.raw();
  n->backprop = [pa](const Node& self) {
    if (!pa->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa->value.at(i) > 0.0) pa->grad.at(i) += self.grad.at(i);
    }
  };
  return Var(n);
}

// Row-wise softmax with max subtraction for stability.
inline Var softmax_rows(const Var& a) {
  const Tensor& av = a.value();
  if (av.rank() != 2) throw std::invalid_argument("softmax_rows: rank-2 input required");
  Tensor out = av;
  const std::size_t rows = av.rows();
  const std::size_t cols = av.cols();
  for (std::size_t i = 0; i < rows; ++i) {
    double mx = out(i, 0);
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, out(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      out(i, j) = std::exp(out(i, j) - mx);
      denom += out(i, j);
    }
    for (std::size_t j = 0; j < cols; ++j) out(i, j) /= denom;
  }
  auto n = detail::new_op_node("softmax", std::move(out), {a.node()});
  Node* pa = a.raw();
  n->backprop = [pa](const Node& self) {
    if (!pa->requires_grad) return;
    const std::size_t rows = self.value.rows();
    const std::size_t cols = self.value.cols();
    for (std::size_t i = 0; i < rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j)
        dot += self.grad(i, j) * self.value(i, j);
      for (std::size_t j = 0; j < cols; ++j)
        pa->grad(i, j) += (self.grad(i, j) - dot) * self.value(i, j);
    }
  };
  return Var(n);
}

// ---------------------------------------------------------------------------
// Gather / stack / slice

// Row lookup: out row i = table row indices[i]. Gradient scatters back into
// exactly the looked-up rows.
inline Var gather_rows(const Var& table, std::vector<std::size_t> indices) {
  const Tensor& tv = table.value();
  if (tv.rank() != 2) throw std::invalid_argument("gather_rows: rank-2 table required");
  for (std::size_t idx : indices) {
    if (idx >= tv.rows()) {
      throw std::out_of_range("gather_rows: index " + std::to_string(idx) +
                              " out of range for table with " +
                              std::to_string(tv.rows()) + " rows");
    }
  }
  Tensor out = Tensor::matrix(indices.size(), tv.cols());
  for (std::size_t i = 0; i < indices.size(); ++i)
    for (std::size_t j = 0; j < tv.cols(); ++j) out(i, j) = tv(indices[i], j);
  auto n = detail::new_op_node("gather", std::move(out), {table.node()});
  Node* pt = table.raw();
  auto idx = std::make_shared<std::vector<std::size_t>>(std::move(indices));
  n->backprop = [pt, idx](const Node& self) {
    if (!pt->requires_grad) return;
    const std::size_t cols = self.grad.cols();
    for (std::size_t i = 0; i < idx->size(); ++i)
      for (std::size_t j = 0; j < cols; ++j)
        pt->grad((*idx)[i], j) += self.grad(i, j);
  };
  return Var(n);
}

// Stack rank-2 parts with equal column counts into one matrix.
inline Var vstack(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("vstack: no parts");
  const std::size_t cols = parts.front().value().cols();
  std::size_t rows = 0;
  std::vector<std::shared_ptr<Node>> parent_nodes;
  parent_nodes.reserve(parts.size());
  for (const auto& p : parts) {
    if (p.value().rank() != 2 || p.value().cols() != cols) {
      throw std::invalid_argument("vstack: incompatible part shape " +
                                  Tensor::shape_string(p.value().shape()));
    }
    rows += p.value().rows();
    parent_nodes.push_back(p.node());
  }
  Tensor out = Tensor::matrix(rows, cols);
  std::size_t r = 0;
  for (const auto& p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t i = 0; i < pv.rows(); ++i, ++r)
      for (std::size_t j = 0; j < cols; ++j) out(r, j) = pv(i, j);
  }
  auto n = detail::new_op_node("vstack", std::move(out), std::move(parent_nodes));
  std::vector<Node*> raw;
  raw.reserve(n->parents.size());
  for (const auto& p : n->parents) raw.push_back(p.get());
  n->backprop = [raw](const Node& self) {
    const std::size_t cols = self.grad.cols();
    std::size_t r = 0;
    for (Node* p : raw) {
      const std::size_t pr = p->value.rows();
      if (p->requires_grad) {
        for (std::size_t i = 0; i < pr; ++i)
          for (std::size_t j = 0; j < cols; ++j)
            p->grad(i, j) += self.grad(r + i, j);
      }
      r += pr;
    }
  };
  return Var(n);
}

inline Var slice_rows(const Var& a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  if (av.rank() != 2 || begin > end || end > av.rows()) {
    throw std::invalid_argument("slice_rows: bad range");
  }
  Tensor out = Tensor::matrix(end - begin, av.cols());
  for (std::size_t i = begin; i < end; ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(i - begin, j) = av(i, j);
  auto n = detail::new_op_node("slice_rows", std::move(out), {a.node()});
  Node* pa = a.raw();
  n->backprop = [pa, begin](const Node& self) {
    if (!pa->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.rows(); ++i)
      for (std::size_t j = 0; j < self.grad.cols(); ++j)
        pa->grad(begin + i, j) += self.grad(i, j);
  };
  return Var(n);
}

inline Var reshape(const Var& a, std::vector<std::size_t> shape) {
  if (Tensor::num_elements(shape) != a.value().size()) {
    throw std::invalid_argument("reshape: element count mismatch");
  }
  Tensor out(shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = a.value().at(i);
  auto n = detail::new_op_node("reshape", std::move(out), {a.node()});
  Node* pa = a.raw();
  n->backprop = [pa](const Node& self) {
    if (!pa->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      pa->grad.at(i) += self.grad.at(i);
  };
  return Var(n);
}

// ---------------------------------------------------------------------------
// Reductions

inline Var mean_rows(const Var& a) {
  const Tensor& av = a.value();
  if (av.rank() != 2 || av.rows() == 0) {
    throw std::invalid_argument("mean_rows: non-empty rank-2 input required");
  }
  const std::size_t rows = av.rows();
  const std::size_t cols = av.cols();
  Tensor out = Tensor::matrix(1, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out(0, j) += av(i, j);
  for (std::size_t j = 0; j < cols; ++j) out(0, j) /= static_cast<double>(rows);
  auto n = detail::new_op_node("mean_rows", std::move(out), {a.node()});
  Node* pa = a.raw();
  n->backprop = [pa, rows, cols](const Node& self) {
    if (!pa->requires_grad) return;
    const double inv = 1.0 / static_cast<double>(rows);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j)
        pa->grad(i, j) += self.grad(0, j) * inv;
  };
  return Var(n);
}

inline Var sum_all(const Var& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) s += a.value().at(i);
  auto n = detail::new_op_node("sum", Tensor::scalar(s), {a.node()});
  Node* pa = a.raw();
  n->backprop = [pa](const Node& self) {
    if (!pa->requires_grad) return;
    const double g = self.grad.at(0);
    for (std::size_t i = 0; i < pa->grad.size(); ++i) pa->grad.at(i) += g;
  };
  return Var(n);
}

inline Var mean_all(const Var& a) {
  if (a.value().size() == 0) throw std::invalid_argument("mean_all: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) s += a.value().at(i);
  const double inv = 1.0 / static_cast<double>(a.value().size());
  auto n = detail::new_op_node("mean", Tensor::scalar(s * inv), {a.node()});
  Node* pa = a.raw();
  n->backprop = [pa, inv](const Node& self) {
    if (!pa->requires_grad) return;
    const double g = self.grad.at(0) * inv;
    for (std::size_t i = 0; i < pa->grad.size(); ++i) pa->grad.at(i) += g;
  };
  return Var(n);
}

// Squared Frobenius norm (sum of squared entries).
inline Var sq_norm(const Var& a) {
  auto n = detail::new_op_node("sq_norm", Tensor::scalar(a.value().squared_norm()),
                               {a.node()});
  Node* pa = a.raw();
  n->backprop = [pa](const Node& self) {
    if (!pa->requires_grad) return;
    const double g = 2.0 * self.grad.at(0);
    for (std::size_t i = 0; i < pa->grad.size(); ++i)
      pa->grad.at(i) += g * pa->value.at(i);
  };
  return Var(n);
}

// Maximum entry; the subgradient goes to the first argmax.
inline Var max_all(const Var& a) {
  if (a.value().size() == 0) throw std::invalid_argument("max_all: empty input");
  std::size_t arg = 0;
  for (std::size_t i = 1; i < a.value().size(); ++i)
    if (a.value().at(i) > a.value().at(arg)) arg = i;
  auto n = detail::new_op_node("max", Tensor::scalar(a.value().at(arg)), {a.node()});
  Node* pa = a.raw();
  n->backprop = [pa, arg](const Node& self) {
    if (!pa->requires_grad) return;
    pa->grad.at(arg) += self.grad.at(0);
  };
  return Var(n);
}

// ---------------------------------------------------------------------------
// Scalar-friendly elementwise functions

// Square root; subgradient 0 at exactly zero so triplet distances of
// coincident embeddings do not produce NaNs.
inline Var vsqrt(const Var& a) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out.at(i) < 0.0) throw std::domain_error("vsqrt: negative input");
    out.at(i) = std::sqrt(out.at(i));
  }
  auto n = detail::new_op_node("sqrt", std::move(out), {a.node()});
  Node* pa = a.raw();
  n->backprop = [pa](const Node& self) {
    if (!pa->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.value.at(i);
      if (y > 0.0) pa->grad.at(i) += self.grad.at(i) * 0.5 / y;
    }
  };
  return Var(n);
}

inline Var vlog(const Var& a) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out.at(i) <= 0.0) throw std::domain_error("vlog: non-positive input");
    out.at(i) = std::log(out.at(i));
  }
  auto n = detail::new_op_node("log", std::move(out), {a.node()});
  Node* pa = a.raw();
  n->backprop = [pa](const Node& self) {
    if (!pa->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      pa->grad.at(i) += self.grad.at(i) / pa->value.at(i);
  };
  return Var(n);
}

// Elementwise power with a fixed non-negative exponent.
inline Var pow_const(const Var& a, double exponent) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i)
    out.at(i) = std::pow(out.at(i), exponent);
  auto n = detail::new_op_node("pow", std::move(out), {a.node()});
  Node* pa = a.raw();
  n->backprop = [pa, exponent](const Node& self) {
    if (!pa->requires_grad || exponent == 0.0) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      pa->grad.at(i) += self.grad.at(i) * exponent *
                        std::pow(pa->value.at(i), exponent - 1.0);
    }
  };
  return Var(n);
}

// Clamp to [lo, hi]; gradient passes through wherever the input was not clipped.
inline Var clamp(const Var& a, double lo, double hi) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i)
    out.at(i) = std::min(hi, std::max(lo, out.at(i)));
  auto n = detail::new_op_node("clamp", std::move(out), {a.node()});
  Node* pa = a.raw();
  n->backprop = [pa, lo, hi](const Node& self) {
    if (!pa->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double x = pa->value.at(i);
      if (x >= lo && x <= hi) pa->grad.at(i) += self.grad.at(i);
    }
  };
  return Var(n);
}

// ---------------------------------------------------------------------------
// Backward pass

namespace detail {

inline std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (!visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // parents before children
}

}  // namespace detail

// Propagates d(loss)/d(node) to every reachable node. Leaf gradients
// accumulate across calls; interior gradients are reset per call, so a
// second backward on the same graph exactly doubles parameter gradients.
inline void backward(const Var& loss) {
  if (loss.value().size() != 1 || loss.value().rank() != 0) {
    throw std::invalid_argument("backward: loss must be a scalar");
  }
  std::vector<Node*> order = detail::topo_order(loss.raw());
  for (Node* n : order) {
    if (!n->is_leaf()) n->grad.fill(0.0);
  }
  loss.raw()->grad.at(0) = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->requires_grad) n->backprop(*n);
  }
}

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckEntry {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double finite_diff = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t entries_checked = 0;
  bool passed = true;
  GradCheckEntry worst;
};

// Compares analytic gradients against central finite differences. The
// relative error uses a floor of 1e-3 in the denominator so near-zero
// gradients are compared on an absolute scale.
inline GradCheckReport grad_check(const std::function<Var()>& f,
                                  const std::vector<Var>& params,
                                  double h = 1e-5, double tol = 1e-4) {
  for (const Var& p : params) const_cast<Var&>(p).zero_grad();
  Var loss = f();
  backward(loss);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const Var& p : params) analytic.push_back(p.grad());

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& value = const_cast<Var&>(params[pi]).value();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value.at(i);
      value.at(i) = saved + h;
      const double fp = f().scalar_value();
      value.at(i) = saved - h;
      const double fm = f().scalar_value();
      value.at(i) = saved;
      const double fd = (fp - fm) / (2.0 * h);
      const double an = analytic[pi].at(i);
      const double rel =
          std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-3});
      ++report.entries_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst = {params[pi].name(), i, an, fd, rel};
      }
    }
  }
  report.passed = report.max_rel_err < tol;
  return report;
}

}  // namespace npcnet
