#pragma once

// Dense fp64 tensors with a reverse-mode gradient tape.
//
// A Tensor is an immutable value (shape + row-major payload). Tensors created
// through Tape::variable, or produced by an op that consumed at least one such
// tensor, carry a node id on that tape; everything else is a constant and
// costs nothing beyond the forward computation.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace urrl {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Index shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tape;

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, Eigen::VectorXd values);
  static Tensor constant(const RowMatrix& m);
  static Tensor scalar(double v);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const;
  Index size() const { return values_ ? values_->size() : 0; }
  bool defined() const { return values_ != nullptr; }

  const Eigen::VectorXd& values() const { return *values_; }
  double operator[](Index i) const { return (*values_)[i]; }
  // Row-major view: all leading axes folded into rows, last axis as columns.
  Eigen::Map<const RowMatrix> matrix() const;
  double item() const;

  bool on_tape() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::optional<std::size_t> node_id() const;

 private:
  friend class Tape;
  Shape shape_;
  std::shared_ptr<const Eigen::VectorXd> values_;
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Receives gradient contributions during the backward sweep.
class GradSink {
 public:
  explicit GradSink(Tape& tape) : tape_(tape) {}
  // No-op for constants.
  void add(const Tensor& input, const Eigen::VectorXd& contribution);

 private:
  Tape& tape_;
};

using BackwardFn = std::function<void(const Eigen::VectorXd& grad_out, GradSink& sink)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor variable(Shape shape, Eigen::VectorXd values);
  Tensor variable(const Tensor& value);

  // Appends an op node. Callers guarantee that inputs precede it.
  Tensor record(Shape shape, Eigen::VectorXd values, BackwardFn backward);

  void backward(const Tensor& loss);

  // Gradient of the last backward() loss; zeros when the node was unreachable.
  Eigen::VectorXd grad(const Tensor& t) const;

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  friend class GradSink;
  struct Node {
    Shape shape;
    BackwardFn backward;
    Eigen::VectorXd grad;
  };
  void accumulate(std::size_t id, const Eigen::VectorXd& g);

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Ops. Binary elementwise ops broadcast numpy-style: shapes are aligned on
// trailing axes; an axis broadcasts when it is missing or has size 1.

Tensor matmul(const Tensor& a, const Tensor& b);  // [..., n] x [n, p]
Tensor bmm(const Tensor& a, const Tensor& b);     // [G, m, n] x [G, n, p]
Tensor transpose_last2(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);

Tensor sum(const Tensor& x);   // rank-0
Tensor mean(const Tensor& x);  // rank-0
Tensor sum_axis(const Tensor& x, Index axis, bool keepdim = false);
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor relu(const Tensor& x);
// slope is rank-0/[1] (shared) or [C] with C the last-axis size.
Tensor prelu(const Tensor& x, const Tensor& slope);

Tensor concat(std::span<const Tensor> parts);  // along the last axis
Tensor concat(std::initializer_list<Tensor> parts);
Tensor l2_norm(const Tensor& x);  // over the last axis; subgradient 0 at 0

Tensor masked_softmax(const Tensor& logits, const Tensor& additive_mask);
Tensor softmax(const Tensor& logits);
Tensor log_softmax(const Tensor& logits);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

Tensor reshape(const Tensor& x, Shape shape);
Tensor slice_last(const Tensor& x, Index start, Index length);
// Removes `axis` by picking one index along it.
Tensor take(const Tensor& x, Index axis, Index index);
// Rows of x (axis 0) are placed at `rows` of a zero tensor with `total` rows.
Tensor scatter_rows(const Tensor& x, std::span<const Index> rows, Index total);
Tensor gather_rows(const Tensor& x, std::span<const Index> rows);
Tensor detach(const Tensor& x);

// ---------------------------------------------------------------------------
// Finite-difference gradient check.

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  Index worst_index = 0;
};

// f maps bound parameter tensors to a scalar loss. It may be evaluated on
// tape variables or on constants and must be deterministic.
using TensorProgram = std::function<Tensor(std::span<const Tensor> params)>;

GradCheckResult grad_check(const TensorProgram& f, std::span<const Tensor> params, double h = 1e-5);

}  // namespace urrl
