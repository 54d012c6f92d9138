#include "urrl/tensor.hpp"

#include <sstream>

#include "urrl/errors.hpp"

namespace urrl {

Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

static void validate_shape(const Shape& shape, Index size) {
  for (Index d : shape) {
    if (d <= 0) throw DimensionError("non-positive dimension in shape " + shape_string(shape));
  }
  if (shape_size(shape) != size) {
    throw DimensionError("shape " + shape_string(shape) + " does not match " + std::to_string(size) +
                         " values");
  }
}

Tensor Tensor::constant(Shape shape, Eigen::VectorXd values) {
  validate_shape(shape, values.size());
  Tensor t;
  t.shape_ = std::move(shape);
  t.values_ = std::make_shared<const Eigen::VectorXd>(std::move(values));
  return t;
}

Tensor Tensor::constant(const RowMatrix& m) {
  Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
  return constant({m.rows(), m.cols()}, std::move(v));
}

Tensor Tensor::scalar(double v) { return constant({}, Eigen::VectorXd::Constant(1, v)); }

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double v) {
  const Index n = shape_size(shape);
  return constant(std::move(shape), Eigen::VectorXd::Constant(n, v));
}

Index Tensor::dim(Index axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape_));
  }
  return shape_[static_cast<std::size_t>(axis)];
}

Eigen::Map<const RowMatrix> Tensor::matrix() const {
  const Index cols = shape_.empty() ? 1 : shape_.back();
  return {values_->data(), values_->size() / cols, cols};
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape_));
  return (*values_)[0];
}

std::optional<std::size_t> Tensor::node_id() const {
  if (!tape_) return std::nullopt;
  return id_;
}

void GradSink::add(const Tensor& input, const Eigen::VectorXd& contribution) {
  if (!input.on_tape()) return;
  if (input.tape() != &tape_) throw ContractError("gradient routed to a tensor from another tape");
  tape_.accumulate(*input.node_id(), contribution);
}

Tensor Tape::variable(Shape shape, Eigen::VectorXd values) {
  return record(std::move(shape), std::move(values), nullptr);
}

Tensor Tape::variable(const Tensor& value) { return variable(value.shape(), value.values()); }

Tensor Tape::record(Shape shape, Eigen::VectorXd values, BackwardFn backward) {
  validate_shape(shape, values.size());
  Tensor t;
  t.shape_ = shape;
  t.values_ = std::make_shared<const Eigen::VectorXd>(std::move(values));
  t.tape_ = this;
  t.id_ = nodes_.size();
  nodes_.push_back(Node{std::move(shape), std::move(backward), Eigen::VectorXd()});
  return t;
}

void Tape::accumulate(std::size_t id, const Eigen::VectorXd& g) {
  Node& node = nodes_[id];
  if (g.size() != shape_size(node.shape)) {
    throw DimensionError("gradient of size " + std::to_string(g.size()) + " for node of shape " +
                         shape_string(node.shape));
  }
  if (node.grad.size() == 0) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape() != this) throw ContractError("backward() loss is not on this tape");
  if (loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  for (Node& n : nodes_) n.grad.resize(0);
  GradSink sink(*this);
  const std::size_t start = *loss.node_id();
  nodes_[start].grad = Eigen::VectorXd::Ones(1);
  for (std::size_t id = start + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0 || !n.backward) continue;
    // Closures only touch inputs, which have smaller ids.
    n.backward(n.grad, sink);
  }
}

Eigen::VectorXd Tape::grad(const Tensor& t) const {
  if (t.tape() != this) throw ContractError("grad() of a tensor not on this tape");
  const Node& n = nodes_[*t.node_id()];
  if (n.grad.size() == 0) return Eigen::VectorXd::Zero(shape_size(n.shape));
  return n.grad;
}

}  // namespace urrl
