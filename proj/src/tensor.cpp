#include "moto/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "moto/error.hpp"

namespace moto {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void require_finite(std::span<const double> values, const char* op) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value in ") + op);
    }
  }
}

Tensor::Tensor() : shape_{0}, data_(std::make_shared<const std::vector<double>>()) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  if (shape_size(shape_) != values.size()) {
    throw ShapeError("tensor of shape " + shape_str(shape_) + " given " +
                     std::to_string(values.size()) + " values");
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(values));
}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() on tensor of shape " + shape_str(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols() on tensor of shape " + shape_str(shape_));
  return shape_[1];
}

double Tensor::at(std::size_t r, std::size_t c) const { return (*data_)[r * cols() + c]; }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != size()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

bool operator==(const Tensor& a, const Tensor& b) {
  return a.shape_ == b.shape_ && *a.data_ == *b.data_;
}

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
  require_finite(value.values(), "constant");
  nodes_.push_back(Node{std::move(value), false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value) {
  require_finite(value.values(), "leaf");
  nodes_.push_back(Node{std::move(value), true, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<NodeId> inputs, const char* op,
                 BackwardFn backward) {
  return record(std::move(value), std::span<const NodeId>(inputs.begin(), inputs.size()), op,
                std::move(backward));
}

Var Tape::record(Tensor value, std::span<const NodeId> inputs, const char* op,
                 BackwardFn backward) {
  require_finite(value.values(), op);
  bool needs = false;
  for (NodeId in : inputs) needs = needs || nodes_[in].requires_grad;
  nodes_.push_back(Node{std::move(value), needs, needs ? std::move(backward) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(Var root) const {
  if (&root.tape() != this) throw Error("backward root belongs to another tape");
  const Tensor& rv = value(root.id());
  if (rv.size() != 1) {
    throw ShapeError("backward root must be scalar, got " + shape_str(rv.shape()));
  }
  Gradients grads(*this);
  std::span<double> seed = grads.accum(root.id());
  if (seed.empty()) return grads;
  seed[0] = 1.0;
  for (NodeId id = root.id() + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!node.backward || !grads.touched(id)) continue;
    node.backward(grads.accum(id), grads);
  }
  return grads;
}

Gradients::Gradients(const Tape& tape) : tape_(&tape), buffers_(tape.size()) {}

std::span<double> Gradients::accum(NodeId id) {
  if (!tape_->requires_grad(id)) return {};
  auto& buf = buffers_[id];
  if (buf.empty()) buf.assign(tape_->value(id).size(), 0.0);
  return buf;
}

Tensor Gradients::of(Var v) const { return of(v.id()); }

Tensor Gradients::of(NodeId id) const {
  const Tensor& value = tape_->value(id);
  if (buffers_[id].empty()) return Tensor::zeros(value.shape());
  return Tensor(value.shape(), buffers_[id]);
}

}  // namespace moto
