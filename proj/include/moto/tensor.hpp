#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace moto {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor of doubles. Values are immutable and shared between
/// copies, so passing a Tensor by value is cheap.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_->size(); }
  bool empty() const { return data_->empty(); }

  /// Row count of a rank-2 tensor.
  std::size_t rows() const;
  /// Column count of a rank-2 tensor.
  std::size_t cols() const;

  std::span<const double> values() const { return *data_; }
  const double* data() const { return data_->data(); }
  double operator[](std::size_t i) const { return (*data_)[i]; }
  double at(std::size_t r, std::size_t c) const;

  /// Same values, different shape of equal element count.
  Tensor reshaped(Shape shape) const;

  /// Exact value and shape equality.
  friend bool operator==(const Tensor& a, const Tensor& b);

 private:
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
};

/// Throws NumericError if any value is NaN or infinite.
void require_finite(std::span<const double> values, const char* op);

class Tape;
class Gradients;

using NodeId = std::size_t;

/// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  NodeId id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

/// Propagates the gradient of one node into the gradients of its inputs.
using BackwardFn = std::function<void(std::span<const double> out_grad, Gradients& grads)>;

/// Append-only record of operations. Nodes are stored in creation order, so
/// every input precedes its consumers and a reverse sweep is a valid
/// topological order.
///
/// A tape has a single writer. Independent tapes may be used from separate
/// threads.
class Tape {
 public:
  Tape() { nodes_.reserve(1024); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Value that receives no gradient.
  Var constant(Tensor value);
  /// Differentiable input (parameter or test variable).
  Var leaf(Tensor value);

  /// Appends an operation result. The node requires a gradient if any input
  /// does. Rejects non-finite values.
  Var record(Tensor value, std::initializer_list<NodeId> inputs, const char* op,
             BackwardFn backward);
  Var record(Tensor value, std::span<const NodeId> inputs, const char* op, BackwardFn backward);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse-mode sweep from a scalar root. Does not modify the tape, so
  /// repeated calls return identical gradients.
  Gradients backward(Var root) const;

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;

  friend class Gradients;
};

/// Gradients of a scalar root with respect to every node of a tape.
class Gradients {
 public:
  explicit Gradients(const Tape& tape);

  /// Mutable accumulation buffer for a node, allocated zeroed on first use.
  /// Empty when the node does not require a gradient.
  std::span<double> accum(NodeId id);

  /// Gradient of the root with respect to `v`; zeros when the node was not
  /// reached.
  Tensor of(Var v) const;
  Tensor of(NodeId id) const;

  /// True when some gradient reached the node.
  bool touched(NodeId id) const { return !buffers_[id].empty(); }

 private:
  const Tape* tape_;
  std::vector<std::vector<double>> buffers_;
};

}  // namespace moto
