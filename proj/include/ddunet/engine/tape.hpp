#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ddunet/engine/tensor.hpp"

namespace ddunet {

using NodeId = std::size_t;
inline constexpr NodeId kNoNode = static_cast<NodeId>(-1);

template <typename T>
class Tape;

/// Handle to a value that may be recorded on a tape.
///
/// A Var with no tape is a plain constant: operations on it compute values
/// without recording anything, which is how inference and finite-difference
/// evaluation run.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value) : value_(std::make_shared<const Tensor<T>>(std::move(value))) {}
  Var(std::shared_ptr<const Tensor<T>> value, Tape<T>* tape, NodeId id)
      : value_(std::move(value)), tape_(tape), id_(id) {}

  const Tensor<T>& value() const { return *value_; }
  const std::shared_ptr<const Tensor<T>>& shared_value() const { return value_; }
  const Shape& shape() const { return value_->shape(); }
  std::size_t extent(std::size_t axis) const { return value_->extent(axis); }
  std::size_t rank() const { return value_->rank(); }
  std::size_t numel() const { return value_->numel(); }

  bool defined() const { return static_cast<bool>(value_); }
  bool tracked() const { return tape_ != nullptr; }
  Tape<T>* tape() const { return tape_; }
  NodeId id() const { return id_; }

 private:
  std::shared_ptr<const Tensor<T>> value_;
  Tape<T>* tape_ = nullptr;
  NodeId id_ = kNoNode;
};

// Maps the output gradient to one gradient per recorded input. An empty
// tensor in the result means "no contribution" to that input.
template <typename T>
using BackwardFn = std::function<std::vector<Tensor<T>>(const Tensor<T>& grad_out)>;

template <typename T>
struct Node {
  std::string op;
  std::vector<NodeId> inputs;
  std::shared_ptr<const Tensor<T>> value;
  BackwardFn<T> backward;  // empty for leaves
};

/// Gradients produced by one backward pass, indexed by node id.
template <typename T>
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::vector<Tensor<T>> grads) : grads_(std::move(grads)) {}

  // Gradient for `v`; zeros of v's shape when the loss does not depend on it.
  Tensor<T> of(const Var<T>& v) const;
  bool has(const Var<T>& v) const { return v.id() < grads_.size() && !grads_[v.id()].empty(); }

 private:
  std::vector<Tensor<T>> grads_;
};

/// Reverse-mode record of a computation.
///
/// Node ids are assigned in recording order, so every input id is smaller
/// than the id of its consumer. The tape is single-writer.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a differentiable input (parameter or data).
  Var<T> leaf(Tensor<T> value, std::string op = "leaf");
  Var<T> leaf(std::shared_ptr<const Tensor<T>> value, std::string op = "leaf");

  Var<T> record(std::string op, std::vector<NodeId> inputs, Tensor<T> value, BackwardFn<T> backward);

  std::size_t size() const { return nodes_.size(); }
  const Node<T>& node(NodeId id) const { return nodes_.at(id); }
  bool owns(const Var<T>& v) const { return v.tape() == this && v.id() < nodes_.size(); }

 private:
  std::vector<Node<T>> nodes_;
};

// Reverse traversal from a scalar loss; visits each reachable node once.
template <typename T>
Gradients<T> backward(const Tape<T>& tape, const Var<T>& loss);

// Builds the result Var of an operation: recorded on the inputs' tape when
// any input is tracked, otherwise an untracked constant. `make_backward` is
// only invoked when recording.
template <typename T, typename MakeBackward>
Var<T> make_result(std::string op, std::initializer_list<const Var<T>*> inputs, Tensor<T> value,
                   MakeBackward&& make_backward) {
  Tape<T>* tape = nullptr;
  for (const Var<T>* in : inputs) {
    if (!in->tracked()) continue;
    if (tape && tape != in->tape()) throw ShapeError(op + ": inputs recorded on different tapes");
    tape = in->tape();
  }
  if (!tape) return Var<T>(std::move(value));
  std::vector<NodeId> ids;
  for (const Var<T>* in : inputs) {
    ids.push_back(in->tracked() ? in->id() : kNoNode);
  }
  return tape->record(std::move(op), std::move(ids), std::move(value), make_backward());
}

// Same as above for a runtime-sized input list.
template <typename T, typename MakeBackward>
Var<T> make_result(std::string op, const std::vector<Var<T>>& inputs, Tensor<T> value,
                   MakeBackward&& make_backward) {
  Tape<T>* tape = nullptr;
  for (const Var<T>& in : inputs) {
    if (!in.tracked()) continue;
    if (tape && tape != in.tape()) throw ShapeError(op + ": inputs recorded on different tapes");
    tape = in.tape();
  }
  if (!tape) return Var<T>(std::move(value));
  std::vector<NodeId> ids;
  for (const Var<T>& in : inputs) ids.push_back(in.tracked() ? in.id() : kNoNode);
  return tape->record(std::move(op), std::move(ids), std::move(value), make_backward());
}

}  // namespace ddunet
