#include "ddunet/engine/tape.hpp"

#include "ddunet/engine/tensor_ops.hpp"

namespace ddunet {

template <typename T>
Tensor<T> Gradients<T>::of(const Var<T>& v) const {
  if (has(v)) return grads_[v.id()];
  return Tensor<T>::zeros(v.shape());
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value, std::string op) {
  return leaf(std::make_shared<const Tensor<T>>(std::move(value)), std::move(op));
}

template <typename T>
Var<T> Tape<T>::leaf(std::shared_ptr<const Tensor<T>> value, std::string op) {
  const NodeId id = nodes_.size();
  nodes_.push_back(Node<T>{std::move(op), {}, value, {}});
  return Var<T>(std::move(value), this, id);
}

template <typename T>
Var<T> Tape<T>::record(std::string op, std::vector<NodeId> inputs, Tensor<T> value,
                       BackwardFn<T> backward_fn) {
  const NodeId id = nodes_.size();
  for (NodeId in : inputs) {
    if (in != kNoNode && in >= id) throw ShapeError(op + ": input node is not on the tape");
  }
  auto shared = std::make_shared<const Tensor<T>>(std::move(value));
  nodes_.push_back(Node<T>{std::move(op), std::move(inputs), shared, std::move(backward_fn)});
  return Var<T>(std::move(shared), this, id);
}

template <typename T>
Gradients<T> backward(const Tape<T>& tape, const Var<T>& loss) {
  if (!tape.owns(loss)) throw ShapeError("backward: loss node is not on this tape");
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_to_string(loss.shape()));
  }
  std::vector<Tensor<T>> grads(tape.size());
  grads[loss.id()] = Tensor<T>::full(loss.shape(), T(1));
  for (NodeId id = loss.id() + 1; id-- > 0;) {
    if (grads[id].empty()) continue;
    const Node<T>& node = tape.node(id);
    if (!node.backward) continue;
    std::vector<Tensor<T>> in_grads = node.backward(grads[id]);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const NodeId in = node.inputs[k];
      if (in == kNoNode || k >= in_grads.size() || in_grads[k].empty()) continue;
      if (grads[in].empty()) {
        grads[in] = std::move(in_grads[k]);
      } else {
        add_inplace(grads[in], in_grads[k]);
      }
    }
    // Interior gradients are no longer needed once propagated.
    if (!node.inputs.empty()) grads[id] = Tensor<T>();
  }
  return Gradients<T>(std::move(grads));
}

template class Gradients<float>;
template class Gradients<double>;
template class Tape<float>;
template class Tape<double>;
template Gradients<float> backward(const Tape<float>&, const Var<float>&);
template Gradients<double> backward(const Tape<double>&, const Var<double>&);

}  // namespace ddunet
