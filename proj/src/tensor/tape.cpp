#include <algorithm>
#include <numeric>
#include <sstream>

#include "dggan/tensor.hpp"

namespace dggan::tensor {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_str(shape_));
  }
}

template <typename T>
T Tensor<T>::item() const {
  if (data_.size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

namespace {

// Restores the tape's grad mode on scope exit.
template <typename T>
class GradModeGuard {
 public:
  GradModeGuard(bool& flag, bool value) : flag_(flag), saved_(flag) { flag_ = value; }
  ~GradModeGuard() { flag_ = saved_; }
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool& flag_;
  bool saved_;
};

}  // namespace

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::vector<Var<T>> inputs, BackwardFn<T> backward) {
  Node n;
  n.value = std::move(value);
  n.is_leaf = false;
  bool any = false;
  n.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (in.tape != this) throw ContractError("op mixes tensors from different tapes");
    n.inputs.push_back(in.id);
    any = any || nodes_[in.id].requires_grad;
  }
  n.requires_grad = grad_enabled_ && any;
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
std::vector<std::optional<Var<T>>> Tape<T>::sweep(Var<T> output, const std::vector<char>& reach) {
  const std::size_t n = output.id + 1;
  std::vector<std::optional<Var<T>>> adj(n);
  adj[output.id] = constant(Tensor<T>(value(output).shape(), T(1)));

  for (std::size_t i = n; i-- > 0;) {
    if (!adj[i] || !reach[i]) continue;
    // deque::push_back keeps references valid, but the closure is copied so
    // nothing depends on that.
    const Node& node = nodes_[i];
    if (node.is_leaf || !node.backward) continue;
    const std::vector<std::size_t> inputs = node.inputs;
    const BackwardFn<T> fn = node.backward;

    std::vector<char> need(inputs.size(), 0);
    bool any = false;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      need[k] = reach[inputs[k]];
      any = any || need[k];
    }
    if (!any) continue;

    InputGrads<T> grads = fn(Var<T>{this, i}, *adj[i], need);
    for (std::size_t k = 0; k < inputs.size() && k < grads.size(); ++k) {
      if (!need[k] || !grads[k]) continue;
      const std::size_t j = inputs[k];
      adj[j] = adj[j] ? add(*adj[j], *grads[k]) : *grads[k];
    }
  }
  return adj;
}

template <typename T>
std::vector<Var<T>> Tape<T>::grad(Var<T> output, std::span<const Var<T>> wrt, bool create_graph) {
  if (value(output).size() != 1) {
    throw ContractError("grad() needs a one-element output, got " + shape_str(value(output).shape()));
  }
  const std::size_t n = output.id + 1;
  std::vector<char> reach(n, 0);
  for (const auto& w : wrt) {
    if (w.id < n && nodes_[w.id].requires_grad) reach[w.id] = 1;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (reach[i] || nodes_[i].is_leaf || !nodes_[i].requires_grad) continue;
    for (std::size_t j : nodes_[i].inputs) {
      if (reach[j]) {
        reach[i] = 1;
        break;
      }
    }
  }
  if (!reach[output.id]) throw ContractError("input is not on the provenance path of the output");

  std::vector<std::optional<Var<T>>> adj;
  {
    GradModeGuard<T> guard(grad_enabled_, create_graph && grad_enabled_);
    adj = sweep(output, reach);
  }
  std::vector<Var<T>> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    if (w.id < n && adj[w.id]) {
      out.push_back(*adj[w.id]);
    } else {
      out.push_back(constant(Tensor<T>(value(w).shape(), T(0))));
    }
  }
  return out;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (value(loss).size() != 1) {
    throw ContractError("backward() needs a scalar loss, got " + shape_str(value(loss).shape()));
  }
  const std::size_t n = loss.id + 1;
  std::vector<char> reach(n, 0);
  for (std::size_t i = 0; i < n; ++i) reach[i] = nodes_[i].requires_grad ? 1 : 0;

  std::vector<std::optional<Var<T>>> adj;
  {
    GradModeGuard<T> guard(grad_enabled_, false);
    adj = sweep(loss, reach);
  }
  for (std::size_t i = 0; i < n; ++i) {
    Node& node = nodes_[i];
    if (!node.is_leaf || !node.requires_grad || !adj[i]) continue;
    const Tensor<T>& g = value(*adj[i]);
    if (!node.grad) {
      node.grad = g;
    } else {
      auto dst = node.grad->data();
      auto src = g.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
}

template <typename T>
Tensor<T> Tape<T>::leaf_grad(Var<T> leaf) const {
  const Node& node = nodes_.at(leaf.id);
  if (node.grad) return *node.grad;
  return Tensor<T>(node.value.shape(), T(0));
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace dggan::tensor
