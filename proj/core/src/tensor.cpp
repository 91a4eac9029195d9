#include "nibkit/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace nibkit {

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << n << "," << c << "," << h << "," << w << ")";
  return os.str();
}

template <typename T>
Tensor<T> Tensor<T>::zeros(const Shape& s) {
  auto impl = std::make_shared<Impl>();
  impl->shape = s;
  impl->values.assign(static_cast<std::size_t>(s.numel()), T(0));
  Tensor t;
  t.impl_ = std::move(impl);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::full(const Shape& s, T value) {
  Tensor t = zeros(s);
  std::fill(t.impl_->values.begin(), t.impl_->values.end(), value);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::from_vector(const Shape& s, std::vector<T> values) {
  if (static_cast<std::int64_t>(values.size()) != s.numel())
    throw ShapeError("tensor: value buffer of length " + std::to_string(values.size()) +
                     " does not fill shape " + s.str());
  auto impl = std::make_shared<Impl>();
  impl->shape = s;
  impl->values = std::move(values);
  Tensor t;
  t.impl_ = std::move(impl);
  return t;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!has_grad()) throw ValueError("tensor: gradient requested but never populated");
  return impl_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (defined()) impl_->grad.assign(static_cast<std::size_t>(impl_->shape.numel()), T(0));
}

template <typename T>
T Tensor<T>::item() const {
  if (shape() != kScalarShape)
    throw ShapeError("tensor: item() requires shape (1,1,1,1), got " + shape().str());
  return impl_->values[0];
}

template <typename T>
T Tensor<T>::at(int n, int c, int y, int x) const {
  const Shape& s = shape();
  return impl_->values[((std::size_t(n) * s.c + c) * s.h + y) * s.w + x];
}

template <typename T>
void Tensor<T>::set(int n, int c, int y, int x, T v) {
  const Shape& s = shape();
  impl_->values[((std::size_t(n) * s.c + c) * s.h + y) * s.w + x] = v;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from_vector(shape(), std::vector<T>(impl_->values));
}

namespace detail {

template <typename T>
Tensor<T> make_from_op(const char* op, const Shape& shape, std::vector<T>&& values,
                       const std::vector<Tensor<T>>& inputs,
                       std::function<void(TensorImpl<T>&)> backward_fn) {
  Tensor<T> out = Tensor<T>::from_vector(shape, std::move(values));
  bool needs = false;
  for (const auto& in : inputs) needs = needs || (in.defined() && in.requires_grad());
  if (needs) {
    auto node = std::make_shared<Node<T>>();
    node->op = op;
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.impl_);
    node->backward = std::move(backward_fn);
    out.impl_->node = std::move(node);
    out.impl_->requires_grad = true;
  }
  return out;
}

template Tensor<float> make_from_op(const char*, const Shape&, std::vector<float>&&,
                                    const std::vector<Tensor<float>>&,
                                    std::function<void(TensorImpl<float>&)>);
template Tensor<double> make_from_op(const char*, const Shape&, std::vector<double>&&,
                                     const std::vector<Tensor<double>>&,
                                     std::function<void(TensorImpl<double>&)>);

}  // namespace detail

template <typename T>
void backward(const Tensor<T>& loss) {
  using Impl = detail::TensorImpl<T>;
  if (!loss.defined()) throw ValueError("backward: undefined loss tensor");
  if (loss.shape() != kScalarShape)
    throw ShapeError("backward: loss must have shape (1,1,1,1), got " + loss.shape().str());
  if (!loss.requires_grad() || !loss.impl_->node)
    throw ValueError("backward: loss has no recorded graph (nothing requires grad)");

  // Iterative post-order DFS: children (op inputs) come before their outputs,
  // so the reversed list runs each node after all of its consumers.
  std::vector<Impl*> order;
  std::unordered_set<Impl*> visited;
  std::vector<std::pair<Impl*, std::size_t>> stack;
  stack.emplace_back(loss.impl_.get(), 0);
  visited.insert(loss.impl_.get());
  while (!stack.empty()) {
    auto& [impl, next_child] = stack.back();
    if (impl->node && next_child < impl->node->inputs.size()) {
      Impl* child = impl->node->inputs[next_child++].get();
      if (child->requires_grad && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(impl);
      stack.pop_back();
    }
  }

  loss.impl_->grad.assign(1, T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Impl* impl = *it;
    if (impl->node) {
      detail::ensure_grad(*impl);  // dead branches may never have been seeded
      impl->node->backward(*impl);
    }
  }
}

template class Tensor<float>;
template class Tensor<double>;
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace nibkit
