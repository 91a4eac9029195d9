#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nibkit/error.hpp"

namespace nibkit {

// Dense 4-d layout (n, c, h, w), row-major with w fastest.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::int64_t numel() const { return std::int64_t(n) * c * h * w; }
  std::int64_t plane() const { return std::int64_t(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

inline const Shape kScalarShape{1, 1, 1, 1};

template <typename T>
class Tensor;

namespace detail {

template <typename T>
struct Node;

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;  // allocated lazily during backward
  bool requires_grad = false;
  std::shared_ptr<Node<T>> node;  // producing op; null for leaves
};

// One recorded op. `backward` reads out.grad and accumulates into the
// inputs' grad buffers; it must touch only inputs with requires_grad set.
template <typename T>
struct Node {
  const char* op = "";
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  std::function<void(TensorImpl<T>& out)> backward;
};

template <typename T>
inline void ensure_grad(TensorImpl<T>& t) {
  if (t.grad.empty()) t.grad.assign(static_cast<std::size_t>(t.shape.numel()), T(0));
}

template <typename T>
Tensor<T> make_from_op(const char* op, const Shape& shape, std::vector<T>&& values,
                       const std::vector<Tensor<T>>& inputs,
                       std::function<void(TensorImpl<T>&)> backward_fn);

}  // namespace detail

// Value-semantics handle onto a shared buffer. Tensors are immutable once they
// participate in a recorded graph; only leaf buffers (parameters, staging
// tensors) may be written through values_mut()/set().
template <typename T = float>
class Tensor {
public:
  using Impl = detail::TensorImpl<T>;

  Tensor() = default;

  static Tensor zeros(const Shape& s);
  static Tensor full(const Shape& s, T value);
  static Tensor from_vector(const Shape& s, std::vector<T> values);
  static Tensor scalar(T value) { return full(kScalarShape, value); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return check().shape; }
  std::int64_t numel() const { return shape().numel(); }

  std::span<const T> values() const { return check().values; }
  std::span<T> values_mut() { return check().values; }

  bool has_grad() const { return defined() && !impl_->grad.empty(); }
  std::span<const T> grad() const;
  void zero_grad();

  Tensor& set_requires_grad(bool on = true) {
    check().requires_grad = on;
    return *this;
  }
  bool requires_grad() const { return check().requires_grad; }

  T item() const;
  T at(int n, int c, int y, int x) const;
  void set(int n, int c, int y, int x, T v);

  // Value copy with no recorded history.
  Tensor detach() const;
  template <typename U>
  Tensor<U> cast() const;

  std::shared_ptr<Impl> impl_;

private:
  Impl& check() const {
    if (!impl_) throw ValueError("tensor: use of an undefined (default-constructed) tensor");
    return *impl_;
  }
};

// Reverse-mode sweep from a scalar loss. Visits every recorded node exactly
// once in reverse topological order; gradients accumulate across multiple
// uses of the same tensor.
template <typename T>
void backward(const Tensor<T>& loss);

template <typename T>
template <typename U>
Tensor<U> Tensor<T>::cast() const {
  const auto& src = check();
  std::vector<U> out(src.values.size());
  for (std::size_t i = 0; i < src.values.size(); ++i) out[i] = static_cast<U>(src.values[i]);
  return Tensor<U>::from_vector(src.shape, std::move(out));
}

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template void backward(const Tensor<float>&);
extern template void backward(const Tensor<double>&);

}  // namespace nibkit
