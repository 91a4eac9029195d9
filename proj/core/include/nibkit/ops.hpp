#pragma once

#include "nibkit/tensor.hpp"

namespace nibkit {

// Elementwise; shapes must match exactly.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

// scale * x + shift
template <typename T>
Tensor<T> affine(const Tensor<T>& x, T scale, T shift);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T negative_slope = T(0.2));
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> tanh(const Tensor<T>& x);

// Cross-correlation with zero padding. weight is (c_out, c_in, k, k) packed
// into Shape{n=c_out, c=c_in, h=k, w=k}; bias is (1, c_out, 1, 1).
// Even k is accepted only with padding 0 (no symmetric "same" padding exists).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride = 1, int padding = 0);

// Orthonormal 2-d DCT-II per (n, c) plane, and its inverse.
template <typename T>
Tensor<T> dct2(const Tensor<T>& x);
template <typename T>
Tensor<T> idct2(const Tensor<T>& x);

// Fixed (non-learnable) separable gaussian low-pass with symmetric boundary
// reflection; the normalized symmetric kernel preserves the global mean.
template <typename T>
Tensor<T> gaussian_blur(const Tensor<T>& x, double sigma, int ksize);

template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& x);

// Per-(n, c) spatial standardization, no affine parameters.
template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, T eps = T(1e-5));

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

// Copy of batch element `index` as a (1, c, h, w) tensor.
template <typename T>
Tensor<T> narrow_batch(const Tensor<T>& x, int index);

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x);
template <typename T>
Tensor<T> mean_all(const Tensor<T>& x);
template <typename T>
Tensor<T> mean_abs(const Tensor<T>& x);

// Mean absolute / mean squared difference, as scalars.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> l2_loss(const Tensor<T>& a, const Tensor<T>& b);

#define NIBKIT_EXTERN_OPS(T)                                                              \
  extern template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                     \
  extern template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                     \
  extern template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                     \
  extern template Tensor<T> affine(const Tensor<T>&, T, T);                              \
  extern template Tensor<T> relu(const Tensor<T>&);                                      \
  extern template Tensor<T> leaky_relu(const Tensor<T>&, T);                             \
  extern template Tensor<T> sigmoid(const Tensor<T>&);                                   \
  extern template Tensor<T> tanh(const Tensor<T>&);                                      \
  extern template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                   int, int);                                            \
  extern template Tensor<T> dct2(const Tensor<T>&);                                      \
  extern template Tensor<T> idct2(const Tensor<T>&);                                     \
  extern template Tensor<T> gaussian_blur(const Tensor<T>&, double, int);                \
  extern template Tensor<T> upsample_nearest2(const Tensor<T>&);                         \
  extern template Tensor<T> instance_norm(const Tensor<T>&, T);                          \
  extern template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);         \
  extern template Tensor<T> narrow_batch(const Tensor<T>&, int);                         \
  extern template Tensor<T> sum_all(const Tensor<T>&);                                   \
  extern template Tensor<T> mean_all(const Tensor<T>&);                                  \
  extern template Tensor<T> mean_abs(const Tensor<T>&);                                  \
  extern template Tensor<T> l1_loss(const Tensor<T>&, const Tensor<T>&);                 \
  extern template Tensor<T> l2_loss(const Tensor<T>&, const Tensor<T>&);

NIBKIT_EXTERN_OPS(float)
NIBKIT_EXTERN_OPS(double)
#undef NIBKIT_EXTERN_OPS

}  // namespace nibkit
