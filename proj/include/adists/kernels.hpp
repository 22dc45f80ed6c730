#pragma once

#include <array>
#include <cstddef>

#include "adists/tensor.hpp"

// OpenMP-parallel compute kernels. Each one has a serial counterpart in
// adists/reference.hpp that defines its semantics; the two are compared in the
// unit tests and in the benchmark target.
namespace adists::kernels {

/// Cross-correlation with zero padding and bias add.
/// input [Cin x H x W], filters [Cout x Cin x kH x kW], bias [Cout] (or empty).
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& filters,
                      const BasicTensor<T>& bias, std::size_t stride,
                      std::size_t padding);

/// Adjoint of conv2d with respect to its input.
template <typename T>
BasicTensor<T> conv2d_backward_input(const BasicTensor<T>& grad_output,
                                     const BasicTensor<T>& filters,
                                     const Shape& input_shape, std::size_t stride,
                                     std::size_t padding);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

// ReLU'(0) = 0.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& grad_output,
                             const BasicTensor<T>& input);

inline constexpr double kL2PoolEpsilon = 1e-12;
inline constexpr std::array<double, 3> kL2PoolTaps = {0.25, 0.5, 0.25};

inline constexpr std::size_t pooled_extent(std::size_t n) { return (n + 1) / 2; }

/// l2-pooling: sqrt(blur(x^2) + eps) subsampled by two. The blur is the 3x3
/// outer product of kL2PoolTaps centred on even input coordinates, with
/// replicate padding at the borders.
template <typename T>
BasicTensor<T> l2_pool(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> l2_pool_backward(const BasicTensor<T>& grad_output,
                                const BasicTensor<T>& input,
                                const BasicTensor<T>& output);

}  // namespace adists::kernels
