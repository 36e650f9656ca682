#pragma once

// Tape-free numerical kernels behind the differentiable ops. Exposed for
// benchmarks and for callers that only need inference.

#include <array>
#include <cstddef>
#include <vector>

#include "tempnet/tensor.hpp"

namespace tempnet::kernels {

using Window3 = std::array<std::size_t, 3>;

/// Same-size zero-padded 3D convolution.
/// input [T,H,W,Cin], kernel [kT,kH,kW,Cin,Cout], bias [Cout] -> [T,H,W,Cout].
template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias);

/// Gradient of conv3d with respect to its input.
template <typename T>
Tensor<T> conv3d_backward_input(const Tensor<T>& grad_output, const Tensor<T>& kernel);

/// Accumulates the kernel and bias gradients of conv3d.
template <typename T>
void conv3d_backward_params(const Tensor<T>& input, const Tensor<T>& grad_output, Tensor<T>& grad_kernel,
                            Tensor<T>& grad_bias);

/// Throws ShapeError naming the first offending axis.
template <typename T>
void check_conv3d_shapes(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias);

/// Output shape of ceil-mode pooling.
Shape pooled_shape(const Shape& input, const Window3& window);

/// Ceil-mode max pooling over the first three axes of [T,H,W,C]. `argmax`
/// receives, for each output element, the linear input index of the first
/// maximal element in its window.
template <typename T>
Tensor<T> maxpool_forward(const Tensor<T>& input, const Window3& window, std::vector<std::size_t>& argmax);

}  // namespace tempnet::kernels
