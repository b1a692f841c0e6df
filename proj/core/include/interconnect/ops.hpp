#pragma once

#include <cstdint>
#include <span>

#include "interconnect/tensor.hpp"

// Differentiable primitives. Each op records its backward rule on the active
// tape when at least one input requires a gradient. Matrices are row-major;
// "last dimension" ops treat a tensor as rows() x cols().

namespace interconnect {

// When enabled, every op output is scanned and a NumericError is thrown on the
// first NaN/Inf. Off by default.
void set_finite_checks(bool enabled) noexcept;
bool finite_checks_enabled() noexcept;

// [m x k] . [k x n] -> [m x n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// 2-D transpose.
template <typename T>
Tensor<T> transpose(const Tensor<T>& x);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

// x[..., d] + bias[d], broadcast over rows.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);

// Elementwise product.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

// Softmax over the last dimension, max-subtracted. With `causal`, x must be
// 2-D and entry (i, j) with j > i is excluded (probability exactly 0).
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, bool causal = false);

// Normalizes each position over the last dimension, then applies gain/bias.
// A zero-variance row normalizes to 0 and therefore returns `bias`.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-5));

// Cross-correlation. x: [C_in x T], kernels: [C_out x C_in x K], bias: [C_out].
// Output length floor((T + 2*padding - K) / stride) + 1.
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& kernels, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding);

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                                 std::size_t padding);

// Gated linear unit over the channel (first) axis: [2c x T] -> [c x T],
// first half * sigmoid(second half).
template <typename T>
Tensor<T> glu(const Tensor<T>& x);

// Inverted dropout. Identity (the same tensor) when !train or p == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool train, std::uint64_t key);

// Rows of `table` selected by `ids`: [V x d] -> [n x d].
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const int> ids);

// Column block [start, start + count) of a 2-D tensor.
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t count);

template <typename T>
Tensor<T> concat_cols(std::span<const Tensor<T>> parts);

// Sum of all elements, shape {1}.
template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> mean(const Tensor<T>& x);

namespace detail {
template <typename T>
void check_finite(const Tensor<T>& x, const char* op);
}  // namespace detail

}  // namespace interconnect
