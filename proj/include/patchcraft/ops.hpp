#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "patchcraft/random.hpp"
#include "patchcraft/tensor.hpp"

// Differentiable operations. Every function records a backward rule on the
// active tape when an operand requires a gradient. Apart from the bias add
// in linear(), nothing broadcasts: operand shapes must match exactly.
namespace patchcraft::ops {

// [m x k] * [k x n] -> [m x n]
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

// x [rows x in] * weight [in x out] + bias [out] -> [rows x out]
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Elementwise product.
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor);

// Sum of all elements as a [1] tensor.
template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x);

// Same values, new shape with equal element count.
template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x, std::size_t axis);

// Normalizes over the last axis with biased variance, then applies gamma/beta.
template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, T eps);

// Tanh approximation of x * Phi(x).
template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x);

// Inverted dropout. A zero rate returns `x` itself.
template <typename T>
BasicTensor<T> dropout(const BasicTensor<T>& x, T rate, Rng& rng);

// Rows [begin, begin + count) of a rank-2 tensor.
template <typename T>
BasicTensor<T> slice_rows(const BasicTensor<T>& x, std::size_t begin, std::size_t count);

// Gathers rows of a rank-2 tensor; repeated indices accumulate on the way back.
template <typename T>
BasicTensor<T> take_rows(const BasicTensor<T>& x, std::span<const std::size_t> rows);

// Stacks rank-2 tensors of equal width.
template <typename T>
BasicTensor<T> concat_rows(std::span<const BasicTensor<T>> parts);

// Scaled dot-product attention for `batch` independent sequences packed as
// rows: q, k, v are [(batch * tokens) x width] with width split into `heads`
// contiguous column groups. When `probabilities` is non-null it receives the
// attention matrices laid out as [batch][head][query][key].
template <typename T>
BasicTensor<T> attention(const BasicTensor<T>& q, const BasicTensor<T>& k,
                         const BasicTensor<T>& v, std::size_t batch, std::size_t heads,
                         std::vector<T>* probabilities = nullptr);

// Scalar GELU used by the op above; exposed for tests.
double gelu_value(double x);

}  // namespace patchcraft::ops
