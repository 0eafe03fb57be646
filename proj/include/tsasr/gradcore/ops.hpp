#pragma once

#include "tsasr/gradcore/graph.hpp"

#include <span>
#include <vector>

namespace tsasr {

// Differentiable primitives. Every op checks operand shapes and throws
// ShapeError on mismatch; all of them are grad-checked in tests/unit.

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b);

/// a * b^T
template <typename Scalar>
Var<Scalar> matmul_nt(Var<Scalar> a, Var<Scalar> b);

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b);

/// Adds a 1 x c row to every row of `a`.
template <typename Scalar>
Var<Scalar> add_row(Var<Scalar> a, Var<Scalar> row);

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar factor);

/// Elementwise product.
template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b);

/// Sum of all entries as a 1 x 1 value.
template <typename Scalar>
Var<Scalar> sum(Var<Scalar> a);

/// tanh-approximated GELU: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
template <typename Scalar>
Var<Scalar> gelu(Var<Scalar> a);

/// Row-wise layer normalization with 1 x c gain and bias.
template <typename Scalar>
Var<Scalar> layer_norm(Var<Scalar> x, Var<Scalar> gain, Var<Scalar> bias, Scalar eps = Scalar(1e-5));

/// scale * sum over rows r with targets[r] >= 0 of -log softmax(logits[r])[targets[r]].
/// Rows with a negative target are masked out.
template <typename Scalar>
Var<Scalar> softmax_cross_entropy(Var<Scalar> logits, std::span<const int> targets, Scalar scale = Scalar(1));

/// 1-d convolution over rows. `weight` is (kernel * c_in) x c_out with tap-major
/// rows; zero padding `pad` on both ends.
template <typename Scalar>
Var<Scalar> conv1d(Var<Scalar> x, Var<Scalar> weight, Var<Scalar> bias, int kernel, int stride, int pad);

/// Rows of `table` selected by `ids`; backward scatter-adds into the table.
template <typename Scalar>
Var<Scalar> embedding(Var<Scalar> table, std::span<const int> ids);

/// Stacks rows in argument order. All parts must share the column count.
template <typename Scalar>
Var<Scalar> concat_rows(std::span<const Var<Scalar>> parts);

template <typename Scalar>
Var<Scalar> concat_rows(std::initializer_list<Var<Scalar>> parts) {
  return concat_rows(std::span<const Var<Scalar>>(parts.begin(), parts.size()));
}

/// Copy of `m` with rows [start, start + fresh.rows()) taken from `fresh`.
/// The overwritten rows of `m` receive zero gradient.
template <typename Scalar>
Var<Scalar> replace_rows(Var<Scalar> m, Index start, Var<Scalar> fresh);

template <typename Scalar>
Var<Scalar> slice_rows(Var<Scalar> m, Index start, Index count);

/// Scaled dot-product attention split over `heads` column groups. With
/// `causal`, query row i only sees key rows j <= i (requires equal lengths).
template <typename Scalar>
Var<Scalar> attention(Var<Scalar> q, Var<Scalar> k, Var<Scalar> v, int heads, bool causal);

template <typename Scalar>
Var<Scalar> linear(Var<Scalar> x, Var<Scalar> weight, Var<Scalar> bias) {
  return add_row(matmul(x, weight), bias);
}

inline constexpr double kGeluCoeff = 0.044715;
inline constexpr double kSqrtTwoOverPi = 0.7978845608028654;

}  // namespace tsasr
