// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

#include "repiece/tensor.hpp"

namespace repiece::numerics {

/// [m x k] * [k x n] -> [m x n].
Tensor matmul(const Tensor& a, const Tensor& b);

/// a * b + bias broadcast over rows. bias has n entries.
Tensor linear(const Tensor& a, const Tensor& b, const Tensor& bias);

/// Row-wise softmax of t / scale, stabilised by subtracting the row max.
Tensor softmax_rows(const Tensor& t, float scale);

/// In-place variant on a single row; throws on non-finite input.
void softmax_inplace(std::span<float> row, float scale);

Tensor layer_norm(const Tensor& t, const Tensor& gamma, const Tensor& beta, float eps = 1e-6f);

/// Exact erf-form GELU.
float gelu(float x) noexcept;
Tensor gelu(const Tensor& t);

/// Cross-correlation with zero padding. input [C x H x W], kernels [F x C x kh x kw].
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, int stride, int padding);

double cosine_similarity(std::span<const float> a, std::span<const float> b);
double cosine_similarity(const Tensor& a, const Tensor& b);

/// Throws a numeric error naming `what` if any entry is NaN or infinite.
void check_finite(const Tensor& t, const char* what);

}  // namespace repiece::numerics
