// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

// Test-only reference implementations. Everything here is written directly in
// double precision with plain loops and shares no code with the library's
// kernels or reduction path.

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "repiece/embed.hpp"
#include "repiece/model.hpp"
#include "repiece/tensor.hpp"

namespace repiece::oracle {

using Matrix = std::vector<std::vector<double>>;

Matrix to_matrix(const Tensor& t);
Matrix matmul(const Matrix& a, const Matrix& b);

/// [F x H' x W'] flattened, cross-correlation with zero padding.
std::vector<double> conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, int stride, int padding);

std::vector<double> softmax(const std::vector<double>& logits, double scale);

struct Eq1Reference {
    std::vector<double> class_attention;  // head mean of the CLS attention row
    std::vector<double> cls_context;      // concatenated per-head A_class . V
    std::vector<double> cls_output;       // CLS row after projection and residual
    std::vector<std::vector<double>> row_sums;  // [head][query] attention row sums
};

/// Direct double-precision evaluation of one pre-norm attention block for the
/// token at `cls`.
Eq1Reference eq1(const Tensor& features,
                 const BlockWeights& block,
                 int heads,
                 std::size_t cls,
                 const std::vector<int>* sizes = nullptr);

struct MergeReference {
    std::vector<std::size_t> survivors;  // original positions, ascending
    Matrix features;
    std::vector<int> sizes;
    std::vector<std::pair<std::size_t, std::size_t>> executed;  // (A position, B position)
};

/// Full pairwise cosine matrix over `metric`, argmax per A token (lowest B on
/// ties), then the m most similar edges chosen one at a time.
MergeReference brute_force_merge(const Tensor& features,
                                 const std::vector<int>& sizes,
                                 const Tensor& metric,
                                 const std::vector<std::size_t>& a,
                                 const std::vector<std::size_t>& b,
                                 std::size_t m);

/// Token counts leaving each layer, simulated one step at a time with the
/// rounding rules stated for each strategy.
std::vector<int> simulate_imagepiece(int depth, int n_img, double p, double merge_ratio, double keep,
                                     const std::vector<int>& retok, const std::vector<int>& prune);

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0);
BlockWeights random_block(std::size_t dim, std::size_t hidden, std::mt19937_64& rng, double scale = 0.3);

/// CLS + n image tokens with random features and unit sizes on a grid of n cells.
TokenBatch random_batch(std::size_t n_img, std::size_t dim, std::mt19937_64& rng);

}  // namespace repiece::oracle
