// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "repiece/tensor.hpp"

namespace repiece {

/// Spatial extent of the original patch grid.
struct Grid {
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t cells() const noexcept {
        return rows * cols;
    }
    friend bool operator==(const Grid&, const Grid&) = default;
};

/// Token identifier. Image tokens start with their patch index; the class
/// token is `kClsId`; tokens created by fusion get ids >= grid.cells().
using TokenId = int;
inline constexpr TokenId kClsId = -1;

/// A token sequence plus the bookkeeping that reduction strategies need:
/// merge sizes, which original patches each token covers, and what has been
/// discarded so far.
struct TokenBatch {
    Tensor features;                           // [N x D]
    std::vector<int> sizes;                    // patches represented per token; CLS is 1
    std::vector<std::vector<int>> provenance;  // sorted patch indices; empty for CLS
    std::vector<TokenId> ids;
    std::optional<std::size_t> cls_index;
    Grid grid;
    std::vector<int> pruned;  // sorted patch indices discarded so far
    TokenId next_id = 0;      // next id for fused tokens

    std::size_t size() const noexcept {
        return sizes.size();
    }
    std::size_t dim() const {
        return features.dim(1);
    }
    std::size_t image_token_count() const noexcept {
        return size() - (cls_index ? 1 : 0);
    }
    bool is_cls(std::size_t i) const noexcept {
        return cls_index && *cls_index == i;
    }
    std::size_t pruned_size() const noexcept {
        return pruned.size();
    }

    /// Keep only tokens at `keep` (ascending positions), preserving order.
    TokenBatch select(const std::vector<std::size_t>& keep) const;

    /// Empty string when every structural invariant holds, else a description
    /// of the first violation found.
    std::string invariant_violation() const;
};

/// Convolutional stem weights: four 3x3 stride-2 convolutions then a 1x1 projection.
struct StemWeights {
    std::array<Tensor, 4> conv_kernels;  // [F_i x C_i x 3 x 3]
    std::array<Tensor, 4> conv_biases;
    Tensor projector;       // [D x C_4 x 1 x 1]
    Tensor projector_bias;  // [D]
};

inline constexpr int kMaskSize = 16;
inline constexpr int kStemDownsample = 16;

namespace embed {

/// Non-overlapping patch grid. projection is [(3 * patch^2) x D], with the
/// flattened patch laid out channel-major then row-major.
TokenBatch patchify_embed(const Tensor& image, int patch_size, const Tensor& projection, const Tensor& bias);

/// Overlapping convolutional stem; emits one token per 16x16 cell.
TokenBatch coherence_stem(const Tensor& image, const StemWeights& weights);

/// Prepend the class token at index 0 and add positional embeddings.
TokenBatch finalize_tokens(const TokenBatch& batch, const Tensor& positional, const Tensor& cls_embedding);

/// Zero `k` distinct grid-aligned 16x16 cells chosen uniformly without replacement.
Tensor apply_random_masks(const Tensor& image, int k, std::uint64_t seed);

/// Cells zeroed by apply_random_masks for the same arguments, in selection order.
std::vector<int> mask_cells(std::size_t cell_count, int k, std::uint64_t seed);

}  // namespace embed
}  // namespace repiece
