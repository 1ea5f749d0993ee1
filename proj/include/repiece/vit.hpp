// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <optional>
#include <span>
#include <utility>

#include "repiece/embed.hpp"
#include "repiece/model.hpp"
#include "repiece/reduction_config.hpp"
#include "repiece/run_diag.hpp"
#include "repiece/tensor.hpp"

namespace repiece {

/// Attention captured inside one MHSA call, before the residual add.
struct AttentionRecord {
    Tensor per_head;         // [heads x N x N], post-softmax
    Tensor class_attention;  // [N], head-mean of the CLS row
    Tensor keys;             // [N x D], per-head keys side by side
    Tensor cls_query;        // [D], per-head CLS queries side by side
    int heads = 1;

    std::size_t tokens() const {
        return keys.dim(0);
    }
    std::size_t head_dim() const {
        return keys.dim(1) / static_cast<std::size_t>(heads);
    }
};

namespace vit {

/// Pre-norm multi-head self-attention with residual. When `size_bias` is given,
/// log(size) is added to the logits of each key.
std::pair<TokenBatch, AttentionRecord> mhsa_forward(const TokenBatch& batch,
                                                    const BlockWeights& block,
                                                    int heads,
                                                    std::optional<std::span<const int>> size_bias = std::nullopt);

/// Pre-norm GELU MLP with residual. Only features change.
TokenBatch mlp_forward(const TokenBatch& batch, const BlockWeights& block);

struct EncoderOutput {
    Tensor logits;  // [num_classes]
    RunDiag diag;
};

/// Called after each layer with the layer index and the batch leaving it.
using LayerObserver = std::function<void(int, const TokenBatch&)>;

/// MHSA -> reduction hook -> MLP per layer, final norm, classifier on CLS.
EncoderOutput encoder_forward(const TokenBatch& batch,
                              const ModelWeights& weights,
                              const ReductionConfig& reduction,
                              const LayerObserver& observer = {});

/// embed_image followed by encoder_forward.
EncoderOutput classify(const Tensor& image, const ModelWeights& weights, const ReductionConfig& reduction);

}  // namespace vit
}  // namespace repiece
