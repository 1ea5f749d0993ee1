// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "repiece/embed.hpp"

namespace repiece {

struct MergedPair {
    TokenId absorbed;  // A-side token, removed
    TokenId target;    // B-side token, keeps its position
    double similarity;
};

/// What happened at one encoder layer.
struct LayerDiag {
    int layer = 0;
    int tokens_in = 0;    // tokens entering the layer, CLS included
    int token_count = 0;  // tokens leaving the layer, CLS included
    int merges_executed = 0;
    int pruned_size = 0;  // original patches discarded at this layer
    std::optional<double> mean_merge_similarity;
    std::vector<TokenId> bottom_k_set;
    std::vector<TokenId> merged_token_ids;  // tokens produced by merges (B-side ids)
    std::vector<MergedPair> merged_pairs;
    std::optional<double> inattn_to_attn;   // against the previous layer's merges
    std::vector<TokenId> score_ids;         // image tokens entering the reduction hook
    std::vector<float> scores;              // their class-attention scores
};

struct RunDiag {
    std::vector<LayerDiag> per_layer;
    int final_output_tokens = 0;
    std::int64_t flops = 0;
};

void to_json(nlohmann::json& j, const LayerDiag& layer);
void to_json(nlohmann::json& j, const RunDiag& diag);

}  // namespace repiece
