// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <set>
#include <string>

#include <json.hpp>

namespace repiece {

enum class StrategyKind { none, evit, tome, imagepiece };

const char* to_string(StrategyKind kind) noexcept;
StrategyKind parse_strategy(const std::string& name);

/// Token-reduction strategy and its per-layer schedule.
struct ReductionConfig {
    StrategyKind strategy = StrategyKind::none;
    double nonsemantic_proportion = 0.3;  // p: share of image tokens in the bottom-k set
    double merge_ratio = 0.08;            // merges per layer as a share of current image tokens
    double keep_rate = 0.8;               // r: share of image tokens kept at a prune layer
    int tome_reduction = 13;              // pairs merged per layer by the ToMe baseline
    std::set<int> retokenize_layers;      // merge layers (imagepiece, tome)
    std::set<int> prune_layers;           // prune layers (imagepiece, evit)
    bool proportional_attention = true;   // add log(size) to attention logits
    bool evit_fuse = true;                // fold EViT's discarded tokens into one token

    /// Defaults for `strategy` on an encoder of `depth` layers: every
    /// layer retokenizes, pruning at layers 3, 6, 9 (EViT keeps 0.7).
    static ReductionConfig defaults(StrategyKind strategy, int depth = 12);

    /// Throws a config error naming the offending field.
    void validate(int depth) const;

    friend bool operator==(const ReductionConfig&, const ReductionConfig&) = default;
};

void to_json(nlohmann::json& j, const ReductionConfig& cfg);
/// Rejects unknown keys; missing keys keep their current values.
void from_json(const nlohmann::json& j, ReductionConfig& cfg);

/// floor(ratio * n) and ceil(ratio * n), tolerant to representation error in ratio.
int floor_count(double ratio, std::size_t n) noexcept;
int ceil_count(double ratio, std::size_t n) noexcept;

}  // namespace repiece
