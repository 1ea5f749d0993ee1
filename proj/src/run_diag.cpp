// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#include "repiece/run_diag.hpp"

namespace repiece {

namespace {

nlohmann::json optional_number(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

void to_json(nlohmann::json& j, const LayerDiag& layer) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : layer.merged_pairs) {
        pairs.push_back({{"absorbed", p.absorbed}, {"target", p.target}, {"similarity", p.similarity}});
    }
    j = nlohmann::json{{"layer", layer.layer},
                       {"tokens_in", layer.tokens_in},
                       {"token_count", layer.token_count},
                       {"merges_executed", layer.merges_executed},
                       {"pruned_size", layer.pruned_size},
                       {"mean_merge_similarity", optional_number(layer.mean_merge_similarity)},
                       {"inattn_to_attn", optional_number(layer.inattn_to_attn)},
                       {"bottom_k_set", layer.bottom_k_set},
                       {"merged_token_ids", layer.merged_token_ids},
                       {"merged_pairs", pairs},
                       {"score_ids", layer.score_ids},
                       {"scores", layer.scores}};
}

void to_json(nlohmann::json& j, const RunDiag& diag) {
    j = nlohmann::json{{"per_layer", diag.per_layer},
                       {"final_output_tokens", diag.final_output_tokens},
                       {"flops", diag.flops}};
}

}  // namespace repiece
