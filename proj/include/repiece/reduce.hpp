// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <utility>
#include <vector>

#include "repiece/embed.hpp"
#include "repiece/reduction_config.hpp"
#include "repiece/run_diag.hpp"
#include "repiece/vit.hpp"

namespace repiece::reduce {

struct MatchEdge {
    std::size_t a;  // index into MatchPlan::a_indices
    std::size_t b;  // index into MatchPlan::b_indices
    double similarity;
};

/// One candidate edge per A token to its most similar B token, sorted by
/// similarity descending (ties keep A order).
struct MatchPlan {
    std::vector<MatchEdge> edges;
    std::vector<std::size_t> a_indices;  // token positions of group A
    std::vector<std::size_t> b_indices;  // token positions of group B
};

/// Class-attention score per token position; the CLS entry is +inf so it is
/// never selected as unimportant.
std::vector<float> score_tokens(const AttentionRecord& record, const TokenBatch& batch);

/// Bottom-k positions by ascending score, ties by ascending position. k is
/// floor(p * N_img) rounded down to even; N_img counts the finite scores.
std::vector<std::size_t> select_bottom_k(std::span<const float> scores, double p);

/// Positions in ascending (score, position) order over finite scores.
std::vector<std::size_t> ascending_order(std::span<const float> scores);

/// Even positions of the ordered list go to A, odd to B.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> alternating_split(std::span<const std::size_t> ordered);

/// Head-mean of the per-head keys, [N x head_dim]; the matching feature space.
Tensor matching_metric(const AttentionRecord& record);

/// Bipartite soft matching over rows of `metric` (cosine similarity).
MatchPlan bipartite_soft_match(const Tensor& metric, std::span<const std::size_t> a, std::span<const std::size_t> b);

/// Same, on explicit key sets; a_indices/b_indices are 0..|A|-1 and 0..|B|-1.
MatchPlan bipartite_soft_match(const Tensor& a_keys, const Tensor& b_keys);

/// Execute the top-m edges: size-weighted mean features, summed sizes, united
/// provenance at the B position; A tokens are removed.
TokenBatch apply_merge(const TokenBatch& batch, const MatchPlan& plan, std::size_t m);

/// Same merge applied to an arbitrary per-token row matrix (e.g. keys) with the batch sizes.
Tensor merge_rows(const Tensor& rows, std::span<const int> sizes, const MatchPlan& plan, std::size_t m);

struct PruneResult {
    TokenBatch batch;
    int pruned_size = 0;
};

/// Keep CLS plus the ceil(keep_rate * N_img) best-scoring tokens in their
/// original order; discarded patches move to batch.pruned.
PruneResult prune_keep(const TokenBatch& batch, std::span<const float> scores, double keep_rate);

/// Output of one reduction hook.
struct StepResult {
    TokenBatch batch;
    LayerDiag diag;  // layer, reduction fields; token counts filled by the caller
};

/// Score, merge the bottom-k set by alternating split and bipartite matching,
/// then prune on re-evaluated class attention if `layer` is a prune layer.
StepResult step_imagepiece(const TokenBatch& batch,
                           const AttentionRecord& record,
                           const ReductionConfig& cfg,
                           int layer);

/// Class-attention pruning; discarded tokens fuse into one token when `fuse`.
StepResult step_evit(const TokenBatch& batch, const AttentionRecord& record, double keep_rate, bool fuse = true);

/// Global bipartite merging of r pairs with an even/odd split by position.
StepResult step_tome(const TokenBatch& batch, const AttentionRecord& record, int r_per_layer);

/// Class attention re-evaluated on a reduced batch. `keys` are the (merged)
/// keys of the batch tokens; the CLS query comes from `record`.
std::vector<float> reevaluate_scores(const AttentionRecord& record,
                                     const Tensor& keys,
                                     const TokenBatch& batch,
                                     bool proportional_attention);

/// Merge count for a retokenization layer: floor(merge_ratio * n_img), capped at pairs available.
int imagepiece_merge_count(const ReductionConfig& cfg, std::size_t n_img) noexcept;
int bottom_k_size(double p, std::size_t n_img) noexcept;

}  // namespace repiece::reduce
