// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "repiece/model.hpp"
#include "repiece/reduction_config.hpp"
#include "repiece/run_diag.hpp"

namespace repiece::diag {

/// Token counts per layer, CLS included, derived without running the model.
struct TokenSchedule {
    int initial = 0;                // tokens entering layer 0
    std::vector<int> after_layer;   // tokens leaving each layer

    int tokens_in(std::size_t layer) const {
        return layer == 0 ? initial : after_layer[layer - 1];
    }
    int final_tokens() const {
        return after_layer.empty() ? initial : after_layer.back();
    }
    friend bool operator==(const TokenSchedule&, const TokenSchedule&) = default;
};

TokenSchedule token_schedule(const ModelConfig& cfg, const ReductionConfig& rcfg);

/// The schedule a RunDiag actually realised.
TokenSchedule realized_schedule(const RunDiag& run);

/// 2 x multiply-accumulates; see flops.hpp for the per-layer formula.
std::int64_t flops_count(const ModelConfig& cfg, const TokenSchedule& schedule);

/// Share of `prev_merged_ids` still present whose current score lies above the
/// current bottom-k threshold. 0 when none of them is present.
double inattn_to_attn_ratio(std::span<const TokenId> prev_merged_ids,
                            std::span<const TokenId> current_ids,
                            std::span<const float> current_scores,
                            double p);

/// Fills LayerDiag::inattn_to_attn for every layer that follows a merging layer.
void annotate_inattn(RunDiag& run, double p);

enum class LayerSelect { first, last };

/// Mean similarity of merges executed at the first or last encoder layer;
/// empty when that layer merged nothing.
std::optional<double> merged_pair_similarity(const RunDiag& run, LayerSelect layer);

/// Mean of the n lowest defined values; empty when none is defined.
std::optional<double> aggregate_lowest(std::span<const std::optional<double>> samples, std::size_t n = 500);

/// Percentage of tokens merged at layer 0 (both endpoints) ranked within the
/// top q% of image tokens by class attention.
double merged_topk_overlap(const RunDiag& run, double q_percent);

/// Mean cosine similarity over 4-neighbour pairs of an unreduced grid batch.
double adjacency_similarity(const TokenBatch& batch);

struct BenchResult {
    double images_per_second = 0.0;  // median over iterations
    std::vector<double> samples;     // images/s per iteration
    std::int64_t flops = 0;          // per image
    TokenSchedule schedule;
};

/// Wall-clock throughput on seeded synthetic inputs, one warmup iteration.
BenchResult bench(const ModelWeights& weights,
                  const ReductionConfig& rcfg,
                  std::size_t batch_size,
                  std::size_t iterations,
                  std::uint64_t seed);

struct MaskRow {
    int k = 0;
    std::size_t correct = 0;
    std::size_t total = 0;
    double accuracy = 0.0;  // percent
};

/// Top-1 accuracy with k random 16x16 masks per image, for every k. Image i
/// is masked with seed + i.
std::vector<MaskRow> mask_eval(const ModelWeights& weights,
                               const ReductionConfig& rcfg,
                               std::span<const Tensor> images,
                               std::span<const int> labels,
                               std::span<const int> k_list,
                               std::uint64_t seed);

inline constexpr int kTableMaskCounts[] = {7, 10, 15, 20, 25, 50};

std::size_t argmax(const Tensor& logits);

std::string schedule_csv(const ModelConfig& cfg, const TokenSchedule& schedule);
std::string mask_csv(std::span<const MaskRow> rows);
nlohmann::json bench_json(const BenchResult& result);

}  // namespace repiece::diag
