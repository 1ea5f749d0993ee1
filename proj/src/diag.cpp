// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#include "repiece/diag.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "repiece/error.hpp"
#include "repiece/flops.hpp"
#include "repiece/numerics.hpp"
#include "repiece/parallel.hpp"
#include "repiece/reduce.hpp"
#include "repiece/synthetic.hpp"
#include "repiece/vit.hpp"

namespace repiece::diag {

TokenSchedule token_schedule(const ModelConfig& cfg, const ReductionConfig& rcfg) {
    rcfg.validate(cfg.depth);
    TokenSchedule schedule;
    auto n_img = static_cast<int>(cfg.grid_cells());
    schedule.initial = n_img + 1;
    for (int layer = 0; layer < cfg.depth; ++layer) {
        const bool retokenize = rcfg.retokenize_layers.count(layer) > 0;
        const bool prune = rcfg.prune_layers.count(layer) > 0;
        const auto n = static_cast<std::size_t>(n_img);
        switch (rcfg.strategy) {
        case StrategyKind::none:
            break;
        case StrategyKind::imagepiece:
            if (retokenize) {
                n_img -= reduce::imagepiece_merge_count(rcfg, n);
            }
            if (prune) {
                n_img = std::min(n_img, ceil_count(rcfg.keep_rate, static_cast<std::size_t>(n_img)));
            }
            break;
        case StrategyKind::evit:
            if (prune) {
                const int keep = ceil_count(rcfg.keep_rate, n);
                if (keep < n_img) {
                    n_img = keep + (rcfg.evit_fuse ? 1 : 0);
                }
            }
            break;
        case StrategyKind::tome:
            if (retokenize) {
                n_img -= std::min(rcfg.tome_reduction, n_img / 2);
            }
            break;
        }
        schedule.after_layer.push_back(n_img + 1);
    }
    return schedule;
}

TokenSchedule realized_schedule(const RunDiag& run) {
    TokenSchedule schedule;
    schedule.initial = run.per_layer.empty() ? run.final_output_tokens : run.per_layer.front().tokens_in;
    for (const auto& layer : run.per_layer) {
        schedule.after_layer.push_back(layer.token_count);
    }
    return schedule;
}

std::int64_t flops_count(const ModelConfig& cfg, const TokenSchedule& schedule) {
    std::int64_t macs = flops::stem_macs(cfg) + flops::head_macs(cfg);
    for (std::size_t l = 0; l < schedule.after_layer.size(); ++l) {
        macs += flops::layer_macs(cfg, schedule.tokens_in(l), schedule.after_layer[l]);
    }
    return 2 * macs;
}

double inattn_to_attn_ratio(std::span<const TokenId> prev_merged_ids,
                            std::span<const TokenId> current_ids,
                            std::span<const float> current_scores,
                            double p) {
    require(current_ids.size() == current_scores.size(), ErrorKind::dimension, "ids and scores differ in length");
    if (prev_merged_ids.empty() || current_ids.empty()) {
        return 0.0;
    }
    std::unordered_set<TokenId> bottom;
    for (auto pos : reduce::select_bottom_k(current_scores, p)) {
        bottom.insert(current_ids[pos]);
    }
    const std::unordered_set<TokenId> present(current_ids.begin(), current_ids.end());
    std::size_t tracked = 0, escaped = 0;
    for (auto id : prev_merged_ids) {
        if (present.count(id)) {
            ++tracked;
            escaped += bottom.count(id) ? 0 : 1;
        }
    }
    return tracked == 0 ? 0.0 : static_cast<double>(escaped) / static_cast<double>(tracked);
}

void annotate_inattn(RunDiag& run, double p) {
    for (std::size_t l = 1; l < run.per_layer.size(); ++l) {
        const auto& prev = run.per_layer[l - 1];
        auto& cur = run.per_layer[l];
        if (prev.merged_token_ids.empty() || cur.scores.empty()) {
            continue;
        }
        cur.inattn_to_attn = inattn_to_attn_ratio(prev.merged_token_ids, cur.score_ids, cur.scores, p);
    }
}

std::optional<double> merged_pair_similarity(const RunDiag& run, LayerSelect layer) {
    if (run.per_layer.empty()) {
        return std::nullopt;
    }
    const auto& selected = layer == LayerSelect::first ? run.per_layer.front() : run.per_layer.back();
    return selected.mean_merge_similarity;
}

std::optional<double> aggregate_lowest(std::span<const std::optional<double>> samples, std::size_t n) {
    std::vector<double> defined;
    for (const auto& s : samples) {
        if (s) {
            defined.push_back(*s);
        }
    }
    if (defined.empty() || n == 0) {
        return std::nullopt;
    }
    std::sort(defined.begin(), defined.end());
    defined.resize(std::min(n, defined.size()));
    double sum = 0.0;
    for (double v : defined) {
        sum += v;
    }
    return sum / static_cast<double>(defined.size());
}

double merged_topk_overlap(const RunDiag& run, double q_percent) {
    require(q_percent >= 0.0 && q_percent <= 100.0, ErrorKind::precondition, "q must lie in [0, 100]");
    if (run.per_layer.empty()) {
        return 0.0;
    }
    const auto& first = run.per_layer.front();
    std::set<TokenId> merged;
    for (const auto& pair : first.merged_pairs) {
        merged.insert(pair.absorbed);
        merged.insert(pair.target);
    }
    if (merged.empty()) {
        return 0.0;
    }
    // Top-q is the tail of the same ascending order that defines bottom-k, so
    // the two sets can only meet when q + p > 100.
    const auto order = reduce::ascending_order(first.scores);
    const auto top = static_cast<std::size_t>(floor_count(q_percent / 100.0, order.size()));
    std::size_t hits = 0;
    for (std::size_t r = order.size() - top; r < order.size(); ++r) {
        hits += merged.count(first.score_ids[order[r]]);
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(merged.size());
}

double adjacency_similarity(const TokenBatch& batch) {
    const auto& grid = batch.grid;
    std::vector<long> cell_token(grid.cells(), -1);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch.is_cls(i)) {
            continue;
        }
        require(batch.provenance[i].size() == 1,
                ErrorKind::precondition,
                "adjacency similarity needs one token per grid cell");
        cell_token[static_cast<std::size_t>(batch.provenance[i][0])] = static_cast<long>(i);
    }
    double sum = 0.0;
    std::size_t pairs = 0;
    auto visit = [&](std::size_t a, std::size_t b) {
        if (cell_token[a] < 0 || cell_token[b] < 0) {
            return;
        }
        sum += numerics::cosine_similarity(batch.features.row(static_cast<std::size_t>(cell_token[a])),
                                           batch.features.row(static_cast<std::size_t>(cell_token[b])));
        ++pairs;
    };
    for (std::size_t r = 0; r < grid.rows; ++r) {
        for (std::size_t c = 0; c < grid.cols; ++c) {
            const auto cell = r * grid.cols + c;
            if (c + 1 < grid.cols) {
                visit(cell, cell + 1);
            }
            if (r + 1 < grid.rows) {
                visit(cell, cell + grid.cols);
            }
        }
    }
    require(pairs > 0, ErrorKind::degenerate_input, "grid has no adjacent token pairs");
    return sum / static_cast<double>(pairs);
}

namespace {

double median(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

std::size_t argmax(const Tensor& logits) {
    auto data = logits.data();
    return static_cast<std::size_t>(std::max_element(data.begin(), data.end()) - data.begin());
}

BenchResult bench(const ModelWeights& weights,
                  const ReductionConfig& rcfg,
                  std::size_t batch_size,
                  std::size_t iterations,
                  std::uint64_t seed) {
    require(batch_size > 0 && iterations > 0, ErrorKind::precondition, "bench needs batch_size and iterations > 0");
    const auto& cfg = weights.config;
    std::vector<Tensor> images;
    for (std::size_t i = 0; i < batch_size; ++i) {
        images.push_back(synthetic::smooth_image(seed + i, static_cast<std::size_t>(cfg.image_size)));
    }
    auto run_batch = [&] {
        parallel_for(images.size(), [&](std::size_t i) { (void)vit::classify(images[i], weights, rcfg); });
    };
    run_batch();  // warmup

    BenchResult result;
    for (std::size_t it = 0; it < iterations; ++it) {
        const auto start = std::chrono::steady_clock::now();
        run_batch();
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
        result.samples.push_back(static_cast<double>(batch_size) / std::max(elapsed.count(), 1e-12));
    }
    result.images_per_second = median(result.samples);
    result.schedule = token_schedule(cfg, rcfg);
    result.flops = flops_count(cfg, result.schedule);
    return result;
}

std::vector<MaskRow> mask_eval(const ModelWeights& weights,
                               const ReductionConfig& rcfg,
                               std::span<const Tensor> images,
                               std::span<const int> labels,
                               std::span<const int> k_list,
                               std::uint64_t seed) {
    require(images.size() == labels.size(), ErrorKind::dimension, "images and labels differ in count");
    std::vector<MaskRow> rows;
    for (int k : k_list) {
        std::vector<char> hit(images.size(), 0);
        parallel_for(images.size(), [&](std::size_t i) {
            const Tensor masked = embed::apply_random_masks(images[i], k, seed + i);
            const auto out = vit::classify(masked, weights, rcfg);
            hit[i] = static_cast<int>(argmax(out.logits)) == labels[i];
        });
        MaskRow row;
        row.k = k;
        row.total = images.size();
        row.correct = static_cast<std::size_t>(std::count(hit.begin(), hit.end(), 1));
        row.accuracy = row.total ? 100.0 * static_cast<double>(row.correct) / static_cast<double>(row.total) : 0.0;
        rows.push_back(row);
    }
    return rows;
}

std::string schedule_csv(const ModelConfig& cfg, const TokenSchedule& schedule) {
    std::ostringstream out;
    out << "layer,tokens,flops_cum\n";
    std::int64_t macs = flops::stem_macs(cfg);
    for (std::size_t l = 0; l < schedule.after_layer.size(); ++l) {
        macs += flops::layer_macs(cfg, schedule.tokens_in(l), schedule.after_layer[l]);
        out << l << ',' << schedule.after_layer[l] << ',' << 2 * macs << '\n';
    }
    return out.str();
}

std::string mask_csv(std::span<const MaskRow> rows) {
    std::ostringstream out;
    out << "k,correct,total,accuracy\n";
    out.setf(std::ios::fixed);
    out.precision(4);
    for (const auto& r : rows) {
        out << r.k << ',' << r.correct << ',' << r.total << ',' << r.accuracy << '\n';
    }
    return out.str();
}

nlohmann::json bench_json(const BenchResult& result) {
    return {{"images_per_second", result.images_per_second},
            {"samples", result.samples},
            {"flops", result.flops},
            {"schedule", result.schedule.after_layer},
            {"initial_tokens", result.schedule.initial}};
}

}  // namespace repiece::diag
