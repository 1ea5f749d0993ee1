// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#include "repiece/reduce.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "repiece/error.hpp"
#include "repiece/numerics.hpp"

namespace repiece::reduce {

namespace {

constexpr float kClsScore = std::numeric_limits<float>::infinity();

std::vector<int> united(std::vector<int> a, const std::vector<int>& b) {
    std::vector<int> out;
    out.reserve(a.size() + b.size());
    std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

std::size_t finite_count(std::span<const float> scores) {
    return static_cast<std::size_t>(std::count_if(scores.begin(), scores.end(), [](float s) { return std::isfinite(s); }));
}

// For each position, where its features end up after executing the top-m edges.
// Targets map to themselves; absorbed A tokens map to their B partner.
std::vector<std::size_t> merge_targets(std::size_t n, const MatchPlan& plan, std::size_t m) {
    require(m <= plan.edges.size(),
            ErrorKind::range,
            "merge count " + std::to_string(m) + " exceeds " + std::to_string(plan.edges.size()) + " candidate edges");
    std::vector<std::size_t> target(n);
    std::iota(target.begin(), target.end(), 0);
    for (std::size_t e = 0; e < m; ++e) {
        const auto& edge = plan.edges[e];
        const auto a = plan.a_indices.at(edge.a);
        const auto b = plan.b_indices.at(edge.b);
        require(a < n && b < n, ErrorKind::range, "match plan refers to a token outside the batch");
        require(target[a] == a, ErrorKind::precondition, "token merged twice as a source");
        target[a] = b;
    }
    for (std::size_t e = 0; e < m; ++e) {
        const auto b = plan.b_indices[plan.edges[e].b];
        require(target[b] == b, ErrorKind::precondition, "merge target is itself merged away");
    }
    return target;
}

Tensor weighted_merge(const Tensor& rows,
                      std::span<const int> sizes,
                      const std::vector<std::size_t>& target,
                      std::vector<std::size_t>& survivors) {
    const auto n = rows.dim(0), d = rows.dim(1);
    std::vector<double> acc(n * d, 0.0);
    std::vector<double> weight(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto t = target[i];
        const double w = sizes[i];
        auto src = rows.row(i);
        for (std::size_t c = 0; c < d; ++c) {
            acc[t * d + c] += w * src[c];
        }
        weight[t] += w;
    }
    survivors.clear();
    for (std::size_t i = 0; i < n; ++i) {
        if (target[i] == i) {
            survivors.push_back(i);
        }
    }
    Tensor out({survivors.size(), d});
    for (std::size_t s = 0; s < survivors.size(); ++s) {
        const auto i = survivors[s];
        auto dst = out.row(s);
        for (std::size_t c = 0; c < d; ++c) {
            dst[c] = static_cast<float>(acc[i * d + c] / weight[i]);
        }
    }
    return out;
}

void record_scores(const TokenBatch& batch, std::span<const float> scores, LayerDiag& diag) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (!batch.is_cls(i)) {
            diag.score_ids.push_back(batch.ids[i]);
            diag.scores.push_back(scores[i]);
        }
    }
}

void record_merges(const TokenBatch& batch, const MatchPlan& plan, std::size_t m, LayerDiag& diag) {
    double total = 0.0;
    for (std::size_t e = 0; e < m; ++e) {
        const auto& edge = plan.edges[e];
        const auto a = plan.a_indices[edge.a];
        const auto b = plan.b_indices[edge.b];
        diag.merged_pairs.push_back({batch.ids[a], batch.ids[b], edge.similarity});
        diag.merged_token_ids.push_back(batch.ids[b]);
        total += edge.similarity;
    }
    std::sort(diag.merged_token_ids.begin(), diag.merged_token_ids.end());
    diag.merged_token_ids.erase(std::unique(diag.merged_token_ids.begin(), diag.merged_token_ids.end()),
                                diag.merged_token_ids.end());
    diag.merges_executed = static_cast<int>(m);
    if (m > 0) {
        diag.mean_merge_similarity = total / static_cast<double>(m);
    }
}

}  // namespace

int bottom_k_size(double p, std::size_t n_img) noexcept {
    return floor_count(p, n_img) & ~1;
}

int imagepiece_merge_count(const ReductionConfig& cfg, std::size_t n_img) noexcept {
    return std::min(floor_count(cfg.merge_ratio, n_img), bottom_k_size(cfg.nonsemantic_proportion, n_img) / 2);
}

std::vector<float> score_tokens(const AttentionRecord& record, const TokenBatch& batch) {
    require(record.class_attention.numel() == batch.size(),
            ErrorKind::dimension,
            "attention record covers " + std::to_string(record.class_attention.numel()) + " tokens, batch has " +
                std::to_string(batch.size()));
    std::vector<float> scores(record.class_attention.data().begin(), record.class_attention.data().end());
    if (batch.cls_index) {
        scores[*batch.cls_index] = kClsScore;
    }
    return scores;
}

std::vector<std::size_t> ascending_order(std::span<const float> scores) {
    std::vector<std::size_t> order;
    order.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (std::isfinite(scores[i])) {
            order.push_back(i);
        }
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] < scores[b] || (scores[a] == scores[b] && a < b);
    });
    return order;
}

std::vector<std::size_t> select_bottom_k(std::span<const float> scores, double p) {
    require(p > 0.0 && p < 1.0, ErrorKind::precondition, "bottom-k proportion must lie in (0, 1)");
    const auto k = static_cast<std::size_t>(bottom_k_size(p, finite_count(scores)));
    auto order = ascending_order(scores);
    order.resize(k);
    return order;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> alternating_split(std::span<const std::size_t> ordered) {
    require(ordered.size() % 2 == 0, ErrorKind::precondition, "alternating split needs an even number of tokens");
    std::pair<std::vector<std::size_t>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        (i % 2 == 0 ? groups.first : groups.second).push_back(ordered[i]);
    }
    return groups;
}

Tensor matching_metric(const AttentionRecord& record) {
    const auto n = record.tokens();
    const auto dh = record.head_dim();
    const auto heads = static_cast<std::size_t>(record.heads);
    Tensor metric({n, dh});
    for (std::size_t i = 0; i < n; ++i) {
        auto src = record.keys.row(i);
        auto dst = metric.row(i);
        for (std::size_t c = 0; c < dh; ++c) {
            double sum = 0.0;
            for (std::size_t h = 0; h < heads; ++h) {
                sum += src[h * dh + c];
            }
            dst[c] = static_cast<float>(sum / static_cast<double>(heads));
        }
    }
    return metric;
}

MatchPlan bipartite_soft_match(const Tensor& metric, std::span<const std::size_t> a, std::span<const std::size_t> b) {
    MatchPlan plan;
    plan.a_indices.assign(a.begin(), a.end());
    plan.b_indices.assign(b.begin(), b.end());
    if (a.empty() || b.empty()) {
        return plan;
    }
    plan.edges.reserve(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        std::size_t best = 0;
        double best_sim = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < b.size(); ++j) {
            const double sim = numerics::cosine_similarity(metric.row(a[i]), metric.row(b[j]));
            if (sim > best_sim) {
                best_sim = sim;
                best = j;
            }
        }
        plan.edges.push_back({i, best, best_sim});
    }
    std::stable_sort(plan.edges.begin(), plan.edges.end(), [](const MatchEdge& x, const MatchEdge& y) {
        return x.similarity > y.similarity;
    });
    return plan;
}

MatchPlan bipartite_soft_match(const Tensor& a_keys, const Tensor& b_keys) {
    require(a_keys.rank() == 2 && b_keys.rank() == 2 && a_keys.dim(1) == b_keys.dim(1),
            ErrorKind::dimension,
            "key groups must be [n x d] with equal d");
    const auto na = a_keys.dim(0), nb = b_keys.dim(0);
    std::vector<float> stacked(a_keys.data().begin(), a_keys.data().end());
    stacked.insert(stacked.end(), b_keys.data().begin(), b_keys.data().end());
    Tensor metric({na + nb, a_keys.dim(1)}, std::move(stacked));
    std::vector<std::size_t> a(na), b(nb);
    std::iota(a.begin(), a.end(), 0);
    std::iota(b.begin(), b.end(), na);
    MatchPlan plan = bipartite_soft_match(metric, a, b);
    std::iota(plan.a_indices.begin(), plan.a_indices.end(), 0);
    std::iota(plan.b_indices.begin(), plan.b_indices.end(), 0);
    return plan;
}

Tensor merge_rows(const Tensor& rows, std::span<const int> sizes, const MatchPlan& plan, std::size_t m) {
    const auto target = merge_targets(rows.dim(0), plan, m);
    std::vector<std::size_t> survivors;
    return weighted_merge(rows, sizes, target, survivors);
}

TokenBatch apply_merge(const TokenBatch& batch, const MatchPlan& plan, std::size_t m) {
    if (m == 0) {
        return batch;
    }
    const auto target = merge_targets(batch.size(), plan, m);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        require(!(batch.is_cls(i) && target[i] != i), ErrorKind::precondition, "class token cannot be merged");
        require(!(batch.is_cls(target[i]) && target[i] != i), ErrorKind::precondition, "class token cannot absorb tokens");
    }
    std::vector<std::size_t> survivors;
    TokenBatch out = batch.select({});
    out.features = weighted_merge(batch.features, batch.sizes, target, survivors);

    std::vector<int> sizes(batch.sizes);
    std::vector<std::vector<int>> provenance(batch.provenance);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (target[i] != i) {
            sizes[target[i]] += sizes[i];
            provenance[target[i]] = united(std::move(provenance[target[i]]), provenance[i]);
        }
    }
    for (auto i : survivors) {
        out.sizes.push_back(sizes[i]);
        out.provenance.push_back(std::move(provenance[i]));
        out.ids.push_back(batch.ids[i]);
        if (batch.is_cls(i)) {
            out.cls_index = out.sizes.size() - 1;
        }
    }
    return out;
}

PruneResult prune_keep(const TokenBatch& batch, std::span<const float> scores, double keep_rate) {
    require(keep_rate > 0.0 && keep_rate <= 1.0, ErrorKind::precondition, "keep rate must lie in (0, 1]");
    require(scores.size() == batch.size(), ErrorKind::dimension, "score count does not match batch");
    const auto n_img = batch.image_token_count();
    const auto keep_n = static_cast<std::size_t>(ceil_count(keep_rate, n_img));
    if (keep_n >= n_img) {
        return {batch, 0};
    }
    std::vector<std::size_t> ranked;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (!batch.is_cls(i)) {
            ranked.push_back(i);
        }
    }
    std::stable_sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<char> keep(batch.size(), 0);
    for (std::size_t r = 0; r < keep_n; ++r) {
        keep[ranked[r]] = 1;
    }
    if (batch.cls_index) {
        keep[*batch.cls_index] = 1;
    }
    std::vector<std::size_t> kept;
    std::vector<int> discarded;
    int pruned_size = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (keep[i]) {
            kept.push_back(i);
        } else {
            discarded = united(std::move(discarded), batch.provenance[i]);
            pruned_size += batch.sizes[i];
        }
    }
    PruneResult result{batch.select(kept), pruned_size};
    result.batch.pruned = united(std::move(result.batch.pruned), discarded);
    return result;
}

std::vector<float> reevaluate_scores(const AttentionRecord& record,
                                     const Tensor& keys,
                                     const TokenBatch& batch,
                                     bool proportional_attention) {
    const auto n = batch.size();
    require(keys.rank() == 2 && keys.dim(0) == n && keys.dim(1) == record.cls_query.numel(),
            ErrorKind::dimension,
            "re-evaluation keys do not match the batch");
    const auto heads = static_cast<std::size_t>(record.heads);
    const auto dh = record.head_dim();
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
    std::vector<double> mean(n, 0.0);
    std::vector<float> logits(n);
    auto query = record.cls_query.data();
    for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t j = 0; j < n; ++j) {
            auto k = keys.row(j);
            float dot = 0.0f;
            for (std::size_t c = 0; c < dh; ++c) {
                dot += query[h * dh + c] * k[h * dh + c];
            }
            logits[j] = dot * scale + (proportional_attention ? std::log(static_cast<float>(batch.sizes[j])) : 0.0f);
        }
        numerics::softmax_inplace(logits, 1.0f);
        for (std::size_t j = 0; j < n; ++j) {
            mean[j] += logits[j];
        }
    }
    std::vector<float> scores(n);
    for (std::size_t j = 0; j < n; ++j) {
        scores[j] = batch.is_cls(j) ? kClsScore : static_cast<float>(mean[j] / static_cast<double>(heads));
    }
    return scores;
}

StepResult step_imagepiece(const TokenBatch& batch,
                           const AttentionRecord& record,
                           const ReductionConfig& cfg,
                           int layer) {
    const bool retokenize = cfg.retokenize_layers.count(layer) > 0;
    const bool prune = cfg.prune_layers.count(layer) > 0;
    require(retokenize || prune,
            ErrorKind::precondition,
            "layer " + std::to_string(layer) + " is neither a retokenize nor a prune layer");

    StepResult result{batch, {}};
    result.diag.layer = layer;
    // Step I: importance from class attention.
    const auto scores = score_tokens(record, batch);
    record_scores(batch, scores, result.diag);

    Tensor keys = record.keys;
    if (retokenize) {
        // Step II: merge within the bottom-k set only.
        const auto bottom = select_bottom_k(scores, cfg.nonsemantic_proportion);
        for (auto pos : bottom) {
            result.diag.bottom_k_set.push_back(batch.ids[pos]);
        }
        const auto [group_a, group_b] = alternating_split(bottom);
        if (!group_a.empty()) {
            const auto plan = bipartite_soft_match(matching_metric(record), group_a, group_b);
            const auto m = static_cast<std::size_t>(imagepiece_merge_count(cfg, batch.image_token_count()));
            record_merges(batch, plan, m, result.diag);
            keys = merge_rows(keys, batch.sizes, plan, m);
            result.batch = apply_merge(batch, plan, m);
        }
    }
    if (prune) {
        // Step III: the merged abstractions are scored again before pruning.
        const auto rescored = reevaluate_scores(record, keys, result.batch, cfg.proportional_attention);
        auto pruned = prune_keep(result.batch, rescored, cfg.keep_rate);
        result.batch = std::move(pruned.batch);
        result.diag.pruned_size = pruned.pruned_size;
    }
    return result;
}

StepResult step_evit(const TokenBatch& batch, const AttentionRecord& record, double keep_rate, bool fuse) {
    StepResult result{batch, {}};
    const auto scores = score_tokens(record, batch);
    record_scores(batch, scores, result.diag);
    if (!fuse) {
        auto pruned = prune_keep(batch, scores, keep_rate);
        result.batch = std::move(pruned.batch);
        result.diag.pruned_size = pruned.pruned_size;
        return result;
    }
    auto pruned = prune_keep(batch, scores, keep_rate);
    if (pruned.pruned_size == 0) {
        return result;
    }
    // Recover the discarded tokens and fold them into one attention-weighted token.
    std::vector<char> kept_id(static_cast<std::size_t>(batch.next_id) + 1, 0);
    for (auto id : pruned.batch.ids) {
        if (id >= 0) {
            kept_id[static_cast<std::size_t>(id)] = 1;
        }
    }
    const auto d = batch.dim();
    std::vector<double> acc(d, 0.0);
    double total_weight = 0.0;
    int fused_size = 0;
    std::vector<int> fused_provenance;
    std::vector<std::size_t> discarded;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch.is_cls(i) || kept_id[static_cast<std::size_t>(batch.ids[i])]) {
            continue;
        }
        discarded.push_back(i);
        total_weight += scores[i];
    }
    for (auto i : discarded) {
        const double w = total_weight > 0.0 ? scores[i] / total_weight : 1.0 / static_cast<double>(discarded.size());
        auto src = batch.features.row(i);
        for (std::size_t c = 0; c < d; ++c) {
            acc[c] += w * src[c];
        }
        fused_size += batch.sizes[i];
        fused_provenance = united(std::move(fused_provenance), batch.provenance[i]);
    }
    TokenBatch out = std::move(pruned.batch);
    const auto n = out.size();
    std::vector<float> data(out.features.data().begin(), out.features.data().end());
    for (double v : acc) {
        data.push_back(static_cast<float>(v));
    }
    out.features = Tensor({n + 1, d}, std::move(data));
    out.sizes.push_back(fused_size);
    out.provenance.push_back(std::move(fused_provenance));
    out.ids.push_back(out.next_id++);
    // The discarded patches live on inside the fused token.
    out.pruned = batch.pruned;
    result.batch = std::move(out);
    return result;
}

StepResult step_tome(const TokenBatch& batch, const AttentionRecord& record, int r_per_layer) {
    require(r_per_layer >= 0, ErrorKind::precondition, "ToMe reduction must be non-negative");
    StepResult result{batch, {}};
    const auto scores = score_tokens(record, batch);
    record_scores(batch, scores, result.diag);
    std::vector<std::size_t> image;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (!batch.is_cls(i)) {
            image.push_back(i);
        }
    }
    std::vector<std::size_t> group_a, group_b;
    for (std::size_t i = 0; i < image.size(); ++i) {
        (i % 2 == 0 ? group_a : group_b).push_back(image[i]);
    }
    const auto r = std::min(static_cast<std::size_t>(r_per_layer), group_b.size());
    if (r == 0) {
        return result;
    }
    const auto plan = bipartite_soft_match(matching_metric(record), group_a, group_b);
    record_merges(batch, plan, r, result.diag);
    result.batch = apply_merge(batch, plan, r);
    return result;
}

}  // namespace repiece::reduce
