// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#include "repiece/vit.hpp"

#include <Eigen/Core>
#include <cmath>

#include "repiece/error.hpp"
#include "repiece/flops.hpp"
#include "repiece/numerics.hpp"
#include "repiece/reduce.hpp"

namespace repiece::vit {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

void add_inplace(Tensor& dst, const Tensor& src) {
    auto a = dst.data();
    auto b = src.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] += b[i];
    }
}

}  // namespace

std::pair<TokenBatch, AttentionRecord> mhsa_forward(const TokenBatch& batch,
                                                    const BlockWeights& block,
                                                    int heads,
                                                    std::optional<std::span<const int>> size_bias) {
    const auto n = batch.size();
    const auto d = batch.dim();
    require(heads > 0 && d % static_cast<std::size_t>(heads) == 0,
            ErrorKind::dimension,
            "width " + std::to_string(d) + " not divisible by " + std::to_string(heads) + " heads");
    require(block.qkv_weight.rank() == 2 && block.qkv_weight.dim(0) == d && block.qkv_weight.dim(1) == 3 * d,
            ErrorKind::dimension,
            "qkv weight " + shape_to_string(block.qkv_weight.shape()) + " does not match width " + std::to_string(d));
    require(!size_bias || size_bias->size() == n, ErrorKind::dimension, "size bias length does not match tokens");
    const auto h_count = static_cast<std::size_t>(heads);
    const auto dh = d / h_count;
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

    const Tensor normed = numerics::layer_norm(batch.features, block.norm1_gamma, block.norm1_beta);
    const Tensor qkv = numerics::linear(normed, block.qkv_weight, block.qkv_bias);
    ConstMap qkv_m(qkv.data().data(), static_cast<long>(n), static_cast<long>(3 * d));

    std::vector<float> log_sizes;
    if (size_bias) {
        log_sizes.resize(n);
        for (std::size_t j = 0; j < n; ++j) {
            log_sizes[j] = std::log(static_cast<float>((*size_bias)[j]));
        }
    }

    AttentionRecord record;
    record.heads = heads;
    record.per_head = Tensor({h_count, n, n});
    record.class_attention = Tensor({n});
    record.keys = Tensor({n, d});
    record.cls_query = Tensor({d});
    const auto cls = batch.cls_index.value_or(0);

    Tensor context({n, d});
    MutMap context_m(context.data().data(), static_cast<long>(n), static_cast<long>(d));
    const auto ln = static_cast<long>(n);
    const auto ldh = static_cast<long>(dh);
    for (std::size_t h = 0; h < h_count; ++h) {
        const auto col = static_cast<long>(h * dh);
        auto query = qkv_m.block(0, col, ln, ldh);
        auto key = qkv_m.block(0, static_cast<long>(d) + col, ln, ldh);
        auto value = qkv_m.block(0, static_cast<long>(2 * d) + col, ln, ldh);
        MutMap attn(record.per_head.data().data() + h * n * n, ln, ln);
        attn.noalias() = query * key.transpose();
        for (std::size_t i = 0; i < n; ++i) {
            auto row = record.per_head.data().subspan(h * n * n + i * n, n);
            for (std::size_t j = 0; j < n; ++j) {
                row[j] *= scale;
            }
            if (size_bias) {
                for (std::size_t j = 0; j < n; ++j) {
                    row[j] += log_sizes[j];
                }
            }
            numerics::softmax_inplace(row, 1.0f);
        }
        context_m.block(0, col, ln, ldh).noalias() = attn * value;
    }

    for (std::size_t j = 0; j < n; ++j) {
        double sum = 0.0;
        for (std::size_t h = 0; h < h_count; ++h) {
            sum += record.per_head[h * n * n + cls * n + j];
        }
        record.class_attention[j] = static_cast<float>(sum / static_cast<double>(h_count));
    }
    MutMap(record.keys.data().data(), ln, static_cast<long>(d)) = qkv_m.block(0, static_cast<long>(d), ln, static_cast<long>(d));
    for (std::size_t c = 0; c < d; ++c) {
        record.cls_query[c] = qkv.at(cls, c);
    }

    TokenBatch out = batch;
    add_inplace(out.features, numerics::linear(context, block.proj_weight, block.proj_bias));
    return {std::move(out), std::move(record)};
}

TokenBatch mlp_forward(const TokenBatch& batch, const BlockWeights& block) {
    require(block.fc1_weight.rank() == 2 && block.fc1_weight.dim(0) == batch.dim(),
            ErrorKind::dimension,
            "fc1 weight " + shape_to_string(block.fc1_weight.shape()) + " does not match width " +
                std::to_string(batch.dim()));
    const Tensor normed = numerics::layer_norm(batch.features, block.norm2_gamma, block.norm2_beta);
    const Tensor hidden = numerics::gelu(numerics::linear(normed, block.fc1_weight, block.fc1_bias));
    TokenBatch out = batch;
    add_inplace(out.features, numerics::linear(hidden, block.fc2_weight, block.fc2_bias));
    return out;
}

EncoderOutput encoder_forward(const TokenBatch& batch,
                              const ModelWeights& weights,
                              const ReductionConfig& reduction,
                              const LayerObserver& observer) {
    const auto& cfg = weights.config;
    require(batch.cls_index.has_value(), ErrorKind::precondition, "encoder input has no class token");
    reduction.validate(cfg.depth);
    require(weights.blocks.size() == static_cast<std::size_t>(cfg.depth),
            ErrorKind::config,
            "weights hold " + std::to_string(weights.blocks.size()) + " blocks, config says " + std::to_string(cfg.depth));

    EncoderOutput result;
    std::int64_t macs = flops::stem_macs(cfg) + flops::head_macs(cfg);
    TokenBatch current = batch;
    for (int layer = 0; layer < cfg.depth; ++layer) {
        const auto& block = weights.blocks[static_cast<std::size_t>(layer)];
        const int tokens_in = static_cast<int>(current.size());
        std::optional<std::span<const int>> bias;
        if (reduction.proportional_attention) {
            bias = std::span<const int>(current.sizes);
        }
        auto [attended, record] = mhsa_forward(current, block, cfg.heads, bias);

        std::optional<reduce::StepResult> step;
        switch (reduction.strategy) {
        case StrategyKind::none:
            break;
        case StrategyKind::imagepiece:
            if (reduction.retokenize_layers.count(layer) || reduction.prune_layers.count(layer)) {
                step = reduce::step_imagepiece(attended, record, reduction, layer);
            }
            break;
        case StrategyKind::evit:
            if (reduction.prune_layers.count(layer)) {
                step = reduce::step_evit(attended, record, reduction.keep_rate, reduction.evit_fuse);
            }
            break;
        case StrategyKind::tome:
            if (reduction.retokenize_layers.count(layer)) {
                step = reduce::step_tome(attended, record, reduction.tome_reduction);
            }
            break;
        }
        LayerDiag diag;
        if (step) {
            attended = std::move(step->batch);
            diag = std::move(step->diag);
        }
        diag.layer = layer;
        current = mlp_forward(attended, block);
        diag.tokens_in = tokens_in;
        diag.token_count = static_cast<int>(current.size());
        macs += flops::layer_macs(cfg, tokens_in, diag.token_count);
        result.diag.per_layer.push_back(std::move(diag));
        if (observer) {
            observer(layer, current);
        }
    }

    const Tensor normed = numerics::layer_norm(current.features, weights.norm_gamma, weights.norm_beta);
    const auto cls = *current.cls_index;
    Tensor cls_row({1, normed.dim(1)});
    std::copy(normed.row(cls).begin(), normed.row(cls).end(), cls_row.data().begin());
    result.logits = numerics::linear(cls_row, weights.head_weight, weights.head_bias)
                        .reshaped({static_cast<std::size_t>(cfg.num_classes)});
    numerics::check_finite(result.logits, "classifier logits");
    result.diag.final_output_tokens = static_cast<int>(current.size());
    result.diag.flops = 2 * macs;
    return result;
}

EncoderOutput classify(const Tensor& image, const ModelWeights& weights, const ReductionConfig& reduction) {
    return encoder_forward(embed_image(image, weights), weights, reduction);
}

}  // namespace repiece::vit
