// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "repiece/embed.hpp"
#include "repiece/tensor.hpp"
#include "repiece/tensor_file.hpp"

namespace repiece {

enum class StemKind { grid, coherence };

const char* to_string(StemKind kind) noexcept;
StemKind parse_stem_kind(const std::string& name);

/// Encoder shape. Defaults are the DeiT-S configuration.
struct ModelConfig {
    int depth = 12;
    int heads = 6;
    int dim = 384;
    double mlp_ratio = 4.0;
    int num_classes = 1000;
    int patch_size = 16;
    int image_size = 224;
    StemKind stem = StemKind::grid;
    int stem_width = 24;  // channels of the first stem conv; doubles per stage

    int head_dim() const noexcept {
        return dim / heads;
    }
    int mlp_hidden() const noexcept;
    std::size_t grid_cells() const noexcept;

    /// Throws a config error if the shape is inconsistent.
    void validate() const;

    static ModelConfig deit_tiny();
    static ModelConfig deit_small();

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& cfg);
/// Rejects unknown keys; missing keys keep their defaults.
void from_json(const nlohmann::json& j, ModelConfig& cfg);

struct BlockWeights {
    Tensor norm1_gamma, norm1_beta;
    Tensor qkv_weight, qkv_bias;  // [D x 3D]; columns are q | k | v, heads contiguous within each
    Tensor proj_weight, proj_bias;
    Tensor norm2_gamma, norm2_beta;
    Tensor fc1_weight, fc1_bias;  // [D x hidden]
    Tensor fc2_weight, fc2_bias;  // [hidden x D]
};

struct PatchWeights {
    Tensor projection;  // [(3 * patch^2) x D]
    Tensor bias;
};

/// Immutable after construction; share freely across threads.
struct ModelWeights {
    ModelConfig config;
    std::optional<PatchWeights> patch;  // grid stem
    std::optional<StemWeights> stem;    // coherence stem
    Tensor positional;                  // [(P + 1) x D]
    Tensor cls_embedding;               // [D]
    std::vector<BlockWeights> blocks;
    Tensor norm_gamma, norm_beta;
    Tensor head_weight, head_bias;  // [D x classes]
};

/// Tensor names and shapes the configuration requires, in schema order.
std::vector<std::pair<std::string, Shape>> weight_schema(const ModelConfig& cfg);

TensorFile to_tensor_file(const ModelWeights& weights);
ModelWeights from_tensor_file(const TensorFile& file);

ModelWeights load_weights(const std::filesystem::path& path);
/// Model config stored in a weights file; reads only the header.
ModelConfig read_weights_config(const std::filesystem::path& path);
void save_weights(const ModelWeights& weights, const std::filesystem::path& path);

/// Deterministic per seed: truncated normal (std 0.02, cut at 2 std) for
/// projections and embeddings, He-scaled truncated normal for stem convolutions,
/// ones/zeros for norm scales/shifts, zeros for biases.
ModelWeights init_random(const ModelConfig& cfg, std::uint64_t seed);

/// Run the configured stem and prepend the class token.
TokenBatch embed_image(const Tensor& image, const ModelWeights& weights);

}  // namespace repiece
