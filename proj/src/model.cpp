// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#include "repiece/model.hpp"

#include <cmath>
#include <map>
#include <random>

#include "repiece/error.hpp"

namespace repiece {

const char* to_string(StemKind kind) noexcept {
    return kind == StemKind::grid ? "grid" : "coherence";
}

StemKind parse_stem_kind(const std::string& name) {
    if (name == "grid") {
        return StemKind::grid;
    }
    if (name == "coherence") {
        return StemKind::coherence;
    }
    fail(ErrorKind::config, "stem: unknown kind '" + name + "' (expected grid or coherence)");
}

int ModelConfig::mlp_hidden() const noexcept {
    return static_cast<int>(std::lround(dim * mlp_ratio));
}

std::size_t ModelConfig::grid_cells() const noexcept {
    const int cell = stem == StemKind::grid ? patch_size : kStemDownsample;
    const auto side = static_cast<std::size_t>(image_size / cell);
    return side * side;
}

void ModelConfig::validate() const {
    auto check = [](bool ok, const std::string& what) { require(ok, ErrorKind::config, what); };
    check(depth >= 0, "depth: must be >= 0");
    check(heads > 0, "heads: must be positive");
    check(dim > 0 && dim % heads == 0, "dim: must be a positive multiple of heads");
    check(mlp_ratio > 0.0 && mlp_hidden() > 0, "mlp_ratio: must be positive");
    check(num_classes > 0, "num_classes: must be positive");
    check(patch_size > 0, "patch_size: must be positive");
    check(image_size > 0, "image_size: must be positive");
    if (stem == StemKind::grid) {
        check(image_size % patch_size == 0, "image_size: must be divisible by patch_size");
    } else {
        check(image_size % kStemDownsample == 0, "image_size: must be divisible by 16 for the coherence stem");
        check(stem_width > 0, "stem_width: must be positive");
    }
}

ModelConfig ModelConfig::deit_tiny() {
    ModelConfig cfg;
    cfg.heads = 3;
    cfg.dim = 192;
    return cfg;
}

ModelConfig ModelConfig::deit_small() {
    return ModelConfig{};
}

void to_json(nlohmann::json& j, const ModelConfig& cfg) {
    j = nlohmann::json{{"depth", cfg.depth},
                       {"heads", cfg.heads},
                       {"dim", cfg.dim},
                       {"mlp_ratio", cfg.mlp_ratio},
                       {"num_classes", cfg.num_classes},
                       {"patch_size", cfg.patch_size},
                       {"image_size", cfg.image_size},
                       {"stem", to_string(cfg.stem)},
                       {"stem_width", cfg.stem_width}};
}

void from_json(const nlohmann::json& j, ModelConfig& cfg) {
    require(j.is_object(), ErrorKind::config, "model: expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "depth") {
                cfg.depth = value.get<int>();
            } else if (key == "heads") {
                cfg.heads = value.get<int>();
            } else if (key == "dim") {
                cfg.dim = value.get<int>();
            } else if (key == "mlp_ratio") {
                cfg.mlp_ratio = value.get<double>();
            } else if (key == "num_classes") {
                cfg.num_classes = value.get<int>();
            } else if (key == "patch_size") {
                cfg.patch_size = value.get<int>();
            } else if (key == "image_size") {
                cfg.image_size = value.get<int>();
            } else if (key == "stem") {
                cfg.stem = parse_stem_kind(value.get<std::string>());
            } else if (key == "stem_width") {
                cfg.stem_width = value.get<int>();
            } else {
                fail(ErrorKind::config, "model." + key + ": unknown key");
            }
        } catch (const nlohmann::json::exception&) {
            fail(ErrorKind::config, "model." + key + ": wrong type");
        }
    }
}

namespace {

std::string block_name(std::size_t i, const char* leaf) {
    return "blocks." + std::to_string(i) + "." + leaf;
}

std::array<std::size_t, 5> stem_channels(const ModelConfig& cfg) {
    const auto w = static_cast<std::size_t>(cfg.stem_width);
    return {3, w, 2 * w, 4 * w, 8 * w};
}

}  // namespace

std::vector<std::pair<std::string, Shape>> weight_schema(const ModelConfig& cfg) {
    const auto d = static_cast<std::size_t>(cfg.dim);
    const auto hidden = static_cast<std::size_t>(cfg.mlp_hidden());
    std::vector<std::pair<std::string, Shape>> schema;
    if (cfg.stem == StemKind::grid) {
        const auto ps = static_cast<std::size_t>(cfg.patch_size);
        schema.push_back({"patch_embed.weight", {3 * ps * ps, d}});
        schema.push_back({"patch_embed.bias", {d}});
    } else {
        const auto ch = stem_channels(cfg);
        for (std::size_t i = 0; i < 4; ++i) {
            const auto prefix = "stem.conv" + std::to_string(i);
            schema.push_back({prefix + ".weight", {ch[i + 1], ch[i], 3, 3}});
            schema.push_back({prefix + ".bias", {ch[i + 1]}});
        }
        schema.push_back({"stem.proj.weight", {d, ch[4], 1, 1}});
        schema.push_back({"stem.proj.bias", {d}});
    }
    schema.push_back({"pos_embed", {cfg.grid_cells() + 1, d}});
    schema.push_back({"cls_token", {d}});
    for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.depth); ++i) {
        schema.push_back({block_name(i, "norm1.weight"), {d}});
        schema.push_back({block_name(i, "norm1.bias"), {d}});
        schema.push_back({block_name(i, "attn.qkv.weight"), {d, 3 * d}});
        schema.push_back({block_name(i, "attn.qkv.bias"), {3 * d}});
        schema.push_back({block_name(i, "attn.proj.weight"), {d, d}});
        schema.push_back({block_name(i, "attn.proj.bias"), {d}});
        schema.push_back({block_name(i, "norm2.weight"), {d}});
        schema.push_back({block_name(i, "norm2.bias"), {d}});
        schema.push_back({block_name(i, "mlp.fc1.weight"), {d, hidden}});
        schema.push_back({block_name(i, "mlp.fc1.bias"), {hidden}});
        schema.push_back({block_name(i, "mlp.fc2.weight"), {hidden, d}});
        schema.push_back({block_name(i, "mlp.fc2.bias"), {d}});
    }
    schema.push_back({"norm.weight", {d}});
    schema.push_back({"norm.bias", {d}});
    schema.push_back({"head.weight", {d, static_cast<std::size_t>(cfg.num_classes)}});
    schema.push_back({"head.bias", {static_cast<std::size_t>(cfg.num_classes)}});
    return schema;
}

namespace {

// Visits every weight tensor paired with its schema name. Works for const and
// mutable ModelWeights alike.
template <typename Weights, typename Fn>
void visit_tensors(Weights& w, Fn&& fn) {
    const auto& cfg = w.config;
    if (cfg.stem == StemKind::grid) {
        fn("patch_embed.weight", w.patch->projection);
        fn("patch_embed.bias", w.patch->bias);
    } else {
        for (std::size_t i = 0; i < 4; ++i) {
            const auto prefix = "stem.conv" + std::to_string(i);
            fn(prefix + ".weight", w.stem->conv_kernels[i]);
            fn(prefix + ".bias", w.stem->conv_biases[i]);
        }
        fn("stem.proj.weight", w.stem->projector);
        fn("stem.proj.bias", w.stem->projector_bias);
    }
    fn("pos_embed", w.positional);
    fn("cls_token", w.cls_embedding);
    for (std::size_t i = 0; i < w.blocks.size(); ++i) {
        auto& b = w.blocks[i];
        fn(block_name(i, "norm1.weight"), b.norm1_gamma);
        fn(block_name(i, "norm1.bias"), b.norm1_beta);
        fn(block_name(i, "attn.qkv.weight"), b.qkv_weight);
        fn(block_name(i, "attn.qkv.bias"), b.qkv_bias);
        fn(block_name(i, "attn.proj.weight"), b.proj_weight);
        fn(block_name(i, "attn.proj.bias"), b.proj_bias);
        fn(block_name(i, "norm2.weight"), b.norm2_gamma);
        fn(block_name(i, "norm2.bias"), b.norm2_beta);
        fn(block_name(i, "mlp.fc1.weight"), b.fc1_weight);
        fn(block_name(i, "mlp.fc1.bias"), b.fc1_bias);
        fn(block_name(i, "mlp.fc2.weight"), b.fc2_weight);
        fn(block_name(i, "mlp.fc2.bias"), b.fc2_bias);
    }
    fn("norm.weight", w.norm_gamma);
    fn("norm.bias", w.norm_beta);
    fn("head.weight", w.head_weight);
    fn("head.bias", w.head_bias);
}

ModelWeights empty_weights(const ModelConfig& cfg) {
    ModelWeights w;
    w.config = cfg;
    if (cfg.stem == StemKind::grid) {
        w.patch.emplace();
    } else {
        w.stem.emplace();
    }
    w.blocks.resize(static_cast<std::size_t>(cfg.depth));
    return w;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h = (h ^ c) * 1099511628211ull;
    }
    return h;
}

// Truncated normal at +-2 std from Box-Muller over raw engine output, so the
// stream is identical on every standard library.
class TruncatedNormal {
public:
    TruncatedNormal(std::uint64_t seed, double stddev) : m_rng(seed), m_stddev(stddev) {}

    float operator()() {
        while (true) {
            const double u1 = (static_cast<double>(m_rng() >> 11) + 1.0) * 0x1.0p-53;
            const double u2 = static_cast<double>(m_rng() >> 11) * 0x1.0p-53;
            const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
            if (std::abs(z) <= 2.0) {
                return static_cast<float>(z * m_stddev);
            }
        }
    }

private:
    std::mt19937_64 m_rng;
    double m_stddev;
};

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

TensorFile to_tensor_file(const ModelWeights& weights) {
    TensorFile file;
    file.metadata["format"] = "repiece-weights";
    file.metadata["config"] = weights.config;
    visit_tensors(weights, [&](const std::string& name, const Tensor& t) { file.tensors.emplace(name, t); });
    return file;
}

namespace {

ModelConfig config_from_metadata(const nlohmann::json& metadata) {
    ModelConfig cfg;
    try {
        require(metadata.contains("config"), ErrorKind::format, "weights file has no model config in metadata");
        cfg = metadata.at("config").get<ModelConfig>();
        cfg.validate();
    } catch (const Error& e) {
        fail(ErrorKind::format, std::string("weights config: ") + e.what());
    }
    return cfg;
}

}  // namespace

ModelConfig read_weights_config(const std::filesystem::path& path) {
    return config_from_metadata(read_tensor_file_metadata(path));
}

ModelWeights from_tensor_file(const TensorFile& file) {
    const ModelConfig cfg = config_from_metadata(file.metadata);
    const auto schema = weight_schema(cfg);
    std::map<std::string, Shape> expected(schema.begin(), schema.end());
    for (const auto& [name, tensor] : file.tensors) {
        require(expected.count(name) == 1, ErrorKind::format, "unexpected tensor '" + name + "'");
    }
    ModelWeights w = empty_weights(cfg);
    visit_tensors(w, [&](const std::string& name, Tensor& t) {
        auto it = file.tensors.find(name);
        require(it != file.tensors.end(), ErrorKind::format, "missing tensor '" + name + "'");
        require(it->second.shape() == expected.at(name),
                ErrorKind::format,
                "tensor '" + name + "' has shape " + shape_to_string(it->second.shape()) + ", expected " +
                    shape_to_string(expected.at(name)));
        t = it->second;
    });
    return w;
}

ModelWeights load_weights(const std::filesystem::path& path) {
    return from_tensor_file(read_tensor_file(path));
}

void save_weights(const ModelWeights& weights, const std::filesystem::path& path) {
    write_tensor_file(to_tensor_file(weights), path);
}

ModelWeights init_random(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const auto schema = weight_schema(cfg);
    std::map<std::string, Shape> shapes(schema.begin(), schema.end());
    ModelWeights w = empty_weights(cfg);
    visit_tensors(w, [&](const std::string& name, Tensor& t) {
        const Shape& shape = shapes.at(name);
        const bool is_norm = name.find("norm") != std::string::npos;
        if (is_norm) {
            t = Tensor(shape, ends_with(name, ".weight") ? 1.0f : 0.0f);
        } else if (ends_with(name, ".bias")) {
            t = Tensor(shape, 0.0f);
        } else {
            double stddev = 0.02;
            if (name.rfind("stem.conv", 0) == 0) {
                stddev = std::sqrt(2.0 / static_cast<double>(shape[1] * shape[2] * shape[3]));
            }
            TruncatedNormal draw(seed * 0x9E3779B97F4A7C15ull ^ fnv1a(name), stddev);
            std::vector<float> data(shape_numel(shape));
            for (auto& v : data) {
                v = draw();
            }
            t = Tensor(shape, std::move(data));
        }
    });
    return w;
}

TokenBatch embed_image(const Tensor& image, const ModelWeights& weights) {
    const auto& cfg = weights.config;
    TokenBatch tokens = cfg.stem == StemKind::grid
                            ? embed::patchify_embed(image, cfg.patch_size, weights.patch->projection, weights.patch->bias)
                            : embed::coherence_stem(image, *weights.stem);
    return embed::finalize_tokens(tokens, weights.positional, weights.cls_embedding);
}

}  // namespace repiece
