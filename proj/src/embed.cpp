// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#include "repiece/embed.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "repiece/error.hpp"
#include "repiece/numerics.hpp"

namespace repiece {

TokenBatch TokenBatch::select(const std::vector<std::size_t>& keep) const {
    TokenBatch out;
    const auto d = dim();
    std::vector<float> data;
    data.reserve(keep.size() * d);
    for (auto pos : keep) {
        auto r = features.row(pos);
        data.insert(data.end(), r.begin(), r.end());
        out.sizes.push_back(sizes[pos]);
        out.provenance.push_back(provenance[pos]);
        out.ids.push_back(ids[pos]);
        if (is_cls(pos)) {
            out.cls_index = out.sizes.size() - 1;
        }
    }
    if (!keep.empty()) {
        out.features = Tensor({keep.size(), d}, std::move(data));
    }
    out.grid = grid;
    out.pruned = pruned;
    out.next_id = next_id;
    return out;
}

std::string TokenBatch::invariant_violation() const {
    std::ostringstream why;
    const auto n = size();
    if (features.rank() != 2 || features.dim(0) != n || provenance.size() != n || ids.size() != n) {
        why << "field lengths disagree";
        return why.str();
    }
    if (cls_index && *cls_index >= n) {
        return "cls_index out of range";
    }
    std::vector<int> seen(grid.cells(), 0);
    std::size_t covered = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (is_cls(i)) {
            if (!provenance[i].empty() || sizes[i] != 1) {
                return "CLS token must have size 1 and empty provenance";
            }
            continue;
        }
        if (sizes[i] != static_cast<int>(provenance[i].size()) || sizes[i] <= 0) {
            why << "token " << i << " size " << sizes[i] << " != provenance " << provenance[i].size();
            return why.str();
        }
        for (int p : provenance[i]) {
            if (p < 0 || static_cast<std::size_t>(p) >= seen.size() || seen[p]++) {
                why << "patch " << p << " duplicated or out of range (token " << i << ")";
                return why.str();
            }
        }
        covered += provenance[i].size();
    }
    for (int p : pruned) {
        if (p < 0 || static_cast<std::size_t>(p) >= seen.size() || seen[p]++) {
            why << "pruned patch " << p << " duplicated or still live";
            return why.str();
        }
    }
    if (covered + pruned.size() != grid.cells()) {
        why << "sizes " << covered << " + pruned " << pruned.size() << " != " << grid.cells();
        return why.str();
    }
    return {};
}

namespace embed {

namespace {

TokenBatch grid_batch(Tensor features, Grid grid) {
    TokenBatch batch;
    const auto cells = grid.cells();
    batch.features = std::move(features);
    batch.sizes.assign(cells, 1);
    batch.provenance.resize(cells);
    batch.ids.resize(cells);
    for (std::size_t i = 0; i < cells; ++i) {
        batch.provenance[i] = {static_cast<int>(i)};
        batch.ids[i] = static_cast<TokenId>(i);
    }
    batch.grid = grid;
    batch.next_id = static_cast<TokenId>(cells);
    return batch;
}

void require_image(const Tensor& image) {
    require(image.rank() == 3 && image.dim(0) == 3,
            ErrorKind::dimension,
            "image must be [3 x H x W], got " + shape_to_string(image.shape()));
}

}  // namespace

TokenBatch patchify_embed(const Tensor& image, int patch_size, const Tensor& projection, const Tensor& bias) {
    require_image(image);
    require(patch_size > 0, ErrorKind::precondition, "patch_size must be positive");
    const auto ps = static_cast<std::size_t>(patch_size);
    const auto height = image.dim(1), width = image.dim(2);
    require(height % ps == 0 && width % ps == 0,
            ErrorKind::dimension,
            "image " + shape_to_string(image.shape()) + " not divisible by patch size " + std::to_string(ps));
    const auto patch_len = 3 * ps * ps;
    require(projection.rank() == 2 && projection.dim(0) == patch_len,
            ErrorKind::dimension,
            "patch projection must have " + std::to_string(patch_len) + " rows");
    const Grid grid{height / ps, width / ps};

    Tensor patches({grid.cells(), patch_len});
    auto src = image.data();
    for (std::size_t gy = 0; gy < grid.rows; ++gy) {
        for (std::size_t gx = 0; gx < grid.cols; ++gx) {
            auto dst = patches.row(gy * grid.cols + gx);
            std::size_t k = 0;
            for (std::size_t c = 0; c < 3; ++c) {
                for (std::size_t y = 0; y < ps; ++y) {
                    const auto* line = &src[(c * height + gy * ps + y) * width + gx * ps];
                    for (std::size_t x = 0; x < ps; ++x) {
                        dst[k++] = line[x];
                    }
                }
            }
        }
    }
    return grid_batch(numerics::linear(patches, projection, bias), grid);
}

TokenBatch coherence_stem(const Tensor& image, const StemWeights& weights) {
    require_image(image);
    const auto height = image.dim(1), width = image.dim(2);
    require(height % kStemDownsample == 0 && width % kStemDownsample == 0,
            ErrorKind::dimension,
            "image " + shape_to_string(image.shape()) + " does not reduce to an integer grid under the stem");
    Tensor x = image;
    for (std::size_t i = 0; i < weights.conv_kernels.size(); ++i) {
        x = numerics::gelu(numerics::conv2d(x, weights.conv_kernels[i], weights.conv_biases[i], 2, 1));
    }
    x = numerics::conv2d(x, weights.projector, weights.projector_bias, 1, 0);
    const Grid grid{height / kStemDownsample, width / kStemDownsample};
    require(x.dim(1) == grid.rows && x.dim(2) == grid.cols, ErrorKind::dimension, "stem output grid mismatch");

    // [D x rows x cols] -> [cells x D]
    const auto d = x.dim(0), cells = grid.cells();
    Tensor tokens({cells, d});
    for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t cell = 0; cell < cells; ++cell) {
            tokens.at(cell, c) = x[c * cells + cell];
        }
    }
    return grid_batch(std::move(tokens), grid);
}

TokenBatch finalize_tokens(const TokenBatch& batch, const Tensor& positional, const Tensor& cls_embedding) {
    require(!batch.cls_index, ErrorKind::precondition, "batch already has a class token");
    const auto n = batch.size(), d = batch.dim();
    require(positional.rank() == 2 && positional.dim(0) == n + 1 && positional.dim(1) == d,
            ErrorKind::dimension,
            "positional table " + shape_to_string(positional.shape()) + " does not fit " + std::to_string(n) +
                " tokens + CLS of width " + std::to_string(d));
    require(cls_embedding.numel() == d, ErrorKind::dimension, "cls embedding width mismatch");

    TokenBatch out;
    Tensor features({n + 1, d});
    for (std::size_t c = 0; c < d; ++c) {
        features.at(0, c) = cls_embedding[c] + positional.at(0, c);
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto src = batch.features.row(i);
        for (std::size_t c = 0; c < d; ++c) {
            features.at(i + 1, c) = src[c] + positional.at(i + 1, c);
        }
    }
    out.features = std::move(features);
    out.sizes.reserve(n + 1);
    out.sizes.push_back(1);
    out.sizes.insert(out.sizes.end(), batch.sizes.begin(), batch.sizes.end());
    out.provenance.reserve(n + 1);
    out.provenance.emplace_back();
    out.provenance.insert(out.provenance.end(), batch.provenance.begin(), batch.provenance.end());
    out.ids.reserve(n + 1);
    out.ids.push_back(kClsId);
    out.ids.insert(out.ids.end(), batch.ids.begin(), batch.ids.end());
    out.cls_index = 0;
    out.grid = batch.grid;
    out.pruned = batch.pruned;
    out.next_id = batch.next_id;
    return out;
}

std::vector<int> mask_cells(std::size_t cell_count, int k, std::uint64_t seed) {
    require(k >= 0 && static_cast<std::size_t>(k) <= cell_count,
            ErrorKind::range,
            "mask count " + std::to_string(k) + " exceeds " + std::to_string(cell_count) + " grid cells");
    // Partial Fisher-Yates on raw engine output so the choice is identical on every platform.
    std::vector<int> cells(cell_count);
    std::iota(cells.begin(), cells.end(), 0);
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
        const auto j = i + static_cast<std::size_t>(rng() % (cell_count - i));
        std::swap(cells[i], cells[j]);
    }
    cells.resize(static_cast<std::size_t>(k));
    return cells;
}

Tensor apply_random_masks(const Tensor& image, int k, std::uint64_t seed) {
    require_image(image);
    const auto height = image.dim(1), width = image.dim(2);
    require(height % kMaskSize == 0 && width % kMaskSize == 0,
            ErrorKind::dimension,
            "image extent must be a multiple of the mask size");
    const std::size_t cols = width / kMaskSize;
    const auto cells = mask_cells((height / kMaskSize) * cols, k, seed);
    Tensor out = image;
    auto dst = out.data();
    for (int cell : cells) {
        const auto y0 = (static_cast<std::size_t>(cell) / cols) * kMaskSize;
        const auto x0 = (static_cast<std::size_t>(cell) % cols) * kMaskSize;
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t y = y0; y < y0 + kMaskSize; ++y) {
                std::fill_n(dst.begin() + static_cast<long>((c * height + y) * width + x0), kMaskSize, 0.0f);
            }
        }
    }
    return out;
}

}  // namespace embed
}  // namespace repiece
