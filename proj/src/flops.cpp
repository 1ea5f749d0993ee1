// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#include "repiece/flops.hpp"

namespace repiece::flops {

std::int64_t stem_macs(const ModelConfig& cfg) {
    const std::int64_t d = cfg.dim;
    const auto cells = static_cast<std::int64_t>(cfg.grid_cells());
    if (cfg.stem == StemKind::grid) {
        const std::int64_t ps = cfg.patch_size;
        return cells * 3 * ps * ps * d;
    }
    std::int64_t macs = 0;
    std::int64_t side = cfg.image_size;
    std::int64_t in_ch = 3;
    std::int64_t out_ch = cfg.stem_width;
    for (int i = 0; i < 4; ++i) {
        side = (side + 1) / 2;
        macs += side * side * out_ch * in_ch * 9;
        in_ch = out_ch;
        out_ch *= 2;
    }
    return macs + cells * in_ch * d;
}

std::int64_t head_macs(const ModelConfig& cfg) {
    return static_cast<std::int64_t>(cfg.dim) * cfg.num_classes;
}

std::int64_t layer_macs(const ModelConfig& cfg, std::int64_t n_in, std::int64_t n_out) {
    const std::int64_t d = cfg.dim;
    const std::int64_t hidden = cfg.mlp_hidden();
    return 4 * n_in * d * d + 2 * n_in * n_in * d + 2 * n_out * d * hidden;
}

}  // namespace repiece::flops
