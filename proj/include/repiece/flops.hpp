// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "repiece/model.hpp"

namespace repiece::flops {

// Analytic multiply-accumulate counts; FLOPs are reported as 2 x MACs.
// Per layer with n_in tokens entering MHSA and n_out tokens entering the MLP:
//   attention  4 * n_in * D^2 + 2 * n_in^2 * D
//   MLP        2 * n_out * D * hidden
// Norms, softmax, GELU and the reduction hooks are not counted.

std::int64_t stem_macs(const ModelConfig& cfg);
std::int64_t head_macs(const ModelConfig& cfg);
std::int64_t layer_macs(const ModelConfig& cfg, std::int64_t n_in, std::int64_t n_out);

}  // namespace repiece::flops
