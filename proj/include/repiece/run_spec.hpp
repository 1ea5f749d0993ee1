// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "repiece/model.hpp"
#include "repiece/reduction_config.hpp"

namespace repiece {

/// Everything a CLI command needs. JSON form:
///
///   {"model": {...}, "reduction": {...}, "seed": 7,
///    "paths": {"weights": "w.bin", "inputs": ["a.ppm"], "output_dir": "out", "labels": "labels.csv"}}
///
/// Every section is optional; unknown keys anywhere are rejected. When
/// "reduction.strategy" is present the strategy's defaults are applied before
/// the other reduction keys.
struct RunSpec {
    ModelConfig model;
    bool model_explicit = false;
    ReductionConfig reduction;
    std::optional<std::filesystem::path> weights;
    std::vector<std::filesystem::path> inputs;
    std::filesystem::path output_dir = ".";
    std::optional<std::filesystem::path> labels;
    std::optional<std::uint64_t> seed;

    /// Config error naming the field on any inconsistency.
    void validate() const;
};

RunSpec parse_run_spec(const nlohmann::json& j);
RunSpec load_run_spec(const std::filesystem::path& path);
nlohmann::json to_json(const RunSpec& spec);

/// Reduction section parse with strategy defaults applied first.
ReductionConfig parse_reduction(const nlohmann::json& j, int depth);

}  // namespace repiece
