// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "repiece/error.hpp"
#include "repiece/model.hpp"
#include "repiece/run_spec.hpp"

namespace repiece::cli {

/// 0 ok, 2 config, 3 I/O, 4 numeric.
int exit_code(ErrorKind kind) noexcept;

/// Runs `body`, printing any failure to `err`; returns the process exit code.
int guarded(const std::function<void()>& body, std::ostream& err);

/// Weights from spec.weights, or init_random(spec.model, seed) when no file is
/// given. A spec that states a model config must agree with the file's.
ModelWeights resolve_weights(const RunSpec& spec);

/// Classifies every input (sorted by path); writes <output_dir>/<file>.json per
/// input plus summary.json.
void cmd_run(const RunSpec& spec, std::ostream& out);

struct ScheduleSweep {
    std::vector<double> keep_rates;
    std::vector<double> merge_ratios;
    std::vector<int> tome_rs;
};

/// CSV: strategy,keep_rate,merge_ratio,tome_r,layer,tokens,flops_cum. Empty sweep
/// lists fall back to the run spec's single value.
void cmd_schedule(const RunSpec& spec, const ScheduleSweep& sweep, std::ostream& out);

void cmd_bench(const RunSpec& spec, std::size_t batch, std::size_t iterations, std::ostream& out);

struct DiagOptions {
    double q_percent = 70.0;
    std::size_t lowest_n = 500;
};

/// metric: overlap | inattn | merged-sim | adjacency. CSV per input on `out`.
void cmd_diag(const RunSpec& spec, const std::string& metric, const DiagOptions& options, std::ostream& out);

void cmd_mask_eval(const RunSpec& spec, const std::vector<int>& k_list, std::ostream& out);

void cmd_init(const ModelConfig& config, std::uint64_t seed, const std::filesystem::path& out);

/// kind: smooth | noise | gradient. Writes a P6 PPM.
void cmd_gen_image(const std::string& kind, std::uint64_t seed, std::size_t size, const std::filesystem::path& out);

}  // namespace repiece::cli
