// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: inference, schedule sweeps, benchmarks, diagnostics
// and generators for weights and synthetic images.

#include <CLI11.hpp>
#include <iostream>
#include <optional>

#include "repiece/commands.hpp"

using namespace repiece;

namespace {

struct SpecFlags {
    std::string config;
    std::string weights;
    std::vector<std::string> inputs;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string strategy;
    std::optional<double> keep_rate, merge_ratio, proportion;
    std::optional<int> tome_r;
    std::string labels;
    std::string preset;
    std::string stem;
    std::optional<int> depth;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config, "RunSpec JSON file");
        cmd->add_option("--weights", weights, "weights file");
        cmd->add_option("--input,--inputs", inputs, "input images (P6 PPM or tensor files)");
        cmd->add_option("--out", out, "output directory");
        cmd->add_option("--seed", seed, "seed for every random choice");
        cmd->add_option("--strategy", strategy, "none | evit | tome | imagepiece");
        cmd->add_option("--keep-rate", keep_rate, "share of image tokens kept at prune layers");
        cmd->add_option("--merge-ratio", merge_ratio, "merges per layer as a share of image tokens");
        cmd->add_option("--proportion", proportion, "bottom-k share p of non-semantic tokens");
        cmd->add_option("--tome-r", tome_r, "ToMe pairs merged per layer");
        cmd->add_option("--labels", labels, "CSV of <file>,<class>");
        cmd->add_option("--preset", preset, "deit-s | deit-ti model shape");
        cmd->add_option("--stem", stem, "grid | coherence");
        cmd->add_option("--depth", depth, "encoder depth");
    }

    RunSpec build() const {
        RunSpec spec = config.empty() ? RunSpec{} : load_run_spec(config);
        const bool model_flags = !preset.empty() || !stem.empty() || depth;
        if (!weights.empty() && !spec.model_explicit && !model_flags) {
            spec.model = read_weights_config(weights);
            if (strategy.empty()) {
                spec.reduction = ReductionConfig::defaults(spec.reduction.strategy, spec.model.depth);
            }
        }
        if (!preset.empty()) {
            if (preset == "deit-s") {
                spec.model = ModelConfig::deit_small();
            } else if (preset == "deit-ti") {
                spec.model = ModelConfig::deit_tiny();
            } else {
                fail(ErrorKind::config, "preset: unknown '" + preset + "' (expected deit-s or deit-ti)");
            }
            spec.model_explicit = true;
        }
        if (!stem.empty()) {
            spec.model.stem = parse_stem_kind(stem);
            spec.model_explicit = true;
        }
        if (depth) {
            spec.model.depth = *depth;
            spec.model_explicit = true;
        }
        if (!strategy.empty()) {
            spec.reduction = ReductionConfig::defaults(parse_strategy(strategy), spec.model.depth);
        } else if (depth) {
            spec.reduction = ReductionConfig::defaults(spec.reduction.strategy, spec.model.depth);
        }
        if (keep_rate) {
            spec.reduction.keep_rate = *keep_rate;
        }
        if (merge_ratio) {
            spec.reduction.merge_ratio = *merge_ratio;
        }
        if (proportion) {
            spec.reduction.nonsemantic_proportion = *proportion;
        }
        if (tome_r) {
            spec.reduction.tome_reduction = *tome_r;
        }
        if (!weights.empty()) {
            spec.weights = weights;
        }
        if (!inputs.empty()) {
            spec.inputs.assign(inputs.begin(), inputs.end());
        }
        if (!out.empty()) {
            spec.output_dir = out;
        }
        if (!labels.empty()) {
            spec.labels = labels;
        }
        if (seed) {
            spec.seed = *seed;
        }
        spec.validate();
        return spec;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"repiece: ViT inference with pluggable token reduction"};
    app.require_subcommand(1);

    SpecFlags flags;
    std::size_t batch = 8, iters = 20;
    std::vector<int> masks{0, 7, 10, 15, 20, 25, 50};
    cli::ScheduleSweep sweep;
    cli::DiagOptions diag_options;
    std::string metric = "overlap";
    std::string image_kind = "smooth";
    std::size_t image_size = 224;

    auto* run = app.add_subcommand("run", "classify inputs and write logits + diagnostics JSON");
    auto* schedule = app.add_subcommand("schedule", "per-layer token counts and FLOPs as CSV");
    auto* bench = app.add_subcommand("bench", "wall-clock throughput on synthetic inputs");
    auto* diag = app.add_subcommand("diag", "analysis metrics per input as CSV");
    auto* mask_eval = app.add_subcommand("mask-eval", "top-1 accuracy under random 16x16 masks");
    auto* init = app.add_subcommand("init", "write seeded random weights");
    auto* gen_image = app.add_subcommand("gen-image", "write a synthetic P6 PPM image");
    for (auto* cmd : {run, schedule, bench, diag, mask_eval, init, gen_image}) {
        flags.attach(cmd);
    }
    schedule->add_option("--keep-rates", sweep.keep_rates, "keep rates to sweep")->delimiter(',');
    schedule->add_option("--merge-ratios", sweep.merge_ratios, "merge ratios to sweep")->delimiter(',');
    schedule->add_option("--tome-rs", sweep.tome_rs, "ToMe r values to sweep")->delimiter(',');
    bench->add_option("--batch", batch, "images per iteration");
    bench->add_option("--iters", iters, "timed iterations");
    diag->add_option("--metric", metric, "overlap | inattn | merged-sim | adjacency");
    diag->add_option("--q", diag_options.q_percent, "top-q percent for overlap");
    diag->add_option("--lowest", diag_options.lowest_n, "samples averaged by merged-sim aggregation");
    mask_eval->add_option("--masks", masks, "mask counts k")->delimiter(',');
    gen_image->add_option("--kind", image_kind, "smooth | noise | gradient");
    gen_image->add_option("--size", image_size, "image side in pixels");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    return cli::guarded(
        [&] {
            if (run->parsed()) {
                cli::cmd_run(flags.build(), std::cout);
            } else if (schedule->parsed()) {
                cli::cmd_schedule(flags.build(), sweep, std::cout);
            } else if (bench->parsed()) {
                cli::cmd_bench(flags.build(), batch, iters, std::cout);
            } else if (diag->parsed()) {
                cli::cmd_diag(flags.build(), metric, diag_options, std::cout);
            } else if (mask_eval->parsed()) {
                cli::cmd_mask_eval(flags.build(), masks, std::cout);
            } else if (init->parsed()) {
                const auto spec = flags.build();
                require(spec.seed.has_value(), ErrorKind::config, "seed: required for init");
                require(!flags.out.empty(), ErrorKind::config, "out: weights file path required");
                cli::cmd_init(spec.model, *spec.seed, flags.out);
            } else if (gen_image->parsed()) {
                require(flags.seed.has_value() || image_kind == "gradient", ErrorKind::config, "seed: required");
                require(!flags.out.empty(), ErrorKind::config, "out: image path required");
                cli::cmd_gen_image(image_kind, flags.seed.value_or(0), image_size, flags.out);
            }
        },
        std::cerr);
}
