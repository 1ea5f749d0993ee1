// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#include "repiece/commands.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "repiece/diag.hpp"
#include "repiece/image_io.hpp"
#include "repiece/parallel.hpp"
#include "repiece/synthetic.hpp"
#include "repiece/vit.hpp"

namespace repiece::cli {

int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::io:
    case ErrorKind::format:
        return 3;
    case ErrorKind::numeric:
    case ErrorKind::degenerate_input:
        return 4;
    case ErrorKind::config:
    case ErrorKind::dimension:
    case ErrorKind::range:
    case ErrorKind::precondition:
        return 2;
    }
    return 1;
}

int guarded(const std::function<void()>& body, std::ostream& err) {
    try {
        body();
        return 0;
    } catch (const Error& e) {
        err << "repiece: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        err << "repiece: " << e.what() << '\n';
        return 3;
    }
}

namespace {

std::uint64_t require_seed(const RunSpec& spec, const char* why) {
    require(spec.seed.has_value(), ErrorKind::config, std::string("seed: required ") + why);
    return *spec.seed;
}

std::vector<std::filesystem::path> sorted_inputs(const RunSpec& spec) {
    require(!spec.inputs.empty(), ErrorKind::config, "paths.inputs: no input images given");
    auto inputs = spec.inputs;
    std::sort(inputs.begin(), inputs.end());
    return inputs;
}

std::vector<Tensor> load_images(const std::vector<std::filesystem::path>& inputs) {
    std::vector<Tensor> images(inputs.size());
    parallel_for(inputs.size(), [&](std::size_t i) { images[i] = image_io::load_image(inputs[i]); });
    return images;
}

// Labels CSV: "<file name>,<class>" per line; a non-numeric second column is a header.
std::map<std::string, int> load_labels(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open labels file " + path.string());
    std::map<std::string, int> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto comma = line.rfind(',');
        require(comma != std::string::npos, ErrorKind::format, "labels line without a comma: " + line);
        const auto value = line.substr(comma + 1);
        if (value.empty() || !std::all_of(value.begin(), value.end(), [](char c) { return std::isdigit(c) || c == '\r'; })) {
            continue;
        }
        labels[line.substr(0, comma)] = std::stoi(value);
    }
    return labels;
}

std::optional<int> label_for(const std::map<std::string, int>& labels, const std::filesystem::path& input) {
    for (const auto& key : {input.string(), input.filename().string()}) {
        if (auto it = labels.find(key); it != labels.end()) {
            return it->second;
        }
    }
    return std::nullopt;
}

std::vector<vit::EncoderOutput> classify_all(const ModelWeights& weights,
                                             const ReductionConfig& rcfg,
                                             const std::vector<Tensor>& images) {
    std::vector<vit::EncoderOutput> outputs(images.size());
    parallel_for(images.size(), [&](std::size_t i) {
        outputs[i] = vit::classify(images[i], weights, rcfg);
        diag::annotate_inattn(outputs[i].diag, rcfg.nonsemantic_proportion);
    });
    return outputs;
}

std::string dump(const nlohmann::json& j) {
    return j.dump(2) + "\n";
}

}  // namespace

ModelWeights resolve_weights(const RunSpec& spec) {
    if (!spec.weights) {
        return init_random(spec.model, require_seed(spec, "to initialise weights when no weights file is given"));
    }
    ModelWeights weights = load_weights(*spec.weights);
    if (spec.model_explicit && !(weights.config == spec.model)) {
        fail(ErrorKind::config,
             "model: spec config " + nlohmann::json(spec.model).dump() + " disagrees with weights file config " +
                 nlohmann::json(weights.config).dump());
    }
    return weights;
}

void cmd_run(const RunSpec& spec, std::ostream& out) {
    spec.validate();
    const auto weights = resolve_weights(spec);
    spec.reduction.validate(weights.config.depth);
    const auto inputs = sorted_inputs(spec);
    const auto labels = spec.labels ? load_labels(*spec.labels) : std::map<std::string, int>{};
    const auto images = load_images(inputs);
    const auto outputs = classify_all(weights, spec.reduction, images);

    std::filesystem::create_directories(spec.output_dir);
    nlohmann::json results = nlohmann::json::array();
    std::size_t labelled = 0, correct = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto name = inputs[i].filename().string();
        const auto prediction = diag::argmax(outputs[i].logits);
        nlohmann::json report = {{"input", name},
                                 {"strategy", to_string(spec.reduction.strategy)},
                                 {"prediction", prediction},
                                 {"logits", std::vector<float>(outputs[i].logits.data().begin(), outputs[i].logits.data().end())},
                                 {"diag", outputs[i].diag}};
        write_file_bytes(spec.output_dir / (name + ".json"), dump(report));
        nlohmann::json row = {{"input", name},
                              {"prediction", prediction},
                              {"final_output_tokens", outputs[i].diag.final_output_tokens},
                              {"flops", outputs[i].diag.flops}};
        if (auto label = label_for(labels, inputs[i])) {
            row["label"] = *label;
            ++labelled;
            correct += static_cast<std::size_t>(*label) == prediction ? 1 : 0;
        }
        results.push_back(row);
    }
    nlohmann::json summary = {{"model", weights.config},
                              {"reduction", spec.reduction},
                              {"results", results},
                              {"accuracy", nullptr}};
    if (labelled > 0) {
        summary["accuracy"] = 100.0 * static_cast<double>(correct) / static_cast<double>(labelled);
    }
    write_file_bytes(spec.output_dir / "summary.json", dump(summary));
    out << "wrote " << inputs.size() << " report(s) to " << spec.output_dir.string() << '\n';
}

void cmd_schedule(const RunSpec& spec, const ScheduleSweep& sweep, std::ostream& out) {
    spec.validate();
    const auto& cfg = spec.model;
    auto keep_rates = sweep.keep_rates.empty() ? std::vector<double>{spec.reduction.keep_rate} : sweep.keep_rates;
    auto merge_ratios =
        sweep.merge_ratios.empty() ? std::vector<double>{spec.reduction.merge_ratio} : sweep.merge_ratios;
    auto tome_rs = sweep.tome_rs.empty() ? std::vector<int>{spec.reduction.tome_reduction} : sweep.tome_rs;
    out << "strategy,keep_rate,merge_ratio,tome_r,layer,tokens,flops_cum\n";
    for (int r : tome_rs) {
        for (double merge : merge_ratios) {
            for (double keep : keep_rates) {
                ReductionConfig rcfg = spec.reduction;
                rcfg.keep_rate = keep;
                rcfg.merge_ratio = merge;
                rcfg.tome_reduction = r;
                const auto schedule = diag::token_schedule(cfg, rcfg);
                std::istringstream rows(diag::schedule_csv(cfg, schedule));
                std::string line;
                std::getline(rows, line);  // header
                while (std::getline(rows, line)) {
                    out << to_string(rcfg.strategy) << ',' << keep << ',' << merge << ',' << r << ',' << line << '\n';
                }
            }
        }
    }
}

void cmd_bench(const RunSpec& spec, std::size_t batch, std::size_t iterations, std::ostream& out) {
    spec.validate();
    const auto seed = require_seed(spec, "for benchmark inputs");
    const auto weights = resolve_weights(spec);
    const auto result = diag::bench(weights, spec.reduction, batch, iterations, seed);
    nlohmann::json j = diag::bench_json(result);
    j["strategy"] = to_string(spec.reduction.strategy);
    j["batch"] = batch;
    j["iterations"] = iterations;
    out << dump(j);
}

void cmd_diag(const RunSpec& spec, const std::string& metric, const DiagOptions& options, std::ostream& out) {
    spec.validate();
    require(metric == "overlap" || metric == "inattn" || metric == "merged-sim" || metric == "adjacency",
            ErrorKind::config,
            "metric: unknown '" + metric + "' (expected overlap, inattn, merged-sim or adjacency)");
    const auto weights = resolve_weights(spec);
    const auto inputs = sorted_inputs(spec);
    const auto images = load_images(inputs);
    out.setf(std::ios::fixed);
    out.precision(6);

    if (metric == "adjacency") {
        out << "input,adjacency_similarity\n";
        const auto& cfg = weights.config;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            const TokenBatch tokens =
                cfg.stem == StemKind::grid
                    ? embed::patchify_embed(images[i], cfg.patch_size, weights.patch->projection, weights.patch->bias)
                    : embed::coherence_stem(images[i], *weights.stem);
            out << inputs[i].filename().string() << ',' << diag::adjacency_similarity(tokens) << '\n';
        }
        return;
    }
    const auto outputs = classify_all(weights, spec.reduction, images);
    if (metric == "overlap") {
        out << "input,q,overlap\n";
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            out << inputs[i].filename().string() << ',' << options.q_percent << ','
                << diag::merged_topk_overlap(outputs[i].diag, options.q_percent) << '\n';
        }
    } else if (metric == "inattn") {
        out << "input,layer,inattn_to_attn\n";
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            for (const auto& layer : outputs[i].diag.per_layer) {
                if (layer.inattn_to_attn) {
                    out << inputs[i].filename().string() << ',' << layer.layer << ',' << *layer.inattn_to_attn << '\n';
                }
            }
        }
    } else {
        auto cell = [](const std::optional<double>& v) {
            std::ostringstream s;
            s.setf(std::ios::fixed);
            s.precision(6);
            if (v) {
                s << *v;
            }
            return s.str();
        };
        out << "input,first,last\n";
        std::vector<std::optional<double>> firsts, lasts;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            firsts.push_back(diag::merged_pair_similarity(outputs[i].diag, diag::LayerSelect::first));
            lasts.push_back(diag::merged_pair_similarity(outputs[i].diag, diag::LayerSelect::last));
            out << inputs[i].filename().string() << ',' << cell(firsts.back()) << ',' << cell(lasts.back()) << '\n';
        }
        out << "lowest_" << options.lowest_n << ',' << cell(diag::aggregate_lowest(firsts, options.lowest_n)) << ','
            << cell(diag::aggregate_lowest(lasts, options.lowest_n)) << '\n';
    }
}

void cmd_mask_eval(const RunSpec& spec, const std::vector<int>& k_list, std::ostream& out) {
    spec.validate();
    const auto seed = require_seed(spec, "for mask placement");
    const auto weights = resolve_weights(spec);
    const auto inputs = sorted_inputs(spec);
    const auto images = load_images(inputs);
    std::vector<int> labels(inputs.size());
    if (spec.labels) {
        const auto table = load_labels(*spec.labels);
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            auto label = label_for(table, inputs[i]);
            require(label.has_value(), ErrorKind::config, "labels: no entry for " + inputs[i].filename().string());
            labels[i] = *label;
        }
    } else {
        // Without ground truth, score agreement with the unmasked prediction.
        const auto clean = classify_all(weights, spec.reduction, images);
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            labels[i] = static_cast<int>(diag::argmax(clean[i].logits));
        }
    }
    const auto rows = diag::mask_eval(weights, spec.reduction, images, labels, k_list, seed);
    out << diag::mask_csv(rows);
}

void cmd_init(const ModelConfig& config, std::uint64_t seed, const std::filesystem::path& out) {
    config.validate();
    save_weights(init_random(config, seed), out);
}

void cmd_gen_image(const std::string& kind, std::uint64_t seed, std::size_t size, const std::filesystem::path& out) {
    require(size > 0, ErrorKind::config, "size: must be positive");
    Tensor image;
    if (kind == "smooth") {
        image = synthetic::smooth_image(seed, size);
    } else if (kind == "noise") {
        image = synthetic::noise_image(seed, size);
    } else if (kind == "gradient") {
        image = synthetic::horizontal_gradient(size);
    } else {
        fail(ErrorKind::config, "kind: unknown '" + kind + "' (expected smooth, noise or gradient)");
    }
    image_io::write_ppm(image, out);
}

}  // namespace repiece::cli
