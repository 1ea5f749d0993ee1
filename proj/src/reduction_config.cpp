// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#include "repiece/reduction_config.hpp"

#include <cmath>
#include <sstream>

#include "repiece/error.hpp"

namespace repiece {

namespace {

// Ratios like 0.3 * 10 land a hair off the integer; snap within this tolerance.
constexpr double kCountTolerance = 1e-9;

}  // namespace

int floor_count(double ratio, std::size_t n) noexcept {
    return static_cast<int>(std::floor(ratio * static_cast<double>(n) + kCountTolerance));
}

int ceil_count(double ratio, std::size_t n) noexcept {
    return static_cast<int>(std::ceil(ratio * static_cast<double>(n) - kCountTolerance));
}

const char* to_string(StrategyKind kind) noexcept {
    switch (kind) {
    case StrategyKind::none:
        return "none";
    case StrategyKind::evit:
        return "evit";
    case StrategyKind::tome:
        return "tome";
    case StrategyKind::imagepiece:
        return "imagepiece";
    }
    return "none";
}

StrategyKind parse_strategy(const std::string& name) {
    for (auto kind : {StrategyKind::none, StrategyKind::evit, StrategyKind::tome, StrategyKind::imagepiece}) {
        if (name == to_string(kind)) {
            return kind;
        }
    }
    fail(ErrorKind::config, "strategy: unknown value '" + name + "' (expected none, evit, tome or imagepiece)");
}

ReductionConfig ReductionConfig::defaults(StrategyKind strategy, int depth) {
    ReductionConfig cfg;
    cfg.strategy = strategy;
    if (strategy == StrategyKind::imagepiece || strategy == StrategyKind::tome) {
        for (int l = 0; l < depth; ++l) {
            cfg.retokenize_layers.insert(l);
        }
    }
    if (strategy == StrategyKind::imagepiece || strategy == StrategyKind::evit) {
        for (int l : {3, 6, 9}) {
            if (l < depth) {
                cfg.prune_layers.insert(l);
            }
        }
    }
    if (strategy == StrategyKind::evit) {
        cfg.keep_rate = 0.7;
    }
    return cfg;
}

void ReductionConfig::validate(int depth) const {
    auto check = [](bool ok, const std::string& field, const std::string& rule, double value) {
        if (!ok) {
            std::ostringstream msg;
            msg << field << ": must " << rule << ", got " << value;
            fail(ErrorKind::config, msg.str());
        }
    };
    check(nonsemantic_proportion > 0.0 && nonsemantic_proportion < 1.0,
          "nonsemantic_proportion",
          "lie in (0, 1)",
          nonsemantic_proportion);
    check(merge_ratio > 0.0 && merge_ratio < 1.0, "merge_ratio", "lie in (0, 1)", merge_ratio);
    check(keep_rate > 0.0 && keep_rate <= 1.0, "keep_rate", "lie in (0, 1]", keep_rate);
    check(tome_reduction >= 0, "tome_reduction", "be >= 0", tome_reduction);
    for (int l : retokenize_layers) {
        check(l >= 0 && l < depth, "retokenize_layers", "index layers below depth " + std::to_string(depth), l);
    }
    for (int l : prune_layers) {
        check(l >= 0 && l < depth, "prune_layers", "index layers below depth " + std::to_string(depth), l);
    }
}

void to_json(nlohmann::json& j, const ReductionConfig& cfg) {
    j = nlohmann::json{{"strategy", to_string(cfg.strategy)},
                       {"nonsemantic_proportion", cfg.nonsemantic_proportion},
                       {"merge_ratio", cfg.merge_ratio},
                       {"keep_rate", cfg.keep_rate},
                       {"tome_reduction", cfg.tome_reduction},
                       {"retokenize_layers", cfg.retokenize_layers},
                       {"prune_layers", cfg.prune_layers},
                       {"proportional_attention", cfg.proportional_attention},
                       {"evit_fuse", cfg.evit_fuse}};
}

void from_json(const nlohmann::json& j, ReductionConfig& cfg) {
    require(j.is_object(), ErrorKind::config, "reduction: expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "strategy") {
                cfg.strategy = parse_strategy(value.get<std::string>());
            } else if (key == "nonsemantic_proportion") {
                cfg.nonsemantic_proportion = value.get<double>();
            } else if (key == "merge_ratio") {
                cfg.merge_ratio = value.get<double>();
            } else if (key == "keep_rate") {
                cfg.keep_rate = value.get<double>();
            } else if (key == "tome_reduction") {
                cfg.tome_reduction = value.get<int>();
            } else if (key == "retokenize_layers") {
                cfg.retokenize_layers = value.get<std::set<int>>();
            } else if (key == "prune_layers") {
                cfg.prune_layers = value.get<std::set<int>>();
            } else if (key == "proportional_attention") {
                cfg.proportional_attention = value.get<bool>();
            } else if (key == "evit_fuse") {
                cfg.evit_fuse = value.get<bool>();
            } else {
                fail(ErrorKind::config, "reduction." + key + ": unknown key");
            }
        } catch (const nlohmann::json::exception&) {
            fail(ErrorKind::config, "reduction." + key + ": wrong type");
        }
    }
}

}  // namespace repiece
