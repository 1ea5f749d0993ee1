// Copyright 2026 The repiece Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "repiece/error.hpp"
#include "repiece/reduce.hpp"
#include "repiece/vit.hpp"

namespace repiece {
namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorKind::io;
}

// Record carrying only what the reduction code reads.
AttentionRecord make_record(std::initializer_list<float> class_attention, Tensor keys, int heads = 1) {
    AttentionRecord record;
    record.class_attention = Tensor::vector(class_attention);
    record.cls_query = Tensor({keys.dim(1)}, 0.1f);
    record.keys = std::move(keys);
    record.heads = heads;
    return record;
}

std::pair<TokenBatch, AttentionRecord> attended(std::size_t n_img, std::mt19937_64& rng, std::size_t dim = 16) {
    auto batch = oracle::random_batch(n_img, dim, rng);
    auto [out, record] = vit::mhsa_forward(batch, oracle::random_block(dim, 2 * dim, rng), 2);
    return {batch, record};
}

TEST(Score, UniformAttentionGivesUniformScores) {
    std::mt19937_64 rng(1);
    auto batch = oracle::random_batch(4, 6, rng);
    for (std::size_t i = 1; i < 5; ++i) {
        for (std::size_t c = 0; c < 6; ++c) {
            batch.features.at(i, c) = batch.features.at(0, c);
        }
    }
    const auto [out, record] = vit::mhsa_forward(batch, oracle::random_block(6, 12, rng), 2);
    const auto scores = reduce::score_tokens(record, batch);
    EXPECT_TRUE(std::isinf(scores[0]));
    for (std::size_t i = 1; i < 5; ++i) {
        EXPECT_NEAR(scores[i], 0.2, 1e-6);
    }
}

TEST(Score, LengthMismatchIsDimensionError) {
    std::mt19937_64 rng(2);
    auto [batch, record] = attended(5, rng);
    auto shorter = oracle::random_batch(4, 16, rng);
    EXPECT_EQ(kind_of([&] { reduce::score_tokens(record, shorter); }), ErrorKind::dimension);
}

TEST(BottomK, CountsAreFloorRoundedDownToEven) {
    std::vector<float> scores(197);
    std::iota(scores.begin(), scores.end(), 0.0f);
    scores[0] = std::numeric_limits<float>::infinity();
    EXPECT_EQ(reduce::select_bottom_k(scores, 0.3).size(), 58u);
    std::vector<float> ten(10, 0.5f);
    EXPECT_EQ(reduce::select_bottom_k(ten, 0.3).size(), 2u);
    EXPECT_EQ(reduce::select_bottom_k(ten, 0.05).size(), 0u);
    EXPECT_EQ(kind_of([&] { reduce::select_bottom_k(ten, 1.0); }), ErrorKind::precondition);
}

TEST(BottomK, MatchesFullSortOracle) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<float> scores(1 + 20 + trial);
        for (auto& s : scores) {
            s = std::floor(u(rng) * 8.0f) / 8.0f;  // plenty of ties
        }
        scores[0] = std::numeric_limits<float>::infinity();
        const double p = 0.1 + 0.8 * u(rng);
        std::vector<std::size_t> order(scores.size() - 1);
        std::iota(order.begin(), order.end(), 1);
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
        std::size_t k = static_cast<std::size_t>(std::floor(p * static_cast<double>(order.size()) + 1e-9));
        k -= k % 2;
        order.resize(k);
        EXPECT_EQ(reduce::select_bottom_k(scores, p), order);
    }
}

TEST(Split, AlternatesByRank) {
    const std::vector<std::size_t> ordered{5, 3, 9, 1};
    const auto [a, b] = reduce::alternating_split(ordered);
    EXPECT_EQ(a, (std::vector<std::size_t>{5, 9}));
    EXPECT_EQ(b, (std::vector<std::size_t>{3, 1}));
    const std::vector<std::size_t> odd{1, 2, 3};
    EXPECT_EQ(kind_of([&] { reduce::alternating_split(odd); }), ErrorKind::precondition);
    const std::vector<std::size_t> empty;
    EXPECT_TRUE(reduce::alternating_split(empty).first.empty());
}

TEST(Match, AgreesWithBruteForce) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng() % 11;
        const auto features = oracle::random_tensor({n, 5}, rng);
        const auto metric = oracle::random_tensor({n, 3}, rng);
        std::vector<std::size_t> positions(n);
        std::iota(positions.begin(), positions.end(), 0);
        std::shuffle(positions.begin(), positions.end(), rng);
        const std::size_t na = (n + 1) / 2;
        std::vector<std::size_t> a(positions.begin(), positions.begin() + na), b(positions.begin() + na, positions.end());
        const auto m = rng() % (na + 1);
        std::vector<int> sizes(n);
        for (auto& s : sizes) {
            s = 1 + static_cast<int>(rng() % 4);
        }
        const auto plan = reduce::bipartite_soft_match(metric, a, b);
        const auto merged = reduce::merge_rows(features, sizes, plan, m);
        const auto ref = oracle::brute_force_merge(features, sizes, metric, a, b, m);
        ASSERT_EQ(merged.dim(0), ref.survivors.size());
        for (std::size_t e = 0; e < m; ++e) {
            EXPECT_EQ(plan.a_indices[plan.edges[e].a], ref.executed[e].first);
            EXPECT_EQ(plan.b_indices[plan.edges[e].b], ref.executed[e].second);
        }
        for (std::size_t r = 0; r < ref.survivors.size(); ++r) {
            for (std::size_t c = 0; c < 5; ++c) {
                EXPECT_NEAR(merged.at(r, c), ref.features[r][c], 1e-6);
            }
        }
    }
}

TEST(Match, KeyOverloadIndexesGroups) {
    const auto a = Tensor::from_rows({{1, 0}, {0, 1}});
    const auto b = Tensor::from_rows({{0, 2}, {3, 0.1f}});
    const auto plan = reduce::bipartite_soft_match(a, b);
    ASSERT_EQ(plan.edges.size(), 2u);
    EXPECT_EQ(plan.edges[0].a, 1u);
    EXPECT_EQ(plan.edges[0].b, 0u);
    EXPECT_NEAR(plan.edges[0].similarity, 1.0, 1e-9);
    EXPECT_EQ(plan.edges[1].b, 1u);
}

TEST(Merge, SizeWeightedMean) {
    TokenBatch batch;
    batch.features = Tensor::from_rows({{0, 2}, {2, 0}});
    batch.sizes = {1, 3};
    batch.provenance = {{0}, {1, 2, 3}};
    batch.ids = {0, 1};
    batch.grid = {1, 4};
    batch.next_id = 4;
    reduce::MatchPlan plan{{{0, 0, 0.0}}, {0}, {1}};
    const auto out = reduce::apply_merge(batch, plan, 1);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_FLOAT_EQ(out.features.at(0, 0), 1.5f);
    EXPECT_FLOAT_EQ(out.features.at(0, 1), 0.5f);
    EXPECT_EQ(out.sizes[0], 4);
    EXPECT_EQ(out.provenance[0], (std::vector<int>{0, 1, 2, 3}));
    EXPECT_EQ(out.ids[0], 1);
    EXPECT_EQ(out.invariant_violation(), "");
}

TEST(Merge, ZeroMergesIsIdentityAndExcessIsRangeError) {
    std::mt19937_64 rng(5);
    auto [batch, record] = attended(8, rng);
    const std::vector<std::size_t> a{1, 3, 5}, b{2, 4, 6};
    const auto plan = reduce::bipartite_soft_match(reduce::matching_metric(record), a, b);
    const auto same = reduce::apply_merge(batch, plan, 0);
    EXPECT_EQ(same.features, batch.features);
    EXPECT_EQ(same.provenance, batch.provenance);
    EXPECT_EQ(kind_of([&] { reduce::apply_merge(batch, plan, 4); }), ErrorKind::range);
}

TEST(Merge, ClassTokenCannotTakePart) {
    std::mt19937_64 rng(6);
    auto [batch, record] = attended(4, rng);
    const std::vector<std::size_t> a{0}, b{1};
    const auto plan = reduce::bipartite_soft_match(reduce::matching_metric(record), a, b);
    EXPECT_EQ(kind_of([&] { reduce::apply_merge(batch, plan, 1); }), ErrorKind::precondition);
}

TEST(Merge, CommutesWithOrthogonalTransform) {
    std::mt19937_64 rng(7);
    const std::size_t d = 6;
    auto batch = oracle::random_batch(10, d, rng);
    // Gram-Schmidt on a random matrix.
    auto q = oracle::to_matrix(oracle::random_tensor({d, d}, rng));
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                dot += q[i][c] * q[j][c];
            }
            for (std::size_t c = 0; c < d; ++c) {
                q[i][c] -= dot * q[j][c];
            }
        }
        double norm = 0.0;
        for (double v : q[i]) {
            norm += v * v;
        }
        for (double& v : q[i]) {
            v /= std::sqrt(norm);
        }
    }
    auto rotate = [&](const Tensor& t) {
        Tensor out(t.shape());
        for (std::size_t r = 0; r < t.dim(0); ++r) {
            for (std::size_t c = 0; c < d; ++c) {
                double s = 0.0;
                for (std::size_t k = 0; k < d; ++k) {
                    s += t.at(r, k) * q[k][c];
                }
                out.at(r, c) = static_cast<float>(s);
            }
        }
        return out;
    };
    const std::vector<std::size_t> a{1, 3, 5, 7, 9}, b{2, 4, 6, 8, 10};
    const auto plan = reduce::bipartite_soft_match(batch.features, a, b);
    auto rotated = batch;
    rotated.features = rotate(batch.features);
    const auto rotated_plan = reduce::bipartite_soft_match(rotated.features, a, b);
    for (std::size_t e = 0; e < 3; ++e) {
        EXPECT_EQ(plan.edges[e].a, rotated_plan.edges[e].a);
        EXPECT_EQ(plan.edges[e].b, rotated_plan.edges[e].b);
    }
    const auto merged_then_rotated = rotate(reduce::apply_merge(batch, plan, 3).features);
    const auto rotated_then_merged = reduce::apply_merge(rotated, rotated_plan, 3).features;
    for (std::size_t i = 0; i < merged_then_rotated.numel(); ++i) {
        EXPECT_NEAR(merged_then_rotated[i], rotated_then_merged[i], 1e-5);
    }
}

TEST(Prune, KeepsCeilOfRateAndClassToken) {
    std::mt19937_64 rng(8);
    auto batch = oracle::random_batch(180, 4, rng);
    std::vector<float> scores(181);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (auto& s : scores) {
        s = u(rng);
    }
    scores[0] = -1.0f;  // even a low CLS score must not drop it
    const auto result = reduce::prune_keep(batch, scores, 0.8);
    EXPECT_EQ(result.batch.size(), 145u);
    EXPECT_EQ(result.pruned_size, 36);
    ASSERT_TRUE(result.batch.cls_index);
    EXPECT_EQ(result.batch.ids[*result.batch.cls_index], kClsId);
    EXPECT_EQ(result.batch.invariant_violation(), "");
    const float weakest_kept = [&] {
        float w = 2.0f;
        for (auto id : result.batch.ids) {
            if (id >= 0) {
                w = std::min(w, scores[static_cast<std::size_t>(id) + 1]);
            }
        }
        return w;
    }();
    for (int p : result.batch.pruned) {
        EXPECT_LE(scores[static_cast<std::size_t>(p) + 1], weakest_kept);
    }
    EXPECT_EQ(reduce::prune_keep(batch, scores, 1.0).batch.size(), 181u);
    EXPECT_EQ(kind_of([&] { reduce::prune_keep(batch, scores, 0.0); }), ErrorKind::precondition);
}

TEST(ImagePiece, FirstLayerMergesFifteenInsideBottomK) {
    std::mt19937_64 rng(9);
    auto [batch, record] = attended(196, rng);
    const auto cfg = ReductionConfig::defaults(StrategyKind::imagepiece);
    const auto step = reduce::step_imagepiece(batch, record, cfg, 0);
    EXPECT_EQ(step.batch.size(), 182u);
    EXPECT_EQ(step.diag.merges_executed, 15);
    EXPECT_EQ(step.diag.bottom_k_set.size(), 58u);
    for (const auto& pair : step.diag.merged_pairs) {
        EXPECT_NE(std::find(step.diag.bottom_k_set.begin(), step.diag.bottom_k_set.end(), pair.absorbed), step.diag.bottom_k_set.end());
        EXPECT_NE(std::find(step.diag.bottom_k_set.begin(), step.diag.bottom_k_set.end(), pair.target), step.diag.bottom_k_set.end());
    }
    EXPECT_EQ(step.batch.invariant_violation(), "");
}

TEST(ImagePiece, PruneLayerMergesThenPrunes) {
    std::mt19937_64 rng(10);
    auto [batch, record] = attended(196, rng);
    const auto cfg = ReductionConfig::defaults(StrategyKind::imagepiece);
    const auto step = reduce::step_imagepiece(batch, record, cfg, 3);
    // 196 -> 181 image tokens after merging, ceil(0.8 * 181) = 145 kept.
    EXPECT_EQ(step.batch.size(), 146u);
    EXPECT_GT(step.diag.pruned_size, 0);
    EXPECT_EQ(step.batch.invariant_violation(), "");
}

TEST(ImagePiece, NonScheduledLayerIsPrecondition) {
    std::mt19937_64 rng(11);
    auto [batch, record] = attended(10, rng);
    auto cfg = ReductionConfig::defaults(StrategyKind::imagepiece);
    cfg.retokenize_layers = {0};
    cfg.prune_layers = {};
    EXPECT_EQ(kind_of([&] { reduce::step_imagepiece(batch, record, cfg, 2); }), ErrorKind::precondition);
}

TEST(ImagePiece, ReevaluationWithoutMergesRenormalizesRecord) {
    std::mt19937_64 rng(12);
    auto [batch, record] = attended(12, rng);
    const auto scores = reduce::reevaluate_scores(record, record.keys, batch, true);
    for (std::size_t j = 1; j < batch.size(); ++j) {
        EXPECT_NEAR(scores[j], record.class_attention[j], 1e-6);
    }
}

TEST(Evit, FusesDiscardedTokens) {
    std::mt19937_64 rng(13);
    auto [batch, record] = attended(196, rng);
    const auto step = reduce::step_evit(batch, record, 0.7);
    ASSERT_EQ(step.batch.size(), 140u);  // CLS + 138 kept + fused
    const auto fused = step.batch.size() - 1;
    EXPECT_EQ(step.batch.sizes[fused], 58);
    EXPECT_EQ(step.batch.provenance[fused].size(), 58u);
    EXPECT_GE(step.batch.ids[fused], 196);
    EXPECT_EQ(step.batch.invariant_violation(), "");
    const auto unfused = reduce::step_evit(batch, record, 0.7, false);
    EXPECT_EQ(unfused.batch.size(), 139u);
    EXPECT_EQ(unfused.diag.pruned_size, 58);
    EXPECT_EQ(unfused.batch.invariant_violation(), "");
}

TEST(Evit, FusedTokenIsAttentionWeightedAverage) {
    TokenBatch batch;
    batch.features = Tensor::from_rows({{9, 9}, {1, 0}, {0, 1}, {5, 5}});
    batch.sizes = {1, 1, 1, 1};
    batch.provenance = {{}, {0}, {1}, {2}};
    batch.ids = {kClsId, 0, 1, 2};
    batch.cls_index = 0;
    batch.grid = {1, 3};
    batch.next_id = 3;
    const auto record = make_record({0.4f, 0.1f, 0.3f, 0.2f}, Tensor({4, 2}, 1.0f));
    const auto step = reduce::step_evit(batch, record, 0.34);  // ceil(1.02) = 2 kept
    ASSERT_EQ(step.batch.size(), 4u);
    EXPECT_EQ(step.batch.ids, (std::vector<TokenId>{kClsId, 1, 2, 3}));
    EXPECT_FLOAT_EQ(step.batch.features.at(3, 0), 1.0f);
    EXPECT_FLOAT_EQ(step.batch.features.at(3, 1), 0.0f);
}

TEST(Tome, FourTokensOneMergeMatchesOracle) {
    std::mt19937_64 rng(14);
    auto [batch, record] = attended(4, rng);
    const auto step = reduce::step_tome(batch, record, 1);
    const auto ref = oracle::brute_force_merge(batch.features, batch.sizes, reduce::matching_metric(record), {1, 3}, {2, 4}, 1);
    ASSERT_EQ(step.batch.size(), ref.survivors.size());
    for (std::size_t r = 0; r < ref.survivors.size(); ++r) {
        EXPECT_EQ(step.batch.sizes[r], ref.sizes[r]);
        for (std::size_t c = 0; c < batch.dim(); ++c) {
            EXPECT_NEAR(step.batch.features.at(r, c), ref.features[r][c], 1e-6);
        }
    }
}

TEST(Tome, ReductionClampsToHalf) {
    std::mt19937_64 rng(15);
    auto [batch, record] = attended(5, rng);
    const auto step = reduce::step_tome(batch, record, 13);
    EXPECT_EQ(step.batch.size(), 4u);  // |B| = 2 merges out of 5
    EXPECT_EQ(step.diag.merges_executed, 2);
    EXPECT_EQ(reduce::step_tome(batch, record, 0).batch.size(), 6u);
}

TEST(Conservation, RandomStepsKeepInvariants) {
    std::mt19937_64 rng(16);
    for (int trial = 0; trial < 60; ++trial) {
        auto [batch, record] = attended(8 + rng() % 40, rng, 8);
        TokenBatch out;
        switch (trial % 3) {
            case 0: {
                auto cfg = ReductionConfig::defaults(StrategyKind::imagepiece);
                out = reduce::step_imagepiece(batch, record, cfg, 3).batch;
                break;
            }
            case 1:
                out = reduce::step_evit(batch, record, 0.5).batch;
                break;
            default:
                out = reduce::step_tome(batch, record, 3).batch;
        }
        ASSERT_EQ(out.invariant_violation(), "");
        int total = static_cast<int>(out.pruned_size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            total += out.is_cls(i) ? 0 : out.sizes[i];
        }
        EXPECT_EQ(total, static_cast<int>(batch.image_token_count()));
        ASSERT_TRUE(out.cls_index);
    }
}

}  // namespace
}  // namespace repiece
