// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "hcache/metrics.hpp"
#include "hcache/rng.hpp"
#include "hcache/synth.hpp"
#include "reference.hpp"
#include "support.hpp"

using namespace hcache;

TEST(TopK, DenseDirect) {
    const std::vector<double> w{0.1, 0.5, 0.2, 0.4};
    EXPECT_EQ(top_k_indices(std::span<const double>(w), 2), (IndexSet{1, 3}));
    EXPECT_EQ(top_k_indices(std::span<const double>(w), 4), IndexSet::range(0, 4));
    EXPECT_EQ(top_k_indices(std::span<const double>(w), 10), IndexSet::range(0, 4));
}

TEST(TopK, PooledTieBreaksOnRawWeight) {
    const std::vector<double> w{0, 0, 1.0, 0, 0};
    const auto pooled = average_pool(w, 3);
    EXPECT_DOUBLE_EQ(pooled[0], 0.0);
    EXPECT_DOUBLE_EQ(pooled[1], 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(pooled[2], 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(pooled[3], 1.0 / 3.0);
    EXPECT_DOUBLE_EQ(pooled[4], 0.0);
    EXPECT_EQ(top_k_indices(std::span<const double>(w), 1, 3), (IndexSet{2}));
    // Equal pooled and raw weights fall back to the lower index.
    EXPECT_EQ(top_k_indices(std::span<const double>(w), 2, 3), (IndexSet{1, 2}));
}

TEST(TopK, RejectsBadArguments) {
    const std::vector<double> w{1, 2};
    EXPECT_THROW(top_k_indices(std::span<const double>(w), 0), std::invalid_argument);
    EXPECT_THROW(top_k_indices(std::span<const double>(w), 1, 4), std::invalid_argument);
    const std::vector<TokenScore> e{{1, 0.5f}};
    EXPECT_THROW(top_k_indices(std::span<const TokenScore>(e), 0), std::invalid_argument);
}

TEST(TopK, SparseSkipsPaddingAndBreaksTiesLow) {
    const std::vector<TokenScore> e{{9, 0.4f}, {2, 0.4f}, {5, 0.2f}, {kPaddingIndex, 0.0f}};
    EXPECT_EQ(top_k_indices(std::span<const TokenScore>(e), 1), (IndexSet{2}));
    EXPECT_EQ(top_k_indices(std::span<const TokenScore>(e), 4), (IndexSet{2, 5, 9}));
}

TEST(TopK, SelectedDominateExcluded) {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> w(1 + rng.below(50));
        for (auto& x : w) x = static_cast<double>(rng.below(20));
        const std::size_t k = 1 + rng.below(w.size());
        const auto top = top_k_indices(std::span<const double>(w), k);
        ASSERT_EQ(top.size(), k);
        double min_in = 1e300, max_out = -1;
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (top.contains(static_cast<std::uint32_t>(i))) {
                min_in = std::min(min_in, w[i]);
            } else {
                max_out = std::max(max_out, w[i]);
            }
        }
        EXPECT_GE(min_in, max_out);
    }
}

TEST(Overlap, Examples) {
    EXPECT_DOUBLE_EQ(overlap_coefficient({1, 2, 3}, {1, 2, 3}), 1.0);
    EXPECT_DOUBLE_EQ(overlap_coefficient({1, 2}, {3, 4}), 0.0);
    EXPECT_DOUBLE_EQ(overlap_coefficient({1, 2, 3, 4}, {3, 4, 5, 6, 7, 8}), 0.5);
    EXPECT_THROW(overlap_coefficient({}, {1}), std::invalid_argument);
    EXPECT_DOUBLE_EQ(normalized_overlap({1, 2, 3}, {2, 3, 4}, 4), 0.5);
}

TEST(Overlap, SymmetricAndOneOnSubsets) {
    Rng rng(11);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<std::uint32_t> a, b;
        for (std::uint64_t n = 1 + rng.below(20); n > 0; --n) a.push_back(static_cast<std::uint32_t>(rng.below(40)));
        for (std::uint64_t n = 1 + rng.below(20); n > 0; --n) b.push_back(static_cast<std::uint32_t>(rng.below(40)));
        const auto A = IndexSet::from_unsorted(a);
        const auto B = IndexSet::from_unsorted(b);
        EXPECT_EQ(overlap_coefficient(A, B), overlap_coefficient(B, A));
        EXPECT_DOUBLE_EQ(overlap_coefficient(A, A.union_with(B)), 1.0);
    }
}

TEST(Median, OddEvenAndErrors) {
    EXPECT_DOUBLE_EQ(median({1.0, 0.8, 0.6}), 0.8);
    EXPECT_DOUBLE_EQ(median({0.2, 0.9, 0.4, 0.6}), 0.5);
    EXPECT_THROW(median({}), std::invalid_argument);
}

TEST(Stability, Examples) {
    const IndexSet pre{1, 2, 3, 4, 5};
    // Overlaps 1.0, 0.8, 0.6.
    const std::vector<IndexSet> steps{{1, 2, 3, 4, 5}, {1, 2, 3, 4, 9}, {1, 2, 3, 8, 9}};
    EXPECT_DOUBLE_EQ(stability_score(steps, pre), 0.8);
    const std::vector<IndexSet> same(4, pre);
    EXPECT_DOUBLE_EQ(stability_score(same, pre), 1.0);
    EXPECT_THROW(stability_score({}, pre), std::invalid_argument);
}

TEST(Stability, InvariantToStepOrder) {
    const IndexSet pre{1, 2, 3, 4};
    std::vector<IndexSet> steps{{1, 9, 10, 11}, {1, 2, 3, 11}, {1, 2, 10, 11}, {9, 10, 11, 12}};
    const double a = stability_score(steps, pre);
    std::reverse(steps.begin(), steps.end());
    EXPECT_EQ(stability_score(steps, pre), a);
}

TEST(Stability, DecayingHeadMatchesReference) {
    SynthSpec s;
    s.prefill_len = 512;
    s.decode_steps = 100;
    s.trace_topk = 64;
    s.seed = 7;
    s.heads = {DecayingArchetype{64, 0.05}};
    const auto t = generate_synthetic(s).trace;
    const auto table = extract_top_sets(t, 52);
    EXPECT_EQ(stability_scores(table)[0], ref::stability(t, 52)[0]);
}

TEST(Similarity, Examples) {
    const std::vector<IndexSet> h{{1, 2}, {3, 4}};
    const std::vector<std::vector<IndexSet>> twin{h};
    EXPECT_DOUBLE_EQ(*similarity_score(h, twin), 1.0);
    const std::vector<std::vector<IndexSet>> disjoint{{{7, 8}, {9, 10}}, {{11}, {12}}};
    EXPECT_DOUBLE_EQ(*similarity_score(h, disjoint), 0.0);
    EXPECT_FALSE(similarity_score(h, {}).has_value());
}

TEST(Similarity, ClusterLayerMatchesReference) {
    SynthSpec s;
    s.heads_per_layer = 3;
    s.prefill_len = 200;
    s.decode_steps = 20;
    s.trace_topk = 30;
    s.clusters = {{30, 0.1}};
    s.heads = {ClusterMemberArchetype{0, 0.9}, ClusterMemberArchetype{0, 0.7}, ClusterMemberArchetype{0, 0.8}};
    const auto t = generate_synthetic(s).trace;
    const auto table = extract_top_sets(t, 20);
    EXPECT_EQ(similarity_scores(table, 3), ref::similarity(t, 20));
}

TEST(Similarity, SingleHeadLayerScoresZero) {
    int checked = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto t = testing_support::random_trace(seed, 3, 1, 40, 5);
        if (t.manifest.decode_steps == 0) continue;
        const auto table = extract_top_sets(t, 4);
        for (double v : similarity_scores(table, 1)) EXPECT_EQ(v, 0.0);
        ++checked;
    }
    EXPECT_GT(checked, 0);
}

TEST(LayerSimilarity, DuplicateAndDisjointLayers) {
    SynthSpec s;
    s.num_layers = 2;
    s.heads_per_layer = 2;
    s.prefill_len = 256;
    s.decode_steps = 2;
    s.trace_topk = 16;
    s.clusters = {{16, 0.0}, {16, 0.0}};
    s.heads = {ClusterMemberArchetype{0, 1.0}, ClusterMemberArchetype{0, 1.0}, ClusterMemberArchetype{1, 1.0},
               ClusterMemberArchetype{1, 1.0}};
    const auto t = generate_synthetic(s).trace;
    const auto m = layer_similarity_matrix(t, 1, 16);
    EXPECT_DOUBLE_EQ(m(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(m(1, 1), 1.0);
    // Hot sets of distinct clusters are drawn independently; a collision is possible but tiny.
    EXPECT_LT(m(0, 1), 0.2);
    EXPECT_THROW(layer_similarity_matrix(t, 3, 16), std::out_of_range);
}

TEST(LayerSimilarity, PlantedClustersDominateDiagonal) {
    const auto t = generate_synthetic(testing_support::mixed_spec(4, 3, 256, 10)).trace;
    const auto m = layer_similarity_matrix(t, 5, 26);
    double diag = 0, off = 0;
    for (std::size_t i = 0; i < m.n; ++i) {
        for (std::size_t j = 0; j < m.n; ++j) (i == j ? diag : off) += m(i, j);
    }
    EXPECT_GT(diag / 3.0, off / 6.0);
}

TEST(Metrics, MatchNaiveReferenceOnRandomTraces) {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const auto t = testing_support::random_trace(seed, 4, 8, 128, 20);
        if (t.manifest.decode_steps == 0) continue;
        bool empty_set = false;
        for (const auto& st : t.steps) {
            for (std::size_t h = 0; h < t.manifest.num_heads(); ++h) empty_set |= t.head_entries(st.step_index, h)[0].is_padding();
        }
        if (empty_set) continue;
        const std::size_t k = 1 + seed % 6;
        const auto table = extract_top_sets(t, k);
        const auto st = stability_scores(table);
        const auto sim = similarity_scores(table, t.manifest.heads_per_layer);
        const auto rs = ref::stability(t, k);
        const auto rsim = ref::similarity(t, k);
        for (std::size_t h = 0; h < st.size(); ++h) {
            EXPECT_NEAR(st[h], rs[h], 1e-12);
            EXPECT_NEAR(sim[h], rsim[h], 1e-12);
        }
        const auto m = layer_similarity_matrix(t, 0, k);
        const auto rm = ref::layer_similarity(t, 0, k);
        for (std::size_t i = 0; i < rm.size(); ++i) EXPECT_NEAR(m.values[i], rm[i], 1e-12);
    }
}

TEST(Metrics, DefaultProfilingTopK) {
    EXPECT_EQ(default_profiling_topk(10000), 1000u);
    EXPECT_EQ(default_profiling_topk(512), 52u);
    EXPECT_EQ(default_profiling_topk(50000), 1000u);
    EXPECT_EQ(default_profiling_topk(5), 1u);
}
