// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sstream>

#include "hcache/metrics.hpp"
#include "hcache/synth.hpp"
#include "support.hpp"

using namespace hcache;

namespace {

SynthSpec one_head(Archetype a, std::uint32_t steps = 20) {
    SynthSpec s;
    s.prefill_len = 128;
    s.decode_steps = steps;
    s.trace_topk = 32;
    s.heads = {a};
    return s;
}

std::string bytes_of(const AttentionTrace& t) {
    std::ostringstream out;
    write_trace(t, out);
    return out.str();
}

}  // namespace

TEST(Synth, DeterministicBySeed) {
    auto spec = testing_support::mixed_spec(5, 2, 128, 24);
    spec.drift_events.push_back({10, {{0, 2}, {1, 0}}, 0.5});
    EXPECT_EQ(bytes_of(generate_synthetic(spec).trace), bytes_of(generate_synthetic(spec).trace));
    auto other = spec;
    other.seed = 6;
    EXPECT_NE(bytes_of(generate_synthetic(spec).trace), bytes_of(generate_synthetic(other).trace));
}

TEST(Synth, GeneratedTracesAreValid) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto spec = testing_support::mixed_spec(seed, 2, 96, 16);
        spec.heads[0] = StableArchetype{24, 0.3};
        spec.heads[2] = ClusterMemberArchetype{0, 0.7};
        spec.drift_events.push_back({4, {{1, 1}, {0, 0}}, 0.8});
        EXPECT_TRUE(validate(generate_synthetic(spec).trace).empty()) << "seed " << seed;
    }
}

TEST(Synth, NoiselessStableHeadScoresOne) {
    const auto t = generate_synthetic(one_head(StableArchetype{16, 0.0})).trace;
    const auto table = extract_top_sets(t, 16);
    for (std::size_t s = 1; s < table.num_steps(); ++s) EXPECT_EQ(table.at(s, 0), table.at(0, 0));
    EXPECT_DOUBLE_EQ(stability_scores(table)[0], 1.0);
}

TEST(Synth, FullDriftHeadScoresZero) {
    const auto t = generate_synthetic(one_head(DecayingArchetype{16, 1.0})).trace;
    const auto table = extract_top_sets(t, 16);
    for (std::size_t s = 1; s < table.num_steps(); ++s) {
        EXPECT_EQ(table.at(s, 0).intersection_size(table.at(s - 1, 0)), 0u);
    }
    EXPECT_DOUBLE_EQ(stability_scores(table)[0], 0.0);
}

TEST(Synth, FullAgreementClusterScoresOne) {
    SynthSpec s;
    s.heads_per_layer = 3;
    s.prefill_len = 128;
    s.decode_steps = 12;
    s.trace_topk = 32;
    s.clusters = {{20, 0.1}};
    s.heads = {ClusterMemberArchetype{0, 1.0}, ClusterMemberArchetype{0, 1.0}, ClusterMemberArchetype{0, 1.0}};
    const auto t = generate_synthetic(s).trace;
    const auto table = extract_top_sets(t, 20);
    for (std::size_t st = 0; st < table.num_steps(); ++st) {
        EXPECT_DOUBLE_EQ(overlap_coefficient(table.at(st, 0), table.at(st, 1)), 1.0);
        EXPECT_DOUBLE_EQ(overlap_coefficient(table.at(st, 1), table.at(st, 2)), 1.0);
    }
    for (double v : similarity_scores(table, 3)) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Synth, ArchetypeGuaranteesHoldPerStep) {
    SynthSpec s;
    s.heads_per_layer = 4;
    s.prefill_len = 256;
    s.decode_steps = 30;
    s.trace_topk = 40;
    s.clusters = {{40, 0.05}};
    s.heads = {StableArchetype{40, 0.3}, DecayingArchetype{40, 0.125}, ClusterMemberArchetype{0, 0.6},
               ClusterMemberArchetype{0, 0.8}};
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        s.seed = seed;
        const auto t = generate_synthetic(s).trace;
        const auto table = extract_top_sets(t, 40);
        const auto& prefill_stable = table.at(0, 0);
        for (std::size_t st = 1; st < table.num_steps(); ++st) {
            // Stable: at least (1 - noise) of the step's set comes from the prefill hot set.
            EXPECT_GE(table.at(st, 0).intersection_size(prefill_stable), 28u);
            // Decaying: permanent loss of drift_rate * hot_size = 5 positions per step.
            const std::size_t lost = std::min<std::size_t>(40, 5 * st);
            EXPECT_EQ(table.at(st, 1).intersection_size(table.at(0, 1)), 40 - lost);
            // Members keep at least the agreement fraction of the shared set;
            // two members therefore share at least 0.4 * 40 positions.
            EXPECT_GE(table.at(st, 2).intersection_size(table.at(st, 3)), 16u);
        }
    }
}

TEST(Synth, DriftEventShiftsWholeCluster) {
    SynthSpec s;
    s.heads_per_layer = 2;
    s.prefill_len = 256;
    s.decode_steps = 10;
    s.trace_topk = 20;
    s.clusters = {{20, 0.0}};
    s.heads = {ClusterMemberArchetype{0, 1.0}, ClusterMemberArchetype{0, 1.0}};
    s.drift_events = {{5, {{0, 1}}, 0.5}};
    const auto t = generate_synthetic(s).trace;
    const auto table = extract_top_sets(t, 20);
    EXPECT_EQ(table.at(4, 0), table.at(0, 0));
    EXPECT_EQ(table.at(5, 0).intersection_size(table.at(0, 0)), 10u);
    EXPECT_EQ(table.at(5, 0), table.at(5, 1));
    EXPECT_EQ(table.at(10, 0), table.at(5, 0));
}

TEST(Synth, LabelsFollowArchetypes) {
    auto spec = testing_support::mixed_spec(1, 2, 128, 8);
    spec.heads[0] = StableArchetype{24, 0.6};
    const auto labels = generate_synthetic(spec).labels;
    ASSERT_EQ(labels.size(), 8u);
    EXPECT_EQ(labels[0].role, Role::Volatile);
    EXPECT_EQ(labels[1].role, Role::Volatile);
    EXPECT_EQ(labels[2], (RoleLabel{Role::Pivot, 0u}));
    EXPECT_EQ(labels[3], (RoleLabel{Role::Satellite, 0u}));
    EXPECT_EQ(labels[4].role, Role::Anchor);
    EXPECT_EQ(labels[6], (RoleLabel{Role::Pivot, 1u}));
}

TEST(Synth, RejectsInvalidSpecs) {
    auto ok = testing_support::mixed_spec(0, 1, 64, 4);
    EXPECT_NO_THROW(validate(ok));

    auto s = ok;
    s.heads.pop_back();
    EXPECT_THROW(validate(s), std::invalid_argument);

    s = ok;
    s.heads[0] = StableArchetype{24, 1.5};
    EXPECT_THROW(validate(s), std::invalid_argument);

    s = ok;
    s.heads[3] = StableArchetype{8, 0.0};  // cluster 0 left with one member
    EXPECT_THROW(validate(s), std::invalid_argument);

    s = testing_support::mixed_spec(0, 2, 64, 4);
    s.heads[3] = ClusterMemberArchetype{1, 1.0};  // cluster 1 now spans layers
    EXPECT_THROW(validate(s), std::invalid_argument);

    s = ok;
    s.drift_events = {{9, {{0, 0}}, 0.5}};
    EXPECT_THROW(validate(s), std::invalid_argument);

    s = ok;
    s.trace_topk = 100;
    EXPECT_THROW(validate(s), std::invalid_argument);
}
