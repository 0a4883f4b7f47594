// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <functional>
#include <sstream>
#include <unistd.h>

#include "hcache/rng.hpp"

namespace testing_support {

using namespace hcache;

AttentionTrace random_trace(std::uint64_t seed, std::uint32_t max_layers, std::uint32_t max_heads,
                            std::uint32_t max_prefill, std::uint32_t max_steps) {
    Rng rng(seed);
    AttentionTrace t;
    auto& m = t.manifest;
    m.model_name = "random-" + std::to_string(seed);
    m.num_layers = 1 + static_cast<std::uint32_t>(rng.below(max_layers));
    m.heads_per_layer = 1 + static_cast<std::uint32_t>(rng.below(max_heads));
    m.prefill_len = 1 + static_cast<std::uint32_t>(rng.below(max_prefill));
    m.decode_steps = static_cast<std::uint32_t>(rng.below(max_steps + 1));
    m.trace_topk = 1 + static_cast<std::uint32_t>(rng.below(std::min<std::uint64_t>(m.prefill_len + m.decode_steps, 16)));
    m.pool_kernel_used = rng.below(2) == 0 ? 0 : 13;
    m.bytes_per_kv_entry = rng.below(4096);
    for (std::uint32_t s = 0; s <= m.decode_steps; ++s) {
        StepAttention step;
        step.step_index = s;
        const std::uint32_t seq = m.prefill_len + s;
        for (std::size_t h = 0; h < m.num_heads(); ++h) {
            std::vector<std::uint32_t> pos(seq);
            for (std::uint32_t p = 0; p < seq; ++p) pos[p] = p;
            rng.shuffle(std::span<std::uint32_t>(pos));
            const std::size_t valid = std::min<std::size_t>(seq, m.trace_topk - rng.below(m.trace_topk));
            std::vector<float> scores(valid);
            for (auto& x : scores) x = static_cast<float>(rng.below(1000)) / 1000.0f;
            std::sort(scores.begin(), scores.end(), std::greater<>());
            for (std::uint32_t k = 0; k < m.trace_topk; ++k) {
                if (k < valid) {
                    step.entries.push_back({pos[k], scores[k]});
                } else {
                    step.entries.push_back({kPaddingIndex, 0.0f});
                }
            }
        }
        t.steps.push_back(std::move(step));
    }
    return t;
}

SynthSpec mixed_spec(std::uint64_t seed, std::uint32_t layers, std::uint32_t prefill, std::uint32_t steps) {
    SynthSpec s;
    s.num_layers = layers;
    s.heads_per_layer = 4;
    s.prefill_len = prefill;
    s.decode_steps = steps;
    s.trace_topk = 32;
    s.seed = seed;
    for (std::uint32_t l = 0; l < layers; ++l) {
        s.heads.emplace_back(StableArchetype{24, 0.0});
        s.heads.emplace_back(DecayingArchetype{24, 0.2});
        s.heads.emplace_back(ClusterMemberArchetype{l, 1.0});
        s.heads.emplace_back(ClusterMemberArchetype{l, 1.0});
        s.clusters.push_back({24, 0.0});
    }
    return s;
}

ref::ReplayInput replay_input(const AttentionTrace& trace, const TaxonomyResult& taxonomy, const BudgetPlan& plan,
                              const EngineConfig& config) {
    ref::ReplayInput in;
    in.trace = &trace;
    for (const auto& h : taxonomy.heads) {
        in.roles.push_back(h.role);
        std::uint32_t len = 0;
        if (!is_full(h.role)) {
            len = config.variant == PolicyVariant::no_allocation ? plan.base_length_int : *plan.length_for(h.head);
        }
        in.lengths.push_back(std::min(len, trace.manifest.prefill_len));
    }
    for (const auto& c : taxonomy.clusters) in.clusters.push_back({c.pivot, c.satellites});
    in.base_len_int = plan.base_length_int;
    in.tau_drift = config.tau_drift;
    in.window = config.window;
    in.delay = config.update_delay_steps;
    in.bandwidth = config.transfer_bandwidth;
    in.sinks = config.sink_count;
    in.recency = config.recency_window;
    in.retrieval = config.variant != PolicyVariant::no_retrieval;
    return in;
}

TempDir::TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("hcache-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace testing_support
