// SPDX-License-Identifier: Apache-2.0

#include "hcache/engine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hcache/metrics.hpp"

namespace hcache {

namespace {

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return a / b + (a % b != 0 ? 1 : 0); }

std::size_t valid_entries(std::span<const TokenScore> entries) {
    std::size_t n = 0;
    for (const auto& e : entries) {
        if (e.is_padding()) break;
        ++n;
    }
    return n;
}

}  // namespace

std::string_view to_string(PolicyVariant variant) noexcept {
    switch (variant) {
        case PolicyVariant::heterocache: return "heterocache";
        case PolicyVariant::no_allocation: return "no_allocation";
        case PolicyVariant::no_retrieval: return "no_retrieval";
    }
    return "unknown";
}

std::optional<PolicyVariant> parse_variant(std::string_view name) noexcept {
    for (auto v : {PolicyVariant::heterocache, PolicyVariant::no_allocation, PolicyVariant::no_retrieval}) {
        if (to_string(v) == name) return v;
    }
    return std::nullopt;
}

void EngineConfig::validate() const {
    if (!(tau_drift >= 0.0 && tau_drift <= 1.0)) throw std::invalid_argument("tau_drift must be in [0, 1]");
    if (window < 1) throw std::invalid_argument("window must be >= 1");
    if (transfer_bandwidth == 0) throw std::invalid_argument("transfer_bandwidth must be > 0");
    if (update_delay_steps < 1) throw std::invalid_argument("update_delay_steps must be >= 1");
}

double pivot_overlap(const IndexSet& current, const IndexSet& base) {
    if (base.empty()) throw std::invalid_argument("pivot_overlap: empty baseline set");
    if (current.size() != base.size()) {
        throw std::invalid_argument("pivot_overlap: set sizes differ (" + std::to_string(current.size()) + " vs " +
                                    std::to_string(base.size()) + ")");
    }
    return normalized_overlap(current, base, base.size());
}

bool drift_check(std::span<const double> window_overlaps, double tau_drift, std::uint32_t window) {
    if (window < 1) throw std::invalid_argument("drift_check: window must be >= 1");
    if (window_overlaps.size() != window) {
        throw std::invalid_argument("drift_check: expected " + std::to_string(window) + " overlaps, got " +
                                    std::to_string(window_overlaps.size()));
    }
    return median({window_overlaps.begin(), window_overlaps.end()}) < tau_drift;
}

IndexSet protected_positions(std::uint32_t prefill_len, std::uint32_t sink_count, std::uint32_t recency_window) {
    const std::uint32_t sinks = std::min(sink_count, prefill_len);
    const std::uint32_t recent_from = prefill_len > recency_window ? prefill_len - recency_window : 0;
    return IndexSet::range(0, sinks).union_with(IndexSet::range(recent_from, prefill_len));
}

CacheEngine::CacheEngine(const AttentionTrace& trace, const TaxonomyResult& taxonomy, const BudgetPlan& plan,
                         const EngineConfig& config)
    : manifest_(trace.manifest), fingerprint_(trace_fingerprint(trace)), rho_(plan.rho), config_(config) {
    config_.validate();
    const auto& m = trace.manifest;
    if (trace.steps.empty()) throw std::invalid_argument("engine: trace has no prefill step");
    if (taxonomy.num_layers != m.num_layers || taxonomy.heads_per_layer != m.heads_per_layer) {
        throw std::invalid_argument("engine: taxonomy dimensions do not match the trace");
    }
    taxonomy.check_consistent();
    const auto compressed = taxonomy.compressed_heads();
    if (plan.num_heads != m.num_heads() || plan.prefill_len != m.prefill_len ||
        plan.num_comp != compressed.size() || plan.allocations.size() != compressed.size()) {
        throw std::invalid_argument("engine: budget plan does not match the taxonomy");
    }
    for (std::size_t i = 0; i < compressed.size(); ++i) {
        if (plan.allocations[i].head != compressed[i]) {
            throw std::invalid_argument("engine: budget plan head order does not match the taxonomy");
        }
    }
    num_comp_ = compressed.size();

    const std::uint32_t L = m.prefill_len;
    state_.prefill_len = L;
    state_.protected_set = protected_positions(L, config_.sink_count, config_.recency_window);
    state_.heads.resize(m.num_heads());
    for (std::size_t h = 0; h < m.num_heads(); ++h) {
        auto& hc = state_.heads[h];
        hc.role = taxonomy.heads[h].role;
        if (is_full(hc.role)) continue;
        const HeadId id = m.head_id(h);
        std::uint32_t len = config_.variant == PolicyVariant::no_allocation ? plan.base_length_int
                                                                             : plan.length_for(id).value_or(0);
        hc.length = std::min(len, L);
        if (hc.length > 0) hc.dynamic = top_k_indices(trace.head_entries(0, h), hc.length);
    }

    for (const auto& cluster : taxonomy.clusters) {
        PivotMonitor mon;
        mon.pivot = cluster.pivot;
        mon.satellites = cluster.satellites;
        std::sort(mon.satellites.begin(), mon.satellites.end());
        const auto entries = trace.head_entries(0, cluster.pivot);
        mon.monitor_len = static_cast<std::uint32_t>(std::min<std::size_t>(plan.base_length_int, valid_entries(entries)));
        if (mon.monitor_len == 0) {
            throw std::invalid_argument("engine: drift monitor needs L_base_int >= 1 and a non-empty prefill set");
        }
        mon.k_base = top_k_indices(entries, mon.monitor_len);
        state_.pivots.push_back(std::move(mon));
    }
    std::sort(state_.pivots.begin(), state_.pivots.end(),
              [](const PivotMonitor& a, const PivotMonitor& b) { return a.pivot < b.pivot; });

    const double ceiling = plan.budget_ceiling() + static_cast<double>(num_comp_);
    if (static_cast<double>(budget_entries()) > ceiling) {
        throw InfeasibleBudget("engine: initial cache holds " + std::to_string(budget_entries()) +
                               " entries, above the ceiling " + std::to_string(ceiling));
    }
}

bool CacheEngine::is_resident(std::size_t flat_head, std::uint32_t position) const {
    const std::uint32_t L = state_.prefill_len;
    if (position >= L + state_.step) return false;
    const auto& hc = state_.heads.at(flat_head);
    if (is_full(hc.role) || position >= L) return true;
    return state_.protected_set.contains(position) || hc.dynamic.contains(position);
}

IndexSet CacheEngine::gpu_set(std::size_t flat_head) const {
    const std::uint32_t L = state_.prefill_len;
    const auto& hc = state_.heads.at(flat_head);
    if (is_full(hc.role)) return IndexSet::range(0, L + state_.step);
    return hc.dynamic.union_with(state_.protected_set).union_with(IndexSet::range(L, L + state_.step));
}

std::uint64_t CacheEngine::budget_entries() const {
    std::uint64_t total = 0;
    for (const auto& hc : state_.heads) {
        total += is_full(hc.role) ? state_.prefill_len : hc.dynamic.count_below(state_.prefill_len);
    }
    return total;
}

std::uint64_t CacheEngine::protected_entries() const {
    std::uint64_t total = 0;
    for (const auto& hc : state_.heads) {
        if (is_full(hc.role)) continue;
        total += state_.protected_set.size() - state_.protected_set.intersection_size(hc.dynamic);
    }
    return total;
}

SimulationReport CacheEngine::report_header(std::string policy) const {
    SimulationReport r;
    r.policy = std::move(policy);
    r.trace_fingerprint = fingerprint_;
    r.prefill_len = manifest_.prefill_len;
    r.decode_steps = manifest_.decode_steps;
    r.num_heads = manifest_.num_heads();
    r.bytes_per_kv_entry = manifest_.bytes_per_kv_entry;
    r.budget_ceiling = rho_ * static_cast<double>(manifest_.num_heads()) * manifest_.prefill_len;
    r.ceiling_slack = num_comp_;
    r.update_delay_steps = config_.update_delay_steps;
    if (state_.step == 0) {
        r.prefill_budget_entries = budget_entries();
        r.prefill_protected_entries = protected_entries();
    }
    return r;
}

void CacheEngine::complete_transfers(std::uint32_t step) {
    auto& pending = state_.pending;
    auto keep = pending.begin();
    for (auto it = pending.begin(); it != pending.end(); ++it) {
        if (it->completion_step <= step) {
            state_.heads[manifest_.flat(it->satellite)].dynamic = std::move(it->indices);
        } else {
            if (keep != it) *keep = std::move(*it);
            ++keep;
        }
    }
    pending.erase(keep, pending.end());
}

std::uint64_t CacheEngine::bytes_in_flight(std::uint32_t step) const {
    std::uint64_t total = 0;
    for (const auto& p : state_.pending) {
        if (p.completion_step > step) total += p.indices.size() * manifest_.bytes_per_kv_entry;
    }
    return total;
}

StepOutcome CacheEngine::decode_step(const StepAttention& step) {
    const std::uint32_t t = state_.step + 1;
    if (step.step_index != t) {
        throw std::invalid_argument("decode_step: expected step " + std::to_string(t) + ", got " +
                                    std::to_string(step.step_index));
    }
    if (t > manifest_.decode_steps) throw std::invalid_argument("decode_step: past the last decode step");
    const std::size_t K = manifest_.trace_topk;
    const std::size_t N = manifest_.num_heads();
    if (step.entries.size() != N * K) throw std::invalid_argument("decode_step: wrong entry count");
    auto head_entries = [&](std::size_t h) { return std::span<const TokenScore>(step.entries).subspan(h * K, K); };

    complete_transfers(t);
    state_.step = t;

    StepOutcome out;
    out.record.step = t;
    out.head_coverage.resize(N);
    double sum = 0.0;
    std::size_t counted = 0;
    double worst = 1.0;
    for (std::size_t h = 0; h < N; ++h) {
        out.head_coverage[h] = attention_recall_if(head_entries(h), [&](std::uint32_t p) { return is_resident(h, p); });
        if (out.head_coverage[h]) {
            sum += *out.head_coverage[h];
            worst = std::min(worst, *out.head_coverage[h]);
            ++counted;
        }
    }
    out.record.recall = counted > 0 ? sum / static_cast<double>(counted) : 1.0;
    out.record.min_head_recall = worst;

    if (config_.variant != PolicyVariant::no_retrieval) {
        const std::uint64_t B = config_.transfer_bandwidth;
        for (auto& mon : state_.pivots) {
            const auto pivot_entries = head_entries(manifest_.flat(mon.pivot));
            IndexSet current = top_k_indices(pivot_entries, mon.monitor_len);
            mon.buffer.push_back(normalized_overlap(current, mon.k_base, mon.monitor_len));

            bool evaluate = false;
            if (config_.per_step_evaluation) {
                if (mon.buffer.size() > config_.window) mon.buffer.erase(mon.buffer.begin());
                evaluate = mon.buffer.size() == config_.window;
            } else {
                evaluate = t % config_.window == 0;
            }
            if (!evaluate) continue;

            const double med = median(mon.buffer);
            const bool fire = drift_check(mon.buffer, config_.tau_drift, config_.window);
            if (!config_.per_step_evaluation || fire) mon.buffer.clear();
            if (!fire) continue;

            RetrievalEvent ev;
            ev.trigger_step = t;
            ev.pivot = mon.pivot;
            ev.window_median = med;
            for (const auto& sat : mon.satellites) {
                const auto& hc = state_.heads[manifest_.flat(sat)];
                ev.fetches.push_back({sat, top_k_indices(pivot_entries, hc.length)});
            }
            ev.bytes = ev.fetched_entries() * manifest_.bytes_per_kv_entry;
            const std::uint64_t start = std::max<std::uint64_t>(static_cast<std::uint64_t>(t) * B, state_.link_free);
            const std::uint64_t end = start + ev.bytes;
            state_.link_free = end;
            ev.completion_step = static_cast<std::uint32_t>(
                std::max<std::uint64_t>(static_cast<std::uint64_t>(t) + config_.update_delay_steps, ceil_div(end, B)));
            for (const auto& f : ev.fetches) state_.pending.push_back({ev.completion_step, f.satellite, f.indices});
            state_.cumulative_bytes += ev.bytes;
            mon.k_base = std::move(current);
            out.record.retrieval_flag = true;
            out.events.push_back(std::move(ev));
        }
    }

    out.record.budget_entries = budget_entries();
    out.record.protected_entries = protected_entries();
    out.record.decode_entries = static_cast<std::uint64_t>(N) * t;
    out.record.bytes_in_flight = bytes_in_flight(t);
    out.record.cumulative_bytes = state_.cumulative_bytes;
    return out;
}

SimulationReport run(const AttentionTrace& trace, const TaxonomyResult& taxonomy, const BudgetPlan& plan,
                     const EngineConfig& config) {
    CacheEngine engine(trace, taxonomy, plan, config);
    SimulationReport report = engine.report_header(std::string(to_string(config.variant)));
    report.steps.reserve(trace.manifest.decode_steps);
    for (std::size_t s = 1; s < trace.steps.size(); ++s) {
        auto out = engine.decode_step(trace.steps[s]);
        report.steps.push_back(out.record);
        for (auto& ev : out.events) report.events.push_back(std::move(ev));
    }
    return report;
}

}  // namespace hcache
