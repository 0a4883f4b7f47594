// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hcache/budget.hpp"
#include "hcache/index_set.hpp"
#include "hcache/profiler.hpp"
#include "hcache/report.hpp"
#include "hcache/trace.hpp"

namespace hcache {

enum class PolicyVariant { heterocache, no_allocation, no_retrieval };

std::string_view to_string(PolicyVariant variant) noexcept;
std::optional<PolicyVariant> parse_variant(std::string_view name) noexcept;

struct EngineConfig {
    double tau_drift = 0.5;
    /// Drift window W, in decode steps.
    std::uint32_t window = 8;
    /// Bytes the host link moves per decode step.
    std::uint64_t transfer_bandwidth = 768ull << 20;
    /// Steps between a trigger and the refreshed entries becoming visible.
    std::uint32_t update_delay_steps = 1;
    PolicyVariant variant = PolicyVariant::heterocache;
    /// Evaluate the window median every step instead of only when t mod W = 0.
    bool per_step_evaluation = false;
    /// Positions 0..sink_count-1 stay resident for every head.
    std::uint32_t sink_count = 4;
    /// The last recency_window prefill positions stay resident for every head.
    std::uint32_t recency_window = 8;

    /// Throws std::invalid_argument on out-of-range values.
    void validate() const;
};

/// |current ∩ base| / |base|. Throws std::invalid_argument unless both sets
/// are non-empty and equally sized.
double pivot_overlap(const IndexSet& current, const IndexSet& base);

/// True iff the median of exactly `window` overlaps is below tau (strict).
bool drift_check(std::span<const double> window_overlaps, double tau_drift, std::uint32_t window);

/// Sinks plus the trailing prefill positions, clipped to [0, prefill_len).
IndexSet protected_positions(std::uint32_t prefill_len, std::uint32_t sink_count, std::uint32_t recency_window);

struct HeadCache {
    Role role = Role::Anchor;
    /// Budgeted length l_i; 0 for full heads.
    std::uint32_t length = 0;
    /// Selected positions held under the budget; unused for full heads.
    IndexSet dynamic;
};

struct PivotMonitor {
    HeadId pivot;
    std::vector<HeadId> satellites;
    /// Size of the monitored top set (L_base_int, capped by the recorded prefill entries).
    std::uint32_t monitor_len = 0;
    IndexSet k_base;
    std::vector<double> buffer;
};

struct PendingTransfer {
    std::uint32_t completion_step = 0;
    HeadId satellite;
    IndexSet indices;
};

struct CacheState {
    /// Last applied step; 0 right after prefill.
    std::uint32_t step = 0;
    std::uint32_t prefill_len = 0;
    std::vector<HeadCache> heads;
    IndexSet protected_set;
    std::vector<PivotMonitor> pivots;
    /// In enqueue order.
    std::vector<PendingTransfer> pending;
    /// Link clock in bytes; step t starts at t * bandwidth.
    std::uint64_t link_free = 0;
    std::uint64_t cumulative_bytes = 0;
};

struct StepOutcome {
    StepRecord record;
    std::vector<RetrievalEvent> events;
    /// Per head recall of the step's recorded mass; nullopt when the head has none.
    std::vector<std::optional<double>> head_coverage;
};

/// Two-tier cache replay. Construction performs the prefill initialization.
class CacheEngine {
public:
    /// Throws std::invalid_argument on dimension or plan/taxonomy mismatch and
    /// InfeasibleBudget when the initial selection exceeds the ceiling.
    CacheEngine(const AttentionTrace& trace, const TaxonomyResult& taxonomy, const BudgetPlan& plan,
                const EngineConfig& config);

    /// Applies the next decode step. Throws std::invalid_argument when the
    /// step is out of order or malformed.
    StepOutcome decode_step(const StepAttention& step);

    const CacheState& state() const noexcept { return state_; }
    const EngineConfig& config() const noexcept { return config_; }

    bool is_resident(std::size_t flat_head, std::uint32_t position) const;
    /// Every GPU-resident position of a head at the current step.
    IndexSet gpu_set(std::size_t flat_head) const;

    std::uint64_t budget_entries() const;
    std::uint64_t protected_entries() const;

    /// Report header with prefill accounting; steps and events are left empty.
    SimulationReport report_header(std::string policy) const;

private:
    void complete_transfers(std::uint32_t step);
    std::uint64_t bytes_in_flight(std::uint32_t step) const;

    TraceManifest manifest_;
    std::string fingerprint_;
    double rho_ = 1.0;
    std::size_t num_comp_ = 0;
    EngineConfig config_;
    CacheState state_;
};

/// Prefill followed by every decode step of the trace.
SimulationReport run(const AttentionTrace& trace, const TaxonomyResult& taxonomy, const BudgetPlan& plan,
                     const EngineConfig& config);

}  // namespace hcache
