// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hcache/index_set.hpp"
#include "hcache/trace.hpp"

namespace hcache {

/// Fraction of the recorded attention mass whose positions are cached.
/// Throws std::invalid_argument when the recorded mass is zero.
double attention_recall(const IndexSet& cached, std::span<const TokenScore> step_entries);

/// Same, with residency given by a predicate. Returns nullopt on zero mass.
std::optional<double> attention_recall_if(std::span<const TokenScore> step_entries,
                                          const std::function<bool(std::uint32_t)>& resident);

struct SatelliteFetch {
    HeadId satellite;
    IndexSet indices;

    friend bool operator==(const SatelliteFetch&, const SatelliteFetch&) = default;
};

/// One drift trigger of one pivot and the satellite refresh it starts.
struct RetrievalEvent {
    std::uint32_t trigger_step = 0;
    HeadId pivot;
    double window_median = 0.0;
    std::vector<SatelliteFetch> fetches;
    std::uint64_t bytes = 0;
    std::uint32_t completion_step = 0;

    std::uint64_t fetched_entries() const noexcept;
    friend bool operator==(const RetrievalEvent&, const RetrievalEvent&) = default;
};

/// Cache occupancy and traffic after one decode step.
struct StepRecord {
    std::uint32_t step = 0;
    /// Mean over heads of attention-mass recall (heads without recorded mass skipped).
    double recall = 1.0;
    double min_head_recall = 1.0;
    /// Entries charged to the rho budget (full heads' prefill plus compressed heads' selections).
    std::uint64_t budget_entries = 0;
    /// Sink and recency positions held outside the budget.
    std::uint64_t protected_entries = 0;
    /// Positions appended during decode.
    std::uint64_t decode_entries = 0;
    std::uint64_t bytes_in_flight = 0;
    std::uint64_t cumulative_bytes = 0;
    bool retrieval_flag = false;

    std::uint64_t total_entries() const noexcept { return budget_entries + protected_entries + decode_entries; }
};

struct ReportSummary {
    double mean_recall = 1.0;
    double min_recall = 1.0;
    std::uint64_t peak_budget_entries = 0;
    std::uint64_t peak_total_entries = 0;
    std::uint64_t total_bytes = 0;
    std::uint64_t retrieval_events = 0;
    /// Transfers that completed after exactly the configured delay.
    std::uint64_t hidden_transfers = 0;
    /// Sum over transfers of steps waited beyond the configured delay.
    std::uint64_t exposed_transfer_steps = 0;
};

struct SimulationReport {
    std::string policy;
    std::string trace_fingerprint;
    std::uint32_t prefill_len = 0;
    std::uint32_t decode_steps = 0;
    std::uint64_t num_heads = 0;
    std::uint64_t bytes_per_kv_entry = 0;
    /// rho * N * L for compressed policies, N * L for the full cache.
    double budget_ceiling = 0.0;
    /// Integer-rounding allowance on top of the ceiling (one entry per compressed head).
    std::uint64_t ceiling_slack = 0;
    std::uint64_t prefill_budget_entries = 0;
    std::uint64_t prefill_protected_entries = 0;
    std::uint32_t update_delay_steps = 0;
    /// Steps 1..T.
    std::vector<StepRecord> steps;
    std::vector<RetrievalEvent> events;

    ReportSummary summary() const;
    /// Mean recall over steps strictly after `step`; nullopt when none.
    std::optional<double> mean_recall_after(std::uint32_t step) const;
};

}  // namespace hcache
