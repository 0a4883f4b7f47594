// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hcache/budget.hpp"
#include "hcache/engine.hpp"
#include "hcache/profiler.hpp"
#include "hcache/report.hpp"
#include "hcache/trace.hpp"

namespace hcache {

/// Caches every position.
struct FullOracle {};

/// Each head keeps its prefill top floor(fraction * L) positions for the whole run.
struct StaticTopK {
    double fraction = 0.5;
};

/// Positions below sink_count plus the `window` most recent positions.
struct SinkWindow {
    std::uint32_t sink_count = 4;
    std::uint32_t window = 0;
};

struct HeteroCachePolicy {
    PolicyVariant variant = PolicyVariant::heterocache;
};

using PolicySpec = std::variant<FullOracle, StaticTopK, SinkWindow, HeteroCachePolicy>;

std::string policy_name(const PolicySpec& policy);

/// Parses a policy name. Budgeted baselines are sized to match rho over a
/// prefill of length L: static_topk keeps rho * L per head, sink_window
/// keeps round(rho * L) with the configured sink count.
std::optional<PolicySpec> parse_policy(std::string_view name, double rho, std::uint32_t prefill_len,
                                       std::uint32_t sink_count = 4);

/// Compared policies must hold identical budgets and the same trace.
class BudgetMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TraceMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Everything a policy run may need besides the trace.
struct SharedConfig {
    ProfileConfig profile;
    BudgetConfig budget;
    EngineConfig engine;
};

/// Runs one policy. heterocache variants profile `trace` unless a taxonomy
/// is supplied. Throws BudgetMismatch when a baseline's size disagrees with
/// budget.rho.
SimulationReport run_policy(const AttentionTrace& trace, const PolicySpec& policy, const SharedConfig& shared,
                            const TaxonomyResult* taxonomy = nullptr);

/// Runs several policies concurrently; results keep the input order.
std::vector<SimulationReport> run_policies(const AttentionTrace& trace, std::span<const PolicySpec> policies,
                                           const SharedConfig& shared, const TaxonomyResult* taxonomy = nullptr);

struct PolicySummary {
    std::string policy;
    double budget_ceiling = 0.0;
    ReportSummary summary;
};

struct PolicyDelta {
    std::string a;
    std::string b;
    /// Each delta is a minus b.
    double mean_recall = 0.0;
    double min_recall = 0.0;
    double peak_budget_entries = 0.0;
    double total_bytes = 0.0;
    double retrieval_events = 0.0;
};

struct ComparisonTable {
    std::string trace_fingerprint;
    /// Ordered full_oracle, heterocache, no_allocation, no_retrieval,
    /// static_topk, sink_window, then by name; ties keep input order.
    std::vector<PolicySummary> rows;
    /// One per pair i < j of rows.
    std::vector<PolicyDelta> deltas;
};

/// Throws std::invalid_argument for fewer than two reports, TraceMismatch
/// when the traces differ and BudgetMismatch when non-oracle budgets differ.
ComparisonTable compare(std::span<const SimulationReport> reports);

}  // namespace hcache
