// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "hcache/budget.hpp"
#include "hcache/harness.hpp"
#include "hcache/metrics.hpp"
#include "hcache/profiler.hpp"
#include "hcache/report.hpp"
#include "hcache/synth.hpp"

namespace hcache {

using Json = nlohmann::json;

/// A document that parses as JSON but does not have the expected shape.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shortest text that reads back as the same double.
std::string format_double(double value);

Json to_json(const TaxonomyResult& taxonomy);
TaxonomyResult taxonomy_from_json(const Json& doc);

Json to_json(const BudgetPlan& plan);
BudgetPlan plan_from_json(const Json& doc);

Json to_json(const RetrievalEvent& event);
Json to_json(const SimulationReport& report);
SimulationReport report_from_json(const Json& doc);

Json to_json(const ComparisonTable& table);

Json to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const Json& doc);

Json labels_to_json(const SyntheticTrace& synthetic);

/// Columns: step, policy, recall, gpu_entries, bytes_in_flight,
/// retrieval_flag, then budget_entries, protected_entries, decode_entries,
/// cumulative_bytes, min_head_recall. gpu_entries is the sum of the three
/// entry columns.
std::string timeseries_csv(std::span<const SimulationReport> reports);

/// Columns: policy, budget_ceiling, mean_recall, min_recall,
/// peak_budget_entries, peak_total_entries, total_bytes, retrieval_events,
/// hidden_transfers, exposed_transfer_steps; then a blank line and the
/// pairwise deltas with columns a, b, d_mean_recall, d_min_recall,
/// d_peak_budget_entries, d_total_bytes, d_retrieval_events.
std::string comparison_csv(const ComparisonTable& table);

/// Columns: role, count.
std::string role_counts_csv(const TaxonomyResult& taxonomy);

/// Columns: layer, then one per target layer (layer_0, layer_1, ...).
std::string matrix_csv(const SquareMatrix& matrix);

/// Columns: layer, head, role, cluster, s_stable, s_sim.
std::string heads_csv(const TaxonomyResult& taxonomy);

}  // namespace hcache
