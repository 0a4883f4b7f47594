// SPDX-License-Identifier: Apache-2.0

#include "hcache/report.hpp"

#include <algorithm>
#include <stdexcept>

namespace hcache {

std::optional<double> attention_recall_if(std::span<const TokenScore> step_entries,
                                          const std::function<bool(std::uint32_t)>& resident) {
    double total = 0.0;
    double kept = 0.0;
    for (const auto& e : step_entries) {
        if (e.is_padding()) continue;
        if (e.score < 0.0f) throw std::invalid_argument("attention_recall: negative score");
        total += e.score;
        if (resident(e.index)) kept += e.score;
    }
    if (!(total > 0.0)) return std::nullopt;
    return kept / total;
}

double attention_recall(const IndexSet& cached, std::span<const TokenScore> step_entries) {
    const auto r = attention_recall_if(step_entries, [&](std::uint32_t p) { return cached.contains(p); });
    if (!r) throw std::invalid_argument("attention_recall: recorded attention mass is zero");
    return *r;
}

std::uint64_t RetrievalEvent::fetched_entries() const noexcept {
    std::uint64_t n = 0;
    for (const auto& f : fetches) n += f.indices.size();
    return n;
}

ReportSummary SimulationReport::summary() const {
    ReportSummary s;
    s.peak_budget_entries = prefill_budget_entries;
    s.peak_total_entries = prefill_budget_entries + prefill_protected_entries;
    if (!steps.empty()) {
        double total = 0.0;
        s.min_recall = 1.0;
        for (const auto& r : steps) {
            total += r.recall;
            s.min_recall = std::min(s.min_recall, r.recall);
            s.peak_budget_entries = std::max(s.peak_budget_entries, r.budget_entries);
            s.peak_total_entries = std::max(s.peak_total_entries, r.total_entries());
        }
        s.mean_recall = total / static_cast<double>(steps.size());
    }
    s.retrieval_events = events.size();
    for (const auto& e : events) {
        s.total_bytes += e.bytes;
        const std::uint64_t nominal = static_cast<std::uint64_t>(e.trigger_step) + update_delay_steps;
        if (e.completion_step <= nominal) {
            ++s.hidden_transfers;
        } else {
            s.exposed_transfer_steps += e.completion_step - nominal;
        }
    }
    return s;
}

std::optional<double> SimulationReport::mean_recall_after(std::uint32_t step) const {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& r : steps) {
        if (r.step > step) {
            total += r.recall;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return total / static_cast<double>(n);
}

}  // namespace hcache
