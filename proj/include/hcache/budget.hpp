// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hcache/profiler.hpp"
#include "hcache/trace.hpp"

namespace hcache {

enum class Rounding { largest_remainder, floor };

std::string_view to_string(Rounding rounding) noexcept;
std::optional<Rounding> parse_rounding(std::string_view name) noexcept;

struct BudgetConfig {
    /// Fraction of the uncompressed KV memory (N heads x L tokens) to keep.
    double rho = 0.5;
    /// Smoothing added to stability before inverting it.
    double epsilon = 1e-6;
    Rounding rounding = Rounding::largest_remainder;
    /// Floor on every compressed head's length.
    std::uint32_t min_length = 16;

    void validate() const;
};

/// The requested budget cannot cover the heads that keep their full cache.
class InfeasibleBudget : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// (rho * N - N_full) * L / N_comp. Throws InfeasibleBudget when rho * N <= N_full.
double base_length(double rho, std::size_t num_heads, std::size_t num_full, std::size_t num_comp,
                   std::uint32_t prefill_len);

/// Integer apportionment of `shares` summing to `target`: floors first, then
/// one extra unit each in decreasing remainder order. `tie_keys` (lower
/// first) and then position order break equal remainders.
std::vector<std::uint64_t> largest_remainder(std::span<const double> shares, std::uint64_t target,
                                             std::span<const double> tie_keys = {});

struct HeadAllocation {
    HeadId head;
    double s_stable = 0.0;
    double weight = 0.0;
    /// Real-valued share before integerization and clamping.
    double share = 0.0;
    std::uint32_t length = 0;
};

struct BudgetPlan {
    double rho = 1.0;
    std::uint32_t prefill_len = 0;
    std::size_t num_heads = 0;
    std::size_t num_full = 0;
    std::size_t num_comp = 0;
    double base_length = 0.0;
    /// round(base_length); the drift-monitor set size.
    std::uint32_t base_length_int = 0;
    /// One per compressed head, layer-major.
    std::vector<HeadAllocation> allocations;
    /// Set when any length hit min_length or prefill_len.
    bool clamped = false;

    /// rho * N * L.
    double budget_ceiling() const noexcept;
    /// N_full * L + sum of compressed lengths.
    std::uint64_t planned_entries() const noexcept;
    std::uint64_t compressed_total() const noexcept;
    std::optional<std::uint32_t> length_for(HeadId head) const noexcept;
};

/// Inverse-stability weights w = 1 / (s + epsilon); real shares
/// N_comp * L_base * w / sum(w), integerized, then clamped to
/// [min_length, max_length] with a single redistribution of the net clamping
/// surplus, proportional to each head's room toward the bound it moves to.
std::vector<HeadAllocation> allocate(std::span<const HeadScores> compressed, double base_len,
                                     const BudgetConfig& config, std::uint32_t max_length, bool* clamped = nullptr);

/// Full plan for a taxonomy. With no compressed heads the plan is empty and
/// only feasibility (N_full <= rho * N) is checked.
BudgetPlan make_plan(const TaxonomyResult& taxonomy, const BudgetConfig& config, std::uint32_t prefill_len);

}  // namespace hcache
