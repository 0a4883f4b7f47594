// SPDX-License-Identifier: Apache-2.0

#include "hcache/budget.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hcache {

std::string_view to_string(Rounding rounding) noexcept {
    return rounding == Rounding::floor ? "floor" : "largest_remainder";
}

std::optional<Rounding> parse_rounding(std::string_view name) noexcept {
    if (name == "largest_remainder") return Rounding::largest_remainder;
    if (name == "floor") return Rounding::floor;
    return std::nullopt;
}

void BudgetConfig::validate() const {
    if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("rho must be in (0, 1]");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw std::invalid_argument("epsilon must be > 0");
}

double base_length(double rho, std::size_t num_heads, std::size_t num_full, std::size_t num_comp,
                   std::uint32_t prefill_len) {
    if (num_heads != num_full + num_comp) throw std::invalid_argument("base_length: N != N_full + N_comp");
    if (num_comp == 0) throw std::invalid_argument("base_length: no compressed heads");
    if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("base_length: rho must be in (0, 1]");
    const double budget_heads = rho * static_cast<double>(num_heads);
    if (budget_heads <= static_cast<double>(num_full)) {
        throw InfeasibleBudget("infeasible budget: rho * N = " + std::to_string(budget_heads) +
                               " does not exceed the " + std::to_string(num_full) +
                               " full-cache heads; raise rho or the thresholds");
    }
    return (budget_heads - static_cast<double>(num_full)) * static_cast<double>(prefill_len) /
           static_cast<double>(num_comp);
}

std::vector<std::uint64_t> largest_remainder(std::span<const double> shares, std::uint64_t target,
                                             std::span<const double> tie_keys) {
    if (!tie_keys.empty() && tie_keys.size() != shares.size()) {
        throw std::invalid_argument("largest_remainder: tie key count mismatch");
    }
    const std::size_t n = shares.size();
    std::vector<std::uint64_t> out(n);
    std::vector<double> remainder(n);
    std::int64_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(shares[i] >= 0.0) || !std::isfinite(shares[i])) {
            throw std::invalid_argument("largest_remainder: shares must be finite and nonnegative");
        }
        const double f = std::floor(shares[i]);
        out[i] = static_cast<std::uint64_t>(f);
        remainder[i] = shares[i] - f;
        assigned += static_cast<std::int64_t>(out[i]);
    }
    if (n == 0) return out;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (remainder[a] != remainder[b]) return remainder[a] > remainder[b];
        if (!tie_keys.empty() && tie_keys[a] != tie_keys[b]) return tie_keys[a] < tie_keys[b];
        return a < b;
    });
    std::int64_t left = static_cast<std::int64_t>(target) - assigned;
    for (std::size_t i = 0; left > 0; i = (i + 1) % n, --left) {
        ++out[order[i]];
    }
    // Floating error can leave the floors above the target; take back from
    // the smallest remainders.
    for (std::size_t i = n; left < 0 && i > 0; --i) {
        auto& v = out[order[i - 1]];
        if (v > 0) {
            --v;
            ++left;
        }
    }
    return out;
}

std::vector<HeadAllocation> allocate(std::span<const HeadScores> compressed, double base_len,
                                     const BudgetConfig& config, std::uint32_t max_length, bool* clamped) {
    config.validate();
    if (compressed.empty()) throw std::invalid_argument("allocate: no compressed heads");
    if (!(base_len >= 0.0) || !std::isfinite(base_len)) throw std::invalid_argument("allocate: bad base length");
    if (config.min_length > max_length) {
        throw InfeasibleBudget("min_length " + std::to_string(config.min_length) + " exceeds the prefill length");
    }
    const std::size_t n = compressed.size();
    std::vector<HeadAllocation> out(n);
    double weight_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double s = compressed[i].s_stable;
        if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("allocate: stability scores must be in [0, 1]");
        out[i].head = compressed[i].head;
        out[i].s_stable = s;
        out[i].weight = 1.0 / (s + config.epsilon);
        weight_sum += out[i].weight;
    }
    const double total = static_cast<double>(n) * base_len;
    std::vector<double> shares(n);
    std::vector<double> stabilities(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i].share = total * out[i].weight / weight_sum;
        shares[i] = out[i].share;
        stabilities[i] = out[i].s_stable;
    }

    std::vector<std::int64_t> lengths(n);
    if (config.rounding == Rounding::largest_remainder) {
        const auto ints = largest_remainder(shares, static_cast<std::uint64_t>(std::llround(total)), stabilities);
        for (std::size_t i = 0; i < n; ++i) lengths[i] = static_cast<std::int64_t>(ints[i]);
    } else {
        for (std::size_t i = 0; i < n; ++i) lengths[i] = static_cast<std::int64_t>(std::floor(shares[i]));
    }

    const auto lo = static_cast<std::int64_t>(config.min_length);
    const auto hi = static_cast<std::int64_t>(max_length);
    std::int64_t surplus = 0;
    bool any_clamped = false;
    for (std::size_t i = 0; i < n; ++i) {
        const std::int64_t c = std::clamp(lengths[i], lo, hi);
        if (c != lengths[i]) {
            any_clamped = true;
            surplus += lengths[i] - c;
            lengths[i] = c;
        }
    }
    if (any_clamped && surplus != 0) {
        // Spread in proportion to each head's room in the direction of the
        // change, so no head crosses a bound when the budget allows it and
        // the order of lengths is kept. Shares are floored toward zero.
        std::vector<std::int64_t> room(n, 0);
        std::int64_t total_room = 0;
        for (std::size_t i = 0; i < n; ++i) {
            room[i] = surplus > 0 ? hi - lengths[i] : lengths[i] - lo;
            total_room += room[i];
        }
        if (total_room > 0) {
            const double magnitude = static_cast<double>(std::min<std::int64_t>(surplus < 0 ? -surplus : surplus, total_room));
            for (std::size_t i = 0; i < n; ++i) {
                const auto step = static_cast<std::int64_t>(
                    std::floor(magnitude * static_cast<double>(room[i]) / static_cast<double>(total_room)));
                lengths[i] += surplus > 0 ? step : -step;
            }
        }
    }

    std::int64_t sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i].length = static_cast<std::uint32_t>(lengths[i]);
        sum += lengths[i];
    }
    if (static_cast<double>(sum) > total + static_cast<double>(n)) {
        throw InfeasibleBudget("min_length " + std::to_string(config.min_length) +
                               " per compressed head exceeds the base length " + std::to_string(base_len));
    }
    if (clamped != nullptr) *clamped = any_clamped;
    return out;
}

double BudgetPlan::budget_ceiling() const noexcept {
    return rho * static_cast<double>(num_heads) * static_cast<double>(prefill_len);
}

std::uint64_t BudgetPlan::compressed_total() const noexcept {
    std::uint64_t total = 0;
    for (const auto& a : allocations) total += a.length;
    return total;
}

std::uint64_t BudgetPlan::planned_entries() const noexcept {
    return static_cast<std::uint64_t>(num_full) * prefill_len + compressed_total();
}

std::optional<std::uint32_t> BudgetPlan::length_for(HeadId head) const noexcept {
    for (const auto& a : allocations) {
        if (a.head == head) return a.length;
    }
    return std::nullopt;
}

BudgetPlan make_plan(const TaxonomyResult& taxonomy, const BudgetConfig& config, std::uint32_t prefill_len) {
    config.validate();
    taxonomy.check_consistent();
    if (prefill_len < 1) throw std::invalid_argument("make_plan: prefill length must be >= 1");
    BudgetPlan plan;
    plan.rho = config.rho;
    plan.prefill_len = prefill_len;
    plan.num_heads = taxonomy.num_heads();
    const auto comp = taxonomy.compressed_heads();
    plan.num_comp = comp.size();
    plan.num_full = plan.num_heads - plan.num_comp;
    if (comp.empty()) {
        if (static_cast<double>(plan.num_full) > config.rho * static_cast<double>(plan.num_heads)) {
            throw InfeasibleBudget("infeasible budget: every head keeps its full cache but rho < 1");
        }
        return plan;
    }
    plan.base_length = base_length(config.rho, plan.num_heads, plan.num_full, plan.num_comp, prefill_len);
    plan.base_length_int = static_cast<std::uint32_t>(std::llround(plan.base_length));
    std::vector<HeadScores> scores;
    scores.reserve(comp.size());
    for (const auto& id : comp) {
        const auto& p = taxonomy.at(id);
        scores.push_back({id, p.s_stable, p.s_sim});
    }
    plan.allocations = allocate(scores, plan.base_length, config, prefill_len, &plan.clamped);
    return plan;
}

}  // namespace hcache
