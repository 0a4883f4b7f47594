// SPDX-License-Identifier: Apache-2.0

#include "hcache/harness.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>

#include "hcache/metrics.hpp"

namespace hcache {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

/// Replays a policy whose residency is a pure function of (head, position, step).
struct StaticPolicy {
    std::function<bool(std::size_t, std::uint32_t, std::uint32_t)> resident;
    std::function<std::uint64_t(std::uint32_t)> budget_entries;
    std::uint64_t protected_entries = 0;
};

SimulationReport replay_static(const AttentionTrace& trace, std::string name, double ceiling,
                               const StaticPolicy& policy) {
    const auto& m = trace.manifest;
    SimulationReport r;
    r.policy = std::move(name);
    r.trace_fingerprint = trace_fingerprint(trace);
    r.prefill_len = m.prefill_len;
    r.decode_steps = m.decode_steps;
    r.num_heads = m.num_heads();
    r.bytes_per_kv_entry = m.bytes_per_kv_entry;
    r.budget_ceiling = ceiling;
    r.prefill_budget_entries = policy.budget_entries(0);
    r.prefill_protected_entries = policy.protected_entries;
    r.update_delay_steps = 0;
    for (std::uint32_t t = 1; t <= m.decode_steps; ++t) {
        StepRecord rec;
        rec.step = t;
        double sum = 0.0;
        std::size_t counted = 0;
        double worst = 1.0;
        for (std::size_t h = 0; h < m.num_heads(); ++h) {
            const auto cov = attention_recall_if(trace.head_entries(t, h), [&](std::uint32_t p) {
                return p < m.prefill_len + t && policy.resident(h, p, t);
            });
            if (!cov) continue;
            sum += *cov;
            worst = std::min(worst, *cov);
            ++counted;
        }
        rec.recall = counted > 0 ? sum / static_cast<double>(counted) : 1.0;
        rec.min_head_recall = worst;
        rec.budget_entries = policy.budget_entries(t);
        rec.protected_entries = policy.protected_entries;
        rec.decode_entries = static_cast<std::uint64_t>(m.num_heads()) * t;
        r.steps.push_back(rec);
    }
    return r;
}

bool same_ceiling(double a, double b) { return std::fabs(a - b) <= 1e-9 * std::max({1.0, std::fabs(a), std::fabs(b)}); }

int policy_rank(std::string_view name) {
    static constexpr std::string_view order[] = {"full_oracle",  "heterocache", "no_allocation",
                                                 "no_retrieval", "static_topk", "sink_window"};
    for (std::size_t i = 0; i < std::size(order); ++i) {
        if (order[i] == name) return static_cast<int>(i);
    }
    return static_cast<int>(std::size(order));
}

}  // namespace

std::string policy_name(const PolicySpec& policy) {
    return std::visit(overloaded{
                          [](const FullOracle&) { return std::string("full_oracle"); },
                          [](const StaticTopK&) { return std::string("static_topk"); },
                          [](const SinkWindow&) { return std::string("sink_window"); },
                          [](const HeteroCachePolicy& p) { return std::string(to_string(p.variant)); },
                      },
                      policy);
}

std::optional<PolicySpec> parse_policy(std::string_view name, double rho, std::uint32_t prefill_len,
                                       std::uint32_t sink_count) {
    if (name == "full_oracle") return FullOracle{};
    if (name == "static_topk") return StaticTopK{rho};
    if (name == "sink_window") {
        const auto total = static_cast<std::uint32_t>(std::llround(rho * prefill_len));
        const std::uint32_t sinks = std::min(sink_count, total);
        return SinkWindow{sinks, total - sinks};
    }
    if (auto v = parse_variant(name)) return HeteroCachePolicy{*v};
    return std::nullopt;
}

SimulationReport run_policy(const AttentionTrace& trace, const PolicySpec& policy, const SharedConfig& shared,
                            const TaxonomyResult* taxonomy) {
    const auto& m = trace.manifest;
    const std::uint32_t L = m.prefill_len;
    const double N = static_cast<double>(m.num_heads());
    const double rho = shared.budget.rho;
    const double ceiling = rho * N * L;

    return std::visit(
        overloaded{
            [&](const FullOracle&) {
                StaticPolicy p;
                p.resident = [](std::size_t, std::uint32_t, std::uint32_t) { return true; };
                p.budget_entries = [&](std::uint32_t) { return static_cast<std::uint64_t>(m.num_heads()) * L; };
                return replay_static(trace, "full_oracle", N * L, p);
            },
            [&](const StaticTopK& s) {
                if (!(s.fraction > 0.0 && s.fraction <= 1.0)) {
                    throw std::invalid_argument("static_topk: fraction must be in (0, 1]");
                }
                if (!same_ceiling(s.fraction, rho)) {
                    throw BudgetMismatch("static_topk: fraction " + std::to_string(s.fraction) +
                                         " differs from rho " + std::to_string(rho));
                }
                const auto k = static_cast<std::size_t>(std::floor(s.fraction * L));
                const IndexSet prot = protected_positions(L, shared.engine.sink_count, shared.engine.recency_window);
                std::vector<IndexSet> kept(m.num_heads());
                std::uint64_t budget = 0;
                std::uint64_t protected_count = 0;
                for (std::size_t h = 0; h < m.num_heads(); ++h) {
                    if (k > 0) kept[h] = top_k_indices(trace.head_entries(0, h), k);
                    budget += kept[h].size();
                    protected_count += prot.size() - prot.intersection_size(kept[h]);
                }
                StaticPolicy p;
                p.resident = [&kept, &prot, L](std::size_t h, std::uint32_t pos, std::uint32_t) {
                    return pos >= L || prot.contains(pos) || kept[h].contains(pos);
                };
                p.budget_entries = [budget](std::uint32_t) { return budget; };
                p.protected_entries = protected_count;
                return replay_static(trace, "static_topk", ceiling, p);
            },
            [&](const SinkWindow& s) {
                if (static_cast<std::uint64_t>(s.sink_count) + s.window > L) {
                    throw std::invalid_argument("sink_window: sink count + window exceeds the prefill length");
                }
                const auto expected = std::llround(rho * L);
                if (static_cast<long long>(s.sink_count) + s.window != expected) {
                    throw BudgetMismatch("sink_window: " + std::to_string(s.sink_count + s.window) +
                                         " entries per head, expected " + std::to_string(expected));
                }
                const std::uint32_t sinks = s.sink_count;
                const std::uint32_t window = s.window;
                const std::uint64_t heads = m.num_heads();
                auto window_start = [=](std::uint32_t t) {
                    const std::uint64_t len = static_cast<std::uint64_t>(L) + t;
                    return len > window ? len - window : 0;
                };
                StaticPolicy p;
                p.resident = [=](std::size_t, std::uint32_t pos, std::uint32_t t) {
                    return pos < sinks || pos >= L || pos >= window_start(t);
                };
                p.budget_entries = [=](std::uint32_t t) {
                    const std::uint64_t from = std::max<std::uint64_t>(sinks, window_start(t));
                    const std::uint64_t recent = from < L ? L - from : 0;
                    return heads * (sinks + recent);
                };
                return replay_static(trace, "sink_window", ceiling, p);
            },
            [&](const HeteroCachePolicy& h) {
                TaxonomyResult own;
                if (taxonomy == nullptr) {
                    own = build_taxonomy(std::span<const AttentionTrace>(&trace, 1), shared.profile);
                    taxonomy = &own;
                }
                const BudgetPlan plan = make_plan(*taxonomy, shared.budget, L);
                EngineConfig cfg = shared.engine;
                cfg.variant = h.variant;
                return run(trace, *taxonomy, plan, cfg);
            },
        },
        policy);
}

std::vector<SimulationReport> run_policies(const AttentionTrace& trace, std::span<const PolicySpec> policies,
                                           const SharedConfig& shared, const TaxonomyResult* taxonomy) {
    std::vector<std::future<SimulationReport>> futures;
    futures.reserve(policies.size());
    for (const auto& p : policies) {
        futures.push_back(std::async(std::launch::async, [&trace, &p, &shared, taxonomy] {
            return run_policy(trace, p, shared, taxonomy);
        }));
    }
    std::vector<SimulationReport> out;
    out.reserve(futures.size());
    for (auto& f : futures) out.push_back(f.get());
    return out;
}

ComparisonTable compare(std::span<const SimulationReport> reports) {
    if (reports.size() < 2) throw std::invalid_argument("compare: need at least two reports");
    ComparisonTable table;
    table.trace_fingerprint = reports.front().trace_fingerprint;
    std::optional<double> ceiling;
    for (const auto& r : reports) {
        if (r.trace_fingerprint != table.trace_fingerprint) {
            throw TraceMismatch("compare: report '" + r.policy + "' was produced from a different trace");
        }
        if (r.policy == "full_oracle") continue;
        if (!ceiling) {
            ceiling = r.budget_ceiling;
        } else if (!same_ceiling(*ceiling, r.budget_ceiling)) {
            throw BudgetMismatch("compare: report '" + r.policy + "' has budget ceiling " +
                                 std::to_string(r.budget_ceiling) + ", expected " + std::to_string(*ceiling));
        }
    }

    std::vector<std::size_t> order(reports.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const int ra = policy_rank(reports[a].policy);
        const int rb = policy_rank(reports[b].policy);
        if (ra != rb) return ra < rb;
        return reports[a].policy < reports[b].policy;
    });
    for (std::size_t i : order) table.rows.push_back({reports[i].policy, reports[i].budget_ceiling, reports[i].summary()});

    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        for (std::size_t j = i + 1; j < table.rows.size(); ++j) {
            const auto& a = table.rows[i];
            const auto& b = table.rows[j];
            PolicyDelta d;
            d.a = a.policy;
            d.b = b.policy;
            d.mean_recall = a.summary.mean_recall - b.summary.mean_recall;
            d.min_recall = a.summary.min_recall - b.summary.min_recall;
            d.peak_budget_entries = static_cast<double>(a.summary.peak_budget_entries) -
                                    static_cast<double>(b.summary.peak_budget_entries);
            d.total_bytes = static_cast<double>(a.summary.total_bytes) - static_cast<double>(b.summary.total_bytes);
            d.retrieval_events =
                static_cast<double>(a.summary.retrieval_events) - static_cast<double>(b.summary.retrieval_events);
            table.deltas.push_back(d);
        }
    }
    return table;
}

}  // namespace hcache
