// SPDX-License-Identifier: Apache-2.0

#include "hcache/profiler.hpp"

#include <algorithm>
#include <future>
#include <set>
#include <stdexcept>
#include <string>

namespace hcache {

void ProfileConfig::validate() const {
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(tau_stable)) throw std::invalid_argument("tau_stable must be in [0, 1]");
    if (!in_unit(tau_sim)) throw std::invalid_argument("tau_sim must be in [0, 1]");
    if (profiling_topk && *profiling_topk == 0) throw std::invalid_argument("profiling_topk must be >= 1");
    if (pool_kernel != 0 && pool_kernel % 2 == 0) throw std::invalid_argument("pool_kernel must be 0 or odd");
    if (gqa_group_size < 1) throw std::invalid_argument("gqa_group_size must be >= 1");
}

std::uint32_t ProfileConfig::topk_for(std::uint32_t prefill_len) const {
    return profiling_topk ? *profiling_topk : default_profiling_topk(prefill_len);
}

std::vector<std::vector<double>> aggregate_gqa(std::span<const std::vector<double>> query_head_scores,
                                               std::uint32_t group_size) {
    if (group_size == 0) throw std::invalid_argument("aggregate_gqa: group size must be >= 1");
    if (query_head_scores.size() % group_size != 0) {
        throw std::invalid_argument("aggregate_gqa: " + std::to_string(query_head_scores.size()) +
                                    " query heads do not divide into groups of " + std::to_string(group_size));
    }
    std::vector<std::vector<double>> out;
    out.reserve(query_head_scores.size() / group_size);
    for (std::size_t g = 0; g < query_head_scores.size(); g += group_size) {
        std::vector<double> mean(query_head_scores[g].size(), 0.0);
        for (std::size_t q = g; q < g + group_size; ++q) {
            if (query_head_scores[q].size() != mean.size()) {
                throw std::invalid_argument("aggregate_gqa: query heads in a group differ in length");
            }
            for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += query_head_scores[q][i];
        }
        for (auto& v : mean) v /= static_cast<double>(group_size);
        out.push_back(std::move(mean));
    }
    return out;
}

namespace {

void check_compatible(std::span<const AttentionTrace> traces) {
    if (traces.empty()) throw std::invalid_argument("profiling needs at least one trace");
    const auto& first = traces.front().manifest;
    for (const auto& t : traces) {
        if (t.manifest.num_layers != first.num_layers || t.manifest.heads_per_layer != first.heads_per_layer) {
            throw std::invalid_argument("calibration traces disagree on num_layers / heads_per_layer");
        }
        if (t.manifest.decode_steps < 1) throw std::invalid_argument("calibration traces need at least one decode step");
    }
}

std::vector<TopSetTable> tables_for(std::span<const AttentionTrace> traces, const ProfileConfig& config) {
    std::vector<std::future<TopSetTable>> pending;
    pending.reserve(traces.size());
    for (const auto& t : traces) {
        const std::size_t k = config.topk_for(t.manifest.prefill_len);
        pending.push_back(std::async(std::launch::async, [&t, k] { return extract_top_sets(t, k); }));
    }
    std::vector<TopSetTable> tables;
    tables.reserve(traces.size());
    for (auto& f : pending) tables.push_back(f.get());
    return tables;
}

std::vector<HeadScores> scores_from_tables(std::span<const TopSetTable> tables, const TraceManifest& dims) {
    const std::size_t n = dims.num_heads();
    std::vector<HeadScores> out(n);
    for (std::size_t h = 0; h < n; ++h) out[h].head = dims.head_id(h);
    for (const auto& table : tables) {
        const auto stable = stability_scores(table);
        const auto sim = similarity_scores(table, dims.heads_per_layer);
        for (std::size_t h = 0; h < n; ++h) {
            out[h].s_stable += stable[h];
            out[h].s_sim += sim[h];
        }
    }
    for (auto& s : out) {
        s.s_stable /= static_cast<double>(tables.size());
        s.s_sim /= static_cast<double>(tables.size());
    }
    return out;
}

}  // namespace

std::vector<HeadScores> profile(std::span<const AttentionTrace> traces, const ProfileConfig& config) {
    config.validate();
    check_compatible(traces);
    const auto tables = tables_for(traces, config);
    return scores_from_tables(tables, traces.front().manifest);
}

HeadGraph::HeadGraph(std::uint32_t num_layers, std::uint32_t heads_per_layer)
    : num_layers_(num_layers),
      heads_per_layer_(heads_per_layer),
      adjacency_(static_cast<std::size_t>(num_layers) * heads_per_layer) {}

void HeadGraph::add_edge(HeadId a, HeadId b) {
    if (a.layer >= num_layers_ || b.layer >= num_layers_ || a.head >= heads_per_layer_ ||
        b.head >= heads_per_layer_) {
        throw std::invalid_argument("add_edge: unknown head");
    }
    if (a == b) throw std::invalid_argument("add_edge: self-loop");
    if (a.layer != b.layer) throw std::invalid_argument("add_edge: heads are in different layers");
    const auto fa = static_cast<std::uint32_t>(flat(a));
    const auto fb = static_cast<std::uint32_t>(flat(b));
    auto insert = [](std::vector<std::uint32_t>& v, std::uint32_t x) {
        auto it = std::lower_bound(v.begin(), v.end(), x);
        if (it == v.end() || *it != x) v.insert(it, x);
    };
    insert(adjacency_[fa], fb);
    insert(adjacency_[fb], fa);
}

bool HeadGraph::has_edge(HeadId a, HeadId b) const {
    const auto& n = adjacency_.at(flat(a));
    return std::binary_search(n.begin(), n.end(), static_cast<std::uint32_t>(flat(b)));
}

std::size_t HeadGraph::edge_count() const noexcept {
    std::size_t degree_sum = 0;
    for (const auto& n : adjacency_) degree_sum += n.size();
    return degree_sum / 2;
}

HeadGraph HeadGraph::restricted_to(const std::vector<bool>& keep) const {
    if (keep.size() != num_heads()) throw std::invalid_argument("restricted_to: mask size mismatch");
    HeadGraph out(num_layers_, heads_per_layer_);
    for (std::size_t a = 0; a < adjacency_.size(); ++a) {
        if (!keep[a]) continue;
        for (auto b : adjacency_[a]) {
            if (keep[b]) out.adjacency_[a].push_back(b);
        }
    }
    return out;
}

HeadGraph build_adjacency(std::span<const TopSetTable> tables, std::uint32_t num_layers,
                          std::uint32_t heads_per_layer, double tau_sim, std::optional<std::uint32_t> single_step) {
    if (!(tau_sim >= 0.0 && tau_sim <= 1.0)) throw std::invalid_argument("build_adjacency: tau_sim must be in [0, 1]");
    if (tables.empty()) throw std::invalid_argument("build_adjacency: no step tables");
    const std::size_t n = static_cast<std::size_t>(num_layers) * heads_per_layer;
    for (const auto& t : tables) {
        if (t.num_heads() != n) throw std::invalid_argument("build_adjacency: table head count mismatch");
        if (single_step ? *single_step >= t.num_steps() : t.num_steps() < 2) {
            throw std::invalid_argument("build_adjacency: requested steps are not in the table");
        }
    }
    HeadGraph graph(num_layers, heads_per_layer);
    for (std::uint32_t layer = 0; layer < num_layers; ++layer) {
        for (std::uint32_t a = 0; a < heads_per_layer; ++a) {
            for (std::uint32_t b = a + 1; b < heads_per_layer; ++b) {
                const std::size_t fa = static_cast<std::size_t>(layer) * heads_per_layer + a;
                const std::size_t fb = static_cast<std::size_t>(layer) * heads_per_layer + b;
                double total = 0.0;
                for (const auto& t : tables) {
                    if (single_step) {
                        total += overlap_coefficient(t.at(*single_step, fa), t.at(*single_step, fb));
                    } else {
                        std::vector<double> per_step;
                        per_step.reserve(t.num_steps() - 1);
                        for (std::size_t s = 1; s < t.num_steps(); ++s) {
                            per_step.push_back(overlap_coefficient(t.at(s, fa), t.at(s, fb)));
                        }
                        total += median(std::move(per_step));
                    }
                }
                if (total / static_cast<double>(tables.size()) >= tau_sim) {
                    graph.add_edge({layer, a}, {layer, b});
                }
            }
        }
    }
    return graph;
}

Clustering greedy_star_cluster(const HeadGraph& graph) {
    const std::size_t n = graph.num_heads();
    std::vector<bool> assigned(n, false);
    Clustering out;
    for (;;) {
        std::size_t best = n;
        std::size_t best_degree = 0;
        for (std::size_t h = 0; h < n; ++h) {
            if (assigned[h]) continue;
            std::size_t degree = 0;
            for (auto nb : graph.neighbors(h)) {
                if (!assigned[nb]) ++degree;
            }
            if (degree > best_degree) {
                best = h;
                best_degree = degree;
            }
        }
        if (best == n) break;
        Cluster cluster;
        cluster.id = static_cast<std::uint32_t>(out.clusters.size());
        cluster.pivot = graph.head_id(best);
        assigned[best] = true;
        for (auto nb : graph.neighbors(best)) {
            if (assigned[nb]) continue;
            assigned[nb] = true;
            cluster.satellites.push_back(graph.head_id(nb));
        }
        out.clusters.push_back(std::move(cluster));
    }
    for (std::size_t h = 0; h < n; ++h) {
        if (!assigned[h]) out.unassigned.push_back(graph.head_id(h));
    }
    return out;
}

std::size_t TaxonomyResult::count(Role role) const noexcept {
    return static_cast<std::size_t>(
        std::count_if(heads.begin(), heads.end(), [role](const HeadProfile& p) { return p.role == role; }));
}

std::vector<HeadId> TaxonomyResult::with_role(Role role) const {
    std::vector<HeadId> out;
    for (const auto& p : heads) {
        if (p.role == role) out.push_back(p.head);
    }
    return out;
}

std::vector<HeadId> TaxonomyResult::unique_heads() const {
    std::vector<HeadId> out;
    for (const auto& p : heads) {
        if (p.s_sim < tau_sim) out.push_back(p.head);
    }
    return out;
}

std::vector<HeadId> TaxonomyResult::similar_heads() const {
    std::vector<HeadId> out;
    for (const auto& p : heads) {
        if (p.s_sim >= tau_sim) out.push_back(p.head);
    }
    return out;
}

std::vector<HeadId> TaxonomyResult::full_heads() const {
    std::vector<HeadId> out;
    for (const auto& p : heads) {
        if (is_full(p.role)) out.push_back(p.head);
    }
    return out;
}

std::vector<HeadId> TaxonomyResult::compressed_heads() const {
    std::vector<HeadId> out;
    for (const auto& p : heads) {
        if (!is_full(p.role)) out.push_back(p.head);
    }
    return out;
}

void TaxonomyResult::check_consistent() const {
    const std::size_t n = static_cast<std::size_t>(num_layers) * heads_per_layer;
    if (n == 0 || heads.size() != n) throw std::invalid_argument("taxonomy: head count does not match dimensions");
    for (std::size_t h = 0; h < n; ++h) {
        const auto& p = heads[h];
        if (p.head.layer != h / heads_per_layer || p.head.head != h % heads_per_layer) {
            throw std::invalid_argument("taxonomy: heads are not in layer-major order");
        }
        const bool clustered = p.role == Role::Pivot || p.role == Role::Satellite;
        if (clustered != p.cluster_id.has_value()) {
            throw std::invalid_argument("taxonomy: only pivots and satellites carry a cluster id");
        }
        if (p.cluster_id && *p.cluster_id >= clusters.size()) {
            throw std::invalid_argument("taxonomy: cluster id out of range");
        }
    }
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        const auto& cl = clusters[c];
        if (cl.id != c) throw std::invalid_argument("taxonomy: cluster ids must be 0..m-1 in order");
        if (at(cl.pivot).role != Role::Pivot || at(cl.pivot).cluster_id != cl.id) {
            throw std::invalid_argument("taxonomy: cluster pivot does not carry the pivot role");
        }
        for (const auto& s : cl.satellites) {
            if (s.layer != cl.pivot.layer) throw std::invalid_argument("taxonomy: cluster spans layers");
            if (at(s).role != Role::Satellite || at(s).cluster_id != cl.id) {
                throw std::invalid_argument("taxonomy: cluster satellite does not carry the satellite role");
            }
        }
    }
    if (count(Role::Pivot) != clusters.size()) throw std::invalid_argument("taxonomy: pivot count != cluster count");
    std::size_t satellites = 0;
    for (const auto& cl : clusters) satellites += cl.satellites.size();
    if (count(Role::Satellite) != satellites) throw std::invalid_argument("taxonomy: satellite count mismatch");
}

TaxonomyResult assign_roles(std::span<const HeadScores> scores, const Clustering& clustering,
                            const ProfileConfig& config, std::uint32_t num_layers, std::uint32_t heads_per_layer) {
    config.validate();
    const std::size_t n = static_cast<std::size_t>(num_layers) * heads_per_layer;
    std::vector<const HeadScores*> by_head(n, nullptr);
    for (const auto& s : scores) {
        if (s.head.layer >= num_layers || s.head.head >= heads_per_layer) {
            throw std::invalid_argument("assign_roles: score for an unknown head");
        }
        by_head[static_cast<std::size_t>(s.head.layer) * heads_per_layer + s.head.head] = &s;
    }
    TaxonomyResult out;
    out.num_layers = num_layers;
    out.heads_per_layer = heads_per_layer;
    out.tau_stable = config.tau_stable;
    out.tau_sim = config.tau_sim;
    out.heads.resize(n);
    for (std::size_t h = 0; h < n; ++h) {
        if (by_head[h] == nullptr) {
            throw std::invalid_argument("assign_roles: head " + std::to_string(h / heads_per_layer) + "/" +
                                        std::to_string(h % heads_per_layer) + " has no scores");
        }
        auto& p = out.heads[h];
        p.head = by_head[h]->head;
        p.s_stable = by_head[h]->s_stable;
        p.s_sim = by_head[h]->s_sim;
        p.role = p.s_stable >= config.tau_stable ? Role::Anchor : Role::Volatile;
    }
    auto flat = [&](HeadId id) { return static_cast<std::size_t>(id.layer) * heads_per_layer + id.head; };
    for (std::size_t c = 0; c < clustering.clusters.size(); ++c) {
        Cluster cl = clustering.clusters[c];
        cl.id = static_cast<std::uint32_t>(c);
        out.heads.at(flat(cl.pivot)).role = Role::Pivot;
        out.heads.at(flat(cl.pivot)).cluster_id = cl.id;
        for (const auto& s : cl.satellites) {
            out.heads.at(flat(s)).role = Role::Satellite;
            out.heads.at(flat(s)).cluster_id = cl.id;
        }
        out.clusters.push_back(std::move(cl));
    }
    out.check_consistent();
    return out;
}

TaxonomyResult build_taxonomy(std::span<const AttentionTrace> traces, const ProfileConfig& config) {
    config.validate();
    check_compatible(traces);
    const auto& dims = traces.front().manifest;
    const auto tables = tables_for(traces, config);
    const auto scores = scores_from_tables(tables, dims);
    std::vector<bool> similar(scores.size());
    for (std::size_t h = 0; h < scores.size(); ++h) similar[h] = scores[h].s_sim >= config.tau_sim;
    const auto graph =
        build_adjacency(tables, dims.num_layers, dims.heads_per_layer, config.tau_sim, config.adjacency_step)
            .restricted_to(similar);
    return assign_roles(scores, greedy_star_cluster(graph), config, dims.num_layers, dims.heads_per_layer);
}

}  // namespace hcache
