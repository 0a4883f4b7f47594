// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hcache/metrics.hpp"
#include "hcache/roles.hpp"
#include "hcache/trace.hpp"

namespace hcache {

struct ProfileConfig {
    double tau_stable = 0.5;
    double tau_sim = 0.5;
    /// Top-k used for the index sets; default_profiling_topk(L) when unset.
    std::optional<std::uint32_t> profiling_topk;
    /// Applied to dense inputs only. Recorded traces are sparse top-K and
    /// are analysed unpooled; the manifest records any export-time smoothing.
    std::uint32_t pool_kernel = 13;
    std::uint32_t gqa_group_size = 1;
    /// When set, adjacency edges use this single step instead of the
    /// median over all decode steps.
    std::optional<std::uint32_t> adjacency_step;

    /// Throws std::invalid_argument on out-of-range values.
    void validate() const;
    std::uint32_t topk_for(std::uint32_t prefill_len) const;
};

struct HeadScores {
    HeadId head;
    double s_stable = 0.0;
    double s_sim = 0.0;
};

/// Averages each consecutive group of `group_size` query-head weight vectors.
std::vector<std::vector<double>> aggregate_gqa(std::span<const std::vector<double>> query_head_scores,
                                               std::uint32_t group_size);

/// Per-head scores, computed per trace and averaged across traces.
std::vector<HeadScores> profile(std::span<const AttentionTrace> traces, const ProfileConfig& config);

/// Undirected same-layer graph over heads.
class HeadGraph {
public:
    HeadGraph(std::uint32_t num_layers, std::uint32_t heads_per_layer);

    std::uint32_t num_layers() const noexcept { return num_layers_; }
    std::uint32_t heads_per_layer() const noexcept { return heads_per_layer_; }
    std::size_t num_heads() const noexcept { return adjacency_.size(); }

    /// Throws std::invalid_argument for self-loops, cross-layer or unknown heads.
    void add_edge(HeadId a, HeadId b);
    bool has_edge(HeadId a, HeadId b) const;
    std::span<const std::uint32_t> neighbors(std::size_t flat_head) const { return adjacency_.at(flat_head); }
    std::size_t edge_count() const noexcept;

    /// Copy without the edges touching heads whose `keep` flag is false.
    HeadGraph restricted_to(const std::vector<bool>& keep) const;

    std::size_t flat(HeadId id) const noexcept { return static_cast<std::size_t>(id.layer) * heads_per_layer_ + id.head; }
    HeadId head_id(std::size_t flat_head) const noexcept {
        return {static_cast<std::uint32_t>(flat_head / heads_per_layer_),
                static_cast<std::uint32_t>(flat_head % heads_per_layer_)};
    }

private:
    std::uint32_t num_layers_;
    std::uint32_t heads_per_layer_;
    std::vector<std::vector<std::uint32_t>> adjacency_;
};

/// Edge (h, h') iff both share a layer and their pairwise overlap, taken as
/// the median over decode steps (or at `single_step`) and averaged over the
/// tables, is at least tau_sim.
HeadGraph build_adjacency(std::span<const TopSetTable> tables, std::uint32_t num_layers,
                          std::uint32_t heads_per_layer, double tau_sim,
                          std::optional<std::uint32_t> single_step = std::nullopt);

struct Cluster {
    std::uint32_t id = 0;
    HeadId pivot;
    std::vector<HeadId> satellites;

    friend bool operator==(const Cluster&, const Cluster&) = default;
};

struct Clustering {
    std::vector<Cluster> clusters;
    std::vector<HeadId> unassigned;
};

/// Repeatedly promotes the unassigned head with the most unassigned
/// neighbours (lowest (layer, head) on ties) to pivot and absorbs those
/// neighbours as satellites, until no unassigned head has an unassigned
/// neighbour.
Clustering greedy_star_cluster(const HeadGraph& graph);

struct HeadProfile {
    HeadId head;
    double s_stable = 0.0;
    double s_sim = 0.0;
    Role role = Role::Anchor;
    std::optional<std::uint32_t> cluster_id;
};

struct TaxonomyResult {
    std::uint32_t num_layers = 0;
    std::uint32_t heads_per_layer = 0;
    double tau_stable = 0.5;
    double tau_sim = 0.5;
    /// Layer-major, one per head.
    std::vector<HeadProfile> heads;
    std::vector<Cluster> clusters;

    std::size_t num_heads() const noexcept { return heads.size(); }
    const HeadProfile& at(HeadId id) const { return heads.at(static_cast<std::size_t>(id.layer) * heads_per_layer + id.head); }
    std::size_t count(Role role) const noexcept;
    std::vector<HeadId> with_role(Role role) const;
    std::vector<HeadId> unique_heads() const;
    std::vector<HeadId> similar_heads() const;
    /// Volatile and pivot heads.
    std::vector<HeadId> full_heads() const;
    /// Anchor and satellite heads.
    std::vector<HeadId> compressed_heads() const;

    /// Throws std::invalid_argument when roles, clusters and dimensions disagree.
    void check_consistent() const;
};

/// Clustered heads become pivots and satellites; the rest are anchors when
/// s_stable >= tau_stable and volatile otherwise.
TaxonomyResult assign_roles(std::span<const HeadScores> scores, const Clustering& clusters, const ProfileConfig& config,
                            std::uint32_t num_layers, std::uint32_t heads_per_layer);

/// Scores, adjacency over similar heads, clustering and role assignment.
TaxonomyResult build_taxonomy(std::span<const AttentionTrace> traces, const ProfileConfig& config);

}  // namespace hcache
