// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hcache/index_set.hpp"
#include "hcache/trace.hpp"

namespace hcache {

/// Indices of the k highest-scoring non-padding entries; ties go to the
/// lower index. Returns every candidate when fewer than k exist.
IndexSet top_k_indices(std::span<const TokenScore> entries, std::size_t k);

/// Dense variant. With pool_kernel > 0 (odd), ranks by a same-length 1-D
/// average pool with zero padding; ties go to the higher raw weight, then
/// the lower index.
IndexSet top_k_indices(std::span<const double> weights, std::size_t k, std::uint32_t pool_kernel = 0);

/// Same-length average pool with zero padding at both ends.
std::vector<double> average_pool(std::span<const double> weights, std::uint32_t kernel);

/// |a ∩ b| / min(|a|, |b|). Throws std::invalid_argument on an empty set.
double overlap_coefficient(const IndexSet& a, const IndexSet& b);

/// |a ∩ b| / normalizer, the fixed-length form used for drift monitoring.
double normalized_overlap(const IndexSet& a, const IndexSet& b, std::size_t normalizer);

/// Median; an even count averages the two central values. Throws on empty input.
double median(std::vector<double> values);

/// Median over decode steps of the overlap with the prefill set.
double stability_score(std::span<const IndexSet> decode_sets, const IndexSet& prefill_set);

/// Median over steps of the best overlap with any peer. `peer_sets[p][t]`
/// is peer p's set at step t. Returns nullopt when there are no peers.
std::optional<double> similarity_score(std::span<const IndexSet> head_sets,
                                       std::span<const std::vector<IndexSet>> peer_sets);

/// min(1000, ceil(L / 10)).
std::uint32_t default_profiling_topk(std::uint32_t prefill_len) noexcept;

/// Per-step, per-head top-k sets of a trace (step 0 is prefill).
class TopSetTable {
public:
    TopSetTable(std::size_t num_steps, std::size_t num_heads);

    std::size_t num_steps() const noexcept { return num_steps_; }
    std::size_t num_heads() const noexcept { return num_heads_; }

    const IndexSet& at(std::size_t step, std::size_t flat_head) const { return sets_.at(step * num_heads_ + flat_head); }
    IndexSet& at(std::size_t step, std::size_t flat_head) { return sets_.at(step * num_heads_ + flat_head); }

    /// Decode-step sets (steps 1..T) of one head.
    std::vector<IndexSet> decode_sets(std::size_t flat_head) const;

private:
    std::size_t num_steps_;
    std::size_t num_heads_;
    std::vector<IndexSet> sets_;
};

TopSetTable extract_top_sets(const AttentionTrace& trace, std::size_t k);

/// Stability score of every head (layer-major). Requires at least one decode step.
std::vector<double> stability_scores(const TopSetTable& table);

/// Similarity score of every head over decode steps; single-head layers score 0.
std::vector<double> similarity_scores(const TopSetTable& table, std::uint32_t heads_per_layer);

struct SquareMatrix {
    std::size_t n = 0;
    std::vector<double> values;

    explicit SquareMatrix(std::size_t size = 0) : n(size), values(size * size, 0.0) {}
    double& operator()(std::size_t i, std::size_t j) { return values[i * n + j]; }
    double operator()(std::size_t i, std::size_t j) const { return values[i * n + j]; }
};

/// Entry (i, j): mean over heads of layer i of the best overlap with a head
/// of layer j (excluding itself on the diagonal). A diagonal entry of a
/// single-head layer is 0.
SquareMatrix layer_similarity_matrix(const AttentionTrace& trace, std::size_t step, std::size_t k);

}  // namespace hcache
