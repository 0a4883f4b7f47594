// SPDX-License-Identifier: Apache-2.0

#include "hcache/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace hcache {

IndexSet top_k_indices(std::span<const TokenScore> entries, std::size_t k) {
    if (k == 0) throw std::invalid_argument("top_k_indices: k must be >= 1");
    std::vector<TokenScore> valid;
    valid.reserve(entries.size());
    for (const auto& e : entries) {
        if (!e.is_padding()) valid.push_back(e);
    }
    const std::size_t take = std::min(k, valid.size());
    std::partial_sort(valid.begin(), valid.begin() + static_cast<std::ptrdiff_t>(take), valid.end(),
                      [](const TokenScore& a, const TokenScore& b) {
                          if (a.score != b.score) return a.score > b.score;
                          return a.index < b.index;
                      });
    std::vector<std::uint32_t> picked;
    picked.reserve(take);
    for (std::size_t i = 0; i < take; ++i) picked.push_back(valid[i].index);
    return IndexSet::from_unsorted(std::move(picked));
}

std::vector<double> average_pool(std::span<const double> weights, std::uint32_t kernel) {
    if (kernel == 0 || kernel % 2 == 0) throw std::invalid_argument("average_pool: kernel must be odd");
    const auto n = static_cast<std::ptrdiff_t>(weights.size());
    const auto radius = static_cast<std::ptrdiff_t>(kernel / 2);
    std::vector<double> pooled(weights.size(), 0.0);
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, i - radius); j <= std::min(n - 1, i + radius); ++j) {
            sum += weights[static_cast<std::size_t>(j)];
        }
        pooled[static_cast<std::size_t>(i)] = sum / static_cast<double>(kernel);
    }
    return pooled;
}

IndexSet top_k_indices(std::span<const double> weights, std::size_t k, std::uint32_t pool_kernel) {
    if (k == 0) throw std::invalid_argument("top_k_indices: k must be >= 1");
    if (pool_kernel != 0 && pool_kernel % 2 == 0) {
        throw std::invalid_argument("top_k_indices: pool kernel must be 0 or odd");
    }
    const std::vector<double> pooled =
        pool_kernel == 0 ? std::vector<double>(weights.begin(), weights.end()) : average_pool(weights, pool_kernel);
    std::vector<std::uint32_t> order(weights.size());
    std::iota(order.begin(), order.end(), 0u);
    const std::size_t take = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](std::uint32_t a, std::uint32_t b) {
                          if (pooled[a] != pooled[b]) return pooled[a] > pooled[b];
                          if (weights[a] != weights[b]) return weights[a] > weights[b];
                          return a < b;
                      });
    order.resize(take);
    return IndexSet::from_unsorted(std::move(order));
}

double overlap_coefficient(const IndexSet& a, const IndexSet& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("overlap_coefficient: empty index set");
    return static_cast<double>(a.intersection_size(b)) / static_cast<double>(std::min(a.size(), b.size()));
}

double normalized_overlap(const IndexSet& a, const IndexSet& b, std::size_t normalizer) {
    if (normalizer == 0) throw std::invalid_argument("normalized_overlap: normalizer must be >= 1");
    return static_cast<double>(a.intersection_size(b)) / static_cast<double>(normalizer);
}

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of an empty sequence");
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double upper = values[mid];
    if (values.size() % 2 == 1) return upper;
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return (lower + upper) / 2.0;
}

double stability_score(std::span<const IndexSet> decode_sets, const IndexSet& prefill_set) {
    if (decode_sets.empty()) throw std::invalid_argument("stability_score: no decode steps");
    std::vector<double> overlaps;
    overlaps.reserve(decode_sets.size());
    for (const auto& s : decode_sets) overlaps.push_back(overlap_coefficient(s, prefill_set));
    return median(std::move(overlaps));
}

std::optional<double> similarity_score(std::span<const IndexSet> head_sets,
                                       std::span<const std::vector<IndexSet>> peer_sets) {
    if (head_sets.empty()) throw std::invalid_argument("similarity_score: no steps");
    if (peer_sets.empty()) return std::nullopt;
    std::vector<double> best(head_sets.size(), 0.0);
    for (const auto& peer : peer_sets) {
        if (peer.size() != head_sets.size()) {
            throw std::invalid_argument("similarity_score: peer step count differs from head step count");
        }
        for (std::size_t t = 0; t < head_sets.size(); ++t) {
            best[t] = std::max(best[t], overlap_coefficient(head_sets[t], peer[t]));
        }
    }
    return median(std::move(best));
}

std::uint32_t default_profiling_topk(std::uint32_t prefill_len) noexcept {
    const std::uint32_t tenth = prefill_len / 10 + (prefill_len % 10 != 0 ? 1 : 0);
    return std::max<std::uint32_t>(1, std::min<std::uint32_t>(1000, tenth));
}

TopSetTable::TopSetTable(std::size_t num_steps, std::size_t num_heads)
    : num_steps_(num_steps), num_heads_(num_heads), sets_(num_steps * num_heads) {}

std::vector<IndexSet> TopSetTable::decode_sets(std::size_t flat_head) const {
    std::vector<IndexSet> out;
    out.reserve(num_steps_ > 0 ? num_steps_ - 1 : 0);
    for (std::size_t t = 1; t < num_steps_; ++t) out.push_back(at(t, flat_head));
    return out;
}

TopSetTable extract_top_sets(const AttentionTrace& trace, std::size_t k) {
    TopSetTable table(trace.steps.size(), trace.manifest.num_heads());
    for (std::size_t s = 0; s < trace.steps.size(); ++s) {
        for (std::size_t h = 0; h < table.num_heads(); ++h) {
            table.at(s, h) = top_k_indices(trace.head_entries(s, h), k);
        }
    }
    return table;
}

std::vector<double> stability_scores(const TopSetTable& table) {
    std::vector<double> out(table.num_heads());
    for (std::size_t h = 0; h < table.num_heads(); ++h) {
        const auto decode = table.decode_sets(h);
        out[h] = stability_score(decode, table.at(0, h));
    }
    return out;
}

std::vector<double> similarity_scores(const TopSetTable& table, std::uint32_t heads_per_layer) {
    if (heads_per_layer == 0 || table.num_heads() % heads_per_layer != 0) {
        throw std::invalid_argument("similarity_scores: head count is not a multiple of heads_per_layer");
    }
    std::vector<std::vector<IndexSet>> decode(table.num_heads());
    for (std::size_t h = 0; h < table.num_heads(); ++h) decode[h] = table.decode_sets(h);
    std::vector<double> out(table.num_heads(), 0.0);
    for (std::size_t h = 0; h < table.num_heads(); ++h) {
        const std::size_t first = h - h % heads_per_layer;
        std::vector<std::vector<IndexSet>> peers;
        for (std::size_t p = first; p < first + heads_per_layer; ++p) {
            if (p != h) peers.push_back(decode[p]);
        }
        out[h] = similarity_score(decode[h], peers).value_or(0.0);
    }
    return out;
}

SquareMatrix layer_similarity_matrix(const AttentionTrace& trace, std::size_t step, std::size_t k) {
    if (step >= trace.steps.size()) {
        throw std::out_of_range("layer_similarity_matrix: step " + std::to_string(step) + " out of range");
    }
    if (k == 0) throw std::invalid_argument("layer_similarity_matrix: k must be >= 1");
    const auto& m = trace.manifest;
    std::vector<IndexSet> sets(m.num_heads());
    for (std::size_t h = 0; h < sets.size(); ++h) sets[h] = top_k_indices(trace.head_entries(step, h), k);

    SquareMatrix out(m.num_layers);
    const std::size_t hpl = m.heads_per_layer;
    for (std::size_t i = 0; i < m.num_layers; ++i) {
        for (std::size_t j = 0; j < m.num_layers; ++j) {
            double total = 0.0;
            for (std::size_t a = i * hpl; a < (i + 1) * hpl; ++a) {
                double best = 0.0;
                for (std::size_t b = j * hpl; b < (j + 1) * hpl; ++b) {
                    if (a == b) continue;
                    best = std::max(best, overlap_coefficient(sets[a], sets[b]));
                }
                total += best;
            }
            out(i, j) = total / static_cast<double>(hpl);
        }
    }
    return out;
}

}  // namespace hcache
