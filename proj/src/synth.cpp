// SPDX-License-Identifier: Apache-2.0

#include "hcache/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>

#include "hcache/rng.hpp"

namespace hcache {

namespace {

using Positions = std::vector<std::uint32_t>;

void require(bool condition, const std::string& message) {
    if (!condition) throw std::invalid_argument("invalid synthetic spec: " + message);
}

std::string head_name(std::size_t flat) { return "head " + std::to_string(flat); }

/// Draws `count` distinct positions in [0, seq_len) that are not blocked.
Positions draw_fresh(Rng& rng, std::uint32_t seq_len, const std::vector<char>& blocked, std::size_t count,
                     const char* purpose) {
    Positions allowed;
    allowed.reserve(seq_len);
    for (std::uint32_t p = 0; p < seq_len; ++p) {
        if (!blocked[p]) allowed.push_back(p);
    }
    if (allowed.size() < count) {
        throw std::invalid_argument("invalid synthetic spec: context of " + std::to_string(seq_len) +
                                    " tokens too small to draw " + std::to_string(count) + " fresh positions for " +
                                    purpose);
    }
    for (std::size_t i = 0; i < count; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(allowed.size() - i));
        std::swap(allowed[i], allowed[j]);
    }
    allowed.resize(count);
    return allowed;
}

std::vector<char> mask_of(std::uint32_t seq_len, std::initializer_list<const Positions*> sets) {
    std::vector<char> mask(seq_len, 0);
    for (const Positions* s : sets) {
        for (auto p : *s) {
            if (p < seq_len) mask[p] = 1;
        }
    }
    return mask;
}

/// Replaces `count` slots of `members`, chosen at random from `candidates`,
/// with fresh positions outside `members` and `also_blocked`.
void replace_slots(Rng& rng, Positions& members, std::vector<std::size_t> candidates, std::size_t count,
                   const Positions& also_blocked, std::uint32_t seq_len, const char* purpose) {
    count = std::min(count, candidates.size());
    if (count == 0) return;
    for (std::size_t i = 0; i < count; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(candidates.size() - i));
        std::swap(candidates[i], candidates[j]);
    }
    const auto blocked = mask_of(seq_len, {&members, &also_blocked});
    const Positions fresh = draw_fresh(rng, seq_len, blocked, count, purpose);
    for (std::size_t i = 0; i < count; ++i) {
        members[candidates[i]] = fresh[i];
    }
}

void replace_members(Rng& rng, Positions& members, std::size_t count, const Positions& also_blocked,
                     std::uint32_t seq_len, const char* purpose) {
    std::vector<std::size_t> slots(members.size());
    std::iota(slots.begin(), slots.end(), std::size_t{0});
    replace_slots(rng, members, std::move(slots), count, also_blocked, seq_len, purpose);
}

struct EvolvingSet {
    Positions members;
    Positions prefill;
    double carry = 0.0;

    void shift(Rng& rng, std::size_t count, std::uint32_t seq_len, const char* purpose) {
        replace_members(rng, members, count, prefill, seq_len, purpose);
    }

    void decay(Rng& rng, double rate, std::uint32_t seq_len, const char* purpose) {
        carry += rate * static_cast<double>(members.size());
        const auto count = static_cast<std::size_t>(std::floor(carry));
        carry -= static_cast<double>(count);
        // Members still from the prefill set go first so each step's loss is exact.
        std::vector<std::size_t> original;
        std::vector<std::size_t> later;
        for (std::size_t i = 0; i < members.size(); ++i) {
            (std::find(prefill.begin(), prefill.end(), members[i]) != prefill.end() ? original : later).push_back(i);
        }
        const std::size_t from_original = std::min(count, original.size());
        replace_slots(rng, members, std::move(original), from_original, prefill, seq_len, purpose);
        replace_slots(rng, members, std::move(later), count - from_original, prefill, seq_len, purpose);
    }
};

std::size_t rounded_count(double fraction, std::size_t size) {
    return std::min(size, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(size) + 0.5)));
}

std::size_t floor_count(double fraction, std::size_t size) {
    return std::min(size, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(size))));
}

void write_ranked(const Positions& ranked, std::uint32_t trace_topk, std::vector<TokenScore>& out) {
    std::vector<double> weights(ranked.size());
    double w = 1.0;
    double total = 0.0;
    for (auto& x : weights) {
        x = w;
        total += w;
        w *= kGeometricRatio;
    }
    for (std::uint32_t r = 0; r < trace_topk; ++r) {
        if (r < ranked.size()) {
            out.push_back({ranked[r], static_cast<float>(weights[r] / total)});
        } else {
            out.push_back({kPaddingIndex, 0.0f});
        }
    }
}

std::size_t archetype_hot_size(const SynthSpec& spec, const Archetype& a) {
    if (const auto* s = std::get_if<StableArchetype>(&a)) return s->hot_size;
    if (const auto* d = std::get_if<DecayingArchetype>(&a)) return d->hot_size;
    return spec.clusters.at(std::get<ClusterMemberArchetype>(a).cluster_id).hot_size;
}

}  // namespace

void validate(const SynthSpec& spec) {
    require(spec.num_layers >= 1, "num_layers must be >= 1");
    require(spec.heads_per_layer >= 1, "heads_per_layer must be >= 1");
    require(spec.prefill_len >= 1, "prefill_len must be >= 1");
    require(spec.trace_topk >= 1, "trace_topk must be >= 1");
    require(static_cast<std::uint64_t>(spec.trace_topk) <=
                static_cast<std::uint64_t>(spec.prefill_len) + spec.decode_steps,
            "trace_topk must not exceed prefill_len + decode_steps");
    const std::size_t n = static_cast<std::size_t>(spec.num_layers) * spec.heads_per_layer;
    require(spec.heads.size() == n, "expected " + std::to_string(n) + " head archetypes, found " +
                                        std::to_string(spec.heads.size()));
    auto rate_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
    for (std::size_t c = 0; c < spec.clusters.size(); ++c) {
        const auto& cp = spec.clusters[c];
        require(cp.hot_size >= 1 && cp.hot_size <= spec.prefill_len,
                "cluster " + std::to_string(c) + " hot_size must be in [1, prefill_len]");
        require(rate_ok(cp.drift_rate), "cluster " + std::to_string(c) + " drift_rate must be in [0, 1]");
    }
    std::map<std::uint32_t, std::vector<std::size_t>> members;
    for (std::size_t h = 0; h < n; ++h) {
        const auto& a = spec.heads[h];
        if (const auto* s = std::get_if<StableArchetype>(&a)) {
            require(s->hot_size >= 1 && s->hot_size <= spec.prefill_len,
                    head_name(h) + " hot_size must be in [1, prefill_len]");
            require(rate_ok(s->noise_rate), head_name(h) + " noise_rate must be in [0, 1]");
        } else if (const auto* d = std::get_if<DecayingArchetype>(&a)) {
            require(d->hot_size >= 1 && d->hot_size <= spec.prefill_len,
                    head_name(h) + " hot_size must be in [1, prefill_len]");
            require(rate_ok(d->drift_rate), head_name(h) + " drift_rate must be in [0, 1]");
        } else {
            const auto& m = std::get<ClusterMemberArchetype>(a);
            require(m.cluster_id < spec.clusters.size(), head_name(h) + " refers to an unknown cluster");
            require(rate_ok(m.agreement_rate), head_name(h) + " agreement_rate must be in [0, 1]");
            members[m.cluster_id].push_back(h);
        }
    }
    for (std::size_t c = 0; c < spec.clusters.size(); ++c) {
        const auto it = members.find(static_cast<std::uint32_t>(c));
        require(it != members.end() && it->second.size() >= 2,
                "cluster " + std::to_string(c) + " needs at least two member heads");
        const auto layer = it->second.front() / spec.heads_per_layer;
        for (auto h : it->second) {
            require(h / spec.heads_per_layer == layer,
                    "cluster " + std::to_string(c) + " members must share one layer");
        }
    }
    for (const auto& ev : spec.drift_events) {
        require(ev.step >= 1 && ev.step <= spec.decode_steps, "drift event step must be in [1, decode_steps]");
        require(rate_ok(ev.fraction), "drift event fraction must be in [0, 1]");
        for (const auto& id : ev.heads) {
            require(id.layer < spec.num_layers && id.head < spec.heads_per_layer,
                    "drift event refers to an unknown head");
        }
    }
}

SyntheticTrace generate_synthetic(const SynthSpec& spec) {
    validate(spec);
    Rng rng(spec.seed);
    const std::size_t n = spec.heads.size();
    const std::uint32_t L = spec.prefill_len;

    std::vector<EvolvingSet> clusters(spec.clusters.size());
    std::vector<EvolvingSet> heads(n);
    const Positions none;
    const std::vector<char> nothing_blocked(L, 0);

    for (std::size_t c = 0; c < clusters.size(); ++c) {
        clusters[c].members = draw_fresh(rng, L, nothing_blocked, spec.clusters[c].hot_size, "a cluster hot set");
        clusters[c].prefill = clusters[c].members;
    }
    for (std::size_t h = 0; h < n; ++h) {
        if (std::holds_alternative<ClusterMemberArchetype>(spec.heads[h])) continue;
        heads[h].members = draw_fresh(rng, L, nothing_blocked, archetype_hot_size(spec, spec.heads[h]), "a hot set");
        heads[h].prefill = heads[h].members;
    }

    SyntheticTrace out;
    auto& trace = out.trace;
    trace.manifest = {spec.model_name, spec.num_layers, spec.heads_per_layer, spec.prefill_len,
                      spec.decode_steps, spec.trace_topk, 0, spec.bytes_per_kv_entry};
    trace.steps.reserve(static_cast<std::size_t>(spec.decode_steps) + 1);

    for (std::uint32_t s = 0; s <= spec.decode_steps; ++s) {
        const std::uint32_t seq_len = L + s;
        if (s > 0) {
            for (const auto& ev : spec.drift_events) {
                if (ev.step != s) continue;
                std::vector<char> cluster_shifted(clusters.size(), 0);
                for (const auto& id : ev.heads) {
                    const auto flat = static_cast<std::size_t>(id.layer) * spec.heads_per_layer + id.head;
                    if (const auto* m = std::get_if<ClusterMemberArchetype>(&spec.heads[flat])) {
                        if (cluster_shifted[m->cluster_id]) continue;
                        cluster_shifted[m->cluster_id] = 1;
                        auto& cs = clusters[m->cluster_id];
                        cs.shift(rng, rounded_count(ev.fraction, cs.members.size()), seq_len, "a drift event");
                    } else {
                        auto& hs = heads[flat];
                        hs.shift(rng, rounded_count(ev.fraction, hs.members.size()), seq_len, "a drift event");
                    }
                }
            }
            for (std::size_t c = 0; c < clusters.size(); ++c) {
                clusters[c].decay(rng, spec.clusters[c].drift_rate, seq_len, "cluster drift");
            }
            for (std::size_t h = 0; h < n; ++h) {
                if (const auto* d = std::get_if<DecayingArchetype>(&spec.heads[h])) {
                    heads[h].decay(rng, d->drift_rate, seq_len, "a decaying head");
                }
            }
        }

        std::vector<Positions> cluster_ranked(clusters.size());
        for (std::size_t c = 0; c < clusters.size(); ++c) {
            cluster_ranked[c] = clusters[c].members;
            rng.shuffle(std::span<std::uint32_t>(cluster_ranked[c]));
        }

        StepAttention step;
        step.step_index = s;
        step.entries.reserve(n * spec.trace_topk);
        for (std::size_t h = 0; h < n; ++h) {
            Positions ranked;
            if (const auto* st = std::get_if<StableArchetype>(&spec.heads[h])) {
                ranked = heads[h].members;
                if (s > 0) {
                    replace_members(rng, ranked, floor_count(st->noise_rate, ranked.size()), none, seq_len,
                                    "stable-head noise");
                }
                rng.shuffle(std::span<std::uint32_t>(ranked));
            } else if (std::holds_alternative<DecayingArchetype>(spec.heads[h])) {
                ranked = heads[h].members;
                rng.shuffle(std::span<std::uint32_t>(ranked));
            } else {
                const auto& m = std::get<ClusterMemberArchetype>(spec.heads[h]);
                ranked = cluster_ranked[m.cluster_id];
                replace_members(rng, ranked, floor_count(1.0 - m.agreement_rate, ranked.size()), none, seq_len,
                                "cluster-member private tokens");
            }
            write_ranked(ranked, spec.trace_topk, step.entries);
        }
        trace.steps.push_back(std::move(step));
    }

    out.labels.resize(n);
    std::vector<std::optional<std::size_t>> first_member(spec.clusters.size());
    for (std::size_t h = 0; h < n; ++h) {
        const auto& a = spec.heads[h];
        if (const auto* st = std::get_if<StableArchetype>(&a)) {
            const double expected = 1.0 - static_cast<double>(floor_count(st->noise_rate, st->hot_size)) / st->hot_size;
            out.labels[h].role = expected >= 0.5 ? Role::Anchor : Role::Volatile;
        } else if (std::holds_alternative<DecayingArchetype>(a)) {
            out.labels[h].role = Role::Volatile;
        } else {
            const auto cid = std::get<ClusterMemberArchetype>(a).cluster_id;
            out.labels[h].cluster_id = cid;
            if (!first_member[cid]) {
                first_member[cid] = h;
                out.labels[h].role = Role::Pivot;
            } else {
                out.labels[h].role = Role::Satellite;
            }
        }
    }
    return out;
}

}  // namespace hcache
