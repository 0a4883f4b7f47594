// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "hcache/roles.hpp"
#include "hcache/trace.hpp"

namespace hcache {

/// Fixed hot set; each decode step swaps floor(noise_rate * hot_size) members
/// for transient outsiders.
struct StableArchetype {
    std::uint32_t hot_size = 32;
    double noise_rate = 0.0;
};

/// Hot set that permanently loses drift_rate * hot_size members per step
/// (fractional parts carry over) to positions outside the prefill set.
struct DecayingArchetype {
    std::uint32_t hot_size = 32;
    double drift_rate = 0.1;
};

/// Follows a shared cluster process; every step keeps at least
/// agreement_rate of the cluster's set and fills the rest privately.
struct ClusterMemberArchetype {
    std::uint32_t cluster_id = 0;
    double agreement_rate = 1.0;
};

using Archetype = std::variant<StableArchetype, DecayingArchetype, ClusterMemberArchetype>;

/// The per-step set shared by a cluster's members. Evolves like a decaying head.
struct ClusterProcess {
    std::uint32_t hot_size = 32;
    double drift_rate = 0.0;
};

/// At `step`, each listed head (or the cluster of a listed cluster member)
/// replaces round(fraction * hot_size) of its hot set with positions outside
/// both its current and its prefill set.
struct DriftEvent {
    std::uint32_t step = 1;
    std::vector<HeadId> heads;
    double fraction = 0.5;
};

struct SynthSpec {
    std::string model_name = "synthetic";
    std::uint32_t num_layers = 1;
    std::uint32_t heads_per_layer = 1;
    std::uint32_t prefill_len = 64;
    std::uint32_t decode_steps = 16;
    std::uint32_t trace_topk = 32;
    std::uint64_t bytes_per_kv_entry = 512;
    /// One archetype per head, layer-major.
    std::vector<Archetype> heads;
    std::vector<ClusterProcess> clusters;
    std::vector<DriftEvent> drift_events;
    std::uint64_t seed = 0;
};

/// Role a head is expected to receive at the default 0.5 thresholds.
struct RoleLabel {
    Role role = Role::Anchor;
    std::optional<std::uint32_t> cluster_id;

    friend bool operator==(const RoleLabel&, const RoleLabel&) = default;
};

struct SyntheticTrace {
    AttentionTrace trace;
    /// Layer-major, one per head.
    std::vector<RoleLabel> labels;
};

/// Throws std::invalid_argument describing the first problem found.
void validate(const SynthSpec& spec);

/// Deterministic in (spec, seed). Hot-set members receive normalized
/// geometric scores (ratio 0.9) in a freshly shuffled rank order each step;
/// cluster members share their cluster's rank order.
SyntheticTrace generate_synthetic(const SynthSpec& spec);

inline constexpr double kGeometricRatio = 0.9;

}  // namespace hcache
