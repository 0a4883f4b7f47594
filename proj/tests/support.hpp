// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "hcache/budget.hpp"
#include "hcache/engine.hpp"
#include "hcache/profiler.hpp"
#include "hcache/synth.hpp"
#include "hcache/trace.hpp"
#include "reference.hpp"

namespace testing_support {

/// Any valid trace: random dimensions up to the given bounds, random
/// distinct indices, nonincreasing scores and random padding suffixes.
hcache::AttentionTrace random_trace(std::uint64_t seed, std::uint32_t max_layers = 3, std::uint32_t max_heads = 4,
                                    std::uint32_t max_prefill = 64, std::uint32_t max_steps = 8);

/// One stable, one decaying and one two-member cluster per layer.
hcache::SynthSpec mixed_spec(std::uint64_t seed, std::uint32_t layers, std::uint32_t prefill, std::uint32_t steps);

/// Reference replay input mirroring what the engine receives.
ref::ReplayInput replay_input(const hcache::AttentionTrace& trace, const hcache::TaxonomyResult& taxonomy,
                              const hcache::BudgetPlan& plan, const hcache::EngineConfig& config);

/// Fresh directory removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);

inline std::filesystem::path source_dir() { return HCACHE_SOURCE_DIR; }

}  // namespace testing_support
