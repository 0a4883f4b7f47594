// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hcache/budget.hpp"
#include "hcache/engine.hpp"
#include "hcache/harness.hpp"
#include "hcache/profiler.hpp"
#include "hcache/serialize.hpp"
#include "hcache/synth.hpp"

namespace hcache {

/// Missing, unreadable or out-of-range configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Every knob of one experiment. Relative paths resolve against the
/// directory of the config file.
struct RunConfig {
    std::optional<SynthSpec> synthetic;
    ProfileConfig profile;
    BudgetConfig budget;
    EngineConfig engine;
    /// When false, tau_drift follows profile.tau_stable.
    bool tau_drift_set = false;
    std::vector<std::string> policies = {"full_oracle", "heterocache", "no_allocation",
                                         "no_retrieval", "static_topk", "sink_window"};
    std::vector<std::filesystem::path> traces;
    std::filesystem::path out = "out";
    std::optional<std::uint64_t> seed;

    /// Applies the tau_drift default and the seed override, then range-checks
    /// everything. Throws ConfigError.
    void finalize();

    SharedConfig shared() const { return {profile, budget, engine}; }
};

/// Parses a config document. Throws ConfigError on unknown keys or bad values.
RunConfig run_config_from_json(const Json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Resolved configuration, suitable for writing next to the outputs.
Json to_json(const RunConfig& config);

}  // namespace hcache
