// SPDX-License-Identifier: Apache-2.0

#include "hcache/config.hpp"

#include <fstream>
#include <set>

namespace hcache {

namespace {

void reject_unknown(const Json& obj, const char* section, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError(std::string(section) + " must be an object");
    const std::set<std::string> keys(allowed.begin(), allowed.end());
    for (const auto& [k, v] : obj.items()) {
        if (!keys.count(k)) throw ConfigError(std::string("unknown key '") + k + "' in " + section);
    }
}

template <class T>
void read_opt(const Json& obj, const char* key, T& target) {
    if (obj.contains(key) && !obj.at(key).is_null()) target = obj.at(key).get<T>();
}

template <class T>
void read_opt(const Json& obj, const char* key, std::optional<T>& target) {
    if (obj.contains(key) && !obj.at(key).is_null()) target = obj.at(key).get<T>();
}

}  // namespace

void RunConfig::finalize() {
    if (!tau_drift_set) engine.tau_drift = profile.tau_stable;
    if (synthetic && seed) synthetic->seed = *seed;
    try {
        profile.validate();
        budget.validate();
        engine.validate();
        if (synthetic) validate(*synthetic);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    for (const auto& p : policies) {
        if (!parse_policy(p, budget.rho, 1)) throw ConfigError("unknown policy '" + p + "'");
    }
}

RunConfig run_config_from_json(const Json& doc, const std::filesystem::path& base_dir) {
    RunConfig c;
    try {
        reject_unknown(doc, "config",
                       {"synthetic", "profile", "budget", "engine", "policies", "traces", "out", "seed"});
        if (doc.contains("synthetic")) c.synthetic = synth_spec_from_json(doc.at("synthetic"));
        if (doc.contains("profile")) {
            const auto& p = doc.at("profile");
            reject_unknown(p, "profile",
                           {"tau_stable", "tau_sim", "profiling_topk", "pool_kernel", "gqa_group_size", "adjacency_step"});
            read_opt(p, "tau_stable", c.profile.tau_stable);
            read_opt(p, "tau_sim", c.profile.tau_sim);
            read_opt(p, "profiling_topk", c.profile.profiling_topk);
            read_opt(p, "pool_kernel", c.profile.pool_kernel);
            read_opt(p, "gqa_group_size", c.profile.gqa_group_size);
            read_opt(p, "adjacency_step", c.profile.adjacency_step);
        }
        if (doc.contains("budget")) {
            const auto& b = doc.at("budget");
            reject_unknown(b, "budget", {"rho", "epsilon", "rounding", "min_length"});
            read_opt(b, "rho", c.budget.rho);
            read_opt(b, "epsilon", c.budget.epsilon);
            read_opt(b, "min_length", c.budget.min_length);
            if (b.contains("rounding")) {
                const auto name = b.at("rounding").get<std::string>();
                auto r = parse_rounding(name);
                if (!r) throw ConfigError("unknown rounding '" + name + "'");
                c.budget.rounding = *r;
            }
        }
        if (doc.contains("engine")) {
            const auto& e = doc.at("engine");
            reject_unknown(e, "engine",
                           {"tau_drift", "window", "transfer_bandwidth", "update_delay_steps", "per_step_evaluation",
                            "sink_count", "recency_window"});
            if (e.contains("tau_drift") && !e.at("tau_drift").is_null()) {
                c.engine.tau_drift = e.at("tau_drift").get<double>();
                c.tau_drift_set = true;
            }
            read_opt(e, "window", c.engine.window);
            read_opt(e, "transfer_bandwidth", c.engine.transfer_bandwidth);
            read_opt(e, "update_delay_steps", c.engine.update_delay_steps);
            read_opt(e, "per_step_evaluation", c.engine.per_step_evaluation);
            read_opt(e, "sink_count", c.engine.sink_count);
            read_opt(e, "recency_window", c.engine.recency_window);
        }
        if (doc.contains("policies")) c.policies = doc.at("policies").get<std::vector<std::string>>();
        if (doc.contains("traces")) {
            for (const auto& t : doc.at("traces")) c.traces.push_back(base_dir / t.get<std::string>());
        }
        if (doc.contains("out")) c.out = base_dir / doc.at("out").get<std::string>();
        read_opt(doc, "seed", c.seed);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const FormatError& e) {
        throw ConfigError(e.what());
    }
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return run_config_from_json(doc, path.parent_path());
}

Json to_json(const RunConfig& c) {
    Json doc;
    if (c.synthetic) doc["synthetic"] = to_json(*c.synthetic);
    doc["profile"] = {{"tau_stable", c.profile.tau_stable},
                      {"tau_sim", c.profile.tau_sim},
                      {"profiling_topk", c.profile.profiling_topk ? Json(*c.profile.profiling_topk) : Json(nullptr)},
                      {"pool_kernel", c.profile.pool_kernel},
                      {"gqa_group_size", c.profile.gqa_group_size},
                      {"adjacency_step", c.profile.adjacency_step ? Json(*c.profile.adjacency_step) : Json(nullptr)}};
    doc["budget"] = {{"rho", c.budget.rho},
                     {"epsilon", c.budget.epsilon},
                     {"rounding", std::string(to_string(c.budget.rounding))},
                     {"min_length", c.budget.min_length}};
    doc["engine"] = {{"tau_drift", c.engine.tau_drift},
                     {"window", c.engine.window},
                     {"transfer_bandwidth", c.engine.transfer_bandwidth},
                     {"update_delay_steps", c.engine.update_delay_steps},
                     {"per_step_evaluation", c.engine.per_step_evaluation},
                     {"sink_count", c.engine.sink_count},
                     {"recency_window", c.engine.recency_window}};
    doc["policies"] = c.policies;
    Json traces = Json::array();
    for (const auto& t : c.traces) traces.push_back(t.generic_string());
    doc["traces"] = traces;
    doc["out"] = c.out.generic_string();
    doc["seed"] = c.seed ? Json(*c.seed) : Json(nullptr);
    return doc;
}

}  // namespace hcache
