// SPDX-License-Identifier: Apache-2.0

#include "hcache/cli.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hcache/atomic_file.hpp"
#include "hcache/config.hpp"

namespace hcache {

namespace fs = std::filesystem;

namespace {

constexpr const char* kReportColumns =
    "Output columns\n"
    "  timeseries.csv: step, policy, recall, gpu_entries, bytes_in_flight, retrieval_flag,\n"
    "    budget_entries, protected_entries, decode_entries, cumulative_bytes, min_head_recall\n"
    "    (recall is attention-mass recall over each step's recorded top-K entries;\n"
    "     gpu_entries = budget_entries + protected_entries + decode_entries)\n"
    "  comparison.csv: policy, budget_ceiling, mean_recall, min_recall, peak_budget_entries,\n"
    "    peak_total_entries, total_bytes, retrieval_events, hidden_transfers,\n"
    "    exposed_transfer_steps; then a blank line and pairwise rows\n"
    "    a, b, d_mean_recall, d_min_recall, d_peak_budget_entries, d_total_bytes,\n"
    "    d_retrieval_events (each delta is a minus b)\n"
    "  role_counts.csv: role, count\n"
    "  heads.csv: layer, head, role, cluster, s_stable, s_sim\n"
    "  layer_similarity.csv: layer, layer_0 .. layer_{n-1}\n"
    "Exit codes: 0 success, 2 config error, 3 input-format error, 4 infeasible budget\n";

struct Options {
    std::string config;
    std::vector<std::string> traces;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> policies;
    std::optional<double> rho;
    std::optional<double> tau_stable;
    std::optional<double> tau_sim;
    std::optional<double> tau_drift;
    std::optional<std::uint32_t> window;
    std::optional<std::uint32_t> profiling_topk;
    std::string taxonomy;
    std::vector<std::string> reports;
    std::uint32_t count = 1;
    std::optional<std::uint32_t> similarity_step;
};

/// Failure carrying its exit code and error kind.
struct CliFailure {
    int code;
    std::string kind;
    std::string message;
};

void add_common(CLI::App* cmd, Options& o) {
    cmd->add_option("--config", o.config, "JSON run configuration");
    cmd->add_option("--trace", o.traces, "HCTRACE1 trace file (repeatable)");
    cmd->add_option("--seed", o.seed, "Random seed for synthetic traces");
    cmd->add_option("--rho", o.rho, "Memory budget fraction");
    cmd->add_option("--tau-stable", o.tau_stable, "Stability threshold");
    cmd->add_option("--tau-sim", o.tau_sim, "Similarity threshold");
    cmd->add_option("--tau-drift", o.tau_drift, "Drift threshold (defaults to tau-stable)");
    cmd->add_option("--window", o.window, "Drift window W in steps");
    cmd->add_option("--profiling-topk", o.profiling_topk, "Top-k used for profiling sets");
}

RunConfig build_config(const Options& o) {
    RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
    if (!o.traces.empty()) c.traces.assign(o.traces.begin(), o.traces.end());
    if (!o.out.empty()) c.out = o.out;
    if (o.seed) c.seed = o.seed;
    if (!o.policies.empty()) c.policies = o.policies;
    if (o.rho) c.budget.rho = *o.rho;
    if (o.tau_stable) c.profile.tau_stable = *o.tau_stable;
    if (o.tau_sim) c.profile.tau_sim = *o.tau_sim;
    if (o.tau_drift) {
        c.engine.tau_drift = *o.tau_drift;
        c.tau_drift_set = true;
    }
    if (o.window) c.engine.window = *o.window;
    if (o.profiling_topk) c.profile.profiling_topk = *o.profiling_topk;
    c.finalize();
    return c;
}

/// Traces named by the config, or the configured synthetic trace when none are named.
std::vector<AttentionTrace> load_traces(const RunConfig& c) {
    std::vector<AttentionTrace> traces;
    for (const auto& p : c.traces) traces.push_back(read_trace_file(p));
    if (traces.empty() && c.synthetic) traces.push_back(generate_synthetic(*c.synthetic).trace);
    if (traces.empty()) throw ConfigError("no traces: pass --trace or configure a synthetic spec");
    return traces;
}

void write_json(const fs::path& path, const Json& doc) { write_file_atomic(path, doc.dump(2) + "\n"); }

Json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw TraceError(TraceErrorKind::io, "cannot open '" + path.string() + "'");
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw FormatError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

TaxonomyResult taxonomy_for(const Options& o, const RunConfig& c, const std::vector<AttentionTrace>& traces) {
    if (!o.taxonomy.empty()) return taxonomy_from_json(read_json_file(o.taxonomy));
    return build_taxonomy(traces, c.profile);
}

void print_role_counts(std::ostream& out, const TaxonomyResult& t) {
    out << "role,count\n";
    for (Role r : kAllRoles) out << to_string(r) << ',' << t.count(r) << '\n';
}

int cmd_gen_trace(const Options& o, std::ostream& out) {
    RunConfig c = build_config(o);
    if (!c.synthetic) throw ConfigError("gen-trace needs a 'synthetic' section in the config");
    if (o.count < 1) throw ConfigError("--count must be >= 1");
    const fs::path target = o.out.empty() ? c.out / "trace.hctr" : fs::path(o.out);
    if (target.has_parent_path()) ensure_dir(target.parent_path());
    SynthSpec spec = *c.synthetic;
    const std::uint64_t base_seed = spec.seed;
    out << "path,fingerprint\n";
    for (std::uint32_t i = 0; i < o.count; ++i) {
        spec.seed = base_seed + i;
        fs::path path = target;
        if (o.count > 1) {
            path = target.parent_path() / (target.stem().string() + "-" + std::to_string(i) + target.extension().string());
        }
        const auto synthetic = generate_synthetic(spec);
        write_trace_file(synthetic.trace, path);
        write_json(path.string() + ".labels.json", labels_to_json(synthetic));
        out << path.string() << ',' << trace_fingerprint(synthetic.trace) << '\n';
    }
    return kExitOk;
}

int cmd_profile(const Options& o, std::ostream& out) {
    RunConfig c = build_config(o);
    const auto traces = load_traces(c);
    const auto taxonomy = build_taxonomy(traces, c.profile);
    ensure_dir(c.out);
    write_json(c.out / "taxonomy.json", to_json(taxonomy));
    write_file_atomic(c.out / "role_counts.csv", role_counts_csv(taxonomy));
    write_file_atomic(c.out / "heads.csv", heads_csv(taxonomy));
    if (o.similarity_step) {
        const auto k = c.profile.topk_for(traces.front().manifest.prefill_len);
        SquareMatrix mean(traces.front().manifest.num_layers);
        for (const auto& t : traces) {
            const auto m = layer_similarity_matrix(t, *o.similarity_step, k);
            for (std::size_t i = 0; i < mean.values.size(); ++i) mean.values[i] += m.values[i] / traces.size();
        }
        write_file_atomic(c.out / "layer_similarity.csv", matrix_csv(mean));
    }
    print_role_counts(out, taxonomy);
    return kExitOk;
}

int cmd_plan(const Options& o, std::ostream& out) {
    RunConfig c = build_config(o);
    const auto traces = load_traces(c);
    const auto taxonomy = taxonomy_for(o, c, traces);
    const auto plan = make_plan(taxonomy, c.budget, traces.front().manifest.prefill_len);
    ensure_dir(c.out);
    write_json(c.out / "taxonomy.json", to_json(taxonomy));
    write_json(c.out / "plan.json", to_json(plan));
    out << "base_length,base_length_int,num_full,num_comp,planned_entries,budget_ceiling\n"
        << format_double(plan.base_length) << ',' << plan.base_length_int << ',' << plan.num_full << ','
        << plan.num_comp << ',' << plan.planned_entries() << ',' << format_double(plan.budget_ceiling()) << '\n';
    return kExitOk;
}

int cmd_simulate(const Options& o, std::ostream& out) {
    RunConfig c = build_config(o);
    const auto traces = load_traces(c);
    if (traces.size() != 1) throw ConfigError("simulate takes exactly one trace");
    const auto& trace = traces.front();
    const auto& m = trace.manifest;

    std::vector<PolicySpec> policies;
    bool needs_taxonomy = false;
    for (const auto& name : c.policies) {
        auto p = parse_policy(name, c.budget.rho, m.prefill_len, c.engine.sink_count);
        if (!p) throw ConfigError("unknown policy '" + name + "'");
        needs_taxonomy = needs_taxonomy || std::holds_alternative<HeteroCachePolicy>(*p);
        policies.push_back(*p);
    }
    std::optional<TaxonomyResult> taxonomy;
    if (needs_taxonomy) {
        taxonomy = taxonomy_for(o, c, traces);
        make_plan(*taxonomy, c.budget, m.prefill_len);
    }
    const auto shared = c.shared();
    const auto reports = run_policies(trace, policies, shared, taxonomy ? &*taxonomy : nullptr);

    ensure_dir(c.out);
    write_json(c.out / "config.json", to_json(c));
    if (taxonomy) {
        write_json(c.out / "taxonomy.json", to_json(*taxonomy));
        write_json(c.out / "plan.json", to_json(make_plan(*taxonomy, c.budget, m.prefill_len)));
    }
    for (const auto& r : reports) write_json(c.out / ("report_" + r.policy + ".json"), to_json(r));
    write_file_atomic(c.out / "timeseries.csv", timeseries_csv(reports));

    out << "policy,mean_recall,min_recall,peak_budget_entries,total_bytes,retrieval_events\n";
    for (const auto& r : reports) {
        const auto s = r.summary();
        out << r.policy << ',' << format_double(s.mean_recall) << ',' << format_double(s.min_recall) << ','
            << s.peak_budget_entries << ',' << s.total_bytes << ',' << s.retrieval_events << '\n';
    }
    return kExitOk;
}

int cmd_compare(const Options& o, std::ostream& out) {
    if (o.reports.size() < 2) throw ConfigError("compare needs at least two --report files");
    std::vector<SimulationReport> reports;
    for (const auto& p : o.reports) reports.push_back(report_from_json(read_json_file(p)));
    const auto table = compare(reports);
    const fs::path dir = o.out.empty() ? fs::path("out") : fs::path(o.out);
    ensure_dir(dir);
    write_json(dir / "comparison.json", to_json(table));
    const auto csv = comparison_csv(table);
    write_file_atomic(dir / "comparison.csv", csv);
    out << csv;
    return kExitOk;
}

int dispatch(const std::function<int()>& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        throw CliFailure{kExitConfig, "config", e.what()};
    } catch (const BudgetMismatch& e) {
        throw CliFailure{kExitConfig, "budget_mismatch", e.what()};
    } catch (const InfeasibleBudget& e) {
        throw CliFailure{kExitInfeasible, "infeasible_budget", e.what()};
    } catch (const TraceError& e) {
        throw CliFailure{kExitInput, std::string("trace_") + to_string(e.kind()), e.what()};
    } catch (const FormatError& e) {
        throw CliFailure{kExitInput, "format", e.what()};
    } catch (const TraceMismatch& e) {
        throw CliFailure{kExitInput, "trace_mismatch", e.what()};
    } catch (const std::invalid_argument& e) {
        throw CliFailure{kExitInput, "input", e.what()};
    }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"HeteroCache trace-driven KV-cache simulator"};
    app.require_subcommand(1);
    app.footer(kReportColumns);
    Options o;

    auto* gen = app.add_subcommand("gen-trace", "Generate synthetic traces plus ground-truth labels");
    add_common(gen, o);
    gen->add_option("--out", o.out, "Output trace file (labels go to <out>.labels.json)");
    gen->add_option("--count", o.count, "Number of traces; seeds seed..seed+count-1");

    auto* prof = app.add_subcommand("profile", "Score heads and assign roles");
    add_common(prof, o);
    prof->add_option("--out", o.out, "Output directory");
    prof->add_option("--similarity-step", o.similarity_step, "Also write the layer-similarity matrix at this step");

    auto* plan = app.add_subcommand("plan", "Compute per-head cache lengths");
    add_common(plan, o);
    plan->add_option("--out", o.out, "Output directory");
    plan->add_option("--taxonomy", o.taxonomy, "Use this taxonomy JSON instead of profiling");

    auto* sim = app.add_subcommand("simulate", "Replay a trace under each policy");
    add_common(sim, o);
    sim->add_option("--out", o.out, "Output directory");
    sim->add_option("--taxonomy", o.taxonomy, "Use this taxonomy JSON instead of profiling");
    sim->add_option("--policy", o.policies,
                    "Policy (repeatable): full_oracle, heterocache, no_allocation, no_retrieval, static_topk, sink_window");

    auto* cmp = app.add_subcommand("compare", "Compare simulation reports of one trace");
    cmp->add_option("--report", o.reports, "Simulation report JSON (repeatable)");
    cmp->add_option("--out", o.out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (gen->parsed()) return dispatch([&] { return cmd_gen_trace(o, out); });
        if (prof->parsed()) return dispatch([&] { return cmd_profile(o, out); });
        if (plan->parsed()) return dispatch([&] { return cmd_plan(o, out); });
        if (sim->parsed()) return dispatch([&] { return cmd_simulate(o, out); });
        return dispatch([&] { return cmd_compare(o, out); });
    } catch (const CliFailure& f) {
        err << Json{{"error", f.kind}, {"message", f.message}}.dump() << '\n';
        return f.code;
    } catch (const std::exception& e) {
        err << Json{{"error", "internal"}, {"message", e.what()}}.dump() << '\n';
        return 1;
    }
}

}  // namespace hcache
