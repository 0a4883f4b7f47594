// SPDX-License-Identifier: Apache-2.0

#include "hcache/serialize.hpp"

#include <charconv>
#include <sstream>

namespace hcache {

namespace {

Json head_json(HeadId id) { return Json::array({id.layer, id.head}); }

HeadId head_from(const Json& j) {
    if (!j.is_array() || j.size() != 2) throw FormatError("head id must be a [layer, head] pair");
    return {j.at(0).get<std::uint32_t>(), j.at(1).get<std::uint32_t>()};
}

Json set_json(const IndexSet& s) { return Json(std::vector<std::uint32_t>(s.begin(), s.end())); }

IndexSet set_from(const Json& j) { return IndexSet::from_unsorted(j.get<std::vector<std::uint32_t>>()); }

Role role_from(const Json& j) {
    const auto name = j.get<std::string>();
    auto r = parse_role(name);
    if (!r) throw FormatError("unknown role '" + name + "'");
    return *r;
}

/// Runs a parser, turning JSON access failures into FormatError.
template <class F>
auto parse_guarded(const char* what, F&& f) {
    try {
        return f();
    } catch (const Json::exception& e) {
        throw FormatError(std::string(what) + ": " + e.what());
    }
}

}  // namespace

std::string format_double(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

Json to_json(const TaxonomyResult& t) {
    Json heads = Json::array();
    for (const auto& h : t.heads) {
        heads.push_back({{"layer", h.head.layer},
                         {"head", h.head.head},
                         {"s_stable", h.s_stable},
                         {"s_sim", h.s_sim},
                         {"role", std::string(to_string(h.role))},
                         {"cluster", h.cluster_id ? Json(*h.cluster_id) : Json(nullptr)}});
    }
    Json clusters = Json::array();
    for (const auto& c : t.clusters) {
        Json sats = Json::array();
        for (const auto& s : c.satellites) sats.push_back(head_json(s));
        clusters.push_back({{"id", c.id}, {"pivot", head_json(c.pivot)}, {"satellites", sats}});
    }
    Json counts = Json::object();
    for (Role r : kAllRoles) counts[std::string(to_string(r))] = t.count(r);
    return {{"num_layers", t.num_layers},
            {"heads_per_layer", t.heads_per_layer},
            {"tau_stable", t.tau_stable},
            {"tau_sim", t.tau_sim},
            {"role_counts", counts},
            {"heads", heads},
            {"clusters", clusters}};
}

TaxonomyResult taxonomy_from_json(const Json& doc) {
    auto t = parse_guarded("taxonomy", [&] {
        TaxonomyResult t;
        t.num_layers = doc.at("num_layers").get<std::uint32_t>();
        t.heads_per_layer = doc.at("heads_per_layer").get<std::uint32_t>();
        t.tau_stable = doc.at("tau_stable").get<double>();
        t.tau_sim = doc.at("tau_sim").get<double>();
        for (const auto& h : doc.at("heads")) {
            HeadProfile p;
            p.head = {h.at("layer").get<std::uint32_t>(), h.at("head").get<std::uint32_t>()};
            p.s_stable = h.at("s_stable").get<double>();
            p.s_sim = h.at("s_sim").get<double>();
            p.role = role_from(h.at("role"));
            if (!h.at("cluster").is_null()) p.cluster_id = h.at("cluster").get<std::uint32_t>();
            t.heads.push_back(p);
        }
        for (const auto& c : doc.at("clusters")) {
            Cluster cl;
            cl.id = c.at("id").get<std::uint32_t>();
            cl.pivot = head_from(c.at("pivot"));
            for (const auto& s : c.at("satellites")) cl.satellites.push_back(head_from(s));
            t.clusters.push_back(std::move(cl));
        }
        return t;
    });
    try {
        t.check_consistent();
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("taxonomy: ") + e.what());
    }
    return t;
}

Json to_json(const BudgetPlan& p) {
    Json allocs = Json::array();
    for (const auto& a : p.allocations) {
        allocs.push_back({{"layer", a.head.layer},
                          {"head", a.head.head},
                          {"s_stable", a.s_stable},
                          {"weight", a.weight},
                          {"share", a.share},
                          {"length", a.length}});
    }
    return {{"rho", p.rho},
            {"prefill_len", p.prefill_len},
            {"num_heads", p.num_heads},
            {"num_full", p.num_full},
            {"num_comp", p.num_comp},
            {"base_length", p.base_length},
            {"base_length_int", p.base_length_int},
            {"budget_ceiling", p.budget_ceiling()},
            {"planned_entries", p.planned_entries()},
            {"clamped", p.clamped},
            {"allocations", allocs}};
}

BudgetPlan plan_from_json(const Json& doc) {
    return parse_guarded("budget plan", [&] {
        BudgetPlan p;
        p.rho = doc.at("rho").get<double>();
        p.prefill_len = doc.at("prefill_len").get<std::uint32_t>();
        p.num_heads = doc.at("num_heads").get<std::size_t>();
        p.num_full = doc.at("num_full").get<std::size_t>();
        p.num_comp = doc.at("num_comp").get<std::size_t>();
        p.base_length = doc.at("base_length").get<double>();
        p.base_length_int = doc.at("base_length_int").get<std::uint32_t>();
        p.clamped = doc.at("clamped").get<bool>();
        for (const auto& a : doc.at("allocations")) {
            HeadAllocation h;
            h.head = {a.at("layer").get<std::uint32_t>(), a.at("head").get<std::uint32_t>()};
            h.s_stable = a.at("s_stable").get<double>();
            h.weight = a.at("weight").get<double>();
            h.share = a.at("share").get<double>();
            h.length = a.at("length").get<std::uint32_t>();
            p.allocations.push_back(h);
        }
        if (p.num_full + p.num_comp != p.num_heads || p.allocations.size() != p.num_comp) {
            throw FormatError("budget plan: head counts are inconsistent");
        }
        return p;
    });
}

Json to_json(const RetrievalEvent& e) {
    Json fetches = Json::array();
    for (const auto& f : e.fetches) fetches.push_back({{"satellite", head_json(f.satellite)}, {"indices", set_json(f.indices)}});
    return {{"trigger_step", e.trigger_step},
            {"pivot", head_json(e.pivot)},
            {"window_median", e.window_median},
            {"fetches", fetches},
            {"bytes", e.bytes},
            {"completion_step", e.completion_step}};
}

Json to_json(const SimulationReport& r) {
    Json steps = Json::array();
    for (const auto& s : r.steps) {
        steps.push_back({{"step", s.step},
                         {"recall", s.recall},
                         {"min_head_recall", s.min_head_recall},
                         {"budget_entries", s.budget_entries},
                         {"protected_entries", s.protected_entries},
                         {"decode_entries", s.decode_entries},
                         {"bytes_in_flight", s.bytes_in_flight},
                         {"cumulative_bytes", s.cumulative_bytes},
                         {"retrieval_flag", s.retrieval_flag}});
    }
    Json events = Json::array();
    for (const auto& e : r.events) events.push_back(to_json(e));
    const auto s = r.summary();
    return {{"policy", r.policy},
            {"recall_metric", "attention-mass recall over recorded top-K entries"},
            {"trace_fingerprint", r.trace_fingerprint},
            {"prefill_len", r.prefill_len},
            {"decode_steps", r.decode_steps},
            {"num_heads", r.num_heads},
            {"bytes_per_kv_entry", r.bytes_per_kv_entry},
            {"budget_ceiling", r.budget_ceiling},
            {"ceiling_slack", r.ceiling_slack},
            {"prefill_budget_entries", r.prefill_budget_entries},
            {"prefill_protected_entries", r.prefill_protected_entries},
            {"update_delay_steps", r.update_delay_steps},
            {"summary",
             {{"mean_recall", s.mean_recall},
              {"min_recall", s.min_recall},
              {"peak_budget_entries", s.peak_budget_entries},
              {"peak_total_entries", s.peak_total_entries},
              {"total_bytes", s.total_bytes},
              {"retrieval_events", s.retrieval_events},
              {"hidden_transfers", s.hidden_transfers},
              {"exposed_transfer_steps", s.exposed_transfer_steps}}},
            {"steps", steps},
            {"events", events}};
}

SimulationReport report_from_json(const Json& doc) {
    return parse_guarded("simulation report", [&] {
        SimulationReport r;
        r.policy = doc.at("policy").get<std::string>();
        r.trace_fingerprint = doc.at("trace_fingerprint").get<std::string>();
        r.prefill_len = doc.at("prefill_len").get<std::uint32_t>();
        r.decode_steps = doc.at("decode_steps").get<std::uint32_t>();
        r.num_heads = doc.at("num_heads").get<std::uint64_t>();
        r.bytes_per_kv_entry = doc.at("bytes_per_kv_entry").get<std::uint64_t>();
        r.budget_ceiling = doc.at("budget_ceiling").get<double>();
        r.ceiling_slack = doc.at("ceiling_slack").get<std::uint64_t>();
        r.prefill_budget_entries = doc.at("prefill_budget_entries").get<std::uint64_t>();
        r.prefill_protected_entries = doc.at("prefill_protected_entries").get<std::uint64_t>();
        r.update_delay_steps = doc.at("update_delay_steps").get<std::uint32_t>();
        for (const auto& s : doc.at("steps")) {
            StepRecord rec;
            rec.step = s.at("step").get<std::uint32_t>();
            rec.recall = s.at("recall").get<double>();
            rec.min_head_recall = s.at("min_head_recall").get<double>();
            rec.budget_entries = s.at("budget_entries").get<std::uint64_t>();
            rec.protected_entries = s.at("protected_entries").get<std::uint64_t>();
            rec.decode_entries = s.at("decode_entries").get<std::uint64_t>();
            rec.bytes_in_flight = s.at("bytes_in_flight").get<std::uint64_t>();
            rec.cumulative_bytes = s.at("cumulative_bytes").get<std::uint64_t>();
            rec.retrieval_flag = s.at("retrieval_flag").get<bool>();
            r.steps.push_back(rec);
        }
        for (const auto& e : doc.at("events")) {
            RetrievalEvent ev;
            ev.trigger_step = e.at("trigger_step").get<std::uint32_t>();
            ev.pivot = head_from(e.at("pivot"));
            ev.window_median = e.at("window_median").get<double>();
            for (const auto& f : e.at("fetches")) ev.fetches.push_back({head_from(f.at("satellite")), set_from(f.at("indices"))});
            ev.bytes = e.at("bytes").get<std::uint64_t>();
            ev.completion_step = e.at("completion_step").get<std::uint32_t>();
            r.events.push_back(std::move(ev));
        }
        return r;
    });
}

Json to_json(const ComparisonTable& t) {
    Json rows = Json::array();
    for (const auto& r : t.rows) {
        rows.push_back({{"policy", r.policy},
                        {"budget_ceiling", r.budget_ceiling},
                        {"mean_recall", r.summary.mean_recall},
                        {"min_recall", r.summary.min_recall},
                        {"peak_budget_entries", r.summary.peak_budget_entries},
                        {"peak_total_entries", r.summary.peak_total_entries},
                        {"total_bytes", r.summary.total_bytes},
                        {"retrieval_events", r.summary.retrieval_events},
                        {"hidden_transfers", r.summary.hidden_transfers},
                        {"exposed_transfer_steps", r.summary.exposed_transfer_steps}});
    }
    Json deltas = Json::array();
    for (const auto& d : t.deltas) {
        deltas.push_back({{"a", d.a},
                          {"b", d.b},
                          {"d_mean_recall", d.mean_recall},
                          {"d_min_recall", d.min_recall},
                          {"d_peak_budget_entries", d.peak_budget_entries},
                          {"d_total_bytes", d.total_bytes},
                          {"d_retrieval_events", d.retrieval_events}});
    }
    return {{"trace_fingerprint", t.trace_fingerprint}, {"rows", rows}, {"deltas", deltas}};
}

Json to_json(const SynthSpec& s) {
    Json heads = Json::array();
    for (const auto& a : s.heads) {
        if (const auto* st = std::get_if<StableArchetype>(&a)) {
            heads.push_back({{"type", "stable"}, {"hot_size", st->hot_size}, {"noise_rate", st->noise_rate}});
        } else if (const auto* d = std::get_if<DecayingArchetype>(&a)) {
            heads.push_back({{"type", "decaying"}, {"hot_size", d->hot_size}, {"drift_rate", d->drift_rate}});
        } else {
            const auto& c = std::get<ClusterMemberArchetype>(a);
            heads.push_back({{"type", "cluster_member"}, {"cluster_id", c.cluster_id}, {"agreement_rate", c.agreement_rate}});
        }
    }
    Json clusters = Json::array();
    for (const auto& c : s.clusters) clusters.push_back({{"hot_size", c.hot_size}, {"drift_rate", c.drift_rate}});
    Json events = Json::array();
    for (const auto& e : s.drift_events) {
        Json hs = Json::array();
        for (const auto& h : e.heads) hs.push_back(head_json(h));
        events.push_back({{"step", e.step}, {"heads", hs}, {"fraction", e.fraction}});
    }
    return {{"model_name", s.model_name},
            {"num_layers", s.num_layers},
            {"heads_per_layer", s.heads_per_layer},
            {"prefill_len", s.prefill_len},
            {"decode_steps", s.decode_steps},
            {"trace_topk", s.trace_topk},
            {"bytes_per_kv_entry", s.bytes_per_kv_entry},
            {"heads", heads},
            {"clusters", clusters},
            {"drift_events", events},
            {"seed", s.seed}};
}

SynthSpec synth_spec_from_json(const Json& doc) {
    return parse_guarded("synthetic spec", [&] {
        SynthSpec s;
        s.model_name = doc.value("model_name", s.model_name);
        s.num_layers = doc.at("num_layers").get<std::uint32_t>();
        s.heads_per_layer = doc.at("heads_per_layer").get<std::uint32_t>();
        s.prefill_len = doc.at("prefill_len").get<std::uint32_t>();
        s.decode_steps = doc.at("decode_steps").get<std::uint32_t>();
        s.trace_topk = doc.at("trace_topk").get<std::uint32_t>();
        s.bytes_per_kv_entry = doc.value("bytes_per_kv_entry", s.bytes_per_kv_entry);
        s.seed = doc.value("seed", s.seed);
        for (const auto& h : doc.at("heads")) {
            const auto type = h.at("type").get<std::string>();
            if (type == "stable") {
                s.heads.emplace_back(StableArchetype{h.at("hot_size").get<std::uint32_t>(), h.value("noise_rate", 0.0)});
            } else if (type == "decaying") {
                s.heads.emplace_back(DecayingArchetype{h.at("hot_size").get<std::uint32_t>(), h.at("drift_rate").get<double>()});
            } else if (type == "cluster_member") {
                s.heads.emplace_back(
                    ClusterMemberArchetype{h.at("cluster_id").get<std::uint32_t>(), h.value("agreement_rate", 1.0)});
            } else {
                throw FormatError("synthetic spec: unknown archetype '" + type + "'");
            }
        }
        if (doc.contains("clusters")) {
            for (const auto& c : doc.at("clusters")) {
                s.clusters.push_back({c.at("hot_size").get<std::uint32_t>(), c.value("drift_rate", 0.0)});
            }
        }
        if (doc.contains("drift_events")) {
            for (const auto& e : doc.at("drift_events")) {
                DriftEvent ev;
                ev.step = e.at("step").get<std::uint32_t>();
                for (const auto& h : e.at("heads")) ev.heads.push_back(head_from(h));
                ev.fraction = e.at("fraction").get<double>();
                s.drift_events.push_back(std::move(ev));
            }
        }
        return s;
    });
}

Json labels_to_json(const SyntheticTrace& synthetic) {
    const auto& m = synthetic.trace.manifest;
    Json heads = Json::array();
    for (std::size_t h = 0; h < synthetic.labels.size(); ++h) {
        const auto id = m.head_id(h);
        const auto& l = synthetic.labels[h];
        heads.push_back({{"layer", id.layer},
                         {"head", id.head},
                         {"role", std::string(to_string(l.role))},
                         {"cluster", l.cluster_id ? Json(*l.cluster_id) : Json(nullptr)}});
    }
    Json counts = Json::object();
    for (Role r : kAllRoles) {
        counts[std::string(to_string(r))] =
            std::count_if(synthetic.labels.begin(), synthetic.labels.end(), [r](const RoleLabel& l) { return l.role == r; });
    }
    return {{"trace_fingerprint", trace_fingerprint(synthetic.trace)},
            {"num_layers", m.num_layers},
            {"heads_per_layer", m.heads_per_layer},
            {"role_counts", counts},
            {"heads", heads}};
}

std::string timeseries_csv(std::span<const SimulationReport> reports) {
    std::ostringstream out;
    out << "step,policy,recall,gpu_entries,bytes_in_flight,retrieval_flag,budget_entries,protected_entries,"
           "decode_entries,cumulative_bytes,min_head_recall\n";
    for (const auto& r : reports) {
        for (const auto& s : r.steps) {
            out << s.step << ',' << r.policy << ',' << format_double(s.recall) << ',' << s.total_entries() << ','
                << s.bytes_in_flight << ',' << (s.retrieval_flag ? 1 : 0) << ',' << s.budget_entries << ','
                << s.protected_entries << ',' << s.decode_entries << ',' << s.cumulative_bytes << ','
                << format_double(s.min_head_recall) << '\n';
        }
    }
    return out.str();
}

std::string comparison_csv(const ComparisonTable& t) {
    std::ostringstream out;
    out << "policy,budget_ceiling,mean_recall,min_recall,peak_budget_entries,peak_total_entries,total_bytes,"
           "retrieval_events,hidden_transfers,exposed_transfer_steps\n";
    for (const auto& r : t.rows) {
        const auto& s = r.summary;
        out << r.policy << ',' << format_double(r.budget_ceiling) << ',' << format_double(s.mean_recall) << ','
            << format_double(s.min_recall) << ',' << s.peak_budget_entries << ',' << s.peak_total_entries << ','
            << s.total_bytes << ',' << s.retrieval_events << ',' << s.hidden_transfers << ','
            << s.exposed_transfer_steps << '\n';
    }
    out << "\na,b,d_mean_recall,d_min_recall,d_peak_budget_entries,d_total_bytes,d_retrieval_events\n";
    for (const auto& d : t.deltas) {
        out << d.a << ',' << d.b << ',' << format_double(d.mean_recall) << ',' << format_double(d.min_recall) << ','
            << format_double(d.peak_budget_entries) << ',' << format_double(d.total_bytes) << ','
            << format_double(d.retrieval_events) << '\n';
    }
    return out.str();
}

std::string role_counts_csv(const TaxonomyResult& taxonomy) {
    std::ostringstream out;
    out << "role,count\n";
    for (Role r : kAllRoles) out << to_string(r) << ',' << taxonomy.count(r) << '\n';
    return out.str();
}

std::string matrix_csv(const SquareMatrix& matrix) {
    std::ostringstream out;
    out << "layer";
    for (std::size_t j = 0; j < matrix.n; ++j) out << ",layer_" << j;
    out << '\n';
    for (std::size_t i = 0; i < matrix.n; ++i) {
        out << i;
        for (std::size_t j = 0; j < matrix.n; ++j) out << ',' << format_double(matrix(i, j));
        out << '\n';
    }
    return out.str();
}

std::string heads_csv(const TaxonomyResult& taxonomy) {
    std::ostringstream out;
    out << "layer,head,role,cluster,s_stable,s_sim\n";
    for (const auto& h : taxonomy.heads) {
        out << h.head.layer << ',' << h.head.head << ',' << to_string(h.role) << ',';
        if (h.cluster_id) out << *h.cluster_id;
        out << ',' << format_double(h.s_stable) << ',' << format_double(h.s_sim) << '\n';
    }
    return out.str();
}

}  // namespace hcache
