#include "attackcast/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "attackcast/graph_io.hpp"

namespace attackcast {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

// Runs fn(i) for i in [0, n) on up to `threads` workers.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

std::string join(const std::vector<std::string>& v, char sep = ';') {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += sep;
        out += v[i];
    }
    return out;
}

bool has_edge(const AttackGraph& g, const NodeId& src, const NodeId& dst, EventType ev) {
    return std::any_of(g.edges().begin(), g.edges().end(),
                       [&](const Edge& e) { return e.src == src && e.dst == dst && e.event == ev; });
}

// ---------------------------------------------------------------------------
// Single perturbation steps. Each returns false when no site exists.

bool add_random_edge(AttackGraph& g, std::mt19937_64& rng) {
    struct Option {
        std::size_t src, dst;
        EventType ev;
    };
    std::vector<Option> options;
    for (std::size_t a = 0; a < g.node_count(); ++a) {
        for (std::size_t b = 0; b < g.node_count(); ++b) {
            if (a == b) continue;
            for (EventType ev : kAllEvents) {
                if (validate_edge(g.node(a).attr, ev, g.node(b).attr) && !has_edge(g, g.node(a).id, g.node(b).id, ev)) {
                    options.push_back({a, b, ev});
                }
            }
        }
    }
    if (options.empty()) return false;
    const Option o = options[pick(rng, options.size())];
    g.add_edge(g.node(o.src).id, g.node(o.dst).id, o.ev);
    return true;
}

bool delete_random_edge(AttackGraph& g, std::mt19937_64& rng) {
    if (g.edge_count() == 0) return false;
    g.remove_edge(pick(rng, g.edge_count()));
    return true;
}

bool add_random_node(AttackGraph& g, std::mt19937_64& rng) {
    if (g.empty()) return false;
    const std::size_t anchor = pick(rng, g.node_count());
    const EntityAttr a = g.node(anchor).attr;
    struct Option {
        EntityAttr attr;
        bool anchor_is_subject;
        EventType ev;
    };
    std::map<EntityAttr, std::vector<Option>> by_attr;
    for (EntityAttr b : kAllAttrs) {
        for (EventType ev : kAllEvents) {
            if (validate_edge(a, ev, b)) by_attr[b].push_back({b, true, ev});
            if (validate_edge(b, ev, a)) by_attr[b].push_back({b, false, ev});
        }
    }
    auto it = by_attr.begin();
    std::advance(it, static_cast<long>(pick(rng, by_attr.size())));
    const Option o = it->second[pick(rng, it->second.size())];
    const NodeId id = g.add_node(o.attr, "added");
    const NodeId& anchor_id = g.node(anchor).id;
    if (o.anchor_is_subject) g.add_edge(anchor_id, id, o.ev);
    else g.add_edge(id, anchor_id, o.ev);
    return true;
}

bool delete_random_node(AttackGraph& g, std::mt19937_64& rng) {
    if (g.node_count() <= 2) return false;
    g.remove_node(g.node(pick(rng, g.node_count())).id);
    return true;
}

// Relay nodes inserted by earlier splits are listed in `relays`; their edges
// are not split again so every chain stays two hops long.
bool split_edge(AttackGraph& g, std::mt19937_64& rng, const DeliveryRules& rules, std::set<NodeId>& relays) {
    struct Option {
        std::size_t edge;
        EventType hop;
        EntityAttr middle;
    };
    std::vector<std::vector<Option>> by_edge;
    for (std::size_t i = 0; i < g.edge_count(); ++i) {
        const Edge& e = g.edges()[i];
        if (relays.count(e.src) || relays.count(e.dst)) continue;
        const EntityAttr u = g.node(e.src).attr;
        const EntityAttr v = g.node(e.dst).attr;
        std::vector<Option> opts;
        for (EntityAttr w : kAllAttrs) {
            if (!validate_edge(w, e.event, v)) continue;
            for (EventType hop : kAllEvents) {
                if (rules.admits(u, hop, w) && validate_edge(u, hop, w)) opts.push_back({i, hop, w});
            }
        }
        if (!opts.empty()) by_edge.push_back(std::move(opts));
    }
    if (by_edge.empty()) return false;
    const auto& site = by_edge[pick(rng, by_edge.size())];
    const Option o = site[pick(rng, site.size())];

    AttackGraph out(g.role(), g.provenance());
    for (const Node& n : g.nodes()) out.add_node(n.attr, n.label, n.id, n.forecast);
    const NodeId w = out.add_node(o.middle, "relay");
    relays.insert(w);
    std::uint64_t seq = 0;
    for (std::size_t i = 0; i < g.edge_count(); ++i) {
        const Edge& e = g.edges()[i];
        if (i == o.edge) {
            out.add_edge(e.src, w, o.hop, seq++);
            out.add_edge(w, e.dst, e.event, seq++);
        } else {
            out.add_edge(e.src, e.dst, e.event, seq++, e.forecast);
        }
    }
    g = std::move(out);
    return true;
}

// Bypasses a node w entered by exactly one delivery edge a -> w: every edge
// w -e-> v becomes a -e-> v, which the chain a -> w -e-> v is equivalent to.
bool collapse_chain(AttackGraph& g, std::mt19937_64& rng, const DeliveryRules& rules) {
    if (g.node_count() <= 2) return false;
    std::vector<NodeId> sites;
    for (std::size_t w = 0; w < g.node_count(); ++w) {
        const NodeId& wid = g.node(w).id;
        std::vector<const Edge*> in, out;
        for (const Edge& e : g.edges()) {
            if (e.dst == wid) in.push_back(&e);
            if (e.src == wid) out.push_back(&e);
        }
        if (in.size() != 1 || out.empty()) continue;
        const Edge& a = *in[0];
        const EntityAttr from = g.node(a.src).attr;
        if (!rules.admits(from, a.event, g.node(w).attr)) continue;
        const bool bypassable = std::all_of(out.begin(), out.end(), [&](const Edge* b) {
            return b->dst != a.src && validate_edge(from, b->event, g.node(b->dst).attr);
        });
        if (bypassable) sites.push_back(wid);
    }
    if (sites.empty()) return false;
    const NodeId w = sites[pick(rng, sites.size())];
    NodeId from;
    std::vector<Edge> bypass;
    for (const Edge& e : g.edges()) {
        if (e.dst == w) from = e.src;
        if (e.src == w) bypass.push_back(e);
    }
    g.remove_node(w);
    for (const Edge& b : bypass) {
        if (!has_edge(g, from, b.dst, b.event)) g.add_edge(from, b.dst, b.event, b.seq);
    }
    return true;
}

}  // namespace

std::string_view to_string(PerturbKind k) {
    switch (k) {
        case PerturbKind::EdgeAdd: return "edge-add";
        case PerturbKind::EdgeDel: return "edge-del";
        case PerturbKind::NodeAddRandom: return "node-add-random";
        case PerturbKind::NodeDelRandom: return "node-del-random";
        case PerturbKind::NodeAddMhes: return "node-add-mhes";
        case PerturbKind::NodeDelMhes: return "node-del-mhes";
    }
    return "?";
}

std::optional<PerturbKind> parse_perturb_kind(std::string_view s) {
    for (PerturbKind k : kAllPerturbKinds) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

bool is_addition(PerturbKind k) {
    return k == PerturbKind::EdgeAdd || k == PerturbKind::NodeAddRandom || k == PerturbKind::NodeAddMhes;
}
bool is_edge_kind(PerturbKind k) { return k == PerturbKind::EdgeAdd || k == PerturbKind::EdgeDel; }
bool is_mhes_kind(PerturbKind k) { return k == PerturbKind::NodeAddMhes || k == PerturbKind::NodeDelMhes; }

PerturbResult perturb(const AttackGraph& g, const PerturbationSpec& spec, const DeliveryRules& rules) {
    if (spec.count < 0) throw InvalidInput("perturbation count must be non-negative");
    g.validate();
    PerturbResult r{g, 0, false, {}};
    std::mt19937_64 rng(spec.seed);
    std::set<NodeId> relays;
    for (int i = 0; i < spec.count; ++i) {
        bool ok = false;
        switch (spec.kind) {
            case PerturbKind::EdgeAdd: ok = add_random_edge(r.graph, rng); break;
            case PerturbKind::EdgeDel: ok = delete_random_edge(r.graph, rng); break;
            case PerturbKind::NodeAddRandom: ok = add_random_node(r.graph, rng); break;
            case PerturbKind::NodeDelRandom: ok = delete_random_node(r.graph, rng); break;
            case PerturbKind::NodeAddMhes: ok = split_edge(r.graph, rng, rules, relays); break;
            case PerturbKind::NodeDelMhes: ok = collapse_chain(r.graph, rng, rules); break;
        }
        if (!ok) {
            r.incomplete = true;
            r.diagnostics.push_back(std::string(to_string(spec.kind)) + ": no applicable site after " +
                                    std::to_string(r.applied) + " of " + std::to_string(spec.count) + " operations");
            break;
        }
        ++r.applied;
    }
    if (r.applied > 0) r.graph.reorder_chronologically();
    return r;
}

double structural_score(const AttackGraph& original, const AttackGraph& changed, const AlignmentConfig& cfg,
                        const DeliveryRules& rules) {
    if (changed.empty()) return 0.0;
    return align(original, changed, cfg, rules).score;
}

const PerturbationCell& PerturbationTable::at(PerturbKind k, int count) const {
    for (const PerturbationCell& c : cells) {
        if (c.kind == k && c.count == count) return c;
    }
    throw InvalidInput("no perturbation cell for " + std::string(to_string(k)) + " at count " + std::to_string(count));
}

double PerturbationTable::mean(const std::vector<PerturbKind>& kinds, int count) const {
    double sum = 0.0;
    int n = 0;
    for (PerturbKind k : kinds) {
        const double v = at(k, count).mean_score;
        if (std::isnan(v)) continue;
        sum += v;
        ++n;
    }
    return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / n;
}

PerturbationTable perturbation_study(const std::vector<AttackGraph>& graphs, const PerturbationStudyConfig& cfg,
                                     const DeliveryRules& rules) {
    if (cfg.max_count < 0) throw InvalidInput("max_count must be non-negative");
    cfg.alignment.validate();
    const std::size_t nk = std::size(kAllPerturbKinds);
    const std::size_t nc = static_cast<std::size_t>(cfg.max_count) + 1;

    struct Partial {
        std::vector<double> sum;
        std::vector<std::size_t> samples, skipped;
    };
    std::vector<Partial> per_graph(graphs.size());
    parallel_for(graphs.size(), cfg.threads, [&](std::size_t gi) {
        Partial& p = per_graph[gi];
        p.sum.assign(nk * nc, 0.0);
        p.samples.assign(nk * nc, 0);
        p.skipped.assign(nk * nc, 0);
        for (std::size_t k = 0; k < nk; ++k) {
            for (std::size_t c = 0; c < nc; ++c) {
                for (std::uint64_t seed : cfg.seeds) {
                    const std::uint64_t s = splitmix(splitmix(seed) ^ (gi * 0x100000001b3ULL + k));
                    const PerturbResult r = perturb(graphs[gi], {kAllPerturbKinds[k], static_cast<int>(c), s}, rules);
                    if (r.incomplete) {
                        ++p.skipped[k * nc + c];
                        continue;
                    }
                    p.sum[k * nc + c] += structural_score(graphs[gi], r.graph, cfg.alignment, rules);
                    ++p.samples[k * nc + c];
                }
            }
        }
    });

    PerturbationTable t;
    t.max_count = cfg.max_count;
    for (std::size_t k = 0; k < nk; ++k) {
        for (std::size_t c = 0; c < nc; ++c) {
            PerturbationCell cell;
            cell.kind = kAllPerturbKinds[k];
            cell.count = static_cast<int>(c);
            double sum = 0.0;
            for (const Partial& p : per_graph) {
                sum += p.sum[k * nc + c];
                cell.samples += p.samples[k * nc + c];
                cell.skipped += p.skipped[k * nc + c];
            }
            cell.mean_score = cell.samples ? sum / static_cast<double>(cell.samples)
                                           : std::numeric_limits<double>::quiet_NaN();
            t.cells.push_back(cell);
        }
    }
    return t;
}

std::string perturbation_csv(const PerturbationTable& t) {
    std::string out = "kind,count,mean_score,samples,skipped\n";
    for (const PerturbationCell& c : t.cells) {
        out += std::string(to_string(c.kind)) + "," + std::to_string(c.count) + "," + fmt(c.mean_score) + "," +
               std::to_string(c.samples) + "," + std::to_string(c.skipped) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<std::string> technique_ids(const std::vector<TechniqueMatch>& matches) {
    std::vector<std::string> ids;
    ids.reserve(matches.size());
    for (const TechniqueMatch& m : matches) ids.push_back(m.technique_id);
    return ids;
}

namespace {

std::vector<std::string> matched(const AttackGraph& g, const std::vector<AtgTemplate>& templates,
                                 const AlignmentConfig& cfg, const DeliveryRules& rules) {
    if (g.empty()) return {};
    return technique_ids(interpret(g, templates, cfg, rules));
}

}  // namespace

BreakResult break_graph(const AttackGraph& g, const std::vector<AtgTemplate>& templates, const AlignmentConfig& cfg,
                        std::size_t max_del, const DeliveryRules& rules) {
    BreakResult r;
    r.broken = g;
    r.original_techniques = matched(g, templates, cfg, rules);
    if (r.original_techniques.empty()) throw InvalidInput("no technique matches the graph to break");
    r.broken_techniques = r.original_techniques;
    while (r.deleted.size() < max_del && !r.broken.empty()) {
        const Node last = r.broken.node(r.broken.node_count() - 1);
        r.broken.remove_node(last.id);
        r.deleted.push_back(last);
        r.broken_techniques = matched(r.broken, templates, cfg, rules);
        if (r.broken_techniques.size() < r.original_techniques.size()) {
            r.shrank = true;
            break;
        }
    }
    if (!r.shrank && max_del > 0) {
        r.diagnostics.push_back("deleted " + std::to_string(r.deleted.size()) +
                                " nodes without losing a technique");
    }
    return r;
}

std::vector<ReconstructionRecord> reconstruction_experiment(const ForecastModel& model,
                                                            const std::vector<AttackGraph>& graphs,
                                                            const std::vector<AtgTemplate>& templates,
                                                            const ReconstructionConfig& cfg,
                                                            const DeliveryRules& rules) {
    cfg.alignment.validate();
    if (!cfg.dot_dir.empty()) std::filesystem::create_directories(cfg.dot_dir);
    std::vector<std::optional<ReconstructionRecord>> slots(graphs.size());
    parallel_for(graphs.size(), cfg.threads, [&](std::size_t gi) {
        const AttackGraph& g = graphs[gi];
        if (matched(g, templates, cfg.alignment, rules).empty()) return;
        const BreakResult br = break_graph(g, templates, cfg.alignment, cfg.max_del, rules);

        ReconstructionRecord rec;
        rec.graph_id = g.provenance().empty() ? "graph_" + std::to_string(gi) : g.provenance();
        rec.deleted = br.deleted.size();
        rec.shrank = br.shrank;
        rec.original_techniques = br.original_techniques;
        rec.broken_techniques = br.broken_techniques;
        rec.broken_score = structural_score(g, br.broken, cfg.alignment, rules);

        const StopCriterion stop = stop_on_technique_increase(templates, br.broken, cfg.alignment, cfg.max_steps);
        const ForecastResult fr = forecast(model, br.broken, stop, {cfg.mode, cfg.seed + gi});
        rec.afg_techniques = matched(fr.graph, templates, cfg.alignment, rules);
        rec.afg_score = structural_score(g, fr.graph, cfg.alignment, rules);
        rec.generated_nodes = fr.added_nodes;
        rec.generated_edges = fr.added_edges;
        rec.stop = fr.reason;

        if (!cfg.dot_dir.empty()) {
            const std::string stem = "graph_" + std::to_string(gi);
            write_text_file(cfg.dot_dir / (stem + "_original.dot"), export_dot(g));
            write_text_file(cfg.dot_dir / (stem + "_broken.dot"), export_dot(br.broken));
            write_text_file(cfg.dot_dir / (stem + "_afg.dot"), export_dot(fr.graph));
        }
        slots[gi] = std::move(rec);
    });
    std::vector<ReconstructionRecord> out;
    for (auto& s : slots) {
        if (s) out.push_back(std::move(*s));
    }
    return out;
}

std::vector<ReconstructionSummary> summarize(const std::vector<ReconstructionRecord>& records) {
    std::map<std::size_t, ReconstructionSummary> by_n;
    for (const ReconstructionRecord& r : records) {
        ReconstructionSummary& s = by_n[r.deleted];
        s.deleted = r.deleted;
        ++s.records;
        s.mean_broken_score += r.broken_score;
        s.mean_afg_score += r.afg_score;
        s.mean_generated_nodes += static_cast<double>(r.generated_nodes);
        s.mean_generated_edges += static_cast<double>(r.generated_edges);
    }
    std::vector<ReconstructionSummary> out;
    for (auto& [n, s] : by_n) {
        const double k = static_cast<double>(s.records);
        s.mean_broken_score /= k;
        s.mean_afg_score /= k;
        s.mean_generated_nodes /= k;
        s.mean_generated_edges /= k;
        out.push_back(s);
    }
    return out;
}

std::string reconstruction_csv(const std::vector<ReconstructionRecord>& records) {
    std::string out =
        "graph_id,deleted,shrank,broken_score,afg_score,generated_nodes,generated_edges,stop,"
        "original_techniques,broken_techniques,afg_techniques\n";
    for (const ReconstructionRecord& r : records) {
        out += r.graph_id + "," + std::to_string(r.deleted) + "," + (r.shrank ? "1" : "0") + "," +
               fmt(r.broken_score) + "," + fmt(r.afg_score) + "," + std::to_string(r.generated_nodes) + "," +
               std::to_string(r.generated_edges) + "," + std::string(to_string(r.stop)) + "," +
               join(r.original_techniques) + "," + join(r.broken_techniques) + "," + join(r.afg_techniques) + "\n";
    }
    return out;
}

std::string summary_csv(const std::vector<ReconstructionSummary>& rows) {
    std::string out = "deleted,records,mean_broken_score,mean_afg_score,mean_generated_nodes,mean_generated_edges\n";
    for (const ReconstructionSummary& s : rows) {
        out += std::to_string(s.deleted) + "," + std::to_string(s.records) + "," + fmt(s.mean_broken_score) + "," +
               fmt(s.mean_afg_score) + "," + fmt(s.mean_generated_nodes) + "," + fmt(s.mean_generated_edges) + "\n";
    }
    return out;
}

Prf technique_prf(const std::vector<std::vector<std::string>>& truth,
                  const std::vector<std::vector<std::string>>& predicted) {
    if (truth.size() != predicted.size()) {
        throw InvalidInput("technique_prf: " + std::to_string(truth.size()) + " truth lists but " +
                           std::to_string(predicted.size()) + " predicted lists");
    }
    Prf r;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const std::set<std::string> t(truth[i].begin(), truth[i].end());
        const std::set<std::string> p(predicted[i].begin(), predicted[i].end());
        for (const std::string& id : p) (t.count(id) ? r.tp : r.fp)++;
        for (const std::string& id : t) {
            if (!p.count(id)) ++r.fn;
        }
    }
    r.precision = r.tp + r.fp == 0 ? 1.0 : static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp);
    r.recall = r.tp + r.fn == 0 ? 1.0 : static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
    r.f1 = r.precision + r.recall == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / (r.precision + r.recall);
    return r;
}

// ---------------------------------------------------------------------------

std::string_view to_string(RuleAction a) {
    switch (a) {
        case RuleAction::BlockReadSensitive: return "block-read-sensitive";
        case RuleAction::BlockOutbound: return "block-outbound";
        case RuleAction::BlockExec: return "block-exec";
        case RuleAction::BlockWrite: return "block-write";
        case RuleAction::BlockSpawn: return "block-spawn";
    }
    return "?";
}

std::optional<RuleAction> rule_action(EntityAttr subject, EventType event, EntityAttr object) {
    if (!validate_edge(subject, event, object)) return std::nullopt;
    switch (event) {
        case EventType::Read:
            if (subject == EntityAttr::F0) return RuleAction::BlockReadSensitive;
            return std::nullopt;
        case EventType::Send: return RuleAction::BlockOutbound;
        case EventType::Execute: return RuleAction::BlockExec;
        case EventType::Write: return RuleAction::BlockWrite;
        case EventType::ForkClone: return RuleAction::BlockSpawn;
        case EventType::Receive: return std::nullopt;
    }
    return std::nullopt;
}

std::vector<ReinforcementRule> dispatch(const AttackGraph& afg, const DispatchConfig& cfg) {
    std::vector<ReinforcementRule> rules;
    for (const Edge& e : afg.edges()) {
        if (!e.forecast) continue;
        const EntityAttr s = afg.node(e.src).attr;
        const EntityAttr o = afg.node(e.dst).attr;
        const auto action = rule_action(s, e.event, o);
        if (!action) continue;
        rules.push_back({s, e.event, o, e.src, e.dst, e.seq, *action, cfg.decay});
    }
    return rules;
}

InvestigationHook technique_increase_hook(std::vector<AtgTemplate> templates, const AttackGraph& baseline,
                                          const AlignmentConfig& cfg) {
    const std::size_t base = matched(baseline, templates, cfg, DeliveryRules::defaults()).size();
    return [templates = std::move(templates), base, cfg](const AttackGraph& afg) {
        return matched(afg, templates, cfg, DeliveryRules::defaults()).size() > base;
    };
}

std::vector<ReinforcementRule> investigate_and_dispatch(const AttackGraph& afg, const InvestigationHook& hook,
                                                        const DispatchConfig& cfg) {
    if (hook && !hook(afg)) return {};
    return dispatch(afg, cfg);
}

nlohmann::json rules_to_json(const std::vector<ReinforcementRule>& rules) {
    nlohmann::json out = nlohmann::json::array();
    for (const ReinforcementRule& r : rules) {
        out.push_back({{"subject", to_string(r.subject)},
                       {"event", to_string(r.event)},
                       {"object", to_string(r.object)},
                       {"src", r.src},
                       {"dst", r.dst},
                       {"seq", r.seq},
                       {"action", to_string(r.action)},
                       {"decay_seconds", r.decay.count()}});
    }
    return out;
}

// ---------------------------------------------------------------------------

nlohmann::json alignment_config_to_json(const AlignmentConfig& c) {
    return {{"fix_threshold", c.fix_threshold},
            {"interpret_threshold", c.interpret_threshold},
            {"max_hops", c.max_hops},
            {"max_path_length", c.max_path_length},
            {"max_paths_per_pair", c.max_paths_per_pair},
            {"search_budget", c.search_budget}};
}

namespace {

template <typename Fn>
void for_each_key(const nlohmann::json& j, const std::string& section, Fn fn) {
    if (!j.is_object()) throw InvalidInput(section + " config must be an object");
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        try {
            known = fn(key, value);
        } catch (const nlohmann::json::exception&) {
            throw InvalidInput(section + " config key '" + key + "' has the wrong type");
        }
        if (!known) throw InvalidInput("unknown " + section + " config key '" + key + "'");
    }
}

}  // namespace

AlignmentConfig alignment_config_from_json(const nlohmann::json& j) {
    AlignmentConfig c;
    for_each_key(j, "alignment", [&](const std::string& key, const nlohmann::json& v) {
        if (key == "fix_threshold") c.fix_threshold = v.get<double>();
        else if (key == "interpret_threshold") c.interpret_threshold = v.get<double>();
        else if (key == "max_hops") c.max_hops = v.get<int>();
        else if (key == "max_path_length") c.max_path_length = v.get<std::size_t>();
        else if (key == "max_paths_per_pair") c.max_paths_per_pair = v.get<std::size_t>();
        else if (key == "search_budget") c.search_budget = v.get<std::size_t>();
        else return false;
        return true;
    });
    c.validate();
    return c;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    for_each_key(j, "experiment", [&](const std::string& key, const nlohmann::json& v) {
        if (key == "alignment") {
            c.alignment = alignment_config_from_json(v);
        } else if (key == "perturbation") {
            for_each_key(v, "perturbation", [&](const std::string& k, const nlohmann::json& x) {
                if (k == "max_count") c.perturbation.max_count = x.get<int>();
                else if (k == "seeds") c.perturbation.seeds = x.get<std::vector<std::uint64_t>>();
                else if (k == "threads") c.perturbation.threads = x.get<unsigned>();
                else return false;
                return true;
            });
        } else if (key == "reconstruction") {
            for_each_key(v, "reconstruction", [&](const std::string& k, const nlohmann::json& x) {
                if (k == "max_del") c.reconstruction.max_del = x.get<std::size_t>();
                else if (k == "max_steps") c.reconstruction.max_steps = x.get<std::size_t>();
                else if (k == "seed") c.reconstruction.seed = x.get<std::uint64_t>();
                else if (k == "threads") c.reconstruction.threads = x.get<unsigned>();
                else if (k == "mode") {
                    const auto m = x.get<std::string>();
                    if (m == "greedy") c.reconstruction.mode = PredictMode::Greedy;
                    else if (m == "sample") c.reconstruction.mode = PredictMode::Sample;
                    else throw InvalidInput("reconstruction mode must be 'greedy' or 'sample'");
                } else return false;
                return true;
            });
        } else if (key == "dispatch") {
            for_each_key(v, "dispatch", [&](const std::string& k, const nlohmann::json& x) {
                if (k != "decay_seconds") return false;
                const auto s = x.get<std::int64_t>();
                if (s <= 0) throw InvalidInput("decay_seconds must be positive");
                c.dispatch.decay = std::chrono::seconds(s);
                return true;
            });
        } else {
            return false;
        }
        return true;
    });
    if (c.perturbation.max_count < 0) throw InvalidInput("perturbation max_count must be non-negative");
    if (c.perturbation.seeds.empty()) throw InvalidInput("perturbation seeds must not be empty");
    c.perturbation.alignment = c.alignment;
    c.reconstruction.alignment = c.alignment;
    return c;
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& c) {
    return {{"alignment", alignment_config_to_json(c.alignment)},
            {"perturbation",
             {{"max_count", c.perturbation.max_count},
              {"seeds", c.perturbation.seeds},
              {"threads", c.perturbation.threads}}},
            {"reconstruction",
             {{"max_del", c.reconstruction.max_del},
              {"max_steps", c.reconstruction.max_steps},
              {"seed", c.reconstruction.seed},
              {"threads", c.reconstruction.threads},
              {"mode", c.reconstruction.mode == PredictMode::Greedy ? "greedy" : "sample"}}},
            {"dispatch", {{"decay_seconds", c.dispatch.decay.count()}}}};
}

}  // namespace attackcast
