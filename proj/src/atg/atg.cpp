#include "attackcast/atg.hpp"

#include <algorithm>
#include <cstdio>
#include <future>
#include <random>
#include <set>
#include <sstream>

#include "attackcast/graph_io.hpp"

namespace attackcast {

using nlohmann::json;

json template_to_json(const AtgTemplate& t) {
    json j = graph_to_json(t.graph);
    j["technique_id"] = t.technique_id;
    j["tactic"] = t.tactic;
    j["description"] = t.description;
    return j;
}

AtgTemplate template_from_json(const json& j) {
    if (!j.is_object() || !j.contains("technique_id") || !j.at("technique_id").is_string()) {
        throw GraphError("template lacks a technique_id");
    }
    AtgTemplate t;
    t.technique_id = j.at("technique_id").get<std::string>();
    if (t.technique_id.empty()) throw GraphError("empty technique_id");
    t.tactic = j.value("tactic", std::string{});
    t.description = j.value("description", std::string{});
    t.graph = graph_from_json(j);
    t.graph.set_role(GraphRole::ATG);
    if (t.graph.node_count() < 2 || t.graph.edge_count() < 1) {
        throw GraphError("template " + t.technique_id + " needs at least two nodes and one edge");
    }
    return t;
}

TemplateLoad load_templates(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw GraphError("template directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    struct Outcome {
        std::optional<AtgTemplate> tmpl;
        std::string error;
    };
    std::vector<std::future<Outcome>> jobs;
    for (const auto& f : files) {
        jobs.push_back(std::async(std::launch::async, [f] {
            try {
                return Outcome{template_from_json(read_json_file(f)), {}};
            } catch (const std::exception& ex) {
                return Outcome{std::nullopt, f.filename().string() + ": " + ex.what()};
            }
        }));
    }

    TemplateLoad out;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        Outcome o = jobs[i].get();
        if (!o.tmpl) {
            out.diagnostics.push_back(o.error);
            continue;
        }
        if (!seen.insert(o.tmpl->technique_id).second) {
            out.diagnostics.push_back(files[i].filename().string() + ": duplicate technique id " +
                                      o.tmpl->technique_id);
            continue;
        }
        out.templates.push_back(std::move(*o.tmpl));
    }
    if (out.templates.empty()) throw GraphError("no valid templates in " + dir.string());
    std::sort(out.templates.begin(), out.templates.end(),
              [](const AtgTemplate& a, const AtgTemplate& b) { return a.technique_id < b.technique_id; });
    return out;
}

TemplateStats template_stats(const std::vector<AtgTemplate>& templates) {
    if (templates.empty()) throw InvalidInput("template_stats: empty template list");
    TemplateStats s;
    s.templates = templates.size();
    for (const AtgTemplate& t : templates) {
        s.nodes += t.graph.node_count();
        s.edges += t.graph.edge_count();
        for (const Node& n : t.graph.nodes()) ++s.nodes_per_attr[std::string(to_string(n.attr))];
        for (const Edge& e : t.graph.edges()) ++s.edges_per_event[std::string(to_string(e.event))];
        ++s.templates_per_tactic[t.tactic];
    }
    s.mean_nodes = static_cast<double>(s.nodes) / static_cast<double>(s.templates);
    s.mean_edges = static_cast<double>(s.edges) / static_cast<double>(s.templates);
    return s;
}

std::string format_stats(const TemplateStats& s) {
    std::ostringstream os;
    char buf[64];
    os << "templates " << s.templates << "\n";
    os << "tactics " << s.templates_per_tactic.size() << "\n";
    std::snprintf(buf, sizeof buf, "%.3f", s.mean_nodes);
    os << "nodes " << s.nodes << " (mean " << buf << ")\n";
    std::snprintf(buf, sizeof buf, "%.3f", s.mean_edges);
    os << "edges " << s.edges << " (mean " << buf << ")\n";
    for (const auto& [k, v] : s.nodes_per_attr) os << "attr " << k << " " << v << "\n";
    for (const auto& [k, v] : s.edges_per_event) os << "event " << k << " " << v << "\n";
    for (const auto& [k, v] : s.templates_per_tactic) os << "tactic " << k << " " << v << "\n";
    return os.str();
}

std::string_view to_string(SpliceRule r) {
    return r == SpliceRule::ShareRootProcess ? "share-root-process" : "sequential-taint";
}

std::optional<SpliceRule> parse_splice_rule(std::string_view s) {
    if (s == "share-root-process") return SpliceRule::ShareRootProcess;
    if (s == "sequential-taint") return SpliceRule::SequentialTaint;
    return std::nullopt;
}

void CorpusSpec::validate() const {
    if (count == 0) throw InvalidInput("corpus count must be positive");
    if (min_chain == 0 || min_chain > max_chain) throw InvalidInput("chain length range is empty");
}

namespace {

struct Builder {
    AttackGraph g;
    std::uint64_t seq = 0;
};

// Copies template nodes under fresh ids. `merge` maps template node ids to
// existing graph ids that stand in for them.
std::map<NodeId, NodeId> add_instance(Builder& b, const AtgTemplate& t, const std::string& prefix,
                                      const std::map<NodeId, NodeId>& merge) {
    std::map<NodeId, NodeId> ids = merge;
    for (const Node& n : t.graph.nodes()) {
        if (ids.count(n.id)) continue;
        ids[n.id] = b.g.add_node(n.attr, n.label, prefix + n.id);
    }
    for (const Edge& e : t.graph.edges()) b.g.add_edge(ids.at(e.src), ids.at(e.dst), e.event, b.seq++);
    return ids;
}

std::optional<NodeId> entry_node(const AtgTemplate& t, EntityAttr attr) {
    for (const Node& n : t.graph.nodes()) {
        if (n.attr != attr) continue;
        const bool has_out =
            std::any_of(t.graph.edges().begin(), t.graph.edges().end(), [&](const Edge& e) { return e.src == n.id; });
        if (has_out) return n.id;
    }
    return std::nullopt;
}

std::optional<AttackGraph> splice(const std::vector<const AtgTemplate*>& chain, SpliceRule rule,
                                  const std::string& prefix) {
    Builder b;
    if (rule == SpliceRule::ShareRootProcess) {
        const NodeId root = b.g.add_node(EntityAttr::P, "root", prefix + "root");
        for (std::size_t c = 0; c < chain.size(); ++c) {
            const AtgTemplate& t = *chain[c];
            auto first_p = std::find_if(t.graph.nodes().begin(), t.graph.nodes().end(),
                                        [](const Node& n) { return n.attr == EntityAttr::P; });
            if (first_p == t.graph.nodes().end()) return std::nullopt;
            const std::string pfx = prefix + "c" + std::to_string(c) + "_";
            const NodeId child = b.g.add_node(first_p->attr, first_p->label, pfx + first_p->id);
            b.g.add_edge(root, child, EventType::ForkClone, b.seq++);
            add_instance(b, t, pfx, {{first_p->id, child}});
        }
    } else {
        std::optional<NodeId> sink;
        for (std::size_t c = 0; c < chain.size(); ++c) {
            const AtgTemplate& t = *chain[c];
            const std::string pfx = prefix + "c" + std::to_string(c) + "_";
            std::map<NodeId, NodeId> merge;
            if (sink) {
                auto entry = entry_node(t, b.g.node(*sink).attr);
                if (!entry) return std::nullopt;
                merge[*entry] = *sink;
            }
            auto ids = add_instance(b, t, pfx, merge);
            sink = ids.at(t.graph.edges().back().dst);
        }
    }
    b.g.reorder_chronologically();
    b.g.validate();
    return b.g;
}

}  // namespace

Corpus synthesize_corpus(const std::vector<AtgTemplate>& templates, const CorpusSpec& spec) {
    spec.validate();
    if (templates.empty()) throw InvalidInput("synthesize_corpus: no templates");
    const std::size_t max_chain = std::min(spec.max_chain, templates.size());
    if (spec.min_chain > max_chain) throw InvalidInput("chain length exceeds the number of templates");

    Corpus out;
    out.spec = spec;
    std::mt19937_64 rng(spec.seed);
    auto uniform = [&rng](std::size_t lo, std::size_t hi) {  // inclusive
        return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
    };

    for (std::size_t k = 0; k < spec.count; ++k) {
        std::size_t failures = 0;
        for (;;) {
            const std::size_t len = uniform(spec.min_chain, max_chain);
            std::vector<std::size_t> pool(templates.size());
            for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
            std::vector<const AtgTemplate*> chain;
            for (std::size_t c = 0; c < len; ++c) {
                const std::size_t pick = uniform(c, pool.size() - 1);
                std::swap(pool[c], pool[pick]);
                chain.push_back(&templates[pool[c]]);
            }
            auto g = splice(chain, spec.splice, "g" + std::to_string(k) + "_");
            if (g && (len < 2 || g->node_count() >= 5)) {
                g->set_provenance("synthetic corpus seed " + std::to_string(spec.seed) + " graph " + std::to_string(k));
                std::vector<std::string> ids;
                for (const AtgTemplate* t : chain) ids.push_back(t->technique_id);
                out.graphs.push_back(std::move(*g));
                out.techniques.push_back(std::move(ids));
                break;
            }
            std::string names;
            for (const AtgTemplate* t : chain) names += (names.empty() ? "" : ",") + t->technique_id;
            out.diagnostics.push_back("graph " + std::to_string(k) + ": no compatible junction in chain " + names +
                                      ", resampling");
            if (++failures >= spec.max_retries) {
                throw GraphError("synthesize_corpus: gave up after " + std::to_string(failures) +
                                 " incompatible chains for graph " + std::to_string(k));
            }
        }
    }
    return out;
}

namespace {

std::string graph_file_name(std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "graph_%04zu.json", k);
    return buf;
}

}  // namespace

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json entries = json::array();
    for (std::size_t k = 0; k < corpus.graphs.size(); ++k) {
        const std::string name = graph_file_name(k);
        save_graph(corpus.graphs[k], dir / name);
        entries.push_back({{"file", name}, {"techniques", corpus.techniques.at(k)}});
    }
    json manifest = {{"seed", corpus.spec.seed},
                     {"spec",
                      {{"min_chain", corpus.spec.min_chain},
                       {"max_chain", corpus.spec.max_chain},
                       {"splice_rule", std::string(to_string(corpus.spec.splice))},
                       {"count", corpus.spec.count}}},
                     {"graphs", std::move(entries)}};
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Corpus read_corpus(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw GraphError("corpus directory not found: " + dir.string());
    Corpus out;
    std::map<std::string, std::vector<std::string>> labels;
    const auto manifest_path = dir / "manifest.json";
    if (std::filesystem::exists(manifest_path)) {
        const json m = read_json_file(manifest_path);
        for (const json& e : m.value("graphs", json::array())) {
            labels[e.at("file").get<std::string>()] = e.value("techniques", std::vector<std::string>{});
        }
        out.spec.seed = m.value("seed", std::uint64_t{0});
        if (m.contains("spec")) {
            const json& s = m.at("spec");
            out.spec.min_chain = s.value("min_chain", out.spec.min_chain);
            out.spec.max_chain = s.value("max_chain", out.spec.max_chain);
            if (auto r = parse_splice_rule(s.value("splice_rule", std::string{}))) out.spec.splice = *r;
        }
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json" &&
            entry.path().filename() != "manifest.json") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        out.graphs.push_back(load_graph(f));
        auto it = labels.find(f.filename().string());
        out.techniques.push_back(it == labels.end() ? std::vector<std::string>{} : it->second);
    }
    out.spec.count = out.graphs.size();
    if (out.graphs.empty()) throw GraphError("corpus directory holds no graph files: " + dir.string());
    return out;
}

}  // namespace attackcast
