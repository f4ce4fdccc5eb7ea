#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "attackcast/alignment.hpp"
#include "attackcast/atg.hpp"
#include "attackcast/graph_io.hpp"
#include "attackcast/sequence.hpp"

using namespace attackcast;
namespace fs = std::filesystem;

namespace {

const fs::path kTemplates = fs::path(ATTACKCAST_DATA_DIR) / "templates";

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("attackcast_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

const std::vector<AtgTemplate>& bundled() {
    static const auto t = load_templates(kTemplates).templates;
    return t;
}

}  // namespace

TEST_CASE("bundled templates load and cover the required techniques") {
    const auto load = load_templates(kTemplates);
    CHECK(load.diagnostics.empty());
    CHECK(load.templates.size() >= 20);
    std::set<std::string> ids, tactics;
    for (const auto& t : load.templates) {
        ids.insert(t.technique_id);
        tactics.insert(t.tactic);
        CHECK(t.graph.role() == GraphRole::ATG);
        CHECK(t.graph.node_count() >= 2);
        CHECK(t.graph.edge_count() >= 1);
        CHECK(t.graph.chronologically_consistent());
        CHECK_FALSE(to_sequence(t.graph).lossy);
    }
    CHECK(tactics.size() >= 6);
    for (const char* id : {"T1119", "T1003.002", "T1083", "T1036.005"}) CHECK(ids.count(id) == 1);
    CHECK(std::is_sorted(load.templates.begin(), load.templates.end(),
                         [](const AtgTemplate& a, const AtgTemplate& b) { return a.technique_id < b.technique_id; }));
}

TEST_CASE("template statistics match a recount of the raw files") {
    std::size_t files = 0, nodes = 0, edges = 0;
    std::map<std::string, std::size_t> attrs;
    for (const auto& entry : fs::directory_iterator(kTemplates)) {
        std::ifstream in(entry.path());
        const auto j = nlohmann::json::parse(in);
        ++files;
        nodes += j.at("nodes").size();
        edges += j.at("edges").size();
        for (const auto& n : j.at("nodes")) ++attrs[n.at("attr").get<std::string>()];
    }
    const auto s = template_stats(bundled());
    CHECK(s.templates == files);
    CHECK(s.nodes == nodes);
    CHECK(s.edges == edges);
    CHECK(s.nodes_per_attr == attrs);
    CHECK(s.mean_nodes == doctest::Approx(static_cast<double>(nodes) / files));
    CHECK(s.mean_edges == doctest::Approx(static_cast<double>(edges) / files));
    // Same scale as small hand-built technique graphs: a handful of nodes each.
    CHECK(s.mean_nodes > 3.0);
    CHECK(s.mean_nodes < 8.0);
    CHECK(format_stats(s) == format_stats(template_stats(bundled())));
}

TEST_CASE("template_stats edge cases") {
    AtgTemplate t;
    t.technique_id = "T0000";
    auto p = t.graph.add_node(EntityAttr::P);
    auto f = t.graph.add_node(EntityAttr::F3);
    t.graph.add_edge(p, f, EventType::Write);
    const auto s = template_stats({t});
    CHECK(s.mean_nodes == 2.0);
    CHECK(s.mean_edges == 1.0);
    CHECK_THROWS_AS(template_stats({}), InvalidInput);
}

TEST_CASE("malformed templates are skipped with diagnostics") {
    const auto dir = scratch("bad_templates");
    auto good = template_to_json(bundled().front());
    std::ofstream(dir / "good.json") << good.dump();
    auto ff = good;
    ff["technique_id"] = "T9999";
    ff["nodes"] = {{{"id", "a"}, {"attr", "F3"}, {"order_index", 0}, {"label", ""}},
                   {{"id", "b"}, {"attr", "F1"}, {"order_index", 1}, {"label", ""}}};
    ff["edges"] = {{{"src", "a"}, {"dst", "b"}, {"event", "Write"}, {"seq", 0}}};
    std::ofstream(dir / "ff.json") << ff.dump();
    std::ofstream(dir / "junk.json") << "{ not json";
    auto lonely = good;
    lonely["technique_id"] = "T9998";
    lonely["nodes"] = {{{"id", "a"}, {"attr", "P"}, {"order_index", 0}, {"label", ""}}};
    lonely["edges"] = nlohmann::json::array();
    std::ofstream(dir / "lonely.json") << lonely.dump();

    const auto load = load_templates(dir);
    CHECK(load.templates.size() == 1);
    CHECK(load.diagnostics.size() == 3);
    fs::remove_all(dir);

    const auto empty = scratch("empty_templates");
    CHECK_THROWS_AS(load_templates(empty), GraphError);
    fs::remove_all(empty);
}

TEST_CASE("loading is idempotent and template documents round-trip") {
    const auto a = load_templates(kTemplates).templates;
    const auto b = load_templates(kTemplates).templates;
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].technique_id == b[i].technique_id);
        CHECK(a[i].graph == b[i].graph);
        const auto again = template_from_json(template_to_json(a[i]));
        CHECK(again.graph == a[i].graph);
        CHECK(again.tactic == a[i].tactic);
    }
}

TEST_CASE("bundled templates align perfectly with themselves") {
    for (const auto& t : bundled()) {
        INFO(t.technique_id);
        CHECK(align(t.graph, t.graph).score == 1.0);
    }
}

TEST_CASE("single-template chains reproduce their source") {
    CorpusSpec spec;
    spec.min_chain = spec.max_chain = 1;
    spec.count = 30;
    spec.seed = 5;
    const auto c = synthesize_corpus(bundled(), spec);
    REQUIRE(c.graphs.size() == 30);
    for (std::size_t k = 0; k < c.graphs.size(); ++k) {
        REQUIRE(c.techniques[k].size() == 1);
        const auto& src = *std::find_if(bundled().begin(), bundled().end(),
                                        [&](const AtgTemplate& t) { return t.technique_id == c.techniques[k][0]; });
        CHECK(c.graphs[k].shape() == src.graph.shape());
        CHECK(align(src.graph, c.graphs[k]).score == 1.0);
    }
}

TEST_CASE("spliced graphs are valid and contain every spliced technique") {
    for (SpliceRule rule : {SpliceRule::SequentialTaint, SpliceRule::ShareRootProcess}) {
        CorpusSpec spec;
        spec.min_chain = 2;
        spec.max_chain = 3;
        spec.count = 25;
        spec.splice = rule;
        spec.seed = 11;
        const auto c = synthesize_corpus(bundled(), spec);
        for (std::size_t k = 0; k < c.graphs.size(); ++k) {
            const auto& g = c.graphs[k];
            INFO(to_string(rule) << " graph " << k);
            CHECK_NOTHROW(g.validate());
            CHECK(g.chronologically_consistent());
            CHECK(g.node_count() >= 5);
            for (const Edge& e : g.edges()) CHECK(validate_edge(g.node(e.src).attr, e.event, g.node(e.dst).attr));
            const auto hits = interpret(g, bundled());
            std::set<std::string> found;
            for (const auto& h : hits) found.insert(h.technique_id);
            for (const auto& id : c.techniques[k]) {
                INFO(id);
                CHECK(found.count(id) == 1);
            }
        }
    }
}

TEST_CASE("synthesis is reproducible from the seed") {
    CorpusSpec spec;
    spec.count = 15;
    spec.seed = 77;
    const auto a = synthesize_corpus(bundled(), spec);
    const auto b = synthesize_corpus(bundled(), spec);
    REQUIRE(a.graphs.size() == b.graphs.size());
    for (std::size_t k = 0; k < a.graphs.size(); ++k) CHECK(a.graphs[k] == b.graphs[k]);
    CHECK(a.techniques == b.techniques);
    spec.seed = 78;
    const auto c = synthesize_corpus(bundled(), spec);
    bool differs = false;
    for (std::size_t k = 0; k < a.graphs.size(); ++k) differs = differs || !(a.graphs[k] == c.graphs[k]);
    CHECK(differs);
}

TEST_CASE("corpus directories round-trip with their manifest") {
    CorpusSpec spec;
    spec.count = 6;
    spec.seed = 3;
    const auto c = synthesize_corpus(bundled(), spec);
    const auto dir = scratch("corpus_rt");
    write_corpus(c, dir);
    CHECK(fs::exists(dir / "manifest.json"));
    const auto back = read_corpus(dir);
    REQUIRE(back.graphs.size() == c.graphs.size());
    for (std::size_t k = 0; k < c.graphs.size(); ++k) CHECK(back.graphs[k] == c.graphs[k]);
    CHECK(back.techniques == c.techniques);
    CHECK(back.spec.seed == 3);
    fs::remove_all(dir);
}

TEST_CASE("corpus spec validation") {
    CorpusSpec spec;
    spec.count = 0;
    CHECK_THROWS_AS(synthesize_corpus(bundled(), spec), InvalidInput);
    spec = {};
    spec.min_chain = 4;
    spec.max_chain = 2;
    CHECK_THROWS_AS(synthesize_corpus(bundled(), spec), InvalidInput);
    CHECK(parse_splice_rule("sequential-taint") == SpliceRule::SequentialTaint);
    CHECK_FALSE(parse_splice_rule("glue").has_value());
}
