#include <doctest.h>

#include <filesystem>
#include <random>
#include <set>

#include "attackcast/atg.hpp"
#include "attackcast/eval.hpp"
#include "attackcast/graph_io.hpp"
#include "support/random_graph.hpp"

using namespace attackcast;
namespace fs = std::filesystem;

namespace {

const std::vector<AtgTemplate>& templates() {
    static const auto t = load_templates(fs::path(ATTACKCAST_DATA_DIR) / "templates").templates;
    return t;
}

AttackGraph send_edge() {
    AttackGraph g;
    g.add_node(EntityAttr::P, "malware", "p");
    g.add_node(EntityAttr::S, "c2", "s");
    g.add_edge("p", "s", EventType::Send, 0);
    return g;
}

std::vector<AttackGraph> random_graphs(std::uint64_t seed, std::size_t n, std::size_t max_nodes = 8) {
    std::mt19937_64 rng(seed);
    std::vector<AttackGraph> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(testing::random_graph(rng, {3 + rng() % (max_nodes - 2), 2, 5, false}));
    }
    return out;
}

bool all_edges_valid(const AttackGraph& g) {
    for (const Edge& e : g.edges()) {
        if (!validate_edge(g.node(e.src).attr, e.event, g.node(e.dst).attr)) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("perturbation kinds parse and classify") {
    for (PerturbKind k : kAllPerturbKinds) CHECK(parse_perturb_kind(to_string(k)) == k);
    CHECK_FALSE(parse_perturb_kind("node-add"));
    CHECK(is_addition(PerturbKind::NodeAddMhes));
    CHECK_FALSE(is_addition(PerturbKind::EdgeDel));
    CHECK(is_edge_kind(PerturbKind::EdgeDel));
    CHECK(is_mhes_kind(PerturbKind::NodeDelMhes));
    CHECK_FALSE(is_mhes_kind(PerturbKind::NodeDelRandom));
}

TEST_CASE("zero operations leave the graph alone") {
    for (const AttackGraph& g : random_graphs(1, 10)) {
        for (PerturbKind k : kAllPerturbKinds) {
            const auto r = perturb(g, {k, 0, 9});
            CHECK(r.graph == g);
            CHECK(r.applied == 0);
            CHECK_FALSE(r.incomplete);
        }
    }
    CHECK_THROWS_AS(perturb(send_edge(), {PerturbKind::EdgeAdd, -1, 0}), InvalidInput);
}

TEST_CASE("perturbations are deterministic per seed") {
    for (const AttackGraph& g : random_graphs(2, 10)) {
        for (PerturbKind k : kAllPerturbKinds) {
            const auto a = perturb(g, {k, 3, 77});
            const auto b = perturb(g, {k, 3, 77});
            CHECK(a.graph == b.graph);
            CHECK(a.applied == b.applied);
        }
    }
}

TEST_CASE("random edge and node operations keep graphs valid") {
    for (const AttackGraph& g : random_graphs(3, 25)) {
        for (int count = 1; count <= 3; ++count) {
            const auto add = perturb(g, {PerturbKind::EdgeAdd, count, 5});
            add.graph.validate();
            CHECK(all_edges_valid(add.graph));
            CHECK(add.graph.node_count() == g.node_count());
            CHECK(add.graph.edge_count() == g.edge_count() + static_cast<std::size_t>(add.applied));

            const auto del = perturb(g, {PerturbKind::EdgeDel, count, 5});
            del.graph.validate();
            CHECK(del.graph.edge_count() == g.edge_count() - static_cast<std::size_t>(del.applied));

            const auto nadd = perturb(g, {PerturbKind::NodeAddRandom, count, 5});
            nadd.graph.validate();
            CHECK(all_edges_valid(nadd.graph));
            CHECK(nadd.applied == count);
            CHECK(nadd.graph.node_count() == g.node_count() + static_cast<std::size_t>(count));
            for (const Node& n : nadd.graph.nodes()) CHECK(nadd.graph.degree(nadd.graph.order_of(n.id)) > 0);

            const auto ndel = perturb(g, {PerturbKind::NodeDelRandom, count, 5});
            ndel.graph.validate();
            CHECK(ndel.graph.node_count() == g.node_count() - static_cast<std::size_t>(ndel.applied));
            CHECK(ndel.graph.node_count() >= 2);
        }
    }
}

TEST_CASE("splitting an edge through a relay process") {
    const AttackGraph g = send_edge();
    const auto r = perturb(g, {PerturbKind::NodeAddMhes, 1, 0});
    REQUIRE(r.applied == 1);
    const AttackGraph& h = r.graph;
    REQUIRE(h.node_count() == 3);
    REQUIRE(h.edge_count() == 2);
    const Edge& first = h.edges()[0];
    const Edge& second = h.edges()[1];
    CHECK(first.src == "p");
    CHECK(first.event == EventType::ForkClone);
    CHECK(h.node(first.dst).attr == EntityAttr::P);
    CHECK(second.src == first.dst);
    CHECK(second.dst == "s");
    CHECK(second.event == EventType::Send);
    CHECK(mhes_equivalent({EntityAttr::P, EventType::Send, EntityAttr::S}, {first, second}, h,
                          DeliveryRules::defaults()));
    CHECK(structural_score(g, h) == 1.0);
}

TEST_CASE("every split is an equivalent two-hop chain and keeps the score") {
    const DeliveryRules rules = DeliveryRules::defaults();
    for (const AttackGraph& g : random_graphs(4, 40)) {
        const auto r = perturb(g, {PerturbKind::NodeAddMhes, 1, 3});
        if (r.incomplete) continue;
        const AttackGraph& h = r.graph;
        h.validate();
        CHECK(all_edges_valid(h));
        // The one removed edge is realized by the chain through the new node.
        std::set<std::tuple<NodeId, NodeId, EventType>> before, after;
        for (const Edge& e : g.edges()) before.insert({e.src, e.dst, e.event});
        for (const Edge& e : h.edges()) after.insert({e.src, e.dst, e.event});
        std::vector<std::tuple<NodeId, NodeId, EventType>> removed;
        for (const auto& t : before) {
            if (!after.count(t)) removed.push_back(t);
        }
        REQUIRE(removed.size() == 1);
        const auto& [u, v, ev] = removed[0];
        NodeId relay;
        for (const Node& n : h.nodes()) {
            if (!g.contains(n.id)) relay = n.id;
        }
        std::vector<Edge> chain;
        for (const Edge& e : h.edges()) {
            if (e.src == u && e.dst == relay) chain.insert(chain.begin(), e);
            if (e.src == relay && e.dst == v) chain.push_back(e);
        }
        REQUIRE(chain.size() == 2);
        CHECK(mhes_equivalent({g.node(u).attr, ev, g.node(v).attr}, chain, h, rules));
        CHECK(structural_score(g, h) == 1.0);
    }
}

TEST_CASE("collapsing a relay chain") {
    AttackGraph g;
    g.add_node(EntityAttr::P, "loader", "a");
    g.add_node(EntityAttr::P, "child", "w");
    g.add_node(EntityAttr::S, "c2", "s");
    g.add_node(EntityAttr::F2, "payload", "f");
    g.add_edge("a", "w", EventType::ForkClone, 0);
    g.add_edge("w", "s", EventType::Send, 1);
    g.add_edge("w", "f", EventType::Write, 2);
    const auto r = perturb(g, {PerturbKind::NodeDelMhes, 1, 0});
    REQUIRE(r.applied == 1);
    CHECK_FALSE(r.graph.contains("w"));
    REQUIRE(r.graph.edge_count() == 2);
    CHECK(r.graph.edges()[0] == Edge{"a", "s", EventType::Send, 1, false});
    CHECK(r.graph.edges()[1] == Edge{"a", "f", EventType::Write, 2, false});

    const auto none = perturb(send_edge(), {PerturbKind::NodeDelMhes, 1, 0});
    CHECK(none.incomplete);
    CHECK(none.applied == 0);
    CHECK(none.graph == send_edge());
    REQUIRE(none.diagnostics.size() == 1);
    CHECK(none.diagnostics[0].find("no applicable site") != std::string::npos);
}

TEST_CASE("a relay is never split again") {
    const auto r = perturb(send_edge(), {PerturbKind::NodeAddMhes, 2, 0});
    CHECK(r.applied == 1);
    CHECK(r.incomplete);
    CHECK(r.graph.node_count() == 3);
}

TEST_CASE("perturbation study table") {
    const auto graphs = random_graphs(5, 4, 7);
    PerturbationStudyConfig cfg;
    cfg.max_count = 2;
    cfg.seeds = {1, 2};
    const PerturbationTable t = perturbation_study(graphs, cfg);
    CHECK(t.cells.size() == std::size(kAllPerturbKinds) * 3);
    for (PerturbKind k : kAllPerturbKinds) {
        CHECK(t.at(k, 0).mean_score == 1.0);
        CHECK(t.at(k, 0).samples == 8);
        for (int c = 0; c <= 2; ++c) CHECK(t.at(k, c).samples + t.at(k, c).skipped == 8);
    }
    // The original embeds verbatim in every grown graph.
    for (int c = 1; c <= 2; ++c) {
        CHECK(t.at(PerturbKind::EdgeAdd, c).mean_score == 1.0);
        CHECK(t.at(PerturbKind::NodeAddRandom, c).mean_score == 1.0);
        CHECK(t.at(PerturbKind::NodeAddMhes, c).mean_score == 1.0);
    }
    CHECK(t.mean({PerturbKind::EdgeAdd, PerturbKind::EdgeDel}, 0) == 1.0);
    CHECK_THROWS_AS(t.at(PerturbKind::EdgeAdd, 3), InvalidInput);

    cfg.threads = 3;
    const PerturbationTable again = perturbation_study(graphs, cfg);
    CHECK(perturbation_csv(again) == perturbation_csv(t));
    CHECK(perturbation_csv(t).rfind("kind,count,mean_score,samples,skipped\nedge-add,0,1,8,0\n", 0) == 0);
}

// ---------------------------------------------------------------------------

TEST_CASE("breaking a single technique instance") {
    std::size_t checked = 0;
    for (const AtgTemplate& t : templates()) {
        const auto ids = technique_ids(interpret(t.graph, templates()));
        if (ids != std::vector<std::string>{t.technique_id}) continue;
        const BreakResult r = break_graph(t.graph, templates());
        CHECK(r.shrank);
        REQUIRE(r.deleted.size() == 1);
        CHECK(r.deleted[0] == t.graph.node(t.graph.node_count() - 1));
        CHECK(r.broken_techniques.empty());
        CHECK(r.diagnostics.empty());
        ++checked;
    }
    CHECK(checked >= 5);
}

TEST_CASE("breaking stops at the deletion limit") {
    // One instance followed by six written files that no template needs.
    const AtgTemplate& base = templates().front();
    AttackGraph g = base.graph;
    NodeId writer;
    for (const Node& n : g.nodes()) {
        if (n.attr == EntityAttr::P) writer = n.id;
    }
    REQUIRE_FALSE(writer.empty());
    for (int i = 0; i < 6; ++i) {
        const NodeId f = g.add_node(EntityAttr::F3, "junk" + std::to_string(i));
        g.add_edge(writer, f, EventType::Write);
    }
    const auto before = technique_ids(interpret(g, templates()));
    REQUIRE_FALSE(before.empty());
    const BreakResult r = break_graph(g, templates());
    CHECK(r.deleted.size() == 5);
    CHECK_FALSE(r.shrank);
    REQUIRE(r.diagnostics.size() == 1);
    CHECK(r.diagnostics[0] == "deleted 5 nodes without losing a technique");
    for (const Node& n : r.deleted) CHECK(n.label.rfind("junk", 0) == 0);

    const BreakResult none = break_graph(g, templates(), {}, 0);
    CHECK(none.broken == g);
    CHECK(none.deleted.empty());
    CHECK(none.diagnostics.empty());

    AttackGraph bare;
    bare.add_node(EntityAttr::S, "x", "s");
    bare.add_node(EntityAttr::P, "y", "p");
    bare.add_edge("s", "p", EventType::Receive, 0);
    REQUIRE(interpret(bare, templates()).empty());
    CHECK_THROWS_AS(break_graph(bare, templates()), InvalidInput);
}

TEST_CASE("breaking deletes the latest nodes and never invents techniques") {
    CorpusSpec spec;
    spec.count = 15;
    spec.seed = 8;
    const Corpus c = synthesize_corpus(templates(), spec);
    for (const AttackGraph& g : c.graphs) {
        const BreakResult r = break_graph(g, templates());
        std::size_t expected = g.node_count();
        for (const Node& n : r.deleted) CHECK(g.order_of(n.id) == --expected);
        CHECK(r.broken.node_count() == g.node_count() - r.deleted.size());
        CHECK(r.broken_techniques == technique_ids(interpret(r.broken, templates())));
        const std::set<std::string> orig(r.original_techniques.begin(), r.original_techniques.end());
        for (const auto& id : r.broken_techniques) CHECK(orig.count(id) == 1);
        if (r.shrank) CHECK(r.broken_techniques.size() < r.original_techniques.size());
    }
}

TEST_CASE("reconstruction bookkeeping") {
    ModelConfig mc;
    mc.node_hidden = 8;
    mc.node_layers = 1;
    mc.node_embed_adj = 4;
    mc.node_embed_attr = 4;
    mc.edge_hidden = 4;
    mc.edge_layers = 1;
    mc.edge_embed = 4;
    const ForecastModel model(mc);

    CHECK(reconstruction_experiment(model, {}, templates()).empty());

    CorpusSpec spec;
    spec.count = 4;
    spec.seed = 3;
    const Corpus c = synthesize_corpus(templates(), spec);
    ReconstructionConfig cfg;
    cfg.max_del = 0;
    for (const auto& r : reconstruction_experiment(model, c.graphs, templates(), cfg)) {
        CHECK(r.deleted == 0);
        CHECK(r.broken_score == 1.0);
        CHECK(r.afg_score == 1.0);
        CHECK(r.broken_techniques == r.original_techniques);
    }

    cfg.max_del = 5;
    cfg.dot_dir = fs::temp_directory_path() / "attackcast_recon_dot";
    fs::remove_all(cfg.dot_dir);
    const auto recs = reconstruction_experiment(model, c.graphs, templates(), cfg);
    REQUIRE(recs.size() == c.graphs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto& r = recs[i];
        CHECK(r.graph_id == c.graphs[i].provenance());
        CHECK(r.deleted >= 1);
        CHECK(r.deleted <= 5);
        CHECK(r.broken_score >= 0.0);
        CHECK(r.broken_score <= 1.0);
        CHECK(r.afg_score >= 0.0);
        CHECK(r.afg_score <= 1.0);
        // The forecast graph contains the broken graph, so it scores at least as well.
        CHECK(r.afg_score >= r.broken_score);
        CHECK(r.original_techniques == technique_ids(interpret(c.graphs[i], templates())));
        for (const char* part : {"_original.dot", "_broken.dot", "_afg.dot"}) {
            CHECK(fs::exists(cfg.dot_dir / ("graph_" + std::to_string(i) + part)));
        }
    }
    cfg.threads = 1;
    cfg.dot_dir.clear();
    CHECK(reconstruction_csv(reconstruction_experiment(model, c.graphs, templates(), cfg)) == reconstruction_csv(recs));

    const auto rows = summarize(recs);
    std::size_t total = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        total += rows[i].records;
        if (i) CHECK(rows[i - 1].deleted < rows[i].deleted);
    }
    CHECK(total == recs.size());
    CHECK(summary_csv(rows).rfind("deleted,records,mean_broken_score,mean_afg_score,", 0) == 0);
}

TEST_CASE("reconstruction summaries average per deletion count") {
    std::vector<ReconstructionRecord> recs(3);
    recs[0].deleted = 2;
    recs[0].broken_score = 0.2;
    recs[0].afg_score = 0.6;
    recs[0].generated_nodes = 2;
    recs[1].deleted = 1;
    recs[1].broken_score = 0.5;
    recs[1].afg_score = 1.0;
    recs[1].generated_edges = 3;
    recs[2].deleted = 2;
    recs[2].broken_score = 0.4;
    recs[2].afg_score = 0.8;
    recs[2].generated_nodes = 1;
    const auto rows = summarize(recs);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].deleted == 1);
    CHECK(rows[0].mean_generated_edges == 3.0);
    CHECK(rows[1].records == 2);
    CHECK(rows[1].mean_broken_score == doctest::Approx(0.3));
    CHECK(rows[1].mean_afg_score == doctest::Approx(0.7));
    CHECK(rows[1].mean_generated_nodes == doctest::Approx(1.5));
}

// ---------------------------------------------------------------------------

TEST_CASE("technique precision and recall") {
    using Lists = std::vector<std::vector<std::string>>;
    const Lists truth = {{"T1", "T2"}, {"T3"}};
    auto same = technique_prf(truth, truth);
    CHECK(same.precision == 1.0);
    CHECK(same.recall == 1.0);
    CHECK(same.f1 == 1.0);

    auto subset = technique_prf(truth, Lists{{"T1"}, {}});
    CHECK(subset.precision == 1.0);
    CHECK(subset.recall == doctest::Approx(1.0 / 3.0));

    auto disjoint = technique_prf(truth, Lists{{"T9"}, {"T8"}});
    CHECK(disjoint.precision == 0.0);
    CHECK(disjoint.recall == 0.0);
    CHECK(disjoint.f1 == 0.0);

    // tp 2, fp 1, fn 1; duplicates count once.
    auto mixed = technique_prf(truth, Lists{{"T1", "T1"}, {"T3", "T4"}});
    CHECK(mixed.tp == 2);
    CHECK(mixed.fp == 1);
    CHECK(mixed.fn == 1);
    CHECK(mixed.precision == doctest::Approx(2.0 / 3.0));
    CHECK(mixed.recall == doctest::Approx(2.0 / 3.0));
    CHECK(mixed.f1 == doctest::Approx(2.0 / 3.0));

    CHECK(technique_prf({}, {}).precision == 1.0);
    CHECK_THROWS_AS(technique_prf(truth, Lists{{"T1"}}), InvalidInput);
}

TEST_CASE("predictions inside the truth always have full precision") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::vector<std::string>> truth, pred;
        for (int i = 0; i < 5; ++i) {
            std::vector<std::string> t, p;
            for (int k = 0; k < 6; ++k) {
                if (rng() % 2) {
                    t.push_back("T" + std::to_string(k));
                    if (rng() % 2) p.push_back("T" + std::to_string(k));
                }
            }
            truth.push_back(t);
            pred.push_back(p);
        }
        const Prf r = technique_prf(truth, pred);
        CHECK(r.precision == 1.0);
        CHECK(r.recall <= 1.0);
        CHECK(r.fp == 0);
    }
}

// ---------------------------------------------------------------------------

namespace {

AttackGraph forecast_graph() {
    AttackGraph g(GraphRole::AFG);
    g.add_node(EntityAttr::P, "proc", "p");
    g.add_node(EntityAttr::F3, "doc", "d");
    g.add_edge("p", "d", EventType::Write, 0);
    g.add_node(EntityAttr::F0, "secrets", "f0", true);
    g.add_node(EntityAttr::F2, "dropper", "f2", true);
    g.add_edge("f0", "p", EventType::Read, 1, true);
    g.add_edge("p", "f2", EventType::Write, 2, true);
    return g;
}

}  // namespace

TEST_CASE("forecast edges become countermeasures") {
    AttackGraph afg(GraphRole::AFG);
    afg.add_node(EntityAttr::P, "proc", "p");
    afg.add_node(EntityAttr::S, "sock", "s", true);
    afg.add_edge("p", "s", EventType::Send, 4, true);
    const auto one = dispatch(afg);
    REQUIRE(one.size() == 1);
    CHECK(one[0].action == RuleAction::BlockOutbound);
    CHECK(one[0].decay == std::chrono::seconds(7200));
    CHECK(one[0].seq == 4);

    const auto two = dispatch(forecast_graph(), {std::chrono::seconds(60)});
    REQUIRE(two.size() == 2);
    CHECK(two[0] == ReinforcementRule{EntityAttr::F0, EventType::Read, EntityAttr::P, "f0", "p", 1,
                                      RuleAction::BlockReadSensitive, std::chrono::seconds(60)});
    CHECK(two[1].action == RuleAction::BlockWrite);
    CHECK(two[1].dst == "f2");

    CHECK(dispatch(send_edge()).empty());

    const auto j = rules_to_json(two);
    CHECK(j[0]["action"] == "block-read-sensitive");
    CHECK(j[1]["decay_seconds"] == 60);
    CHECK(j[0]["subject"] == "F0");
}

TEST_CASE("rule mapping over every admissible edge") {
    for (EntityAttr s : kAllAttrs) {
        for (EventType e : kAllEvents) {
            for (EntityAttr o : kAllAttrs) {
                const auto a = rule_action(s, e, o);
                if (!validate_edge(s, e, o)) {
                    CHECK_FALSE(a);
                    continue;
                }
                switch (e) {
                    case EventType::Read:
                        CHECK(a.has_value() == (s == EntityAttr::F0));
                        if (a) CHECK(*a == RuleAction::BlockReadSensitive);
                        break;
                    case EventType::Send: CHECK(a == RuleAction::BlockOutbound); break;
                    case EventType::Execute: CHECK(a == RuleAction::BlockExec); break;
                    case EventType::Write: CHECK(a == RuleAction::BlockWrite); break;
                    case EventType::ForkClone: CHECK(a == RuleAction::BlockSpawn); break;
                    case EventType::Receive: CHECK_FALSE(a); break;
                }
            }
        }
    }
    CHECK(to_string(RuleAction::BlockSpawn) == "block-spawn");
}

TEST_CASE("investigation gates dispatch") {
    const AttackGraph afg = forecast_graph();
    CHECK(investigate_and_dispatch(afg, [](const AttackGraph&) { return false; }).empty());
    CHECK(investigate_and_dispatch(afg, [](const AttackGraph&) { return true; }).size() == 2);
    CHECK(investigate_and_dispatch(afg, {}).size() == 2);

    const AtgTemplate& t = templates().front();
    const auto hook = technique_increase_hook(templates(), AttackGraph{});
    CHECK(hook(t.graph));
    CHECK_FALSE(technique_increase_hook(templates(), t.graph)(t.graph));
}

TEST_CASE("experiment configuration") {
    const ExperimentConfig d = experiment_config_from_json(nlohmann::json::object());
    CHECK(d.dispatch.decay == std::chrono::hours(2));
    CHECK(d.perturbation.max_count == 5);

    const nlohmann::json j = {{"alignment", {{"interpret_threshold", 0.5}, {"max_hops", 3}}},
                              {"perturbation", {{"max_count", 3}, {"seeds", {7, 8}}}},
                              {"reconstruction", {{"max_del", 4}, {"mode", "sample"}, {"seed", 11}}},
                              {"dispatch", {{"decay_seconds", 600}}}};
    const ExperimentConfig c = experiment_config_from_json(j);
    CHECK(c.alignment.interpret_threshold == 0.5);
    CHECK(c.perturbation.alignment.max_hops == 3);
    CHECK(c.reconstruction.alignment.interpret_threshold == 0.5);
    CHECK(c.perturbation.seeds == std::vector<std::uint64_t>{7, 8});
    CHECK(c.reconstruction.mode == PredictMode::Sample);
    CHECK(c.reconstruction.max_del == 4);
    CHECK(c.dispatch.decay == std::chrono::seconds(600));
    CHECK(experiment_config_to_json(experiment_config_from_json(experiment_config_to_json(c))) ==
          experiment_config_to_json(c));

    CHECK_THROWS_AS(experiment_config_from_json({{"alignmnt", nlohmann::json::object()}}), InvalidInput);
    CHECK_THROWS_AS(experiment_config_from_json({{"alignment", {{"max_hops", 0}}}}), InvalidInput);
    CHECK_THROWS_AS(experiment_config_from_json({{"alignment", {{"max_hops", "x"}}}}), InvalidInput);
    CHECK_THROWS_AS(experiment_config_from_json({{"perturbation", {{"seeds", nlohmann::json::array()}}}}),
                    InvalidInput);
    CHECK_THROWS_AS(experiment_config_from_json({{"reconstruction", {{"mode", "beam"}}}}), InvalidInput);
    CHECK_THROWS_AS(experiment_config_from_json({{"dispatch", {{"decay_seconds", 0}}}}), InvalidInput);
    CHECK(alignment_config_from_json(alignment_config_to_json(AlignmentConfig{})).fix_threshold == 0.3);
}
