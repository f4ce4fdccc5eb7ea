#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <cstring>
#include <random>
#include <set>

#include "attackcast/atg.hpp"
#include "attackcast/forecast.hpp"
#include "attackcast/graph_io.hpp"
#include "support/random_graph.hpp"

using namespace attackcast;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny(std::uint64_t seed = 1) {
    ModelConfig c;
    c.node_embed_adj = 6;
    c.node_embed_attr = 5;
    c.node_hidden = 7;
    c.node_layers = 2;
    c.edge_embed = 4;
    c.edge_hidden = 5;
    c.edge_layers = 2;
    c.seed = seed;
    return c;
}

ModelConfig compact(std::uint64_t seed = 1) {
    ModelConfig c;
    c.node_embed_adj = 32;
    c.node_embed_attr = 32;
    c.node_hidden = 64;
    c.node_layers = 2;
    c.edge_embed = 16;
    c.edge_hidden = 32;
    c.edge_layers = 2;
    c.batch_size = 1;
    c.learning_rate = 3e-3;
    c.seed = seed;
    return c;
}

const std::vector<AtgTemplate>& templates() {
    static const auto t = load_templates(fs::path(ATTACKCAST_DATA_DIR) / "templates").templates;
    return t;
}

AttackGraph three_node_graph() {
    AttackGraph g;
    g.add_node(EntityAttr::P, "word", "a");
    g.add_node(EntityAttr::F2, "drop.exe", "b");
    g.add_node(EntityAttr::S, "c2", "c");
    g.add_edge("a", "b", EventType::Write, 0);
    g.add_edge("a", "c", EventType::Send, 1);
    return g;
}

// Plain-loop reference of the documented cell and heads.
struct Oracle {
    const ForecastModel& m;

    std::vector<double> col(const std::string& name, int c) const {
        const auto P = m.param(name);
        std::vector<double> v(static_cast<std::size_t>(P.rows()));
        for (Eigen::Index i = 0; i < P.rows(); ++i) v[static_cast<std::size_t>(i)] = P(i, c);
        return v;
    }

    std::vector<double> affine(const std::string& w, const std::string& b, const std::vector<double>& x) const {
        const auto W = m.param(w);
        const auto B = m.param(b);
        std::vector<double> out(static_cast<std::size_t>(W.rows()));
        for (Eigen::Index i = 0; i < W.rows(); ++i) {
            double s = B(i, 0);
            for (Eigen::Index k = 0; k < W.cols(); ++k) s += W(i, k) * x[static_cast<std::size_t>(k)];
            out[static_cast<std::size_t>(i)] = s;
        }
        return out;
    }

    std::vector<double> gru(const std::string& p, const std::vector<double>& x, const std::vector<double>& h) const {
        const auto W = m.param(p + ".W");
        const auto U = m.param(p + ".U");
        const auto b = m.param(p + ".b");
        const auto H = static_cast<Eigen::Index>(h.size());
        auto pre = [&](Eigen::Index row, const std::vector<double>& hh) {
            double s = b(row, 0);
            for (Eigen::Index k = 0; k < W.cols(); ++k) s += W(row, k) * x[static_cast<std::size_t>(k)];
            for (Eigen::Index k = 0; k < H; ++k) s += U(row, k) * hh[static_cast<std::size_t>(k)];
            return s;
        };
        auto sig = [](double a) { return 1.0 / (1.0 + std::exp(-a)); };
        std::vector<double> z(h.size()), r(h.size()), rh(h.size()), out(h.size());
        for (Eigen::Index i = 0; i < H; ++i) {
            z[static_cast<std::size_t>(i)] = sig(pre(i, h));
            r[static_cast<std::size_t>(i)] = sig(pre(H + i, h));
        }
        for (std::size_t i = 0; i < h.size(); ++i) rh[i] = r[i] * h[i];
        for (Eigen::Index i = 0; i < H; ++i) {
            const auto k = static_cast<std::size_t>(i);
            const double n = std::tanh(pre(2 * H + i, rh));
            out[k] = (1.0 - z[k]) * h[k] + z[k] * n;
        }
        return out;
    }

    static double ce(const std::vector<double>& logits, int target) {
        double mx = logits[0];
        for (double l : logits) mx = std::max(mx, l);
        double s = 0.0;
        for (double l : logits) s += std::exp(l - mx);
        return -(logits[static_cast<std::size_t>(target)] - mx - std::log(s));
    }
};

}  // namespace

TEST_CASE("model config validation and serialization") {
    ModelConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(config_from_json(config_to_json(c)) == c);
    CHECK(config_from_json(nlohmann::json::object()) == c);
    CHECK_THROWS_AS(config_from_json({{"hidden", 3}}), InvalidInput);
    CHECK_THROWS_AS(config_from_json({{"window", "five"}}), InvalidInput);
    CHECK_THROWS_AS(config_from_json({{"window", 0}}), InvalidInput);
    c.node_layers = 0;
    CHECK_THROWS_AS(c.validate(), InvalidInput);
    c = ModelConfig{};
    c.learning_rate = 0.0;
    CHECK_THROWS_AS(ForecastModel{c}, InvalidInput);
}

TEST_CASE("parameter layout is contiguous and matches the configured shapes") {
    const ModelConfig c = ModelConfig{};
    const ForecastModel m(c);
    Eigen::Index offset = 0;
    for (const ParamBlock& b : m.blocks()) {
        CHECK(b.offset == offset);
        offset += b.rows * b.cols;
    }
    CHECK(offset == m.parameters().size());
    CHECK(m.param("node.gru0.W").rows() == 3 * c.node_hidden);
    CHECK(m.param("node.gru0.W").cols() == c.node_embed_adj + c.node_embed_attr);
    CHECK(m.param("node.gru3.U").cols() == c.node_hidden);
    CHECK(m.param("node.out.W").rows() == kNodeVocab);
    CHECK(m.param("edge.out.W").rows() == kEdgeVocab);
    CHECK(m.param("edge.init3.W").cols() == c.node_hidden + c.edge_embed);
    CHECK_THROWS_AS(m.param("nope"), InvalidInput);
    CHECK(ForecastModel(c) == m);
    CHECK_FALSE(ForecastModel(tiny(2)) == ForecastModel(tiny(3)));
}

TEST_CASE("loss factorizes into independent per-position cross-entropies") {
    const ForecastModel m(tiny(4));
    const Oracle o{m};
    const AttackGraph g = three_node_graph();
    const SequenceEncoding s = to_sequence(g, 5);
    const LossBreakdown lb = m.loss(s);

    const int NL = m.config().node_layers;
    const int EL = m.config().edge_layers;
    std::vector<int> codes = s.node_codes;
    std::vector<std::vector<int>> adj = s.adj_vectors;
    codes.push_back(kTerminatorCode);
    adj.emplace_back(3, 0);

    std::vector<std::vector<double>> h(static_cast<std::size_t>(NL),
                                       std::vector<double>(static_cast<std::size_t>(m.config().node_hidden), 0.0));
    double node_sum = 0.0, edge_sum = 0.0;
    REQUIRE(lb.node_ce.size() == 4);
    for (std::size_t t = 0; t < codes.size(); ++t) {
        std::vector<double> x(static_cast<std::size_t>(m.config().node_embed_adj), 0.0);
        std::vector<double> attr;
        if (t == 0) {
            attr = o.col("node.attr_embed", kNodeVocab);
        } else {
            for (std::size_t j = 0; j < adj[t - 1].size(); ++j) {
                const auto c = o.col("node.adj_embed", static_cast<int>(j) * kEdgeVocab + adj[t - 1][j]);
                for (std::size_t k = 0; k < x.size(); ++k) x[k] += c[k];
            }
            attr = o.col("node.attr_embed", codes[t - 1]);
        }
        x.insert(x.end(), attr.begin(), attr.end());
        std::vector<double> in = x;
        for (int l = 0; l < NL; ++l) {
            h[static_cast<std::size_t>(l)] = o.gru("node.gru" + std::to_string(l), in, h[static_cast<std::size_t>(l)]);
            in = h[static_cast<std::size_t>(l)];
        }
        const double nce = Oracle::ce(o.affine("node.out.W", "node.out.b", in), codes[t]);
        CHECK(lb.node_ce[t] == doctest::Approx(nce).epsilon(1e-12));
        node_sum += nce;

        if (codes[t] == kTerminatorCode || adj[t].empty()) {
            CHECK(lb.edge_ce[t].empty());
            continue;
        }
        std::vector<double> u = in;
        const auto ne = o.col("edge.node_embed", codes[t]);
        u.insert(u.end(), ne.begin(), ne.end());
        std::vector<std::vector<double>> eh;
        for (int l = 0; l < EL; ++l) {
            auto a = o.affine("edge.init" + std::to_string(l) + ".W", "edge.init" + std::to_string(l) + ".b", u);
            for (double& v : a) v = std::tanh(v);
            eh.push_back(a);
        }
        REQUIRE(lb.edge_ce[t].size() == adj[t].size());
        for (std::size_t j = 0; j < adj[t].size(); ++j) {
            std::vector<double> ein = o.col("edge.in_embed", j == 0 ? kEdgeVocab : adj[t][j - 1]);
            for (int l = 0; l < EL; ++l) {
                eh[static_cast<std::size_t>(l)] = o.gru("edge.gru" + std::to_string(l), ein, eh[static_cast<std::size_t>(l)]);
                ein = eh[static_cast<std::size_t>(l)];
            }
            const double ece = Oracle::ce(o.affine("edge.out.W", "edge.out.b", ein), adj[t][j]);
            CHECK(lb.edge_ce[t][j] == doctest::Approx(ece).epsilon(1e-12));
            edge_sum += ece;
        }
    }
    CHECK(lb.node_loss == doctest::Approx(node_sum).epsilon(1e-12));
    CHECK(lb.edge_loss == doctest::Approx(edge_sum).epsilon(1e-12));
    CHECK(lb.total() == doctest::Approx(node_sum + edge_sum).epsilon(1e-12));
    CHECK(lb.node_total == 4);

    // An explicit terminator gives the same loss.
    CHECK(m.loss(with_terminator(s)).total() == lb.total());
}

TEST_CASE("input contract of the loss") {
    const ForecastModel m(tiny());
    SequenceEncoding empty;
    CHECK_THROWS_AS(m.loss(empty), InvalidInput);
    SequenceEncoding wide = to_sequence(three_node_graph(), 28);
    CHECK_THROWS_AS(m.loss(wide), InvalidInput);
    SequenceEncoding bad = to_sequence(three_node_graph(), 5);
    bad.node_codes[1] = 11;
    CHECK_THROWS_AS(m.loss(bad), InvalidInput);
    bad = to_sequence(three_node_graph(), 5);
    bad.adj_vectors[2].push_back(0);
    CHECK_THROWS_AS(m.loss(bad), InvalidInput);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(3);
    CHECK_THROWS_AS(m.loss_and_gradient(to_sequence(three_node_graph(), 5), g), InvalidInput);
}

TEST_CASE("analytic gradients match finite differences") {
    std::mt19937_64 rng(3);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const AttackGraph g = testing::random_graph(rng, {7, 3, 5, false});
        const SequenceEncoding s = to_sequence(g, 5);
        const ForecastModel m(tiny(seed));
        const double err = gradient_check(m, s, 400, seed);
        CHECK(err < 1e-4);
        CHECK(gradient_check(m, s, 400, seed) == err);
    }
    ModelConfig full;
    const ForecastModel big(full);
    CHECK(gradient_check(big, to_sequence(three_node_graph(), 5), 200) < 1e-4);
    CHECK_THROWS_AS(gradient_check(big, SequenceEncoding{}), InvalidInput);
}

TEST_CASE("gradients stay correct after training") {
    std::mt19937_64 rng(8);
    std::vector<SequenceEncoding> corpus;
    for (int i = 0; i < 4; ++i) corpus.push_back(to_sequence(testing::random_graph(rng, {6, 2, 5, false}), 5));
    ModelConfig c = tiny(5);
    c.epochs = 30;
    c.batch_size = 2;
    auto r = train(corpus, c);
    CHECK(gradient_check(r.model, corpus[0], 300) < 1e-4);
}

TEST_CASE("training is deterministic and validates its corpus") {
    std::mt19937_64 rng(11);
    std::vector<SequenceEncoding> corpus;
    for (int i = 0; i < 5; ++i) corpus.push_back(to_sequence(testing::random_graph(rng, {6, 2, 5, false}), 5));
    ModelConfig c = tiny(9);
    c.epochs = 6;
    c.batch_size = 2;
    const auto a = train(corpus, c);
    const auto b = train(corpus, c);
    CHECK(a.model == b.model);
    REQUIRE(a.report.epochs.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(a.report.epochs[i].node_loss == b.report.epochs[i].node_loss);
        CHECK(a.report.epochs[i].edge_tpr == b.report.epochs[i].edge_tpr);
        CHECK(a.report.epochs[i].node_tpr >= 0.0);
        CHECK(a.report.epochs[i].node_tpr <= 1.0);
        CHECK(a.report.epochs[i].edge_tpr <= 1.0);
    }
    c.seed = 10;
    CHECK_FALSE(train(corpus, c).model == a.model);

    CHECK_THROWS_AS(train({}, c), InvalidInput);
    auto mixed = corpus;
    mixed.push_back(to_sequence(three_node_graph(), 28));
    CHECK_THROWS_AS(train(mixed, c), InvalidInput);
}

TEST_CASE("an untrained model predicts balanced random codes at chance level") {
    // Each position ends the sequence with probability 1/8 and otherwise
    // draws one of the seven attributes, so every target is uniform over the
    // eight node codes whatever the prefix.
    std::mt19937_64 rng(21);
    std::vector<SequenceEncoding> corpus;
    std::size_t positions = 0;
    while (positions < 4000) {
        SequenceEncoding s;
        s.window = 5;
        while (rng() % 8 != 0) {
            const std::size_t i = s.node_codes.size();
            s.node_codes.push_back(static_cast<int>(rng() % kNumEntityAttrs));
            std::vector<int> adj(std::min<std::size_t>(i, 5));
            for (int& a : adj) a = static_cast<int>(rng() % kEdgeVocab);
            s.adj_vectors.push_back(adj);
        }
        positions += s.node_codes.size() + 1;
        if (!s.node_codes.empty()) corpus.push_back(std::move(s));
    }
    const ForecastModel m(ModelConfig{});
    const EpochStats e = evaluate(m, corpus);
    CHECK(e.node_tpr == doctest::Approx(1.0 / kNodeVocab).epsilon(0.25));
}

TEST_CASE("a model overfit on one graph reproduces every continuation") {
    CorpusSpec spec;
    spec.min_chain = spec.max_chain = 2;
    spec.count = 1;
    spec.seed = 4;
    const AttackGraph g = synthesize_corpus(templates(), spec).graphs.at(0);
    const SequenceEncoding s = to_sequence(g, 5);
    ModelConfig c = compact(2);
    c.epochs = 120;
    const auto r = train({s}, c);
    const EpochStats e = evaluate(r.model, {s});
    CHECK(e.node_tpr == 1.0);
    CHECK(e.edge_tpr == 1.0);
    for (std::size_t n = 0; n < s.size(); ++n) {
        SequenceEncoding prefix;
        prefix.window = 5;
        prefix.node_codes.assign(s.node_codes.begin(), s.node_codes.begin() + static_cast<long>(n));
        prefix.adj_vectors.assign(s.adj_vectors.begin(), s.adj_vectors.begin() + static_cast<long>(n));
        const Prediction p = predict_next(r.model, prefix);
        CHECK(p.node_code == s.node_codes[n]);
        CHECK(p.edge_codes == s.adj_vectors[n]);
        CHECK(p.node_probs.sum() == doctest::Approx(1.0).epsilon(1e-9));
    }
    const Prediction end = predict_next(r.model, g);
    CHECK(end.is_terminator());
    CHECK(end.edge_codes.empty());
    CHECK(predict_next(r.model, g, PredictMode::Greedy).node_code == end.node_code);
}

TEST_CASE("prediction modes") {
    const ForecastModel m(tiny(6));
    const AttackGraph g = three_node_graph();
    const Prediction a = predict_next(m, g);
    const Prediction b = predict_next(m, g);
    CHECK(a.node_code == b.node_code);
    CHECK(a.edge_codes == b.edge_codes);
    CHECK(a.node_probs.sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK((a.node_probs.array() >= 0.0).all());
    const Prediction s1 = predict_next(m, g, PredictMode::Sample, 99);
    const Prediction s2 = predict_next(m, g, PredictMode::Sample, 99);
    CHECK(s1.node_code == s2.node_code);
    CHECK(s1.edge_codes == s2.edge_codes);
    if (!a.is_terminator()) CHECK(a.edge_codes.size() == 3);
    CHECK_THROWS_AS(predict_next(m, with_terminator(to_sequence(g, 5))), InvalidInput);
    CHECK_THROWS_AS(predict_next(m, to_sequence(g, 6)), InvalidInput);

    // Sampling follows the predicted distribution.
    std::vector<int> counts(kNodeVocab, 0);
    const int draws = 4000;
    for (int i = 0; i < draws; ++i) ++counts[static_cast<std::size_t>(predict_next(m, g, PredictMode::Sample, i).node_code)];
    for (int c = 0; c < kNodeVocab; ++c) {
        const double p = a.node_probs[c];
        CHECK(std::abs(counts[static_cast<std::size_t>(c)] / double(draws) - p) < 5 * std::sqrt(p * (1 - p) / draws) + 1e-3);
    }
}

TEST_CASE("forecast keeps the input and only adds valid edges") {
    std::mt19937_64 rng(31);
    const ForecastModel m(tiny(12));
    for (int i = 0; i < 60; ++i) {
        const AttackGraph g = testing::random_graph(rng, {4 + rng() % 8, 3, 5, false});
        StopCriterion stop;
        stop.max_steps = 4;
        stop.stop_on_terminator = i % 2 == 0;
        const auto r = forecast(m, g, stop, {PredictMode::Sample, static_cast<std::uint64_t>(i)});
        r.graph.validate();
        CHECK(r.graph.role() == GraphRole::AFG);
        CHECK(r.steps <= 4);
        for (std::size_t k = 0; k < g.node_count(); ++k) CHECK(r.graph.node(k) == g.node(k));
        for (std::size_t k = 0; k < g.edge_count(); ++k) CHECK(r.graph.edges()[k] == g.edges()[k]);
        CHECK(r.graph.node_count() == g.node_count() + r.added_nodes);
        CHECK(r.graph.edge_count() == g.edge_count() + r.added_edges);
        for (std::size_t k = g.node_count(); k < r.graph.node_count(); ++k) CHECK(r.graph.node(k).forecast);
        for (std::size_t k = g.edge_count(); k < r.graph.edge_count(); ++k) {
            const Edge& e = r.graph.edges()[k];
            CHECK(e.forecast);
            CHECK(validate_edge(r.graph.node(e.src).attr, e.event, r.graph.node(e.dst).attr));
        }
        CHECK(r.graph.chronologically_consistent());
        const auto again = forecast(m, g, stop, {PredictMode::Sample, static_cast<std::uint64_t>(i)});
        CHECK(graph_to_json(again.graph) == graph_to_json(r.graph));
    }
}

TEST_CASE("forecast with no step budget returns the input") {
    const ForecastModel m(tiny());
    const AttackGraph g = three_node_graph();
    StopCriterion stop;
    stop.max_steps = 0;
    const auto r = forecast(m, g, stop);
    CHECK(r.steps == 0);
    CHECK(r.reason == StopReason::Budget);
    CHECK(r.graph.nodes() == g.nodes());
    CHECK(r.graph.edges() == g.edges());
}

TEST_CASE("forecast restores a deleted node and its technique") {
    CorpusSpec spec;
    spec.min_chain = spec.max_chain = 2;
    spec.count = 1;
    spec.seed = 12;
    const Corpus corpus = synthesize_corpus(templates(), spec);
    const AttackGraph& g = corpus.graphs.at(0);
    ModelConfig c = compact(3);
    c.epochs = 120;
    const auto r = train({to_sequence(g, 5)}, c);

    AttackGraph broken = g;
    const Node last = g.node(g.node_count() - 1);
    broken.remove_node(last.id);

    const auto stop = stop_on_technique_increase(templates(), broken);
    const auto out = forecast(r.model, broken, stop);
    REQUIRE(out.added_nodes >= 1);
    const Node& restored = out.graph.node(broken.node_count());
    CHECK(restored.attr == last.attr);
    std::size_t last_edges = 0;
    for (const Edge& e : g.edges())
        if (e.src == last.id || e.dst == last.id) ++last_edges;
    std::size_t restored_edges = 0;
    for (const Edge& e : out.graph.edges())
        if (e.src == restored.id || e.dst == restored.id) ++restored_edges;
    CHECK(restored_edges == last_edges);

    std::set<std::string> found;
    for (const auto& m : interpret(out.graph, templates())) found.insert(m.technique_id);
    for (const auto& id : corpus.techniques.at(0)) CHECK(found.count(id) == 1);

    // The complete graph has nothing left to add: the model predicts the end.
    StopCriterion on_full = stop_on_technique_increase(templates(), g);
    on_full.stop_on_terminator = false;
    const auto full = forecast(r.model, g, on_full);
    CHECK(full.reason == StopReason::Budget);
    REQUIRE_FALSE(full.diagnostics.empty());
    CHECK(full.diagnostics.back() == "no ATG-count increase");
}

TEST_CASE("checkpoints round-trip bit for bit") {
    ModelConfig c = tiny(17);
    std::mt19937_64 rng(2);
    std::vector<SequenceEncoding> corpus = {to_sequence(testing::random_graph(rng, {6, 2, 5, false}), 5)};
    c.epochs = 3;
    const ForecastModel m = train(corpus, c).model;
    const auto dir = fs::temp_directory_path() / "attackcast_ckpt";
    fs::remove_all(dir);
    save_checkpoint(m, dir / "model.json");
    const ForecastModel back = load_checkpoint(dir / "model.json");
    CHECK(back == m);
    for (Eigen::Index i = 0; i < m.parameters().size(); ++i) {
        if (std::memcmp(&m.parameters()[i], &back.parameters()[i], sizeof(double)) != 0) {
            FAIL("parameter " << i << " differs");
        }
    }
    auto j = checkpoint_to_json(m);
    j["version"] = 99;
    CHECK_THROWS_AS(checkpoint_from_json(j), InvalidInput);
    j = checkpoint_to_json(m);
    j["tensors"][0]["rows"] = 1;
    CHECK_THROWS_AS(checkpoint_from_json(j), InvalidInput);
    j = checkpoint_to_json(m);
    j["tensors"].erase(2);
    CHECK_THROWS_AS(checkpoint_from_json(j), InvalidInput);
    j = checkpoint_to_json(m);
    j["tensors"][1]["data"].erase(0);
    CHECK_THROWS_AS(checkpoint_from_json(j), InvalidInput);
    CHECK_THROWS_AS(checkpoint_from_json({{"format", "other"}}), InvalidInput);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.json"), std::exception);
}

TEST_CASE("training report as a table") {
    TrainReport r;
    r.epochs.push_back({1, 2.5, 0.5, 0.25, 0.125});
    r.epochs.push_back({2, 1.5, 0.25, 0.5, 0.75});
    CHECK(report_csv(r) == "epoch,node_loss,edge_loss,node_tpr,edge_tpr\n1,2.5,0.5,0.25,0.125\n2,1.5,0.25,0.5,0.75\n");
}
