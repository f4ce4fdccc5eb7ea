#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "attackcast/forecast.hpp"
#include "attackcast/graph_io.hpp"
#include "forecast_internal.hpp"

namespace attackcast {

namespace {

constexpr const char* kCheckpointFormat = "attackcast-forecast-model";
constexpr int kCheckpointVersion = 1;

std::vector<detail::Prepared> prepare_corpus(const std::vector<SequenceEncoding>& corpus, int window) {
    if (corpus.empty()) throw InvalidInput("training corpus is empty");
    std::vector<detail::Prepared> out;
    out.reserve(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (corpus[i].window != window) {
            throw InvalidInput("corpus entry " + std::to_string(i) + " uses window " +
                               std::to_string(corpus[i].window) + " but the model uses " + std::to_string(window));
        }
        out.push_back(detail::prepare(corpus[i], window));
    }
    return out;
}

struct Totals {
    double node_loss = 0.0, edge_loss = 0.0;
    std::size_t node_total = 0, node_correct = 0, edge_positions = 0, edge_nonzero = 0, edge_correct = 0;

    void add(const LossBreakdown& b) {
        node_loss += b.node_loss;
        edge_loss += b.edge_loss;
        node_total += b.node_total;
        node_correct += b.node_correct;
        for (const auto& v : b.edge_ce) edge_positions += v.size();
        edge_nonzero += b.edge_nonzero;
        edge_correct += b.edge_correct;
    }

    EpochStats stats(int epoch) const {
        EpochStats s;
        s.epoch = epoch;
        auto ratio = [](double a, std::size_t b) { return b == 0 ? 0.0 : a / static_cast<double>(b); };
        s.node_loss = ratio(node_loss, node_total);
        s.edge_loss = ratio(edge_loss, edge_positions);
        s.node_tpr = ratio(static_cast<double>(node_correct), node_total);
        s.edge_tpr = ratio(static_cast<double>(edge_correct), edge_nonzero);
        return s;
    }
};

EpochStats evaluate_prepared(const ForecastModel& model, const std::vector<detail::Prepared>& data, int epoch) {
    const detail::Network net(model);
    Totals t;
    for (const auto& s : data) t.add(net.run(s, nullptr));
    return t.stats(epoch);
}

int select(const Eigen::VectorXd& probs, PredictMode mode, std::mt19937_64& rng) {
    if (mode == PredictMode::Greedy) {
        Eigen::Index i;
        probs.maxCoeff(&i);
        return static_cast<int>(i);
    }
    std::discrete_distribution<int> dist(probs.data(), probs.data() + probs.size());
    return dist(rng);
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
    Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp().matrix();
    return e / e.sum();
}

}  // namespace

EpochStats evaluate(const ForecastModel& model, const std::vector<SequenceEncoding>& corpus) {
    return evaluate_prepared(model, prepare_corpus(corpus, model.config().window), 0);
}

TrainReport train_more(ForecastModel& model, const std::vector<SequenceEncoding>& corpus,
                       const std::function<void(const EpochStats&)>& on_epoch) {
    const ModelConfig& cfg = model.config();
    const auto data = prepare_corpus(corpus, cfg.window);

    const Eigen::Index P = model.parameters().size();
    Eigen::VectorXd m = Eigen::VectorXd::Zero(P);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(P);
    Eigen::VectorXd grad(P);
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double b1t = 1.0, b2t = 1.0;

    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    const auto batch = static_cast<std::size_t>(cfg.batch_size);

    TrainReport report;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        Totals running;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            grad.setZero();
            {
                const detail::Network net(model);
                for (std::size_t k = start; k < end; ++k) running.add(net.run(data[order[k]], &grad));
            }
            grad /= static_cast<double>(end - start);
            if (cfg.grad_clip > 0.0) {
                const double norm = grad.norm();
                if (norm > cfg.grad_clip) grad *= cfg.grad_clip / norm;
            }
            b1t *= b1;
            b2t *= b2;
            m = b1 * m + (1.0 - b1) * grad;
            v = b2 * v + (1.0 - b2) * grad.cwiseAbs2();
            const double lr = cfg.learning_rate * std::sqrt(1.0 - b2t) / (1.0 - b1t);
            model.parameters().array() -= lr * m.array() / (v.array().sqrt() + eps);
        }
        const EpochStats s = running.stats(epoch);
        report.epochs.push_back(s);
        if (on_epoch) on_epoch(s);
    }
    return report;
}

TrainResult train(const std::vector<SequenceEncoding>& corpus, const ModelConfig& cfg,
                  const std::function<void(const EpochStats&)>& on_epoch) {
    cfg.validate();
    prepare_corpus(corpus, cfg.window);
    TrainResult r{ForecastModel(cfg), {}};
    r.report = train_more(r.model, corpus, on_epoch);
    return r;
}

double gradient_check(const ForecastModel& model, const SequenceEncoding& sample, std::size_t samples,
                      std::uint64_t seed) {
    const detail::Prepared s = detail::prepare(sample, model.config().window);
    Eigen::VectorXd analytic = Eigen::VectorXd::Zero(model.parameters().size());
    detail::Network(model).run(s, &analytic);

    const auto P = static_cast<std::size_t>(model.parameters().size());
    std::vector<std::size_t> idx(P);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(samples, P));

    ForecastModel probe = model;
    const detail::Network net(probe);
    // Fourth-order central stencil: truncation error stays far below the
    // roundoff of the summed loss at this step size.
    constexpr double h = 1e-3;
    // Gradients below this magnitude are compared in absolute terms.
    constexpr double floor = 1e-6;
    double worst = 0.0;
    for (std::size_t i : idx) {
        double& theta = probe.parameters()[static_cast<Eigen::Index>(i)];
        const double saved = theta;
        auto at = [&](double offset) {
            theta = saved + offset;
            return net.run(s, nullptr).total();
        };
        const double numeric = (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12 * h);
        theta = saved;
        const double a = analytic[static_cast<Eigen::Index>(i)];
        const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
        worst = std::max(worst, err);
    }
    return worst;
}

// ---------------------------------------------------------------------------

Prediction predict_next(const ForecastModel& model, const SequenceEncoding& prefix, PredictMode mode,
                        std::uint64_t seed) {
    const int M = model.config().window;
    if (prefix.has_terminator()) throw InvalidInput("prefix must not end with a terminator");
    detail::Prepared s;
    if (!prefix.node_codes.empty()) {
        s = detail::prepare(prefix, M);
        s.codes.pop_back();
        s.adj.pop_back();
    } else if (prefix.window != M) {
        throw InvalidInput("prefix window does not match model window");
    }
    const std::size_t n = s.codes.size();

    const detail::Network net(model);
    std::vector<detail::GruStep> state;
    for (std::size_t t = 0; t <= n; ++t) {
        state = net.node_step(net.node_input(s, t), t == 0 ? nullptr : &state);
    }
    const Eigen::VectorXd& top = state.back().h;
    std::mt19937_64 rng(seed);
    Prediction out;
    out.node_probs = softmax(net.node_logits(top));
    out.node_code = select(out.node_probs, mode, rng);
    if (out.is_terminator()) return out;

    const std::size_t len = std::min<std::size_t>(n, static_cast<std::size_t>(M));
    if (len == 0) return out;
    std::vector<Eigen::VectorXd> hidden = net.edge_init_state(top, out.node_code).h;
    int prev = kEdgeVocab;
    for (std::size_t j = 0; j < len; ++j) {
        const auto steps = net.edge_step(prev, hidden);
        for (std::size_t l = 0; l < steps.size(); ++l) hidden[l] = steps[l].h;
        prev = select(softmax(net.edge_logits(steps.back().h)), mode, rng);
        out.edge_codes.push_back(prev);
    }
    return out;
}

Prediction predict_next(const ForecastModel& model, const AttackGraph& g, PredictMode mode, std::uint64_t seed) {
    if (g.node_count() + 1 > ForecastModel::max_sequence_length()) {
        throw InvalidInput("graph has " + std::to_string(g.node_count()) + " nodes, above the model limit");
    }
    return predict_next(model, to_sequence(g, model.config().window), mode, seed);
}

StopCriterion stop_on_technique_increase(std::vector<AtgTemplate> templates, const AttackGraph& baseline,
                                         const AlignmentConfig& cfg, std::size_t max_steps) {
    const std::size_t base = interpret(baseline, templates, cfg).size();
    StopCriterion stop;
    stop.max_steps = max_steps;
    stop.not_fired_note = "no ATG-count increase";
    stop.fired = [templates = std::move(templates), cfg, base](const AttackGraph& g) {
        return interpret(g, templates, cfg).size() > base;
    };
    return stop;
}

std::string_view to_string(StopReason r) {
    switch (r) {
        case StopReason::Criterion:
            return "criterion";
        case StopReason::Terminator:
            return "terminator";
        case StopReason::Budget:
            return "budget";
    }
    return "?";
}

ForecastResult forecast(const ForecastModel& model, const AttackGraph& apg, const StopCriterion& stop,
                        const ForecastOptions& opt) {
    const int M = model.config().window;
    ForecastResult r;
    r.graph = apg;
    r.graph.set_role(GraphRole::AFG);
    bool stopped = false;
    std::size_t fresh = 0;
    auto fresh_id = [&] {
        std::string id;
        do {
            id = "f" + std::to_string(fresh++);
        } while (r.graph.contains(id));
        return id;
    };

    for (std::size_t step = 0; step < stop.max_steps && !stopped; ++step) {
        const SequenceEncoding enc = to_sequence(r.graph, M);
        if (step == 0 && enc.lossy) {
            r.diagnostics.push_back("input is not fully representable with window " + std::to_string(M));
        }
        const Prediction pred = predict_next(model, enc, opt.mode, opt.seed + step);
        ++r.steps;
        if (pred.is_terminator()) {
            if (stop.stop_on_terminator) {
                r.reason = StopReason::Terminator;
                stopped = true;
            }
            continue;
        }
        const EntityAttr attr = attr_from_code(pred.node_code);
        const std::size_t n = r.graph.node_count();
        struct Pending {
            NodeId other;
            EventType event;
            bool other_is_subject;
        };
        std::vector<Pending> edges;
        for (std::size_t j = 0; j < pred.edge_codes.size(); ++j) {
            if (pred.edge_codes[j] == 0) continue;
            const EventType ev = event_from_code(pred.edge_codes[j]);
            const Node& other = r.graph.node(n - 1 - j);
            const Direction d = resolve_direction(other.attr, ev, attr);
            if (!d.valid) {
                r.diagnostics.push_back("step " + std::to_string(step + 1) + ": dropped " +
                                        std::string(to_string(ev)) + " between " +
                                        std::string(to_string(other.attr)) + " and " +
                                        std::string(to_string(attr)));
                continue;
            }
            edges.push_back({other.id, ev, d.earlier_is_subject});
        }
        if (edges.empty()) {
            r.diagnostics.push_back("step " + std::to_string(step + 1) + ": predicted " +
                                    std::string(to_string(attr)) + " node has no admissible edge");
            continue;
        }
        const NodeId id = r.graph.add_node(attr, "forecast", fresh_id(), true);
        ++r.added_nodes;
        for (const Pending& e : edges) {
            if (e.other_is_subject) {
                r.graph.add_edge(e.other, id, e.event, {}, true);
            } else {
                r.graph.add_edge(id, e.other, e.event, {}, true);
            }
            ++r.added_edges;
        }
        if (stop.fired && stop.fired(r.graph)) {
            r.reason = StopReason::Criterion;
            stopped = true;
        }
    }
    if (!stopped) {
        r.reason = StopReason::Budget;
        if (stop.fired) r.diagnostics.push_back(stop.not_fired_note);
    }
    return r;
}

// ---------------------------------------------------------------------------

nlohmann::json checkpoint_to_json(const ForecastModel& model) {
    nlohmann::json tensors = nlohmann::json::array();
    const Eigen::VectorXd& p = model.parameters();
    for (const ParamBlock& b : model.blocks()) {
        std::vector<double> data(p.data() + b.offset, p.data() + b.offset + b.rows * b.cols);
        tensors.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}, {"data", std::move(data)}});
    }
    return {{"format", kCheckpointFormat},
            {"version", kCheckpointVersion},
            {"config", config_to_json(model.config())},
            {"node_vocab", ForecastModel::node_vocab()},
            {"edge_vocab", ForecastModel::edge_vocab()},
            {"tensors", std::move(tensors)}};
}

ForecastModel checkpoint_from_json(const nlohmann::json& j) {
    try {
        if (j.value("format", std::string{}) != kCheckpointFormat) throw InvalidInput("not a forecast checkpoint");
        if (j.at("version").get<int>() != kCheckpointVersion) {
            throw InvalidInput("unsupported checkpoint version " + j.at("version").dump());
        }
        if (j.at("node_vocab").get<int>() != ForecastModel::node_vocab() ||
            j.at("edge_vocab").get<int>() != ForecastModel::edge_vocab()) {
            throw InvalidInput("checkpoint vocabulary sizes do not match this build");
        }
        ForecastModel model(config_from_json(j.at("config")));
        std::map<std::string, const nlohmann::json*> tensors;
        for (const auto& t : j.at("tensors")) tensors[t.at("name").get<std::string>()] = &t;
        if (tensors.size() != model.blocks().size()) throw InvalidInput("checkpoint has the wrong tensor count");
        for (const ParamBlock& b : model.blocks()) {
            auto it = tensors.find(b.name);
            if (it == tensors.end()) throw InvalidInput("checkpoint lacks tensor '" + b.name + "'");
            const auto& t = *it->second;
            if (t.at("rows").get<Eigen::Index>() != b.rows || t.at("cols").get<Eigen::Index>() != b.cols) {
                throw InvalidInput("tensor '" + b.name + "' has the wrong shape");
            }
            const auto data = t.at("data").get<std::vector<double>>();
            if (static_cast<Eigen::Index>(data.size()) != b.rows * b.cols) {
                throw InvalidInput("tensor '" + b.name + "' has the wrong length");
            }
            std::copy(data.begin(), data.end(), model.parameters().data() + b.offset);
        }
        return model;
    } catch (const nlohmann::json::exception& ex) {
        throw InvalidInput(std::string("malformed checkpoint: ") + ex.what());
    }
}

void save_checkpoint(const ForecastModel& model, const std::filesystem::path& path) {
    write_text_file(path, checkpoint_to_json(model).dump());
}

ForecastModel load_checkpoint(const std::filesystem::path& path) {
    try {
        return checkpoint_from_json(read_json_file(path));
    } catch (const InvalidInput& ex) {
        throw InvalidInput(path.string() + ": " + ex.what());
    }
}

std::string report_csv(const TrainReport& r) {
    std::ostringstream out;
    out << "epoch,node_loss,edge_loss,node_tpr,edge_tpr\n";
    out << std::setprecision(10);
    for (const EpochStats& e : r.epochs) {
        out << e.epoch << ',' << e.node_loss << ',' << e.edge_loss << ',' << e.node_tpr << ',' << e.edge_tpr << '\n';
    }
    return out.str();
}

std::vector<SequenceEncoding> encode_corpus(const std::vector<AttackGraph>& graphs, int window) {
    std::vector<SequenceEncoding> out;
    out.reserve(graphs.size());
    for (const AttackGraph& g : graphs) out.push_back(to_sequence(g, window));
    return out;
}

}  // namespace attackcast
