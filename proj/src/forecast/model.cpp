#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "attackcast/forecast.hpp"
#include "forecast_internal.hpp"

namespace attackcast {

void ModelConfig::validate() const {
    if (node_embed_adj <= 0 || node_embed_attr <= 0 || node_hidden <= 0 || node_layers <= 0 || edge_embed <= 0 ||
        edge_hidden <= 0 || edge_layers <= 0) {
        throw InvalidInput("model dimensions and layer counts must be positive");
    }
    if (window < 1) throw InvalidInput("window must be at least 1");
    if (batch_size < 1) throw InvalidInput("batch_size must be at least 1");
    if (epochs < 0) throw InvalidInput("epochs must be non-negative");
    if (!(learning_rate > 0.0)) throw InvalidInput("learning_rate must be positive");
    if (!(grad_clip >= 0.0)) throw InvalidInput("grad_clip must be non-negative");
    if (!(zero_edge_weight > 0.0)) throw InvalidInput("zero_edge_weight must be positive");
}

nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"node_embed_adj", c.node_embed_adj},
            {"node_embed_attr", c.node_embed_attr},
            {"node_hidden", c.node_hidden},
            {"node_layers", c.node_layers},
            {"edge_embed", c.edge_embed},
            {"edge_hidden", c.edge_hidden},
            {"edge_layers", c.edge_layers},
            {"window", c.window},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"learning_rate", c.learning_rate},
            {"seed", c.seed},
            {"grad_clip", c.grad_clip},
            {"zero_edge_weight", c.zero_edge_weight}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw InvalidInput("model config must be an object");
    ModelConfig c;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "node_embed_adj") c.node_embed_adj = value.get<int>();
            else if (key == "node_embed_attr") c.node_embed_attr = value.get<int>();
            else if (key == "node_hidden") c.node_hidden = value.get<int>();
            else if (key == "node_layers") c.node_layers = value.get<int>();
            else if (key == "edge_embed") c.edge_embed = value.get<int>();
            else if (key == "edge_hidden") c.edge_hidden = value.get<int>();
            else if (key == "edge_layers") c.edge_layers = value.get<int>();
            else if (key == "window") c.window = value.get<int>();
            else if (key == "batch_size") c.batch_size = value.get<int>();
            else if (key == "epochs") c.epochs = value.get<int>();
            else if (key == "learning_rate") c.learning_rate = value.get<double>();
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else if (key == "grad_clip") c.grad_clip = value.get<double>();
            else if (key == "zero_edge_weight") c.zero_edge_weight = value.get<double>();
            else throw InvalidInput("unknown model config key '" + key + "'");
        } catch (const nlohmann::json::exception&) {
            throw InvalidInput("model config key '" + key + "' has the wrong type");
        }
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------

ForecastModel::ForecastModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Eigen::Index offset = 0;
    auto add = [&](std::string name, Eigen::Index rows, Eigen::Index cols) {
        by_name_.emplace(name, blocks_.size());
        blocks_.push_back(ParamBlock{std::move(name), rows, cols, offset});
        offset += rows * cols;
    };
    const int M = cfg_.window;
    const int H = cfg_.node_hidden;
    const int He = cfg_.edge_hidden;
    const int De = cfg_.edge_embed;
    add("node.adj_embed", cfg_.node_embed_adj, static_cast<Eigen::Index>(M) * kEdgeVocab);
    add("node.attr_embed", cfg_.node_embed_attr, kNodeVocab + 1);
    for (int l = 0; l < cfg_.node_layers; ++l) {
        const int in = l == 0 ? cfg_.node_embed_adj + cfg_.node_embed_attr : H;
        const std::string p = "node.gru" + std::to_string(l);
        add(p + ".W", 3 * H, in);
        add(p + ".U", 3 * H, H);
        add(p + ".b", 3 * H, 1);
    }
    add("node.out.W", kNodeVocab, H);
    add("node.out.b", kNodeVocab, 1);
    add("edge.node_embed", De, kNodeVocab);
    for (int l = 0; l < cfg_.edge_layers; ++l) {
        const std::string p = "edge.init" + std::to_string(l);
        add(p + ".W", He, H + De);
        add(p + ".b", He, 1);
    }
    add("edge.in_embed", De, kEdgeVocab + 1);
    for (int l = 0; l < cfg_.edge_layers; ++l) {
        const int in = l == 0 ? De : He;
        const std::string p = "edge.gru" + std::to_string(l);
        add(p + ".W", 3 * He, in);
        add(p + ".U", 3 * He, He);
        add(p + ".b", 3 * He, 1);
    }
    add("edge.out.W", kEdgeVocab, He);
    add("edge.out.b", kEdgeVocab, 1);

    params_ = Eigen::VectorXd::Zero(offset);
    std::mt19937_64 rng(cfg_.seed);
    for (const ParamBlock& b : blocks_) {
        double k;
        if (b.name.find("embed") != std::string::npos) {
            k = std::sqrt(3.0 / static_cast<double>(b.rows));  // unit-norm columns on average
        } else if (b.name.find(".gru") != std::string::npos) {
            k = 1.0 / std::sqrt(static_cast<double>(b.rows / 3));
        } else {
            k = 1.0 / std::sqrt(static_cast<double>(b.cols));
        }
        std::uniform_real_distribution<double> dist(-k, k);
        for (Eigen::Index i = 0; i < b.rows * b.cols; ++i) params_[b.offset + i] = dist(rng);
    }
}

const ParamBlock& ForecastModel::block(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw InvalidInput("no parameter named '" + name + "'");
    return blocks_[it->second];
}

Eigen::Map<const Eigen::MatrixXd> ForecastModel::param(const std::string& name) const {
    const ParamBlock& b = block(name);
    return Eigen::Map<const Eigen::MatrixXd>(params_.data() + b.offset, b.rows, b.cols);
}

LossBreakdown ForecastModel::loss(const SequenceEncoding& s) const {
    const detail::Network net(*this);
    return net.run(detail::prepare(s, cfg_.window), nullptr);
}

LossBreakdown ForecastModel::loss_and_gradient(const SequenceEncoding& s, Eigen::VectorXd& grad) const {
    if (grad.size() != params_.size()) throw InvalidInput("gradient vector has the wrong size");
    const detail::Network net(*this);
    return net.run(detail::prepare(s, cfg_.window), &grad);
}

// ---------------------------------------------------------------------------

namespace detail {

Prepared prepare(const SequenceEncoding& s, int window) {
    if (s.node_codes.empty()) throw InvalidInput("empty sequence");
    if (s.window != window) {
        throw InvalidInput("sequence window " + std::to_string(s.window) + " does not match model window " +
                           std::to_string(window));
    }
    if (s.adj_vectors.size() != s.node_codes.size()) throw InvalidInput("sequence has mismatched vector counts");
    Prepared p;
    p.codes = s.node_codes;
    p.adj = s.adj_vectors;
    if (!s.has_terminator()) {
        p.codes.push_back(kTerminatorCode);
        p.adj.emplace_back(std::min<std::size_t>(s.node_codes.size(), static_cast<std::size_t>(window)), 0);
    }
    if (p.codes.size() > ForecastModel::max_sequence_length()) throw InvalidInput("sequence too long");
    for (std::size_t i = 0; i < p.codes.size(); ++i) {
        const int c = p.codes[i];
        if (c < 0 || c >= kNodeVocab) throw InvalidInput("node code out of range at position " + std::to_string(i));
        if (c == kTerminatorCode && i + 1 != p.codes.size()) {
            throw InvalidInput("terminator before the end of the sequence");
        }
        const std::size_t expect = std::min<std::size_t>(i, static_cast<std::size_t>(window));
        if (p.adj[i].size() != expect) {
            throw InvalidInput("adjacency vector " + std::to_string(i) + " has length " +
                               std::to_string(p.adj[i].size()) + ", expected " + std::to_string(expect));
        }
        for (int e : p.adj[i]) {
            if (e < 0 || e >= kEdgeVocab) throw InvalidInput("edge code out of range at position " + std::to_string(i));
        }
    }
    return p;
}

namespace {

Eigen::VectorXd sigmoid(const Eigen::VectorXd& a) { return (1.0 / (1.0 + (-a.array()).exp())).matrix(); }

// log-sum-exp stabilized softmax.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
    const double m = logits.maxCoeff();
    Eigen::VectorXd e = (logits.array() - m).exp().matrix();
    return e / e.sum();
}

double cross_entropy(const Eigen::VectorXd& logits, int target) {
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    return lse - logits[target];
}

int argmax(const Eigen::VectorXd& v) {
    Eigen::Index i;
    v.maxCoeff(&i);
    return static_cast<int>(i);
}

}  // namespace

Network::Network(const ForecastModel& m) : model(m), p(m.parameters()) {
    const ModelConfig& c = m.config();
    H = c.node_hidden;
    He = c.edge_hidden;
    M = c.window;
    adj_embed = &m.block("node.adj_embed");
    attr_embed = &m.block("node.attr_embed");
    for (int l = 0; l < c.node_layers; ++l) {
        const std::string n = "node.gru" + std::to_string(l);
        node_gru.push_back({&m.block(n + ".W"), &m.block(n + ".U"), &m.block(n + ".b")});
    }
    node_out_W = &m.block("node.out.W");
    node_out_b = &m.block("node.out.b");
    edge_node_embed = &m.block("edge.node_embed");
    for (int l = 0; l < c.edge_layers; ++l) {
        const std::string n = "edge.init" + std::to_string(l);
        edge_init.push_back({&m.block(n + ".W"), &m.block(n + ".b")});
    }
    edge_in_embed = &m.block("edge.in_embed");
    for (int l = 0; l < c.edge_layers; ++l) {
        const std::string n = "edge.gru" + std::to_string(l);
        edge_gru.push_back({&m.block(n + ".W"), &m.block(n + ".U"), &m.block(n + ".b")});
    }
    edge_out_W = &m.block("edge.out.W");
    edge_out_b = &m.block("edge.out.b");
}

Eigen::Map<const Eigen::MatrixXd> Network::mat(const ParamBlock* b) const {
    return Eigen::Map<const Eigen::MatrixXd>(p.data() + b->offset, b->rows, b->cols);
}

Eigen::Map<Eigen::MatrixXd> Network::gmat(Eigen::VectorXd& g, const ParamBlock* b) {
    return Eigen::Map<Eigen::MatrixXd>(g.data() + b->offset, b->rows, b->cols);
}

GruStep Network::gru_forward(const GruRefs& g, const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev) const {
    const auto W = mat(g.W);
    const auto U = mat(g.U);
    const auto b = mat(g.b).col(0);
    const Eigen::Index h = h_prev.size();
    GruStep s;
    s.x = x;
    s.h_prev = h_prev;
    const Eigen::VectorXd wx = W * x + b;
    const Eigen::VectorXd uh = U.topRows(2 * h) * h_prev;
    s.z = sigmoid(wx.head(h) + uh.head(h));
    s.r = sigmoid(wx.segment(h, h) + uh.segment(h, h));
    const Eigen::VectorXd rh = s.r.cwiseProduct(h_prev);
    s.n = (wx.tail(h) + U.bottomRows(h) * rh).array().tanh().matrix();
    s.h = (1.0 - s.z.array()).matrix().cwiseProduct(h_prev) + s.z.cwiseProduct(s.n);
    return s;
}

void Network::gru_backward(const GruRefs& g, const GruStep& s, const Eigen::VectorXd& dh, Eigen::VectorXd& grad,
                           Eigen::VectorXd& dx, Eigen::VectorXd& dh_prev) const {
    const auto W = mat(g.W);
    const auto U = mat(g.U);
    auto gW = gmat(grad, g.W);
    auto gU = gmat(grad, g.U);
    auto gb = gmat(grad, g.b).col(0);
    const Eigen::Index h = s.h_prev.size();

    const Eigen::ArrayXd z = s.z.array();
    const Eigen::ArrayXd r = s.r.array();
    const Eigen::ArrayXd n = s.n.array();
    const Eigen::ArrayXd hp = s.h_prev.array();
    const Eigen::ArrayXd d = dh.array();

    Eigen::VectorXd da(3 * h);
    da.tail(h) = (d * z * (1.0 - n * n)).matrix();                 // candidate pre-activation
    da.head(h) = (d * (n - hp) * z * (1.0 - z)).matrix();          // update gate
    const Eigen::VectorXd drh = U.bottomRows(h).transpose() * da.tail(h);
    da.segment(h, h) = (drh.array() * hp * r * (1.0 - r)).matrix();  // reset gate

    const Eigen::VectorXd rh = (r * hp).matrix();
    gW.noalias() += da * s.x.transpose();
    gb += da;
    gU.topRows(2 * h).noalias() += da.head(2 * h) * s.h_prev.transpose();
    gU.bottomRows(h).noalias() += da.tail(h) * rh.transpose();

    dx.noalias() = W.transpose() * da;
    dh_prev = (d * (1.0 - z)).matrix() + (drh.array() * r).matrix();
    dh_prev.noalias() += U.topRows(2 * h).transpose() * da.head(2 * h);
}

Eigen::VectorXd Network::node_input(const Prepared& s, std::size_t t) const {
    const auto A = mat(adj_embed);
    const auto E = mat(attr_embed);
    Eigen::VectorXd x(A.rows() + E.rows());
    x.head(A.rows()).setZero();
    if (t == 0) {
        x.tail(E.rows()) = E.col(kNodeVocab);
    } else {
        const auto& prev = s.adj[t - 1];
        for (std::size_t j = 0; j < prev.size(); ++j) {
            x.head(A.rows()) += A.col(static_cast<Eigen::Index>(j) * kEdgeVocab + prev[j]);
        }
        x.tail(E.rows()) = E.col(s.codes[t - 1]);
    }
    return x;
}

std::vector<GruStep> Network::node_step(const Eigen::VectorXd& x, const std::vector<GruStep>* prev) const {
    std::vector<GruStep> out;
    out.reserve(node_gru.size());
    Eigen::VectorXd in = x;
    for (std::size_t l = 0; l < node_gru.size(); ++l) {
        const Eigen::VectorXd hp = prev ? (*prev)[l].h : Eigen::VectorXd::Zero(H);
        out.push_back(gru_forward(node_gru[l], in, hp));
        in = out.back().h;
    }
    return out;
}

Eigen::VectorXd Network::node_logits(const Eigen::VectorXd& top) const {
    return mat(node_out_W) * top + mat(node_out_b).col(0);
}

EdgeInit Network::edge_init_state(const Eigen::VectorXd& top, int code) const {
    EdgeInit e;
    e.u.resize(H + edge_node_embed->rows);
    e.u.head(H) = top;
    e.u.tail(edge_node_embed->rows) = mat(edge_node_embed).col(code);
    for (const auto& ref : edge_init) {
        e.h.push_back((mat(ref.W) * e.u + mat(ref.b).col(0)).array().tanh().matrix());
    }
    return e;
}

std::vector<GruStep> Network::edge_step(int prev_code, const std::vector<Eigen::VectorXd>& hidden) const {
    std::vector<GruStep> out;
    out.reserve(edge_gru.size());
    Eigen::VectorXd in = mat(edge_in_embed).col(prev_code);
    for (std::size_t l = 0; l < edge_gru.size(); ++l) {
        out.push_back(gru_forward(edge_gru[l], in, hidden[l]));
        in = out.back().h;
    }
    return out;
}

Eigen::VectorXd Network::edge_logits(const Eigen::VectorXd& top) const {
    return mat(edge_out_W) * top + mat(edge_out_b).col(0);
}

LossBreakdown Network::run(const Prepared& s, Eigen::VectorXd* grad) const {
    const std::size_t T = s.codes.size();
    const double w0 = model.config().zero_edge_weight;
    LossBreakdown out;
    out.node_ce.assign(T, 0.0);
    out.edge_ce.resize(T);

    std::vector<std::vector<GruStep>> node_steps(T);
    std::vector<Eigen::VectorXd> node_dlogits(T);
    // Edge caches per node position.
    std::vector<EdgeInit> inits(T);
    std::vector<std::vector<std::vector<GruStep>>> edge_steps(T);
    std::vector<std::vector<Eigen::VectorXd>> edge_dlogits(T);

    for (std::size_t t = 0; t < T; ++t) {
        node_steps[t] = node_step(node_input(s, t), t == 0 ? nullptr : &node_steps[t - 1]);
        const Eigen::VectorXd& top = node_steps[t].back().h;
        const Eigen::VectorXd logits = node_logits(top);
        const int target = s.codes[t];
        const double ce = cross_entropy(logits, target);
        out.node_ce[t] = ce;
        out.node_loss += ce;
        ++out.node_total;
        if (argmax(logits) == target) ++out.node_correct;
        if (grad) {
            node_dlogits[t] = softmax(logits);
            node_dlogits[t][target] -= 1.0;
        }

        const std::size_t len = s.adj[t].size();
        if (target == kTerminatorCode || len == 0) continue;
        inits[t] = edge_init_state(top, target);
        std::vector<Eigen::VectorXd> hidden = inits[t].h;
        out.edge_ce[t].assign(len, 0.0);
        for (std::size_t j = 0; j < len; ++j) {
            const int prev = j == 0 ? kEdgeVocab : s.adj[t][j - 1];
            auto steps = edge_step(prev, hidden);
            for (std::size_t l = 0; l < steps.size(); ++l) hidden[l] = steps[l].h;
            const Eigen::VectorXd el = edge_logits(steps.back().h);
            const int et = s.adj[t][j];
            const double w = et == 0 ? w0 : 1.0;
            const double ece = w * cross_entropy(el, et);
            out.edge_ce[t][j] = ece;
            out.edge_loss += ece;
            if (et != 0) {
                ++out.edge_nonzero;
                if (argmax(el) == et) ++out.edge_correct;
            }
            if (grad) {
                Eigen::VectorXd d = softmax(el);
                d[et] -= 1.0;
                edge_dlogits[t].push_back(w * d);
                edge_steps[t].push_back(std::move(steps));
            }
        }
    }
    if (!grad) return out;

    Eigen::VectorXd& g = *grad;
    const std::size_t NL = node_gru.size();
    const std::size_t EL = edge_gru.size();
    std::vector<Eigen::VectorXd> carry(NL, Eigen::VectorXd::Zero(H));
    Eigen::VectorXd dx, dhp;

    for (std::size_t ti = T; ti-- > 0;) {
        const Eigen::VectorXd& top = node_steps[ti].back().h;
        // Node head.
        gmat(g, node_out_W).noalias() += node_dlogits[ti] * top.transpose();
        gmat(g, node_out_b).col(0) += node_dlogits[ti];
        Eigen::VectorXd dtop = mat(node_out_W).transpose() * node_dlogits[ti];

        // Edge stack for this position, backwards through its slots.
        if (!edge_steps[ti].empty()) {
            const auto& steps = edge_steps[ti];
            std::vector<Eigen::VectorXd> ecarry(EL, Eigen::VectorXd::Zero(He));
            for (std::size_t j = steps.size(); j-- > 0;) {
                const Eigen::VectorXd& etop = steps[j].back().h;
                gmat(g, edge_out_W).noalias() += edge_dlogits[ti][j] * etop.transpose();
                gmat(g, edge_out_b).col(0) += edge_dlogits[ti][j];
                Eigen::VectorXd dh = mat(edge_out_W).transpose() * edge_dlogits[ti][j];
                for (std::size_t l = EL; l-- > 0;) {
                    dh += ecarry[l];
                    gru_backward(edge_gru[l], steps[j][l], dh, g, dx, dhp);
                    ecarry[l] = dhp;
                    dh = dx;
                }
                const int prev = j == 0 ? kEdgeVocab : s.adj[ti][j - 1];
                gmat(g, edge_in_embed).col(prev) += dh;
            }
            // Initial edge states depend on the node state and node code.
            const EdgeInit& init = inits[ti];
            Eigen::VectorXd du = Eigen::VectorXd::Zero(init.u.size());
            for (std::size_t l = 0; l < EL; ++l) {
                const Eigen::VectorXd da =
                    (ecarry[l].array() * (1.0 - init.h[l].array() * init.h[l].array())).matrix();
                gmat(g, edge_init[l].W).noalias() += da * init.u.transpose();
                gmat(g, edge_init[l].b).col(0) += da;
                du.noalias() += mat(edge_init[l].W).transpose() * da;
            }
            dtop += du.head(H);
            gmat(g, edge_node_embed).col(s.codes[ti]) += du.tail(edge_node_embed->rows);
        }

        // Node stack, top layer first.
        Eigen::VectorXd dh = dtop;
        for (std::size_t l = NL; l-- > 0;) {
            dh += carry[l];
            gru_backward(node_gru[l], node_steps[ti][l], dh, g, dx, dhp);
            carry[l] = dhp;
            dh = dx;
        }
        // dh is now the gradient of the layer-0 input.
        const Eigen::Index da_rows = adj_embed->rows;
        if (ti == 0) {
            gmat(g, attr_embed).col(kNodeVocab) += dh.tail(attr_embed->rows);
        } else {
            const auto& prev = s.adj[ti - 1];
            auto gA = gmat(g, adj_embed);
            for (std::size_t j = 0; j < prev.size(); ++j) {
                gA.col(static_cast<Eigen::Index>(j) * kEdgeVocab + prev[j]) += dh.head(da_rows);
            }
            gmat(g, attr_embed).col(s.codes[ti - 1]) += dh.tail(attr_embed->rows);
        }
    }
    return out;
}

}  // namespace detail

}  // namespace attackcast
