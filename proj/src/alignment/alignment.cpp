#include "attackcast/alignment.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <future>
#include <limits>
#include <sstream>

namespace attackcast {

// ---------------------------------------------------------------------------
// Delivery rules

DeliveryRules DeliveryRules::defaults() {
    const auto P = AttrClass::of(EntityAttr::P);
    const auto S = AttrClass::of(EntityAttr::S);
    const auto F = AttrClass::files();
    return DeliveryRules({
        {F, EventType::Read, P, false},
        {P, EventType::Write, F, false},
        {AttrClass::of(EntityAttr::F1), EventType::Read, P, true},
        {S, EventType::Receive, P, false},
        {P, EventType::Send, S, false},
        {P, EventType::ForkClone, P, false},
    });
}

namespace {

std::optional<AttrClass> parse_class(const std::string& tok) {
    if (tok == "F*" || tok == "F") return AttrClass::files();
    if (auto a = parse_attr(tok)) return AttrClass::of(*a);
    return std::nullopt;
}

}  // namespace

DeliveryRules DeliveryRules::parse(const std::string& text) {
    std::vector<DeliveryRule> out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ls(line);
        std::string src, ev, dst, extra;
        if (!(ls >> src >> ev >> dst) || (ls >> extra)) {
            throw GraphError("rules line " + std::to_string(lineno) + ": expected 'source_class event sink_class'");
        }
        const auto sc = parse_class(src);
        const auto dc = parse_class(dst);
        if (!sc || !dc) throw GraphError("rules line " + std::to_string(lineno) + ": unknown attribute class");
        DeliveryRule r{*sc, EventType::Read, *dc, false};
        if (ev == "Load") {
            r.load_alias = true;
            if (!sc->any_file && !is_file(sc->attr)) {
                throw GraphError("rules line " + std::to_string(lineno) + ": Load needs a file source");
            }
        } else if (auto e = parse_event(ev)) {
            r.event = *e;
        } else {
            throw GraphError("rules line " + std::to_string(lineno) + ": unknown event '" + ev + "'");
        }
        out.push_back(r);
    }
    return DeliveryRules(std::move(out));
}

DeliveryRules DeliveryRules::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw GraphError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

bool DeliveryRules::admits(EntityAttr src, EventType ev, EntityAttr dst) const {
    return std::any_of(rules_.begin(), rules_.end(), [&](const DeliveryRule& r) { return r.admits(src, ev, dst); });
}

void AlignmentConfig::validate() const {
    if (!(fix_threshold >= 0.0 && fix_threshold <= 1.0)) throw InvalidInput("fix_threshold must lie in [0,1]");
    if (!(interpret_threshold >= 0.0 && interpret_threshold <= 1.0)) {
        throw InvalidInput("interpret_threshold must lie in [0,1]");
    }
    if (max_hops < 1) throw InvalidInput("max_hops must be at least 1");
    if (max_path_length < 1) throw InvalidInput("max_path_length must be at least 1");
    if (max_paths_per_pair < 1) throw InvalidInput("max_paths_per_pair must be at least 1");
}

// ---------------------------------------------------------------------------
// Free functions

std::vector<std::size_t> candidates(std::size_t i, const AttackGraph& gq, const AttackGraph& gp) {
    const EntityAttr attr = gq.node(i).attr;
    const std::size_t qdeg = gq.degree(i);
    const auto hdeg = gp.degrees();
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < gp.node_count(); ++k) {
        if (gp.node(k).attr == attr && qdeg <= hdeg[k]) out.push_back(k);
    }
    return out;
}

bool mhes_equivalent(const QueryEdge& edge, const std::vector<Edge>& path, const AttackGraph& gp,
                     const DeliveryRules& rules) {
    if (path.empty()) throw InvalidInput("mhes_equivalent: empty path");
    for (std::size_t h = 1; h < path.size(); ++h) {
        if (path[h - 1].dst != path[h].src) throw InvalidInput("mhes_equivalent: disconnected path");
    }
    if (gp.node(path.front().src).attr != edge.src_attr) return false;
    if (gp.node(path.back().dst).attr != edge.dst_attr) return false;
    if (path.back().event != edge.event) return false;
    for (std::size_t h = 0; h + 1 < path.size(); ++h) {
        const Edge& e = path[h];
        if (!rules.admits(gp.node(e.src).attr, e.event, gp.node(e.dst).attr)) return false;
    }
    return true;
}

namespace {

using Adjacency = std::vector<std::vector<std::pair<std::size_t, std::size_t>>>;

Adjacency host_adjacency(const AttackGraph& gp) {
    Adjacency out(gp.node_count());
    for (std::size_t e = 0; e < gp.edges().size(); ++e) {
        const Edge& edge = gp.edges()[e];
        out[gp.order_of(edge.src)].emplace_back(e, gp.order_of(edge.dst));
    }
    return out;
}

// Hop distance from `k` over delivery-rule edges only, bounded by `limit`.
std::vector<int> rule_bfs(const AttackGraph& gp, const Adjacency& adj, std::size_t k, const DeliveryRules& rules,
                          int limit) {
    std::vector<int> dist(gp.node_count(), -1);
    dist[k] = 0;
    std::deque<std::size_t> queue{k};
    while (!queue.empty()) {
        const std::size_t u = queue.front();
        queue.pop_front();
        if (dist[u] >= limit) continue;
        for (auto [e, v] : adj[u]) {
            if (dist[v] >= 0) continue;
            const Edge& edge = gp.edges()[e];
            if (!rules.admits(gp.node(u).attr, edge.event, gp.node(v).attr)) continue;
            dist[v] = dist[u] + 1;
            queue.push_back(v);
        }
    }
    return dist;
}

// Completes rule-hop distances with a final hop carrying the query event.
std::vector<int> final_hop(const AttackGraph& gp, const Adjacency& adj, const std::vector<int>& dist,
                           std::size_t k, EventType event, EntityAttr dst_attr, int max_hops) {
    std::vector<int> hops(gp.node_count(), 0);
    for (std::size_t w = 0; w < gp.node_count(); ++w) {
        if (dist[w] < 0 || dist[w] > max_hops - 1) continue;
        for (auto [e, l] : adj[w]) {
            if (l == k || gp.edges()[e].event != event || gp.node(l).attr != dst_attr) continue;
            const int h = dist[w] + 1;
            if (hops[l] == 0 || h < hops[l]) hops[l] = h;
        }
    }
    return hops;
}

}  // namespace

std::vector<int> mhes_hops(const AttackGraph& gp, std::size_t k, const QueryEdge& edge, const DeliveryRules& rules,
                           int max_hops) {
    if (k >= gp.node_count()) throw InvalidInput("mhes_hops: anchor out of range");
    if (gp.node(k).attr != edge.src_attr) return std::vector<int>(gp.node_count(), 0);
    const Adjacency adj = host_adjacency(gp);
    const auto dist = rule_bfs(gp, adj, k, rules, max_hops - 1);
    return final_hop(gp, adj, dist, k, edge.event, edge.dst_attr, max_hops);
}

// ---------------------------------------------------------------------------
// Aligner

Aligner::Aligner(const AttackGraph& gq, const AttackGraph& gp, AlignmentConfig cfg, DeliveryRules rules)
    : gq_(gq), gp_(gp), cfg_(cfg), rules_(std::move(rules)) {
    cfg_.validate();
    const std::size_t nq = gq_.node_count();
    for (const Edge& e : gq_.edges()) {
        qsrc_.push_back(gq_.order_of(e.src));
        qdst_.push_back(gq_.order_of(e.dst));
    }
    q_in_.assign(nq, {});
    for (std::size_t e = 0; e < qdst_.size(); ++e) q_in_[qdst_[e]].push_back(e);
    host_out_ = host_adjacency(gp_);
    cand_.resize(nq);
    is_cand_.assign(nq, std::vector<bool>(gp_.node_count(), false));
    for (std::size_t i = 0; i < nq; ++i) {
        cand_[i] = candidates(i, gq_, gp_);
        for (std::size_t k : cand_[i]) is_cand_[i][k] = true;
    }
    fixed_.assign(nq, std::nullopt);
    host_taken_.assign(gp_.node_count(), false);
    enumerate_paths();
}

void Aligner::enumerate_paths() {
    const std::size_t nq = gq_.node_count();
    std::vector<std::vector<std::size_t>> out_edges(nq);
    for (std::size_t e = 0; e < qsrc_.size(); ++e) out_edges[qsrc_[e]].push_back(e);
    paths_.assign(nq, std::vector<std::vector<std::vector<std::size_t>>>(nq));

    constexpr std::size_t kStepBudget = 2'000'000;
    for (std::size_t i = 0; i < nq; ++i) {
        std::vector<bool> overflow(nq, false);
        std::vector<bool> on_path(nq, false);
        std::vector<std::size_t> stack_edges;
        std::size_t steps = 0;
        bool aborted = false;
        // Depth-first enumeration of simple paths from i.
        auto dfs = [&](auto&& self, std::size_t u) -> void {
            if (aborted) return;
            if (++steps > kStepBudget) {
                aborted = true;
                return;
            }
            if (stack_edges.size() >= cfg_.max_path_length) return;
            for (std::size_t e : out_edges[u]) {
                const std::size_t v = qdst_[e];
                if (on_path[v]) continue;
                stack_edges.push_back(e);
                if (!overflow[v]) {
                    if (paths_[i][v].size() < cfg_.max_paths_per_pair) {
                        paths_[i][v].push_back(stack_edges);
                    } else {
                        overflow[v] = true;
                    }
                }
                on_path[v] = true;
                self(self, v);
                on_path[v] = false;
                stack_edges.pop_back();
            }
        };
        on_path[i] = true;
        dfs(dfs, i);

        // Pairs whose enumeration was cut short fall back to shortest paths.
        std::vector<int> dist(nq, -1);
        std::vector<std::vector<std::size_t>> pred_edges(nq);
        dist[i] = 0;
        std::deque<std::size_t> queue{i};
        while (!queue.empty()) {
            const std::size_t u = queue.front();
            queue.pop_front();
            for (std::size_t e : out_edges[u]) {
                const std::size_t v = qdst_[e];
                if (dist[v] < 0) {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
                if (dist[v] == dist[u] + 1) pred_edges[v].push_back(e);
            }
        }
        for (std::size_t j = 0; j < nq; ++j) {
            if (j == i || dist[j] < 0) continue;
            if (!aborted && !overflow[j] && !paths_[i][j].empty()) continue;
            auto& bucket = paths_[i][j];
            bucket.clear();
            std::vector<std::size_t> rev;
            auto back = [&](auto&& self, std::size_t v) -> void {
                if (bucket.size() >= cfg_.max_paths_per_pair) return;
                if (v == i) {
                    bucket.emplace_back(rev.rbegin(), rev.rend());
                    return;
                }
                for (std::size_t e : pred_edges[v]) {
                    rev.push_back(e);
                    self(self, qsrc_[e]);
                    rev.pop_back();
                }
            };
            back(back, j);
        }
    }
}

const std::vector<std::vector<std::size_t>>& Aligner::query_paths(std::size_t i, std::size_t j) const {
    return paths_.at(i).at(j);
}

const std::vector<int>& Aligner::rule_distance(std::size_t anchor) const {
    auto it = dist_cache_.find(anchor);
    if (it != dist_cache_.end()) return it->second;
    return dist_cache_.emplace(anchor, rule_bfs(gp_, host_out_, anchor, rules_, cfg_.max_hops - 1)).first->second;
}

const std::vector<int>& Aligner::hops_from(std::size_t anchor, std::size_t qe) const {
    const EventType ev = gq_.edges()[qe].event;
    const EntityAttr dst_attr = gq_.node(qdst_[qe]).attr;
    const std::size_t key = static_cast<std::size_t>(event_code(ev)) * kNodeVocab + attr_code(dst_attr);
    auto it = hops_cache_.find({anchor, key});
    if (it != hops_cache_.end()) return it->second;
    auto hops = final_hop(gp_, host_out_, rule_distance(anchor), anchor, ev, dst_attr, cfg_.max_hops);
    return hops_cache_.emplace(std::make_pair(anchor, key), std::move(hops)).first->second;
}

double Aligner::edge_score(std::size_t qe, std::size_t k) const {
    if (gp_.node(k).attr != gq_.node(qsrc_[qe]).attr) return 0.0;
    const auto& hops = hops_from(k, qe);
    double sum = 0.0;
    for (std::size_t l : cand_[qdst_[qe]]) {
        if (hops[l] > 0) sum += 1.0 / hops[l];
    }
    return std::min(1.0, sum);
}

double Aligner::path_score(const std::vector<std::size_t>& path, std::size_t k) const {
    if (path.empty()) return 0.0;
    std::vector<std::size_t> frontier{k};
    double total = 0.0;
    for (std::size_t qe : path) {
        // A frontier that died restarts from every candidate of the edge source.
        if (frontier.empty()) frontier = cand_[qsrc_[qe]];
        double best = 0.0;
        std::vector<bool> reached(gp_.node_count(), false);
        for (std::size_t a : frontier) {
            best = std::max(best, edge_score(qe, a));
            const auto& hops = hops_from(a, qe);
            for (std::size_t l : cand_[qdst_[qe]]) {
                if (hops[l] > 0) reached[l] = true;
            }
        }
        total += best;
        frontier.clear();
        for (std::size_t l = 0; l < reached.size(); ++l) {
            if (reached[l]) frontier.push_back(l);
        }
    }
    return total / static_cast<double>(path.size());
}

double Aligner::pair_score(std::size_t i, std::size_t j, std::size_t k) const {
    const auto& ps = paths_.at(i).at(j);
    if (ps.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& p : ps) sum += path_score(p, k);
    return sum / static_cast<double>(ps.size());
}

double Aligner::node_score(std::size_t i, std::size_t k) const {
    if (gp_.node(k).attr != gq_.node(i).attr) return 0.0;
    double sum = 0.0;
    std::size_t reachable = 0;
    for (std::size_t j = 0; j < gq_.node_count(); ++j) {
        if (j == i || paths_[i][j].empty()) continue;
        sum += pair_score(i, j, k);
        ++reachable;
    }
    if (reachable > 0) return sum / static_cast<double>(reachable);

    // Sink: how closely each incoming query edge lands on k.
    if (q_in_[i].empty()) return 0.0;
    for (std::size_t qe : q_in_[i]) {
        double best = 0.0;
        for (std::size_t a : cand_[qsrc_[qe]]) {
            const int h = hops_from(a, qe)[k];
            if (h > 0) best = std::max(best, 1.0 / h);
        }
        sum += best;
    }
    return sum / static_cast<double>(q_in_[i].size());
}

bool Aligner::flow_realizable(std::size_t i, std::size_t j, std::size_t k, std::size_t m) const {
    for (const auto& path : paths_.at(i).at(j)) {
        std::vector<std::size_t> frontier{k};
        for (std::size_t step = 0; step < path.size() && !frontier.empty(); ++step) {
            const std::size_t qe = path[step];
            const bool last = step + 1 == path.size();
            std::vector<bool> reached(gp_.node_count(), false);
            // The collapsed form of a chain: an unfixed node entered by a
            // delivery edge between equal attributes may be passed over.
            const std::size_t qs = qsrc_[qe];
            const std::size_t qd = qdst_[qe];
            if (!last && !fixed_[qd] && gq_.node(qs).attr == gq_.node(qd).attr &&
                rules_.admits(gq_.node(qs).attr, gq_.edges()[qe].event, gq_.node(qd).attr)) {
                for (std::size_t a : frontier) reached[a] = true;
            }
            for (std::size_t a : frontier) {
                const auto& hops = hops_from(a, qe);
                if (last) {
                    if (hops[m] > 0) reached[m] = true;
                } else if (const auto& via = fixed_[qdst_[qe]]) {
                    if (hops[*via] > 0) reached[*via] = true;
                } else {
                    // An unfixed intermediate only needs the right attribute,
                    // which final_hop already enforces.
                    for (std::size_t l = 0; l < hops.size(); ++l) {
                        if (hops[l] > 0) reached[l] = true;
                    }
                }
            }
            frontier.clear();
            for (std::size_t l = 0; l < reached.size(); ++l) {
                if (reached[l]) frontier.push_back(l);
            }
        }
        if (!frontier.empty()) return true;
    }
    return false;
}

void Aligner::fix(std::size_t i, std::size_t k) {
    if (!is_cand_.at(i).at(k)) throw InvalidInput("fix: host node is not a candidate");
    fixed_[i] = k;
    host_taken_[k] = true;
    cand_[i] = {k};
    // Candidate membership for frontier checks follows the narrowed set.
    std::fill(is_cand_[i].begin(), is_cand_[i].end(), false);
    is_cand_[i][k] = true;
}

bool Aligner::consistent_with_fixed(std::size_t i, std::size_t k) const {
    for (std::size_t f = 0; f < fixed_.size(); ++f) {
        if (!fixed_[f] || f == i) continue;
        if (!paths_[i][f].empty() && !flow_realizable(i, f, k, *fixed_[f])) return false;
        if (!paths_[f][i].empty() && !flow_realizable(f, i, *fixed_[f], k)) return false;
    }
    return true;
}

void Aligner::unfix(std::size_t i, std::vector<std::size_t> saved_cand) {
    if (!fixed_.at(i)) return;
    host_taken_[*fixed_[i]] = false;
    fixed_[i].reset();
    cand_[i] = std::move(saved_cand);
    std::fill(is_cand_[i].begin(), is_cand_[i].end(), false);
    for (std::size_t k : cand_[i]) is_cand_[i][k] = true;
}

std::vector<std::pair<std::size_t, double>> Aligner::ranked_choices(
    std::size_t i, std::vector<std::pair<std::size_t, double>>& scored) const {
    std::vector<std::pair<std::size_t, double>> ok;
    for (std::size_t k : cand_[i]) {
        if (host_taken_[k]) continue;
        const double s = node_score(i, k);
        scored.emplace_back(k, s);
        if (s <= cfg_.fix_threshold) continue;
        if (!consistent_with_fixed(i, k)) continue;
        ok.emplace_back(k, s);
    }
    // Highest score first; ties keep host order, i.e. the smallest order
    // index and therefore the smallest id.
    std::stable_sort(ok.begin(), ok.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    return ok;
}

std::size_t Aligner::count_matched_flows(std::vector<FlowRecord>* flows) const {
    std::size_t matched = 0;
    const std::size_t nq = gq_.node_count();
    for (std::size_t i = 0; i < nq; ++i) {
        for (std::size_t j = 0; j < nq; ++j) {
            if (i == j || paths_[i][j].empty()) continue;
            FlowRecord rec{i, j, false};
            if (fixed_[i] && fixed_[j]) rec.matched = flow_realizable(i, j, *fixed_[i], *fixed_[j]);
            if (rec.matched) ++matched;
            if (flows) flows->push_back(rec);
        }
    }
    return matched;
}

AlignmentResult Aligner::run() {
    const std::size_t nq = gq_.node_count();

    std::vector<std::size_t> order(nq);
    for (std::size_t i = 0; i < nq; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return cand_[a].size() < cand_[b].size(); });

    std::size_t total = 0;
    std::vector<std::vector<std::size_t>> flow_partners(nq);
    for (std::size_t i = 0; i < nq; ++i) {
        for (std::size_t j = 0; j < nq; ++j) {
            if (i == j || paths_[i][j].empty()) continue;
            ++total;
            flow_partners[i].push_back(j);
        }
    }

    // Depth-first search over fixing decisions. The first descent is the
    // greedy assignment; further branches are explored only while they can
    // still beat the best flow count and the expansion budget lasts.
    std::vector<bool> abandoned(nq, false);  // decided to stay unfixed
    std::vector<std::vector<std::pair<std::size_t, double>>> scores(nq);
    std::optional<std::size_t> best_matched;
    std::vector<std::optional<std::size_t>> best_fixed;
    std::vector<std::vector<std::pair<std::size_t, double>>> best_scores;
    std::size_t expansions = 0;
    bool done = false;

    auto upper_bound = [&] {
        std::size_t ub = 0;
        for (std::size_t i = 0; i < nq; ++i) {
            if (abandoned[i]) continue;
            for (std::size_t j : flow_partners[i]) {
                if (!abandoned[j]) ++ub;
            }
        }
        return ub;
    };

    auto search = [&](auto&& self, std::size_t pos) -> void {
        ++expansions;
        if (pos == nq) {
            const std::size_t matched = count_matched_flows(nullptr);
            if (!best_matched || matched > *best_matched) {
                best_matched = matched;
                best_fixed = fixed_;
                best_scores = scores;
            }
            if (matched == total) done = true;
            return;
        }
        if (best_matched && upper_bound() <= *best_matched) return;
        const std::size_t i = order[pos];
        scores[i].clear();
        const auto choices = ranked_choices(i, scores[i]);
        for (const auto& [k, s] : choices) {
            if (done || (best_matched && expansions > cfg_.search_budget)) break;
            auto saved = cand_[i];
            fix(i, k);
            self(self, pos + 1);
            unfix(i, std::move(saved));
        }
        if (done || (best_matched && expansions > cfg_.search_budget)) return;
        abandoned[i] = true;
        self(self, pos + 1);
        abandoned[i] = false;
    };
    search(search, 0);

    for (std::size_t i = 0; i < nq; ++i) {
        if (best_fixed[i]) fix(i, *best_fixed[i]);
    }
    AlignmentResult result;
    result.node_scores = std::move(best_scores);
    result.matched_flows = count_matched_flows(&result.flows);
    result.total_flows = total;
    result.score = total > 0 ? static_cast<double>(result.matched_flows) / static_cast<double>(total) : 0.0;
    result.fixed = fixed_;
    return result;
}

AlignmentResult align(const AttackGraph& gq, const AttackGraph& gp, const AlignmentConfig& cfg,
                      const DeliveryRules& rules) {
    if (gq.empty()) throw InvalidInput("align: empty query graph");
    if (gq.node_count() == 1) throw InvalidInput("align: single-node query graph has no flows");
    Aligner aligner(gq, gp, cfg, rules);
    return aligner.run();
}

std::vector<TechniqueMatch> interpret(const AttackGraph& afg, const std::vector<AtgTemplate>& templates,
                                      const AlignmentConfig& cfg, const DeliveryRules& rules) {
    cfg.validate();
    std::vector<std::future<TechniqueMatch>> jobs;
    jobs.reserve(templates.size());
    for (const AtgTemplate& t : templates) {
        jobs.push_back(std::async(std::launch::async, [&afg, &t, &cfg, &rules] {
            return TechniqueMatch{t.technique_id, align(t.graph, afg, cfg, rules).score};
        }));
    }
    std::vector<TechniqueMatch> out;
    for (auto& job : jobs) {
        TechniqueMatch m = job.get();
        if (m.score > cfg.interpret_threshold) out.push_back(std::move(m));
    }
    std::sort(out.begin(), out.end(), [](const TechniqueMatch& a, const TechniqueMatch& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.technique_id < b.technique_id;
    });
    return out;
}

nlohmann::json alignment_report(const AttackGraph& gq, const AttackGraph& gp, const AlignmentResult& r) {
    nlohmann::json mapping = nlohmann::json::object();
    for (std::size_t i = 0; i < r.fixed.size(); ++i) {
        mapping[gq.node(i).id] = r.fixed[i] ? nlohmann::json(gp.node(*r.fixed[i]).id) : nlohmann::json(nullptr);
    }
    nlohmann::json flows = nlohmann::json::array();
    for (const FlowRecord& f : r.flows) {
        flows.push_back({{"from", gq.node(f.from).id}, {"to", gq.node(f.to).id}, {"matched", f.matched}});
    }
    return {{"score", r.score},
            {"matched_flows", r.matched_flows},
            {"total_flows", r.total_flows},
            {"fixed", std::move(mapping)},
            {"flows", std::move(flows)}};
}

}  // namespace attackcast
