#include "attackcast/graph.hpp"

#include <algorithm>
#include <array>
#include <set>

namespace attackcast {

namespace {

constexpr std::array<std::string_view, kNumEntityAttrs> kAttrNames = {"F0", "F1", "F2", "F3", "FR", "P", "S"};
constexpr std::array<std::string_view, kNumEventTypes> kEventNames = {"Write", "Execute",  "Read",
                                                                      "Send",  "Receive", "ForkClone"};
constexpr std::array<std::string_view, 4> kRoleNames = {"ASG", "APG", "AFG", "ATG"};

}  // namespace

EntityAttr attr_from_code(int code) {
    if (code < 0 || code >= kNumEntityAttrs) {
        throw InvalidInput("entity attribute code out of range: " + std::to_string(code));
    }
    return static_cast<EntityAttr>(code);
}

EventType event_from_code(int code) {
    if (code < 1 || code > kNumEventTypes) {
        throw InvalidInput("event code out of range: " + std::to_string(code));
    }
    return static_cast<EventType>(code);
}

std::string_view to_string(EntityAttr a) { return kAttrNames.at(attr_code(a)); }
std::string_view to_string(EventType e) { return kEventNames.at(event_code(e) - 1); }
std::string_view to_string(GraphRole r) { return kRoleNames.at(static_cast<std::size_t>(r)); }

std::optional<EntityAttr> parse_attr(std::string_view s) {
    for (int i = 0; i < kNumEntityAttrs; ++i) {
        if (kAttrNames[i] == s) return static_cast<EntityAttr>(i);
    }
    return std::nullopt;
}

std::optional<EventType> parse_event(std::string_view s) {
    for (int i = 0; i < kNumEventTypes; ++i) {
        if (kEventNames[i] == s) return static_cast<EventType>(i + 1);
    }
    return std::nullopt;
}

std::optional<GraphRole> parse_role(std::string_view s) {
    for (std::size_t i = 0; i < kRoleNames.size(); ++i) {
        if (kRoleNames[i] == s) return static_cast<GraphRole>(i);
    }
    return std::nullopt;
}

bool validate_edge(EntityAttr subject, EventType event, EntityAttr object) {
    const bool sp = subject == EntityAttr::P;
    const bool op = object == EntityAttr::P;
    switch (event) {
        case EventType::Write:
        case EventType::Execute:
            return sp && is_file(object);
        case EventType::Read:
            return is_file(subject) && op;
        case EventType::Send:
            return sp && object == EntityAttr::S;
        case EventType::Receive:
            return subject == EntityAttr::S && op;
        case EventType::ForkClone:
            return sp && op;
    }
    return false;
}

AttackGraph::AttackGraph(GraphRole role, std::string provenance) : role_(role), provenance_(std::move(provenance)) {}

const Node& AttackGraph::node(const NodeId& id) const { return nodes_[order_of(id)]; }

std::size_t AttackGraph::order_of(const NodeId& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw GraphError("unknown node id '" + id + "'");
    return it->second;
}

NodeId AttackGraph::add_node(EntityAttr attr, std::string label, NodeId id, bool forecast) {
    if (id.empty()) {
        do {
            id = "n" + std::to_string(id_counter_++);
        } while (index_.count(id) != 0);
    } else if (index_.count(id) != 0) {
        throw GraphError("duplicate node id '" + id + "'");
    }
    Node n{id, attr, nodes_.size(), std::move(label), forecast};
    index_.emplace(id, nodes_.size());
    nodes_.push_back(std::move(n));
    return id;
}

void AttackGraph::add_edge(const NodeId& src, const NodeId& dst, EventType event, std::optional<std::uint64_t> seq,
                           bool forecast) {
    const std::size_t s = order_of(src);
    const std::size_t d = order_of(dst);
    if (s == d) throw GraphError("self-loop on node '" + src + "'");
    if (!validate_edge(nodes_[s].attr, event, nodes_[d].attr)) {
        throw GraphError("edge " + src + " -" + std::string(to_string(event)) + "-> " + dst + " violates (" +
                         std::string(to_string(nodes_[s].attr)) + ", " + std::string(to_string(event)) + ", " +
                         std::string(to_string(nodes_[d].attr)) + ") direction rules");
    }
    const std::uint64_t q = seq.value_or(next_seq());
    auto pos = std::lower_bound(edges_.begin(), edges_.end(), q,
                                [](const Edge& e, std::uint64_t v) { return e.seq < v; });
    if (pos != edges_.end() && pos->seq == q) {
        throw GraphError("duplicate edge seq " + std::to_string(q));
    }
    edges_.insert(pos, Edge{src, dst, event, q, forecast});
}

void AttackGraph::remove_node(const NodeId& id) {
    const std::size_t k = order_of(id);
    std::erase_if(edges_, [&](const Edge& e) { return e.src == id || e.dst == id; });
    nodes_.erase(nodes_.begin() + static_cast<std::ptrdiff_t>(k));
    for (std::size_t i = k; i < nodes_.size(); ++i) nodes_[i].order_index = i;
    rebuild_index();
}

void AttackGraph::remove_edge(std::size_t edge_index) {
    if (edge_index >= edges_.size()) throw GraphError("edge index out of range");
    edges_.erase(edges_.begin() + static_cast<std::ptrdiff_t>(edge_index));
}

void AttackGraph::reorder_chronologically() {
    std::vector<std::size_t> rank(nodes_.size(), SIZE_MAX);
    std::size_t next = 0;
    // Both endpoints of one event share a timestamp, so a pair that appears
    // together for the first time keeps its current relative order.
    for (const Edge& e : edges_) {
        std::size_t a = index_.at(e.src);
        std::size_t b = index_.at(e.dst);
        if (rank[a] == SIZE_MAX && rank[b] == SIZE_MAX && b < a) std::swap(a, b);
        if (rank[a] == SIZE_MAX) rank[a] = next++;
        if (rank[b] == SIZE_MAX) rank[b] = next++;
    }
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
        if (rank[k] == SIZE_MAX) rank[k] = next++;
    }
    std::vector<Node> reordered(nodes_.size());
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
        reordered[rank[k]] = std::move(nodes_[k]);
        reordered[rank[k]].order_index = rank[k];
    }
    nodes_ = std::move(reordered);
    rebuild_index();
}

void AttackGraph::compact_seq() {
    for (std::size_t i = 0; i < edges_.size(); ++i) edges_[i].seq = i;
}

std::size_t AttackGraph::degree(std::size_t order) const {
    const NodeId& id = nodes_.at(order).id;
    return static_cast<std::size_t>(
        std::count_if(edges_.begin(), edges_.end(), [&](const Edge& e) { return e.src == id || e.dst == id; }));
}

std::vector<std::size_t> AttackGraph::degrees() const {
    std::vector<std::size_t> deg(nodes_.size(), 0);
    for (const Edge& e : edges_) {
        ++deg[index_.at(e.src)];
        ++deg[index_.at(e.dst)];
    }
    return deg;
}

void AttackGraph::validate() const {
    std::set<NodeId> seen;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].order_index != i) throw GraphError("order_index values are not a permutation of 0..n-1");
        if (!seen.insert(nodes_[i].id).second) throw GraphError("duplicate node id '" + nodes_[i].id + "'");
    }
    std::set<std::tuple<NodeId, NodeId, int, std::uint64_t>> tuples;
    for (std::size_t i = 0; i < edges_.size(); ++i) {
        const Edge& e = edges_[i];
        if (!contains(e.src) || !contains(e.dst)) throw GraphError("edge endpoint missing from node set");
        if (e.src == e.dst) throw GraphError("self-loop on node '" + e.src + "'");
        if (!validate_edge(node(e.src).attr, e.event, node(e.dst).attr)) {
            throw GraphError("edge " + e.src + " -> " + e.dst + " violates event direction rules");
        }
        if (i > 0 && edges_[i - 1].seq >= e.seq) throw GraphError("edge seq values are not unique");
        if (!tuples.emplace(e.src, e.dst, event_code(e.event), e.seq).second) {
            throw GraphError("duplicate edge tuple");
        }
    }
}

bool AttackGraph::chronologically_consistent() const {
    std::vector<bool> seen(nodes_.size(), false);
    std::size_t last = 0;
    bool any = false;
    for (const Edge& e : edges_) {
        std::size_t a = index_.at(e.src);
        std::size_t b = index_.at(e.dst);
        if (!seen[a] && !seen[b] && b < a) std::swap(a, b);
        for (std::size_t k : {a, b}) {
            if (seen[k]) continue;
            seen[k] = true;
            if (any && k <= last) return false;
            last = k;
            any = true;
        }
    }
    return true;
}

AttackGraph::Shape AttackGraph::shape() const {
    Shape s;
    s.attrs.reserve(nodes_.size());
    for (const Node& n : nodes_) s.attrs.push_back(n.attr);
    for (const Edge& e : edges_) s.edges.emplace_back(index_.at(e.src), index_.at(e.dst), e.event);
    std::sort(s.edges.begin(), s.edges.end());
    return s;
}

void AttackGraph::rebuild_index() {
    index_.clear();
    for (std::size_t i = 0; i < nodes_.size(); ++i) index_.emplace(nodes_[i].id, i);
}

}  // namespace attackcast
