#include "attackcast/sequence.hpp"

#include <algorithm>

namespace attackcast {

Direction resolve_direction(EntityAttr earlier, EventType event, EntityAttr later) {
    if (validate_edge(earlier, event, later)) return {true, true};
    if (validate_edge(later, event, earlier)) return {false, true};
    return {true, false};
}

SequenceEncoding to_sequence(const AttackGraph& g, int window) {
    if (window < 1) throw InvalidInput("window must be positive");
    SequenceEncoding s;
    s.window = window;
    const std::size_t n = g.node_count();
    s.node_codes.reserve(n);
    s.adj_vectors.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        s.node_codes.push_back(attr_code(g.node(i).attr));
        s.adj_vectors.emplace_back(std::min<std::size_t>(i, static_cast<std::size_t>(window)), 0);
    }
    // Edges are seq-sorted, so later parallel edges overwrite earlier ones.
    for (const Edge& e : g.edges()) {
        const std::size_t a = g.order_of(e.src);
        const std::size_t b = g.order_of(e.dst);
        const std::size_t lo = std::min(a, b);
        const std::size_t hi = std::max(a, b);
        const std::size_t span = hi - lo;
        if (span > static_cast<std::size_t>(window)) {
            s.lossy = true;
            s.warnings.push_back("edge " + e.src + " -> " + e.dst + " spans " + std::to_string(span) +
                                 " positions, beyond window " + std::to_string(window));
            continue;
        }
        if (e.event == EventType::ForkClone && a > b) {
            s.lossy = true;
            s.warnings.push_back("ForkClone edge " + e.src + " -> " + e.dst + " points backwards in node order");
        }
        int& slot = s.adj_vectors[hi][span - 1];
        if (slot != 0) {
            s.lossy = true;
            s.warnings.push_back("parallel edges between " + e.src + " and " + e.dst + " collapse to the latest");
        }
        slot = event_code(e.event);
    }
    return s;
}

SequenceEncoding with_terminator(SequenceEncoding s) {
    const std::size_t n = s.node_codes.size();
    s.node_codes.push_back(kTerminatorCode);
    s.adj_vectors.emplace_back(std::min<std::size_t>(n, static_cast<std::size_t>(s.window)), 0);
    return s;
}

AttackGraph from_sequence(const SequenceEncoding& s, GraphRole role) {
    if (s.adj_vectors.size() != s.node_codes.size()) {
        throw InvalidInput("node_codes and adj_vectors differ in length");
    }
    std::size_t n = s.node_codes.size();
    if (n > 0 && s.node_codes.back() == kTerminatorCode) --n;

    AttackGraph g(role);
    std::vector<NodeId> ids;
    ids.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        ids.push_back(g.add_node(attr_from_code(s.node_codes[i])));
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto& row = s.adj_vectors[i];
        if (row.size() > std::min<std::size_t>(i, static_cast<std::size_t>(s.window))) {
            throw InvalidInput("adjacency vector " + std::to_string(i) + " is longer than allowed");
        }
        // Oldest predecessor first so that seq order matches the node order.
        for (std::size_t jj = row.size(); jj-- > 0;) {
            const int code = row[jj];
            if (code == 0) continue;
            const EventType ev = event_from_code(code);
            const std::size_t other = i - 1 - jj;
            const Direction d = resolve_direction(g.node(other).attr, ev, g.node(i).attr);
            if (!d.valid) {
                throw GraphError("malformed sequence: no direction admits (" +
                                 std::string(to_string(g.node(other).attr)) + ", " + std::string(to_string(ev)) +
                                 ", " + std::string(to_string(g.node(i).attr)) + ") at node " + std::to_string(i));
            }
            if (d.earlier_is_subject) {
                g.add_edge(ids[other], ids[i], ev);
            } else {
                g.add_edge(ids[i], ids[other], ev);
            }
        }
    }
    return g;
}

}  // namespace attackcast
