#pragma once

#include <string>
#include <vector>

#include "attackcast/graph.hpp"

namespace attackcast {

inline constexpr int kDefaultWindow = 5;
inline constexpr int kWideWindow = 28;

/// Graph as a node-code list plus windowed adjacency vectors. Vector i has
/// length min(i, window); entry j holds the event code between node i and
/// node i-1-j (0 when absent).
struct SequenceEncoding {
    std::vector<int> node_codes;
    std::vector<std::vector<int>> adj_vectors;
    int window = kDefaultWindow;
    bool lossy = false;                 // some edge could not be represented
    std::vector<std::string> warnings;

    std::size_t size() const { return node_codes.size(); }
    bool has_terminator() const { return !node_codes.empty() && node_codes.back() == kTerminatorCode; }
    bool operator==(const SequenceEncoding& o) const {
        return node_codes == o.node_codes && adj_vectors == o.adj_vectors && window == o.window;
    }
};

/// Encodes g under its stored node order. Parallel edges collapse to the one
/// with the largest seq (flagged as lossy). Edges spanning more than `window` positions are
/// dropped and flagged in `lossy`/`warnings`, as are ForkClone edges whose
/// parent is ordered after the child (decoding would flip them).
SequenceEncoding to_sequence(const AttackGraph& g, int window = kDefaultWindow);

/// Rebuilds a graph from an encoding. Edge direction follows the event rules;
/// when both directions are legal (ForkClone between processes) the earlier
/// node is the subject. A trailing terminator is ignored. Throws GraphError
/// for an entry that no direction admits, InvalidInput for out-of-range codes.
AttackGraph from_sequence(const SequenceEncoding& s, GraphRole role = GraphRole::ASG);

/// Appends the terminator code with an all-zero adjacency vector.
SequenceEncoding with_terminator(SequenceEncoding s);

/// Resolves the storage direction of an event between two endpoints given in
/// encoding order. Returns {subject is the earlier node, ok}.
struct Direction {
    bool earlier_is_subject = true;
    bool valid = false;
};
Direction resolve_direction(EntityAttr earlier, EventType event, EntityAttr later);

}  // namespace attackcast
