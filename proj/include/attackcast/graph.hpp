#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace attackcast {

// Entity attributes. The numeric value is the node-type code used in
// sequence encodings; kTerminatorCode sits one past the last attribute.
enum class EntityAttr : std::uint8_t { F0 = 0, F1, F2, F3, FR, P, S };

inline constexpr int kNumEntityAttrs = 7;
inline constexpr int kTerminatorCode = kNumEntityAttrs;    // K + 1
inline constexpr int kNodeVocab = kNumEntityAttrs + 1;     // K + 2

// System events. Code 0 is reserved for "no edge" in adjacency vectors.
enum class EventType : std::uint8_t { Write = 1, Execute, Read, Send, Receive, ForkClone };

inline constexpr int kNumEventTypes = 6;
inline constexpr int kEdgeVocab = kNumEventTypes + 1;      // P + 1

enum class GraphRole : std::uint8_t { ASG, APG, AFG, ATG };

inline constexpr EntityAttr kAllAttrs[] = {EntityAttr::F0, EntityAttr::F1, EntityAttr::F2, EntityAttr::F3,
                                           EntityAttr::FR, EntityAttr::P,  EntityAttr::S};
inline constexpr EventType kAllEvents[] = {EventType::Write, EventType::Execute,  EventType::Read,
                                           EventType::Send,  EventType::Receive,  EventType::ForkClone};

/// Raised for malformed graphs, files, and sequences.
class GraphError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a precondition of an operation is violated by its arguments.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

constexpr int attr_code(EntityAttr a) { return static_cast<int>(a); }
constexpr int event_code(EventType e) { return static_cast<int>(e); }
EntityAttr attr_from_code(int code);
EventType event_from_code(int code);

constexpr bool is_file(EntityAttr a) {
    return a == EntityAttr::F0 || a == EntityAttr::F1 || a == EntityAttr::F2 || a == EntityAttr::F3 ||
           a == EntityAttr::FR;
}

std::string_view to_string(EntityAttr a);
std::string_view to_string(EventType e);
std::string_view to_string(GraphRole r);
std::optional<EntityAttr> parse_attr(std::string_view s);
std::optional<EventType> parse_event(std::string_view s);
std::optional<GraphRole> parse_role(std::string_view s);

/// True iff (subject, event, object) is an allowed storage-direction triple:
/// Write/Execute P->F*, Read F*->P, Send P->S, Receive S->P, ForkClone P->P.
bool validate_edge(EntityAttr subject, EventType event, EntityAttr object);

using NodeId = std::string;

struct Node {
    NodeId id;
    EntityAttr attr = EntityAttr::P;
    std::size_t order_index = 0;
    std::string label;      // display only
    bool forecast = false;  // produced by the forecast model

    bool operator==(const Node&) const = default;
};

struct Edge {
    NodeId src;
    NodeId dst;
    EventType event = EventType::Write;
    std::uint64_t seq = 0;
    bool forecast = false;

    bool operator==(const Edge&) const = default;
};

/// Heterogeneous attack graph. Nodes are kept sorted by order_index so that
/// node(i).order_index == i; edges are kept sorted by seq.
class AttackGraph {
public:
    explicit AttackGraph(GraphRole role = GraphRole::ASG, std::string provenance = {});

    GraphRole role() const { return role_; }
    void set_role(GraphRole r) { role_ = r; }
    const std::string& provenance() const { return provenance_; }
    void set_provenance(std::string p) { provenance_ = std::move(p); }

    std::size_t node_count() const { return nodes_.size(); }
    std::size_t edge_count() const { return edges_.size(); }
    bool empty() const { return nodes_.empty(); }

    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<Edge>& edges() const { return edges_; }
    const Node& node(std::size_t order) const { return nodes_.at(order); }
    const Node& node(const NodeId& id) const;
    bool contains(const NodeId& id) const { return index_.count(id) != 0; }
    std::size_t order_of(const NodeId& id) const;

    /// Appends a node at the end of the order. An empty id is replaced by a
    /// fresh "n<k>" identifier. Returns the id.
    NodeId add_node(EntityAttr attr, std::string label = {}, NodeId id = {}, bool forecast = false);

    /// Adds an edge after checking endpoints, self-loops, duplicates, and the
    /// event direction rules. Without an explicit seq the edge goes last.
    void add_edge(const NodeId& src, const NodeId& dst, EventType event, std::optional<std::uint64_t> seq = {},
                  bool forecast = false);

    /// Removes a node and its incident edges; later nodes shift down by one.
    void remove_node(const NodeId& id);
    void remove_edge(std::size_t edge_index);

    /// Rebuilds order_index from first appearance in seq-sorted edges. When both
    /// endpoints of an edge are new they keep their current relative order.
    /// Isolated nodes keep their relative order at the end.
    void reorder_chronologically();

    /// Reassigns seq to 0..m-1 preserving the current edge order.
    void compact_seq();

    std::uint64_t next_seq() const { return edges_.empty() ? 0 : edges_.back().seq + 1; }

    std::size_t degree(std::size_t order) const;
    std::vector<std::size_t> degrees() const;

    /// Throws GraphError describing the first violated invariant.
    void validate() const;

    /// True iff sorting edges by seq and inserting endpoints on first
    /// appearance (same tie rule as above) reproduces the stored order of
    /// every non-isolated node.
    bool chronologically_consistent() const;

    /// Node attributes in order plus the sorted multiset of edges as
    /// (src order, dst order, event). Ignores ids, labels, and seq values.
    struct Shape {
        std::vector<EntityAttr> attrs;
        std::vector<std::tuple<std::size_t, std::size_t, EventType>> edges;
        bool operator==(const Shape&) const = default;
    };
    Shape shape() const;

    bool operator==(const AttackGraph& other) const {
        return role_ == other.role_ && provenance_ == other.provenance_ && nodes_ == other.nodes_ &&
               edges_ == other.edges_;
    }

private:
    void rebuild_index();

    GraphRole role_;
    std::string provenance_;
    std::vector<Node> nodes_;
    std::vector<Edge> edges_;
    std::unordered_map<NodeId, std::size_t> index_;
    std::uint64_t id_counter_ = 0;
};

}  // namespace attackcast
