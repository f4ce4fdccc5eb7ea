#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "attackcast/atg_template.hpp"
#include "attackcast/graph.hpp"

namespace attackcast {

/// Attribute class used by delivery rules: one concrete attribute or the
/// whole file family.
struct AttrClass {
    bool any_file = false;
    EntityAttr attr = EntityAttr::P;

    static AttrClass files() { return {true, EntityAttr::F3}; }
    static AttrClass of(EntityAttr a) { return {false, a}; }
    bool matches(EntityAttr a) const { return any_file ? is_file(a) : a == attr; }
    std::string name() const { return any_file ? "F*" : std::string(to_string(attr)); }
    bool operator==(const AttrClass&) const = default;
};

/// One hop through which suspicious semantics propagate, in taint direction.
/// A "Load" rule is stored as a Read whose source class is F1.
struct DeliveryRule {
    AttrClass source;
    EventType event = EventType::Read;
    AttrClass sink;
    bool load_alias = false;

    bool admits(EntityAttr src, EventType ev, EntityAttr dst) const {
        return ev == event && source.matches(src) && sink.matches(dst);
    }
    bool operator==(const DeliveryRule&) const = default;
};

class DeliveryRules {
public:
    DeliveryRules() = default;
    explicit DeliveryRules(std::vector<DeliveryRule> rules) : rules_(std::move(rules)) {}

    /// Read F*->P, Write P->F*, Load F1->P, Receive S->P, Send P->S, ForkClone P->P.
    static DeliveryRules defaults();

    /// Parses lines "source_class event sink_class". Classes are attribute
    /// symbols or "F*"; the event may be "Load". Blank lines and lines starting
    /// with '#' are ignored. Throws GraphError with the line number.
    static DeliveryRules parse(const std::string& text);
    static DeliveryRules load(const std::filesystem::path& path);

    bool admits(EntityAttr src, EventType ev, EntityAttr dst) const;
    const std::vector<DeliveryRule>& rules() const { return rules_; }

private:
    std::vector<DeliveryRule> rules_;
};

struct AlignmentConfig {
    double fix_threshold = 0.3;
    double interpret_threshold = 0.6;
    int max_hops = 4;
    std::size_t max_path_length = 8;
    std::size_t max_paths_per_pair = 10000;
    /// Search nodes explored beyond the greedy assignment when looking for a
    /// fixing that matches more flows.
    std::size_t search_budget = 2000;

    /// Throws InvalidInput when a field is out of range.
    void validate() const;
};

/// Query edge as seen by the multi-hop matcher.
struct QueryEdge {
    EntityAttr src_attr;
    EventType event;
    EntityAttr dst_attr;
};

struct FlowRecord {
    std::size_t from = 0;  // query order index
    std::size_t to = 0;
    bool matched = false;
};

struct AlignmentResult {
    double score = 0.0;
    std::size_t matched_flows = 0;
    std::size_t total_flows = 0;
    /// fixed[i] is the host order index bound to query node i.
    std::vector<std::optional<std::size_t>> fixed;
    /// node_scores[i] lists (host order index, score) for every candidate that
    /// was scored when query node i was fixed.
    std::vector<std::vector<std::pair<std::size_t, double>>> node_scores;
    std::vector<FlowRecord> flows;
};

/// Host nodes with the same attribute as query node i and at least its degree.
std::vector<std::size_t> candidates(std::size_t i, const AttackGraph& gq, const AttackGraph& gp);

/// Checks that `path` (host edges, consecutive) realizes `edge`: endpoints
/// carry the query attributes, the last hop has the query event and every
/// earlier hop is a delivery rule. Throws InvalidInput for an empty or
/// disconnected path.
bool mhes_equivalent(const QueryEdge& edge, const std::vector<Edge>& path, const AttackGraph& gp,
                     const DeliveryRules& rules);

/// Length of the shortest MHES path from host node `k` to every host node
/// (0 when none exists within max_hops).
std::vector<int> mhes_hops(const AttackGraph& gp, std::size_t k, const QueryEdge& edge, const DeliveryRules& rules,
                           int max_hops);

/// Scoring engine for one (query, host) pair. Candidate sets are computed
/// once; fixing a query node narrows its candidate set to its image.
class Aligner {
public:
    Aligner(const AttackGraph& gq, const AttackGraph& gp, AlignmentConfig cfg = {},
            DeliveryRules rules = DeliveryRules::defaults());

    const std::vector<std::size_t>& candidate_set(std::size_t i) const { return cand_[i]; }

    /// Enumerated query paths from i to j, each a list of query edge indices.
    const std::vector<std::vector<std::size_t>>& query_paths(std::size_t i, std::size_t j) const;

    /// Score of query edge `qe` (index into gq.edges()) anchored at host `k`.
    double edge_score(std::size_t qe, std::size_t k) const;

    /// Mean edge score along one query path starting at host `k`.
    double path_score(const std::vector<std::size_t>& path, std::size_t k) const;

    /// Mean path_score over all enumerated paths from i to j; 0 without paths.
    double pair_score(std::size_t i, std::size_t j, std::size_t k) const;

    /// Mean pair_score over the query nodes reachable from i. A node with no
    /// outgoing paths is scored by how well its incoming edges reach k.
    double node_score(std::size_t i, std::size_t k) const;

    /// True when some query path i=>j can be followed from host k to host m.
    bool flow_realizable(std::size_t i, std::size_t j, std::size_t k, std::size_t m) const;

    void fix(std::size_t i, std::size_t k);
    const std::vector<std::optional<std::size_t>>& fixed() const { return fixed_; }

    /// Fixes query nodes and scores flows. Candidates are tried best-first per
    /// node; the greedy assignment is refined by a bounded depth-first search
    /// when it leaves flows unmatched.
    AlignmentResult run();

private:
    const std::vector<int>& hops_from(std::size_t anchor, std::size_t qe) const;
    const std::vector<int>& rule_distance(std::size_t anchor) const;
    void enumerate_paths();
    bool consistent_with_fixed(std::size_t i, std::size_t k) const;
    void unfix(std::size_t i, std::vector<std::size_t> saved_cand);
    std::vector<std::pair<std::size_t, double>> ranked_choices(
        std::size_t i, std::vector<std::pair<std::size_t, double>>& scored) const;
    std::size_t count_matched_flows(std::vector<FlowRecord>* flows) const;

    const AttackGraph& gq_;
    const AttackGraph& gp_;
    AlignmentConfig cfg_;
    DeliveryRules rules_;
    std::vector<std::size_t> qsrc_, qdst_;            // query edge endpoints by order
    std::vector<std::vector<std::size_t>> q_in_;      // incoming query edges per node
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> host_out_;  // (edge idx, dst order)
    std::vector<std::vector<std::size_t>> cand_;
    std::vector<std::vector<bool>> is_cand_;
    std::vector<std::optional<std::size_t>> fixed_;
    std::vector<bool> host_taken_;
    std::vector<std::vector<std::vector<std::vector<std::size_t>>>> paths_;  // [i][j] -> paths
    mutable std::map<std::size_t, std::vector<int>> dist_cache_;
    mutable std::map<std::pair<std::size_t, std::size_t>, std::vector<int>> hops_cache_;
};

/// Aligns query gq into host gp. Throws InvalidInput for an empty or
/// single-node query.
AlignmentResult align(const AttackGraph& gq, const AttackGraph& gp, const AlignmentConfig& cfg = {},
                      const DeliveryRules& rules = DeliveryRules::defaults());

struct TechniqueMatch {
    std::string technique_id;
    double score = 0.0;
    bool operator==(const TechniqueMatch&) const = default;
};

/// Techniques whose template aligns into `afg` above cfg.interpret_threshold,
/// by descending score then technique id. Templates are scored concurrently.
std::vector<TechniqueMatch> interpret(const AttackGraph& afg, const std::vector<AtgTemplate>& templates,
                                      const AlignmentConfig& cfg = {},
                                      const DeliveryRules& rules = DeliveryRules::defaults());

/// Machine-readable alignment report: score, fixed mapping (by node id) and
/// the per-flow match table.
nlohmann::json alignment_report(const AttackGraph& gq, const AttackGraph& gp, const AlignmentResult& r);

}  // namespace attackcast
