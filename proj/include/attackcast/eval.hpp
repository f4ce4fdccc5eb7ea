#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "attackcast/alignment.hpp"
#include "attackcast/forecast.hpp"
#include "attackcast/graph.hpp"

namespace attackcast {

// ---------------------------------------------------------------------------
// Structural perturbation

enum class PerturbKind { EdgeAdd, EdgeDel, NodeAddRandom, NodeDelRandom, NodeAddMhes, NodeDelMhes };

inline constexpr PerturbKind kAllPerturbKinds[] = {PerturbKind::EdgeAdd,       PerturbKind::EdgeDel,
                                                   PerturbKind::NodeAddRandom, PerturbKind::NodeDelRandom,
                                                   PerturbKind::NodeAddMhes,   PerturbKind::NodeDelMhes};

std::string_view to_string(PerturbKind k);
std::optional<PerturbKind> parse_perturb_kind(std::string_view s);
bool is_addition(PerturbKind k);
bool is_edge_kind(PerturbKind k);
bool is_mhes_kind(PerturbKind k);

struct PerturbationSpec {
    PerturbKind kind = PerturbKind::EdgeAdd;
    int count = 1;
    std::uint64_t seed = 0;
};

struct PerturbResult {
    AttackGraph graph;
    int applied = 0;
    bool incomplete = false;  // ran out of applicable sites before `count`
    std::vector<std::string> diagnostics;
};

/// Applies `spec.count` operations of one kind, each on the previous result.
///  - edge-add joins two nodes by an edge the event rules allow and that is
///    not present yet; edge-del removes a random edge.
///  - node-add-random attaches a new node of random attribute by one allowed
///    edge; node-del-random removes a random node and its edges (graphs are
///    never shrunk below two nodes).
///  - node-add-mhes splits an edge u -e-> v into u -r-> w -e-> v through a new
///    node w where r is a delivery rule; node-del-mhes collapses such a chain
///    through a degree-two node back into u -e-> v.
/// When no site is left the graph is returned as far as it got with
/// `incomplete` set. Throws InvalidInput for a negative count.
PerturbResult perturb(const AttackGraph& g, const PerturbationSpec& spec,
                      const DeliveryRules& rules = DeliveryRules::defaults());

/// Score of `original` (as query) inside `changed` (as host).
double structural_score(const AttackGraph& original, const AttackGraph& changed, const AlignmentConfig& cfg = {},
                        const DeliveryRules& rules = DeliveryRules::defaults());

struct PerturbationCell {
    PerturbKind kind = PerturbKind::EdgeAdd;
    int count = 0;
    double mean_score = 0.0;   // NaN when no sample could be perturbed fully
    std::size_t samples = 0;   // (graph, seed) pairs that were fully applied
    std::size_t skipped = 0;   // pairs left incomplete, excluded from the mean
};

struct PerturbationTable {
    int max_count = 0;
    std::vector<PerturbationCell> cells;  // kind-major, counts 0..max_count

    const PerturbationCell& at(PerturbKind k, int count) const;
    /// Mean over the listed kinds of their per-kind means at `count`.
    double mean(const std::vector<PerturbKind>& kinds, int count) const;
};

struct PerturbationStudyConfig {
    int max_count = 5;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    AlignmentConfig alignment;
    unsigned threads = 0;  // 0 picks the hardware concurrency
};

/// For every graph, kind, count in 0..max_count and seed, scores the
/// perturbed graph against its original and averages over graphs and seeds.
PerturbationTable perturbation_study(const std::vector<AttackGraph>& graphs, const PerturbationStudyConfig& cfg,
                                     const DeliveryRules& rules = DeliveryRules::defaults());

/// Long-format table: kind,count,mean_score,samples,skipped.
std::string perturbation_csv(const PerturbationTable& t);

// ---------------------------------------------------------------------------
// Broken-graph reconstruction

std::vector<std::string> technique_ids(const std::vector<TechniqueMatch>& matches);

struct BreakResult {
    AttackGraph broken;
    std::vector<Node> deleted;  // in deletion order, latest first
    std::vector<std::string> original_techniques;
    std::vector<std::string> broken_techniques;
    bool shrank = false;        // the technique list got strictly shorter
    std::vector<std::string> diagnostics;
};

/// Deletes the latest node in the stored order, then the next latest, and so
/// on until fewer techniques match than on the input or `max_del` nodes are
/// gone. Throws InvalidInput when no technique matches the input.
BreakResult break_graph(const AttackGraph& g, const std::vector<AtgTemplate>& templates,
                        const AlignmentConfig& cfg = {}, std::size_t max_del = 5,
                        const DeliveryRules& rules = DeliveryRules::defaults());

struct ReconstructionConfig {
    AlignmentConfig alignment;
    std::size_t max_del = 5;
    std::size_t max_steps = 5;
    PredictMode mode = PredictMode::Greedy;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    /// Directory for original/broken/afg DOT snapshots; empty disables them.
    std::filesystem::path dot_dir;
};

struct ReconstructionRecord {
    std::string graph_id;
    std::size_t deleted = 0;
    bool shrank = false;
    double broken_score = 0.0;  // original inside the broken graph
    double afg_score = 0.0;     // original inside the forecast graph
    std::vector<std::string> original_techniques;
    std::vector<std::string> broken_techniques;
    std::vector<std::string> afg_techniques;
    std::size_t generated_nodes = 0;
    std::size_t generated_edges = 0;
    StopReason stop = StopReason::Budget;
};

/// Breaks, scores, forecasts and re-scores every graph. Graphs no template
/// matches are skipped. Records come back in input order.
std::vector<ReconstructionRecord> reconstruction_experiment(const ForecastModel& model,
                                                            const std::vector<AttackGraph>& graphs,
                                                            const std::vector<AtgTemplate>& templates,
                                                            const ReconstructionConfig& cfg = {},
                                                            const DeliveryRules& rules = DeliveryRules::defaults());

struct ReconstructionSummary {
    std::size_t deleted = 0;
    std::size_t records = 0;
    double mean_broken_score = 0.0;
    double mean_afg_score = 0.0;
    double mean_generated_nodes = 0.0;
    double mean_generated_edges = 0.0;
};

/// Means per deletion count, ascending.
std::vector<ReconstructionSummary> summarize(const std::vector<ReconstructionRecord>& records);

std::string reconstruction_csv(const std::vector<ReconstructionRecord>& records);
std::string summary_csv(const std::vector<ReconstructionSummary>& rows);

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0;
};

/// Micro-averaged precision, recall and F1 over per-instance technique sets.
/// An instance set contributes each id once. With no predictions at all the
/// precision is 1; with no truth at all the recall is 1. Throws InvalidInput
/// when the lists differ in length.
Prf technique_prf(const std::vector<std::vector<std::string>>& truth,
                  const std::vector<std::vector<std::string>>& predicted);

// ---------------------------------------------------------------------------
// Strategy dispatch

enum class RuleAction { BlockReadSensitive, BlockOutbound, BlockExec, BlockWrite, BlockSpawn };
std::string_view to_string(RuleAction a);

struct ReinforcementRule {
    // Trigger edge in storage direction; validate_edge holds for it.
    EntityAttr subject = EntityAttr::P;
    EventType event = EventType::Write;
    EntityAttr object = EntityAttr::F0;
    NodeId src;
    NodeId dst;
    std::uint64_t seq = 0;
    RuleAction action = RuleAction::BlockWrite;
    std::chrono::seconds decay{0};

    bool operator==(const ReinforcementRule&) const = default;
};

struct DispatchConfig {
    std::chrono::seconds decay = std::chrono::hours(2);
};

/// Action for one edge; none for edges without a countermeasure
/// (Receive, and Read of anything but F0).
std::optional<RuleAction> rule_action(EntityAttr subject, EventType event, EntityAttr object);

/// One rule per forecast edge that has an action, in seq order.
std::vector<ReinforcementRule> dispatch(const AttackGraph& afg, const DispatchConfig& cfg = {});

/// Decides whether a forecast is worth acting on.
using InvestigationHook = std::function<bool(const AttackGraph& afg)>;

/// Default hook: more techniques match the AFG than `baseline`.
InvestigationHook technique_increase_hook(std::vector<AtgTemplate> templates, const AttackGraph& baseline,
                                          const AlignmentConfig& cfg = {});

/// dispatch() gated by `hook`.
std::vector<ReinforcementRule> investigate_and_dispatch(const AttackGraph& afg, const InvestigationHook& hook,
                                                        const DispatchConfig& cfg = {});

nlohmann::json rules_to_json(const std::vector<ReinforcementRule>& rules);

// ---------------------------------------------------------------------------
// Experiment configuration file

nlohmann::json alignment_config_to_json(const AlignmentConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
AlignmentConfig alignment_config_from_json(const nlohmann::json& j);

struct ExperimentConfig {
    AlignmentConfig alignment;
    PerturbationStudyConfig perturbation;
    ReconstructionConfig reconstruction;
    DispatchConfig dispatch;
};

/// Sections "alignment", "perturbation" {max_count, seeds, threads},
/// "reconstruction" {max_del, max_steps, mode, seed, threads} and
/// "dispatch" {decay_seconds}. The alignment section is copied into the
/// perturbation and reconstruction settings. Throws InvalidInput.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json experiment_config_to_json(const ExperimentConfig& c);

}  // namespace attackcast
