#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "attackcast/alignment.hpp"
#include "attackcast/atg_template.hpp"
#include "attackcast/graph.hpp"
#include "attackcast/sequence.hpp"

namespace attackcast {

struct ModelConfig {
    int node_embed_adj = 64;
    int node_embed_attr = 256;
    int node_hidden = 128;
    int node_layers = 4;
    int edge_embed = 32;
    int edge_hidden = 64;
    int edge_layers = 4;
    int window = kDefaultWindow;
    int batch_size = 16;
    int epochs = 50;
    double learning_rate = 1e-3;
    std::uint64_t seed = 1;
    double grad_clip = 5.0;         // global gradient-norm clip, 0 disables
    double zero_edge_weight = 1.0;  // loss weight of absent-edge targets

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

nlohmann::json config_to_json(const ModelConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig config_from_json(const nlohmann::json& j);

/// Location of one named tensor inside the flat parameter vector. Tensors are
/// stored column-major.
struct ParamBlock {
    std::string name;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    Eigen::Index offset = 0;
};

/// Per-position cross-entropies and teacher-forced accuracy for one sequence.
struct LossBreakdown {
    double node_loss = 0.0;                     // sum over node positions
    double edge_loss = 0.0;                     // sum over edge positions (weighted)
    std::vector<double> node_ce;                // one per node position, terminator included
    std::vector<std::vector<double>> edge_ce;   // [position][slot]
    std::size_t node_correct = 0;
    std::size_t node_total = 0;
    std::size_t edge_correct = 0;               // over nonzero targets only
    std::size_t edge_nonzero = 0;

    double total() const { return node_loss + edge_loss; }
};

/// Two stacked gated recurrent networks. The node stack reads the previous
/// node's code and adjacency vector and predicts the next node code. The edge
/// stack starts from the node stack's top state and the current node code,
/// then predicts the adjacency vector one slot at a time, reading back the
/// previous slot's code.
///
/// Cell: z = sig(Wz x + Uz h + bz), r = sig(Wr x + Ur h + br),
///       n = tanh(Wn x + Un (r * h) + bn), h' = (1 - z) * h + z * n,
/// with W, U, b stacking the z, r, n blocks in that row order.
class ForecastModel {
public:
    explicit ForecastModel(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    static constexpr int node_vocab() { return kNodeVocab; }
    static constexpr int edge_vocab() { return kEdgeVocab; }

    const Eigen::VectorXd& parameters() const { return params_; }
    Eigen::VectorXd& parameters() { return params_; }
    const std::vector<ParamBlock>& blocks() const { return blocks_; }
    const ParamBlock& block(const std::string& name) const;
    /// Read-only view of a named tensor.
    Eigen::Map<const Eigen::MatrixXd> param(const std::string& name) const;

    /// Teacher-forced loss of one sequence. A terminator is appended when
    /// missing. Throws InvalidInput for an empty sequence, a window mismatch,
    /// out-of-range codes or a sequence longer than max_sequence_length().
    LossBreakdown loss(const SequenceEncoding& s) const;

    /// Same as loss() and adds d(total loss)/d(parameters) into `grad`.
    LossBreakdown loss_and_gradient(const SequenceEncoding& s, Eigen::VectorXd& grad) const;

    static constexpr std::size_t max_sequence_length() { return 4096; }

    bool operator==(const ForecastModel& o) const { return cfg_ == o.cfg_ && params_ == o.params_; }

private:
    ModelConfig cfg_;
    std::vector<ParamBlock> blocks_;
    std::map<std::string, std::size_t> by_name_;
    Eigen::VectorXd params_;
};

struct EpochStats {
    int epoch = 0;
    double node_loss = 0.0;  // mean per node position
    double edge_loss = 0.0;  // mean per edge position
    double node_tpr = 0.0;
    double edge_tpr = 0.0;   // nonzero edges only
};

struct TrainReport {
    std::vector<EpochStats> epochs;
};

/// Teacher-forced metrics of a model over a corpus, averaged per position.
EpochStats evaluate(const ForecastModel& model, const std::vector<SequenceEncoding>& corpus);

struct TrainResult {
    ForecastModel model;
    TrainReport report;
};

/// Adam on the summed node and edge cross-entropy, minibatches drawn from a
/// seeded shuffle. Epoch statistics are gathered from the training passes,
/// so they trail the end-of-epoch parameters; use evaluate() for a clean
/// measurement.
/// Throws InvalidInput for an empty corpus or a window that differs from
/// cfg.window.
TrainResult train(const std::vector<SequenceEncoding>& corpus, const ModelConfig& cfg,
                  const std::function<void(const EpochStats&)>& on_epoch = {});

/// Continues training an existing model for cfg.epochs more epochs.
TrainReport train_more(ForecastModel& model, const std::vector<SequenceEncoding>& corpus,
                       const std::function<void(const EpochStats&)>& on_epoch = {});

/// Maximum relative error between the analytic gradient and central finite
/// differences on `samples` randomly chosen parameters.
double gradient_check(const ForecastModel& model, const SequenceEncoding& sample, std::size_t samples = 200,
                      std::uint64_t seed = 7);

enum class PredictMode { Greedy, Sample };

struct Prediction {
    int node_code = kTerminatorCode;
    std::vector<int> edge_codes;   // slot j pairs the new node with node n-1-j
    Eigen::VectorXd node_probs;

    bool is_terminator() const { return node_code == kTerminatorCode; }
};

/// Predicts the node that follows `g` in its stored order. `seed` is only
/// used in Sample mode.
Prediction predict_next(const ForecastModel& model, const AttackGraph& g, PredictMode mode = PredictMode::Greedy,
                        std::uint64_t seed = 0);
/// Same on an already encoded prefix (no terminator).
Prediction predict_next(const ForecastModel& model, const SequenceEncoding& prefix,
                        PredictMode mode = PredictMode::Greedy, std::uint64_t seed = 0);

struct StopCriterion {
    std::size_t max_steps = 5;
    bool stop_on_terminator = true;
    /// Checked after every materialized step; true stops the forecast.
    std::function<bool(const AttackGraph&)> fired;
    std::string not_fired_note = "criterion not met";
};

/// Fires once more techniques align into the growing graph than into
/// `baseline`.
StopCriterion stop_on_technique_increase(std::vector<AtgTemplate> templates, const AttackGraph& baseline,
                                         const AlignmentConfig& cfg = {}, std::size_t max_steps = 5);

enum class StopReason { Criterion, Terminator, Budget };
std::string_view to_string(StopReason r);

struct ForecastResult {
    AttackGraph graph{GraphRole::AFG};
    StopReason reason = StopReason::Budget;
    std::size_t steps = 0;
    std::size_t added_nodes = 0;
    std::size_t added_edges = 0;
    std::vector<std::string> diagnostics;
};

struct ForecastOptions {
    PredictMode mode = PredictMode::Greedy;
    std::uint64_t seed = 0;
};

/// Extends `apg` one predicted node at a time. Predicted edges that no
/// direction admits are dropped; a predicted node left without edges is not
/// added. The input nodes and edges are copied unchanged.
ForecastResult forecast(const ForecastModel& model, const AttackGraph& apg, const StopCriterion& stop = {},
                        const ForecastOptions& opt = {});

nlohmann::json checkpoint_to_json(const ForecastModel& model);
ForecastModel checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const ForecastModel& model, const std::filesystem::path& path);
ForecastModel load_checkpoint(const std::filesystem::path& path);

std::string report_csv(const TrainReport& r);

/// Encodes every graph with the given window.
std::vector<SequenceEncoding> encode_corpus(const std::vector<AttackGraph>& graphs, int window);

}  // namespace attackcast
