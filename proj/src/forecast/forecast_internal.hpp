#pragma once

#include <vector>

#include <Eigen/Dense>

#include "attackcast/forecast.hpp"

namespace attackcast::detail {

/// Sequence with a terminator, checked against the model window.
struct Prepared {
    std::vector<int> codes;
    std::vector<std::vector<int>> adj;
};

Prepared prepare(const SequenceEncoding& s, int window);

struct GruRefs {
    const ParamBlock* W;
    const ParamBlock* U;
    const ParamBlock* b;
};

struct InitRefs {
    const ParamBlock* W;
    const ParamBlock* b;
};

struct GruStep {
    Eigen::VectorXd x, h_prev, z, r, n, h;
};

struct EdgeInit {
    Eigen::VectorXd u;               // [node state; node code embedding]
    std::vector<Eigen::VectorXd> h;  // initial state per edge layer
};

/// Forward and backward passes over a model's flat parameter vector.
class Network {
public:
    explicit Network(const ForecastModel& m);

    LossBreakdown run(const Prepared& s, Eigen::VectorXd* grad) const;

    Eigen::VectorXd node_input(const Prepared& s, std::size_t t) const;
    std::vector<GruStep> node_step(const Eigen::VectorXd& x, const std::vector<GruStep>* prev) const;
    Eigen::VectorXd node_logits(const Eigen::VectorXd& top) const;
    EdgeInit edge_init_state(const Eigen::VectorXd& top, int code) const;
    std::vector<GruStep> edge_step(int prev_code, const std::vector<Eigen::VectorXd>& hidden) const;
    Eigen::VectorXd edge_logits(const Eigen::VectorXd& top) const;

private:
    Eigen::Map<const Eigen::MatrixXd> mat(const ParamBlock* b) const;
    static Eigen::Map<Eigen::MatrixXd> gmat(Eigen::VectorXd& g, const ParamBlock* b);
    GruStep gru_forward(const GruRefs& g, const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev) const;
    void gru_backward(const GruRefs& g, const GruStep& s, const Eigen::VectorXd& dh, Eigen::VectorXd& grad,
                      Eigen::VectorXd& dx, Eigen::VectorXd& dh_prev) const;

    const ForecastModel& model;
    const Eigen::VectorXd& p;
    Eigen::Index H = 0, He = 0;
    int M = 0;
    const ParamBlock* adj_embed = nullptr;
    const ParamBlock* attr_embed = nullptr;
    std::vector<GruRefs> node_gru;
    const ParamBlock* node_out_W = nullptr;
    const ParamBlock* node_out_b = nullptr;
    const ParamBlock* edge_node_embed = nullptr;
    std::vector<InitRefs> edge_init;
    const ParamBlock* edge_in_embed = nullptr;
    std::vector<GruRefs> edge_gru;
    const ParamBlock* edge_out_W = nullptr;
    const ParamBlock* edge_out_b = nullptr;
};

}  // namespace attackcast::detail
