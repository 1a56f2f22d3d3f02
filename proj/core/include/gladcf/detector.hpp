#pragma once

// Graph-level anomaly detector: a node-feature GCN branch and a degree GCN
// branch are concatenated per node, rows are ordered by their L1 norm, reduced
// by a linear map, re-weighted by a trainable square matrix, mean-pooled over
// real nodes and scored by a sigmoid head.

#include "gladcf/gcn.hpp"
#include "gladcf/graph.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace gladcf {

struct DetectorConfig {
    std::size_t hidden_dim = 256;
    std::size_t branch_dim = 128;
    std::size_t reduce_dim = 64;
    bool use_gcn_x = true;
    bool use_gcn_d = true;
    bool use_adaptive_weight = true;  // sort + W; off = reducer then mean pool

    std::size_t fused_dim() const noexcept {
        return (use_gcn_x ? branch_dim : 0) + (use_gcn_d ? branch_dim : 0);
    }
};

struct DetectorParams {
    DetectorConfig config;
    GcnStack gcn_x;       // h -> hidden -> branch
    GcnStack gcn_d;       // 1 -> hidden -> branch
    LinearParams reducer; // fused -> r
    Matrix w_adaptive;    // r x r
    Matrix w_head;        // r x 1
    Matrix b_head;        // 1 x 1

    static DetectorParams initialise(std::size_t feature_dim, const DetectorConfig& config, std::uint64_t seed);
    /// Same shapes, all zeros. Used as a gradient accumulator.
    DetectorParams zeros_like() const;

    /// Every trainable tensor with a stable name, in a fixed order.
    std::vector<std::pair<std::string, Matrix*>> tensors();
    std::vector<std::pair<std::string, const Matrix*>> tensors() const;
    bool finite() const;
};

/// Real-node block of one graph with its normalised adjacency precomputed.
struct PreparedGraph {
    Matrix norm_adj;   // n x n
    Matrix features;   // n x h
    Matrix degrees;    // n x 1
    int label = 0;
    Provenance provenance = Provenance::OriginalNormal;

    std::size_t num_nodes() const noexcept { return static_cast<std::size_t>(norm_adj.rows()); }
};

PreparedGraph prepare_graph(const Graph& g);
std::vector<PreparedGraph> prepare_batch(const PaddedBatch& batch);

struct ScoreVector {
    std::vector<double> scores;  // each strictly inside (0, 1)

    std::size_t size() const noexcept { return scores.size(); }
};

/// Z = [Z_X | Z_D] for each graph of the batch, n_max rows with zero padding.
std::vector<Matrix> fuse_features(const DetectorParams& params, const PaddedBatch& batch);

/// Descending L1-norm order of the rows of z; ties by ascending row index.
std::vector<Eigen::Index> l1_row_order(const Matrix& z);

/// Graph embeddings (B x r) from fused node features.
Matrix adaptive_weighting(const DetectorParams& params, const std::vector<Matrix>& z, const PaddedBatch& batch);

/// O = sigmoid(w_head . ReLU(e) + b_head) per embedding row.
ScoreVector score(const DetectorParams& params, const Matrix& embedding);

/// 1 iff O - t > 0.
std::vector<int> decide(const ScoreVector& scores, double threshold);

/// Full forward pass on prepared graphs.
ScoreVector predict(const DetectorParams& params, const std::vector<PreparedGraph>& graphs);
ScoreVector predict(const DetectorParams& params, const PaddedBatch& batch);

struct LossSwitches {
    bool use_normal_loss = true;
    bool use_abnormal_loss = true;
};

struct LossBreakdown {
    double total = 0.0;
    double l_nor = 0.0;
    double l_ori = 0.0;
    double l_gen = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    std::size_t n_nor = 0;
    std::size_t n_ori = 0;
    std::size_t n_gen = 0;
};

/// L_final = L_nor + (1 - alpha) L_ori + beta alpha L_gen with alpha = N_gen / N_abn.
/// Normal samples are label 0 (whatever their provenance); abnormal samples split
/// into original and GENERATED. Log arguments are clamped to [1e-12, 1 - 1e-12].
/// When grad_scores is non-null it receives dL/dO per sample.
LossBreakdown composite_loss(const ScoreVector& scores, const std::vector<int>& labels,
                             const std::vector<Provenance>& provenance, double beta, const LossSwitches& switches = {},
                             std::vector<double>* grad_scores = nullptr);

/// Loss over the graphs and, when grads is non-null, its gradient with respect
/// to every DetectorParams tensor (accumulated into grads).
LossBreakdown detector_loss(const DetectorParams& params, const std::vector<PreparedGraph>& graphs, double beta,
                            const LossSwitches& switches, DetectorParams* grads);
LossBreakdown detector_loss(const DetectorParams& params, const std::vector<const PreparedGraph*>& graphs,
                            double beta, const LossSwitches& switches, DetectorParams* grads);

struct DetectorTrainConfig {
    std::size_t epochs = 100;
    double lr = 0.001;
    double beta = 1.2;
    std::size_t batch_size = 0;  // 0 = whole training set per step
    LossSwitches switches;
    std::uint64_t seed = 0;      // minibatch order
};

struct TrainedDetector {
    DetectorParams params;
    std::vector<double> loss_trace;  // loss of each optimisation step (epoch mean for minibatches)
};

/// Adam on every DetectorParams tensor. Throws TrainingError on non-finite values.
TrainedDetector train_detector(DetectorParams init, const std::vector<PreparedGraph>& train,
                               const DetectorTrainConfig& config);

}  // namespace gladcf
