#pragma once

// Counterfactual minority-sample generation.
//
// A shared structural perturbation M_a and feature mask M_b are trained against
// the selected majority-class graphs of a training fold; the thresholded
// perturbation of each selected graph becomes a generated sample carrying the
// minority label.

#include "gladcf/gcn.hpp"
#include "gladcf/graph.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace gladcf {

struct PerturbationPair {
    Matrix m_a;          // n_max x n_max
    Matrix m_b;          // n_max x h, mask logits
    double sigma = 0.5;  // structure threshold, inclusive
    double tau = 0.5;    // mask threshold, inclusive

    /// m_a = I + U(+-sqrt(6 / 2 n_max)), m_b = U(+-sqrt(6 / (n_max + h))).
    static PerturbationPair initialise(std::size_t n_max, std::size_t h, double sigma, double tau,
                                       std::uint64_t seed);
    bool finite() const noexcept { return m_a.allFinite() && m_b.allFinite(); }
};

/// Frozen single-GCN-layer classifier giving a 2-class distribution per graph
/// (mean pooling over real nodes, softmax).
struct ReadoutProbe {
    GcnLayerParams layer;  // h x 2

    static ReadoutProbe seeded(std::size_t h, std::uint64_t seed);
    /// Distribution for an n-node block. adjacency may be real-valued.
    Eigen::Vector2d probabilities(const Matrix& adjacency, const Matrix& features) const;
};

/// Structural perturbation of a padded adjacency. Only the top-left
/// real_nodes x real_nodes block is perturbed; everything outside it is zero.
/// Smooth mode returns offdiag(max(S, S^T)) with S = sigmoid(M_a A); hard mode
/// thresholds that at sigma (inclusive). Thresholding the symmetrised value is
/// the same as symmetrising the thresholded one.
Matrix perturb_structure(const PerturbationPair& pair, const Matrix& adjacency, bool hard,
                         std::size_t real_nodes = static_cast<std::size_t>(-1));

/// X' = mask ⊙ X with mask = sigmoid(M_b) (smooth) or I(sigmoid(M_b) >= tau) (hard).
Matrix mask_features(const PerturbationPair& pair, const Matrix& features, bool hard);

struct CounterfactualLoss {
    double total = 0.0;      // L_G1 - L_G2
    double l_g1 = 0.0;       // ||A - A'||_F - ||M_b'||_F
    double l_g2 = 0.0;       // KL(p||p_a) + KL(p||p_b)
    double structure_distance = 0.0;
    double mask_norm = 0.0;
    double kl_structure = 0.0;
    double kl_features = 0.0;
};

struct CounterfactualGrads {
    Matrix m_a;
    Matrix m_b;
};

/// Loss for one graph (real nodes only, features already built). Probabilities
/// are clamped to 1e-12 before the KL terms. When grads is non-null the
/// analytic gradients are accumulated into it (same shapes as the pair).
CounterfactualLoss counterfactual_loss(const PerturbationPair& pair, const Graph& graph, const ReadoutProbe& probe,
                                       bool hard = false, CounterfactualGrads* grads = nullptr);

struct AugmentConfig {
    std::size_t epochs = 100;
    double lr = 0.01;
    double sigma = 0.5;
    double tau = 0.5;
    std::uint64_t seed = 0;
};

struct TrainedPerturbation {
    PerturbationPair pair;
    ReadoutProbe probe;
    std::vector<double> loss_trace;  // mean L_coun before each epoch's update, then the final value
};

/// Minimises mean L_coun over the seed graphs with Adam on (m_a, m_b) only.
/// Throws TrainingError on a non-finite loss or parameter.
TrainedPerturbation train_perturbations(const std::vector<const Graph*>& seed_graphs, std::size_t n_max,
                                        std::size_t feature_dim, const AugmentConfig& config);

/// Picks N_gap = |majority| - |minority| majority-class indices out of
/// train_indices, uniformly without replacement (with replacement and a warning
/// when N_gap exceeds the majority pool). Empty when already balanced.
std::vector<std::size_t> select_seed_indices(const GraphDataset& dataset, const std::vector<std::size_t>& train_indices,
                                             std::uint64_t seed);

/// Emits one generated graph per selected seed: hard structure perturbation,
/// hard feature mask, minority label, provenance GENERATED.
std::vector<Graph> generate_samples(const PerturbationPair& pair, const GraphDataset& dataset,
                                    const std::vector<std::size_t>& seed_indices);

struct AugmentationResult {
    TrainedPerturbation trained;
    std::vector<std::size_t> seed_indices;
    std::vector<Graph> generated;
    int generated_label = 1;
};

/// select_seed_indices, train_perturbations on the selection, generate_samples.
AugmentationResult augment_split(const GraphDataset& dataset, const std::vector<std::size_t>& train_indices,
                                 const AugmentConfig& config);

}  // namespace gladcf
