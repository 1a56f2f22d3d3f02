#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gladcf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

enum class Provenance : std::uint8_t { OriginalNormal, OriginalAbnormal, Generated };

enum class FeatureMode : std::uint8_t { Identity, DegreeBinning, Ldp };

std::string_view to_string(Provenance p) noexcept;
std::string_view to_string(FeatureMode m) noexcept;
/// Accepts "identity", "db"/"degree-binning", "ldp". Throws ConfigError otherwise.
FeatureMode parse_feature_mode(std::string_view s);

/// One undirected, unweighted graph. Only the real nodes are stored; padding to
/// the dataset-wide node count happens in pad_batch.
struct Graph {
    Matrix adjacency;            // n x n, entries 0/1, symmetric, zero diagonal
    Matrix node_features;        // n x h (0 x 0 until features are built)
    std::vector<int> degrees;    // row sums of adjacency
    int label = 0;               // 0 = normal, 1 = abnormal
    Provenance provenance = Provenance::OriginalNormal;
    /// Index of the source graph in the on-disk dataset; for generated graphs,
    /// the index of the seed graph it was perturbed from.
    std::size_t source_id = 0;

    std::size_t num_nodes() const noexcept { return static_cast<std::size_t>(adjacency.rows()); }
    std::size_t num_edges() const noexcept;
    std::size_t feature_dim() const noexcept { return static_cast<std::size_t>(node_features.cols()); }
    bool is_generated() const noexcept { return provenance == Provenance::Generated; }

    /// Builds a graph from an adjacency matrix, deriving degrees. The label sets
    /// provenance to ORIGINAL_NORMAL / ORIGINAL_ABNORMAL.
    static Graph from_adjacency(Matrix adjacency, int label, std::size_t source_id = 0);
};

/// Checks the Graph invariants (binary symmetric zero-diagonal adjacency,
/// degrees equal row sums, feature rows equal node count). Throws FormatError.
void validate_graph(const Graph& g);

struct ClassCounts {
    std::size_t normal = 0;
    std::size_t abnormal = 0;
    std::size_t original_normal = 0;
    std::size_t original_abnormal = 0;
    std::size_t generated = 0;
};

struct GraphDataset {
    std::vector<Graph> graphs;
    std::string name;
    std::size_t n_max = 0;
    FeatureMode feature_mode = FeatureMode::Identity;

    std::size_t size() const noexcept { return graphs.size(); }
    std::size_t feature_dim() const noexcept;
    ClassCounts counts() const noexcept;
    ClassCounts counts(const std::vector<std::size_t>& indices) const;
    /// Label of the larger class (ties resolve to 0).
    int majority_label() const noexcept;
};

/// Dense zero-padded batch. Each stack entry is n_max rows.
struct PaddedBatch {
    std::vector<Matrix> adjacency_stack;   // B x (n_max x n_max)
    std::vector<Matrix> feature_stack;     // B x (n_max x h)
    std::vector<Matrix> degree_stack;      // B x (n_max x 1)
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> node_mask;  // B x n_max
    std::vector<int> labels;
    std::vector<Provenance> provenance;
    std::size_t n_max = 0;

    std::size_t size() const noexcept { return labels.size(); }
    /// Number of real nodes of graph b (node_mask row sum).
    std::size_t real_nodes(std::size_t b) const;
};

/// Zero-pads every graph to n_max nodes. Throws SizeError naming the first graph
/// whose node count exceeds n_max or whose feature width disagrees.
PaddedBatch pad_batch(const std::vector<Graph>& graphs, std::size_t n_max);
PaddedBatch pad_batch(const std::vector<const Graph*>& graphs, std::size_t n_max);

struct Fold {
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
};

/// Stratified k-fold split over the dataset's (original) graphs. Each class is
/// shuffled with the seed and dealt round-robin, continuing the deal across
/// classes so fold sizes differ by at most one. Throws ConfigError when k < 2,
/// when there are fewer than k graphs, or when a GENERATED graph is present. A
/// class with fewer than k members is dealt anyway (with a warning), so some
/// test folds miss it.
std::vector<Fold> stratified_kfold(const GraphDataset& dataset, std::size_t k, std::uint64_t seed);

}  // namespace gladcf
