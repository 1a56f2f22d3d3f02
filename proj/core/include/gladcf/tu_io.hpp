#pragma once

#include "gladcf/graph.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace gladcf {

struct FeatureConfig {
    FeatureMode mode = FeatureMode::Identity;
    std::size_t num_bins = 10;  // DEGREE_BINNING only

    /// Feature width produced for a dataset padded to n_max nodes.
    std::size_t feature_dim(std::size_t n_max) const noexcept;
};

struct LoadOptions {
    /// Raw graph label that marks a graph abnormal; every other value is normal.
    int anomaly_label = 1;
    /// Keep the optional <DS>_node_labels.txt as one-hot node features. Off by default.
    bool load_node_labels = false;
};

/// Raw graphs as parsed from disk plus bookkeeping from the loader.
struct RawDataset {
    std::string name;
    std::vector<Graph> graphs;          // node_features empty unless node labels were loaded
    std::vector<int> raw_labels;        // label value as written in the file
    std::size_t max_nodes = 0;
    int minority_label = 1;             // class the augmenter has to fill up
};

/// Parses <dir>/<DS>_A.txt, <DS>_graph_indicator.txt and <DS>_graph_labels.txt where
/// DS is the directory's final component. Edges are symmetrised, self-loops and
/// duplicates dropped.
/// Throws IoError naming a missing file and FormatError with a line number for
/// malformed content or node ids that reference a nonexistent graph.
RawDataset load_tu_dataset(const std::filesystem::path& directory, const LoadOptions& options = {});
RawDataset load_tu_dataset(const std::filesystem::path& directory, int anomaly_label);

/// Builds structural node features for every graph and returns the dataset padded
/// to n_max. Throws SizeError if a graph has more than n_max nodes.
GraphDataset build_features(const std::vector<Graph>& graphs, const FeatureConfig& config, std::size_t n_max,
                            std::string name = {});

// Individual builders, exposed for testing.
Matrix identity_features(const Graph& g, std::size_t n_max);
Matrix degree_bin_features(const Graph& g, std::size_t num_bins, int max_degree);
Matrix ldp_features(const Graph& g);
/// Bin of a degree under equal-width bins over [0, max_degree], top edge inclusive.
std::size_t degree_bin(int degree, std::size_t num_bins, int max_degree) noexcept;

/// Writes graphs in TU text format as <dir>/<prefix>_A.txt, _graph_indicator.txt,
/// _graph_labels.txt and _node_attributes.txt (comma-separated feature rows).
void write_tu_graphs(const std::filesystem::path& directory, const std::string& prefix,
                     const std::vector<Graph>& graphs);

}  // namespace gladcf
