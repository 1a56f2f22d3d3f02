#include "gladcf/graph.hpp"

#include "gladcf/errors.hpp"
#include "gladcf/log.hpp"

#include <algorithm>
#include <random>

namespace gladcf {

std::string_view to_string(Provenance p) noexcept {
    switch (p) {
        case Provenance::OriginalNormal: return "original_normal";
        case Provenance::OriginalAbnormal: return "original_abnormal";
        case Provenance::Generated: return "generated";
    }
    return "unknown";
}

std::string_view to_string(FeatureMode m) noexcept {
    switch (m) {
        case FeatureMode::Identity: return "identity";
        case FeatureMode::DegreeBinning: return "db";
        case FeatureMode::Ldp: return "ldp";
    }
    return "unknown";
}

FeatureMode parse_feature_mode(std::string_view s) {
    if (s == "identity") return FeatureMode::Identity;
    if (s == "db" || s == "degree-binning") return FeatureMode::DegreeBinning;
    if (s == "ldp") return FeatureMode::Ldp;
    throw ConfigError("unknown feature mode '" + std::string(s) + "' (expected identity, db or ldp)");
}

std::size_t Graph::num_edges() const noexcept {
    std::size_t twice = 0;
    for (int d : degrees) twice += static_cast<std::size_t>(d);
    return twice / 2;
}

Graph Graph::from_adjacency(Matrix adjacency, int label, std::size_t source_id) {
    Graph g;
    g.adjacency = std::move(adjacency);
    g.degrees.resize(g.num_nodes());
    for (Eigen::Index i = 0; i < g.adjacency.rows(); ++i)
        g.degrees[static_cast<std::size_t>(i)] = static_cast<int>(g.adjacency.row(i).sum());
    g.label = label;
    g.provenance = label == 1 ? Provenance::OriginalAbnormal : Provenance::OriginalNormal;
    g.source_id = source_id;
    return g;
}

void validate_graph(const Graph& g) {
    const auto n = g.adjacency.rows();
    if (g.adjacency.cols() != n) throw FormatError("adjacency is not square");
    if (static_cast<Eigen::Index>(g.degrees.size()) != n) throw FormatError("degree vector length mismatch");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (g.adjacency(i, i) != 0.0) throw FormatError("adjacency has a self-loop at node " + std::to_string(i));
        double row = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double a = g.adjacency(i, j);
            if (a != 0.0 && a != 1.0) throw FormatError("adjacency entry is not binary");
            if (a != g.adjacency(j, i)) throw FormatError("adjacency is not symmetric");
            row += a;
        }
        if (row != g.degrees[static_cast<std::size_t>(i)]) throw FormatError("degree differs from adjacency row sum");
    }
    if (g.node_features.size() != 0 && g.node_features.rows() != n)
        throw FormatError("node_features row count differs from node count");
    if (g.label != 0 && g.label != 1) throw FormatError("label must be 0 or 1");
}

std::size_t GraphDataset::feature_dim() const noexcept {
    return graphs.empty() ? 0 : graphs.front().feature_dim();
}

ClassCounts GraphDataset::counts() const noexcept {
    ClassCounts c;
    for (const auto& g : graphs) {
        (g.label == 1 ? c.abnormal : c.normal)++;
        switch (g.provenance) {
            case Provenance::OriginalNormal: c.original_normal++; break;
            case Provenance::OriginalAbnormal: c.original_abnormal++; break;
            case Provenance::Generated: c.generated++; break;
        }
    }
    return c;
}

ClassCounts GraphDataset::counts(const std::vector<std::size_t>& indices) const {
    ClassCounts c;
    for (auto i : indices) {
        const auto& g = graphs.at(i);
        (g.label == 1 ? c.abnormal : c.normal)++;
        switch (g.provenance) {
            case Provenance::OriginalNormal: c.original_normal++; break;
            case Provenance::OriginalAbnormal: c.original_abnormal++; break;
            case Provenance::Generated: c.generated++; break;
        }
    }
    return c;
}

int GraphDataset::majority_label() const noexcept {
    const auto c = counts();
    return c.abnormal > c.normal ? 1 : 0;
}

std::size_t PaddedBatch::real_nodes(std::size_t b) const {
    std::size_t n = 0;
    for (Eigen::Index j = 0; j < node_mask.cols(); ++j) n += node_mask(static_cast<Eigen::Index>(b), j);
    return n;
}

PaddedBatch pad_batch(const std::vector<const Graph*>& graphs, std::size_t n_max) {
    PaddedBatch batch;
    batch.n_max = n_max;
    const auto B = graphs.size();
    const auto N = static_cast<Eigen::Index>(n_max);
    batch.node_mask.setZero(static_cast<Eigen::Index>(B), N);
    if (B == 0) return batch;

    const auto h = static_cast<Eigen::Index>(graphs.front()->feature_dim());
    batch.adjacency_stack.reserve(B);
    batch.feature_stack.reserve(B);
    batch.degree_stack.reserve(B);
    for (std::size_t b = 0; b < B; ++b) {
        const Graph& g = *graphs[b];
        const auto n = static_cast<Eigen::Index>(g.num_nodes());
        if (g.num_nodes() > n_max)
            throw SizeError("graph " + std::to_string(b) + " has " + std::to_string(n) +
                            " nodes, more than n_max = " + std::to_string(n_max));
        if (g.node_features.cols() != h)
            throw SizeError("graph " + std::to_string(b) + " has feature width " +
                            std::to_string(g.node_features.cols()) + ", expected " + std::to_string(h));

        Matrix a = Matrix::Zero(N, N);
        a.topLeftCorner(n, n) = g.adjacency;
        Matrix x = Matrix::Zero(N, h);
        if (h > 0) x.topRows(n) = g.node_features;
        Matrix d = Matrix::Zero(N, 1);
        for (Eigen::Index i = 0; i < n; ++i) {
            d(i, 0) = g.degrees[static_cast<std::size_t>(i)];
            batch.node_mask(static_cast<Eigen::Index>(b), i) = 1;
        }
        batch.adjacency_stack.push_back(std::move(a));
        batch.feature_stack.push_back(std::move(x));
        batch.degree_stack.push_back(std::move(d));
        batch.labels.push_back(g.label);
        batch.provenance.push_back(g.provenance);
    }
    return batch;
}

PaddedBatch pad_batch(const std::vector<Graph>& graphs, std::size_t n_max) {
    std::vector<const Graph*> ptrs;
    ptrs.reserve(graphs.size());
    for (const auto& g : graphs) ptrs.push_back(&g);
    return pad_batch(ptrs, n_max);
}

namespace {

// Fisher-Yates with an explicit modulo draw so the permutation only depends on
// the mt19937_64 stream, not on the standard library's shuffle.
void seeded_shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng() % i);
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace

std::vector<Fold> stratified_kfold(const GraphDataset& dataset, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("k-fold split needs k >= 2, got " + std::to_string(k));

    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& g = dataset.graphs[i];
        if (g.is_generated())
            throw ConfigError("stratified_kfold: graph " + std::to_string(i) +
                              " is GENERATED; split before augmenting");
        by_class[g.label == 1 ? 1 : 0].push_back(i);
    }
    if (dataset.size() < k)
        throw ConfigError("k-fold split needs at least k = " + std::to_string(k) + " graphs, got " +
                          std::to_string(dataset.size()));
    for (int c = 0; c < 2; ++c) {
        if (by_class[c].size() < k)
            log_warning("class " + std::to_string(c) + " has " + std::to_string(by_class[c].size()) +
                        " members, fewer than k = " + std::to_string(k) + "; some test folds will lack it");
    }

    std::mt19937_64 rng(seed);
    std::vector<std::vector<std::size_t>> test(k);
    std::size_t deal = 0;
    for (int c = 0; c < 2; ++c) {
        seeded_shuffle(by_class[c], rng);
        for (auto idx : by_class[c]) test[deal++ % k].push_back(idx);
    }

    std::vector<Fold> folds(k);
    for (std::size_t f = 0; f < k; ++f) {
        std::sort(test[f].begin(), test[f].end());
        folds[f].test_indices = test[f];
        for (std::size_t o = 0; o < k; ++o)
            if (o != f) folds[f].train_indices.insert(folds[f].train_indices.end(), test[o].begin(), test[o].end());
        std::sort(folds[f].train_indices.begin(), folds[f].train_indices.end());
    }
    return folds;
}

}  // namespace gladcf
