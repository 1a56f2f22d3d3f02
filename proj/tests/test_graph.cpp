#include "gladcf/errors.hpp"
#include "gladcf/graph.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

using namespace gladcf;
using namespace gladcf::testing;

namespace {

GraphDataset labelled_dataset(std::size_t n_normal, std::size_t n_abnormal) {
    GraphDataset ds;
    for (std::size_t i = 0; i < n_normal + n_abnormal; ++i) {
        auto g = triangle(i < n_normal ? 0 : 1);
        g.source_id = i;
        g.node_features = Matrix::Identity(3, 3);
        ds.graphs.push_back(std::move(g));
    }
    ds.n_max = 3;
    return ds;
}

}  // namespace

TEST(PadBatch, TriangleIsZeroPaddedToFour) {
    auto g = triangle();
    g.node_features = Matrix::Ones(3, 2);
    const auto batch = pad_batch(std::vector<Graph>{g}, 4);
    ASSERT_EQ(batch.size(), 1u);
    const Matrix& a = batch.adjacency_stack[0];
    ASSERT_EQ(a.rows(), 4);
    EXPECT_EQ(a.topLeftCorner(3, 3), g.adjacency);
    EXPECT_EQ(a.row(3).sum(), 0.0);
    EXPECT_EQ(a.col(3).sum(), 0.0);
    EXPECT_EQ(batch.feature_stack[0].row(3).sum(), 0.0);
    EXPECT_EQ(batch.degree_stack[0](3, 0), 0.0);
    EXPECT_EQ(batch.degree_stack[0](0, 0), 2.0);
}

TEST(PadBatch, EmptyListGivesEmptyBatch) {
    const auto batch = pad_batch(std::vector<Graph>{}, 5);
    EXPECT_EQ(batch.size(), 0u);
    EXPECT_TRUE(batch.adjacency_stack.empty());
    EXPECT_TRUE(batch.feature_stack.empty());
    EXPECT_EQ(batch.node_mask.rows(), 0);
}

TEST(PadBatch, NodeMaskMarksRealNodes) {
    auto a = graph_from_edges(2, {{0, 1}});
    auto b = triangle();
    a.node_features = Matrix::Zero(2, 1);
    b.node_features = Matrix::Zero(3, 1);
    const auto batch = pad_batch(std::vector<Graph>{a, b}, 3);
    Eigen::Matrix<std::uint8_t, 2, 3, Eigen::RowMajor> expected;
    expected << 1, 1, 0, 1, 1, 1;
    EXPECT_EQ(batch.node_mask, expected);
    EXPECT_EQ(batch.real_nodes(0), 2u);
    EXPECT_EQ(batch.real_nodes(1), 3u);
}

TEST(PadBatch, OversizedGraphNamesItsIndex) {
    auto small = graph_from_edges(2, {{0, 1}});
    auto big = ring(5);
    small.node_features = Matrix::Zero(2, 1);
    big.node_features = Matrix::Zero(5, 1);
    try {
        pad_batch(std::vector<Graph>{small, big}, 4);
        FAIL() << "expected SizeError";
    } catch (const SizeError& e) {
        EXPECT_NE(std::string(e.what()).find("graph 1"), std::string::npos);
    }
}

TEST(PadBatch, MismatchedFeatureWidthIsRejected) {
    auto a = triangle();
    auto b = triangle();
    a.node_features = Matrix::Zero(3, 2);
    b.node_features = Matrix::Zero(3, 3);
    EXPECT_THROW(pad_batch(std::vector<Graph>{a, b}, 3), SizeError);
}

TEST(PadBatch, TopLeftBlockRoundTripsAndDegreesMatchRowSums) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng() % 9;
        auto g = random_graph(n, 0.3, rng);
        g.node_features = random_matrix(static_cast<Eigen::Index>(n), 3, rng);
        ASSERT_NO_THROW(validate_graph(g));
        for (std::size_t i = 0; i < n; ++i)
            EXPECT_EQ(g.degrees[i], static_cast<int>(g.adjacency.row(static_cast<Eigen::Index>(i)).sum()));
        const std::size_t n_max = n + rng() % 4;
        const auto batch = pad_batch(std::vector<Graph>{g}, n_max);
        const auto k = static_cast<Eigen::Index>(n);
        EXPECT_EQ(Matrix(batch.adjacency_stack[0].topLeftCorner(k, k)), g.adjacency);
        EXPECT_EQ(Matrix(batch.feature_stack[0].topRows(k)), g.node_features);
        EXPECT_EQ(batch.adjacency_stack[0].sum(), g.adjacency.sum());
    }
}

TEST(ValidateGraph, RejectsSelfLoopAndAsymmetry) {
    Matrix a = Matrix::Zero(2, 2);
    a(0, 0) = 1.0;
    EXPECT_THROW(validate_graph(Graph::from_adjacency(a, 0)), FormatError);
    a.setZero();
    a(0, 1) = 1.0;
    EXPECT_THROW(validate_graph(Graph::from_adjacency(a, 0)), FormatError);
}

TEST(StratifiedKFold, TenGraphsFiveFolds) {
    const auto ds = labelled_dataset(6, 4);
    const auto folds = stratified_kfold(ds, 5, 3);
    ASSERT_EQ(folds.size(), 5u);
    std::size_t abnormal_total = 0;
    for (const auto& f : folds) {
        EXPECT_EQ(f.test_indices.size(), 2u);
        EXPECT_EQ(f.train_indices.size(), 8u);
        std::size_t abn = 0;
        for (auto i : f.test_indices) abn += static_cast<std::size_t>(ds.graphs[i].label);
        EXPECT_LE(abn, 1u);
        abnormal_total += abn;
    }
    EXPECT_EQ(abnormal_total, 4u);
}

TEST(StratifiedKFold, TwoFoldsExactStratification) {
    const auto ds = labelled_dataset(2, 2);
    for (const auto& f : stratified_kfold(ds, 2, 99)) {
        ASSERT_EQ(f.test_indices.size(), 2u);
        EXPECT_EQ(ds.graphs[f.test_indices[0]].label + ds.graphs[f.test_indices[1]].label, 1);
    }
}

TEST(StratifiedKFold, SameSeedSameFolds) {
    const auto ds = labelled_dataset(17, 9);
    const auto a = stratified_kfold(ds, 5, 1234);
    const auto b = stratified_kfold(ds, 5, 1234);
    for (std::size_t f = 0; f < a.size(); ++f) {
        EXPECT_EQ(a[f].test_indices, b[f].test_indices);
        EXPECT_EQ(a[f].train_indices, b[f].train_indices);
    }
}

TEST(StratifiedKFold, PartitionAndClassRatioProperty) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t k = 2 + rng() % 5;
        const std::size_t n0 = k + rng() % 40, n1 = 1 + rng() % 25;
        const auto ds = labelled_dataset(n0, n1);
        const auto folds = stratified_kfold(ds, k, rng());
        std::vector<int> seen(ds.size(), 0);
        for (const auto& f : folds) {
            std::size_t abn = 0;
            for (auto i : f.test_indices) {
                seen[i]++;
                abn += static_cast<std::size_t>(ds.graphs[i].label);
            }
            const std::size_t nor = f.test_indices.size() - abn;
            // Each class lands in floor(n_c / k) or ceil(n_c / k) per fold.
            EXPECT_GE(abn, n1 / k);
            EXPECT_LE(abn, (n1 + k - 1) / k);
            EXPECT_GE(nor, n0 / k);
            EXPECT_LE(nor, (n0 + k - 1) / k);
            std::set<std::size_t> train(f.train_indices.begin(), f.train_indices.end());
            for (auto i : f.test_indices) EXPECT_FALSE(train.count(i));
            EXPECT_EQ(train.size() + f.test_indices.size(), ds.size());
        }
        EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
    }
}

TEST(StratifiedKFold, RejectsBadK) {
    EXPECT_THROW(stratified_kfold(labelled_dataset(2, 2), 5, 0), ConfigError);
    EXPECT_THROW(stratified_kfold(labelled_dataset(10, 10), 1, 0), ConfigError);
}

TEST(StratifiedKFold, RejectsGeneratedGraphs) {
    auto ds = labelled_dataset(6, 6);
    ds.graphs[3].provenance = Provenance::Generated;
    EXPECT_THROW(stratified_kfold(ds, 3, 0), ConfigError);
}

TEST(GraphDataset, CountsByProvenance) {
    auto ds = labelled_dataset(3, 2);
    ds.graphs.push_back(ds.graphs.back());
    ds.graphs.back().provenance = Provenance::Generated;
    const auto c = ds.counts();
    EXPECT_EQ(c.normal, 3u);
    EXPECT_EQ(c.abnormal, 3u);
    EXPECT_EQ(c.original_abnormal, 2u);
    EXPECT_EQ(c.generated, 1u);
    EXPECT_EQ(ds.majority_label(), 0);
}
