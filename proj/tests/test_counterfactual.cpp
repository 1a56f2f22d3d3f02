#include "gladcf/counterfactual.hpp"
#include "gladcf/errors.hpp"
#include "gladcf/seed.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace gladcf;
using namespace gladcf::testing;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Loop-level probe: normalised adjacency, one affine layer to 2 logits, mean
// pool over nodes, softmax.
std::array<double, 2> oracle_probe(const Matrix& a, const Matrix& x, const Matrix& w, const Matrix& b) {
    const Eigen::Index n = a.rows();
    std::vector<double> d(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        double s = 1.0;
        for (Eigen::Index j = 0; j < n; ++j) s += a(i, j);
        d[static_cast<std::size_t>(i)] = s;
    }
    double pooled[2] = {0.0, 0.0};
    for (int c = 0; c < 2; ++c) {
        for (Eigen::Index i = 0; i < n; ++i) {
            double v = b(0, c);
            for (Eigen::Index j = 0; j < n; ++j) {
                const double ahat = (a(i, j) + (i == j)) / std::sqrt(d[static_cast<std::size_t>(i)] * d[static_cast<std::size_t>(j)]);
                for (Eigen::Index k = 0; k < x.cols(); ++k) v += ahat * x(j, k) * w(k, c);
            }
            pooled[c] += v / static_cast<double>(n);
        }
    }
    const double e0 = std::exp(pooled[0]), e1 = std::exp(pooled[1]);
    return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

double oracle_kl(const std::array<double, 2>& p, const std::array<double, 2>& q) {
    return p[0] * std::log(p[0] / q[0]) + p[1] * std::log(p[1] / q[1]);
}

struct OracleTerms {
    double l_g1, l_g2, total;
};

OracleTerms oracle_loss(const Matrix& m_a, const Matrix& m_b, const Graph& g, const ReadoutProbe& probe) {
    const Eigen::Index n = g.adjacency.rows(), h = g.node_features.cols();
    Matrix s(n, n);
    for (Eigen::Index u = 0; u < n; ++u)
        for (Eigen::Index v = 0; v < n; ++v) {
            double acc = 0.0;
            for (Eigen::Index k = 0; k < n; ++k) acc += m_a(u, k) * g.adjacency(k, v);
            s(u, v) = sig(acc);
        }
    Matrix ap(n, n);
    double dist = 0.0;
    for (Eigen::Index u = 0; u < n; ++u)
        for (Eigen::Index v = 0; v < n; ++v) {
            ap(u, v) = u == v ? 0.0 : std::max(s(u, v), s(v, u));
            dist += (g.adjacency(u, v) - ap(u, v)) * (g.adjacency(u, v) - ap(u, v));
        }
    Matrix xm(n, h);
    double mask_sq = 0.0;
    for (Eigen::Index u = 0; u < n; ++u)
        for (Eigen::Index k = 0; k < h; ++k) {
            const double m = sig(m_b(u, k));
            mask_sq += m * m;
            xm(u, k) = m * g.node_features(u, k);
        }
    const auto p = oracle_probe(g.adjacency, g.node_features, probe.layer.weight, probe.layer.bias);
    const auto pa = oracle_probe(ap, g.node_features, probe.layer.weight, probe.layer.bias);
    const auto pb = oracle_probe(g.adjacency, xm, probe.layer.weight, probe.layer.bias);
    OracleTerms t{};
    t.l_g1 = std::sqrt(dist) - std::sqrt(mask_sq);
    t.l_g2 = oracle_kl(p, pa) + oracle_kl(p, pb);
    t.total = t.l_g1 - t.l_g2;
    return t;
}

GraphDataset planted(std::size_t n_normal, std::size_t n_abnormal, std::uint64_t seed, std::size_t n_max = 8) {
    std::mt19937_64 rng(seed);
    std::vector<Graph> graphs;
    for (std::size_t i = 0; i < n_normal + n_abnormal; ++i) {
        auto g = random_graph(3 + rng() % (n_max - 2), 0.3, rng, i < n_normal ? 0 : 1);
        g.source_id = i;
        graphs.push_back(std::move(g));
    }
    return build_features(graphs, {FeatureMode::Ldp, 10}, n_max, "PLANT");
}

std::vector<std::size_t> all_indices(const GraphDataset& ds) {
    std::vector<std::size_t> out(ds.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
    return out;
}

}  // namespace

TEST(PerturbStructure, ZeroMatrixGivesCompleteGraphAtInclusiveThreshold) {
    PerturbationPair pair = PerturbationPair::initialise(4, 1, 0.5, 0.5, 1);
    pair.m_a.setZero();
    const Matrix a = ring(4).adjacency;
    const Matrix out = perturb_structure(pair, a, true);
    EXPECT_EQ(out, Matrix::Ones(4, 4) - Matrix::Identity(4, 4));
}

TEST(PerturbStructure, ThresholdNearOneGivesEmptyGraph) {
    PerturbationPair pair = PerturbationPair::initialise(4, 1, 1.0 - 1e-9, 0.5, 2);
    EXPECT_EQ(perturb_structure(pair, ring(4).adjacency, true), Matrix::Zero(4, 4));
}

TEST(PerturbStructure, RandomThreeByThreeMatchesElementwiseThreshold) {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        PerturbationPair pair = PerturbationPair::initialise(3, 1, 0.5, 0.5, rng());
        pair.m_a = random_matrix(3, 3, rng, 2.0);
        const Matrix a = random_graph(3, 0.5, rng).adjacency;
        const Matrix out = perturb_structure(pair, a, true);
        for (int u = 0; u < 3; ++u)
            for (int v = 0; v < 3; ++v) {
                if (u == v) {
                    EXPECT_EQ(out(u, v), 0.0);
                    continue;
                }
                double luv = 0.0, lvu = 0.0;
                for (int k = 0; k < 3; ++k) {
                    luv += pair.m_a(u, k) * a(k, v);
                    lvu += pair.m_a(v, k) * a(k, u);
                }
                const double expected = (sig(luv) >= 0.5 || sig(lvu) >= 0.5) ? 1.0 : 0.0;
                EXPECT_EQ(out(u, v), expected) << "trial " << trial << " entry " << u << "," << v;
            }
    }
}

TEST(PerturbStructure, PaddedRegionStaysEmpty) {
    PerturbationPair pair = PerturbationPair::initialise(6, 1, 0.5, 0.5, 3);
    pair.m_a.setZero();
    Matrix a = Matrix::Zero(6, 6);
    a.topLeftCorner(3, 3) = triangle().adjacency;
    const Matrix out = perturb_structure(pair, a, true, 3);
    EXPECT_EQ(out.sum(), 6.0);
    EXPECT_EQ(Matrix(out.bottomRows(3)), Matrix::Zero(3, 6));
}

TEST(MaskFeatures, SaturatedMasks) {
    PerturbationPair pair = PerturbationPair::initialise(2, 3, 0.5, 0.5, 4);
    std::mt19937_64 rng(4);
    const Matrix x = random_matrix(2, 3, rng);
    pair.m_b.setConstant(50.0);
    EXPECT_EQ(mask_features(pair, x, true), x);
    pair.m_b.setConstant(-50.0);
    EXPECT_EQ(mask_features(pair, x, true), Matrix::Zero(2, 3));
}

TEST(MaskFeatures, MixedSignTwoByTwo) {
    PerturbationPair pair = PerturbationPair::initialise(2, 2, 0.5, 0.6, 5);
    pair.m_b << 1.0, -0.3, 0.2, 0.0;
    Matrix x(2, 2);
    x << 2.0, 3.0, -1.0, 4.0;
    Matrix hard_expected(2, 2), smooth_expected(2, 2);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            const double m = sig(pair.m_b(i, j));
            hard_expected(i, j) = m >= 0.6 ? x(i, j) : 0.0;
            smooth_expected(i, j) = m * x(i, j);
        }
    // sigmoid(1) ~ 0.731 keeps, sigmoid(0.2) ~ 0.550 and sigmoid(0) drop at tau 0.6
    EXPECT_EQ(hard_expected(0, 0), 2.0);
    EXPECT_EQ(hard_expected(1, 0), 0.0);
    EXPECT_EQ(mask_features(pair, x, true), hard_expected);
    EXPECT_LT((mask_features(pair, x, false) - smooth_expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(PerturbationPair, RejectsThresholdsOutsideOpenInterval) {
    EXPECT_THROW(PerturbationPair::initialise(3, 2, 0.0, 0.5, 0), ConfigError);
    EXPECT_THROW(PerturbationPair::initialise(3, 2, 0.5, 1.0, 0), ConfigError);
}

TEST(CounterfactualLoss, ExactReproductionAndOpenMask) {
    // Path graph adjacency is invertible, so M_a = (60 A - 30) A^-1 gives logits
    // +30 on edges and -30 elsewhere: A' reproduces A in hard mode.
    auto g = graph_from_edges(4, {{0, 1}, {1, 2}, {2, 3}});
    g.node_features = Matrix::Ones(4, 3);
    PerturbationPair pair = PerturbationPair::initialise(4, 3, 0.5, 0.5, 6);
    pair.m_a = (60.0 * g.adjacency - 30.0 * Matrix::Ones(4, 4)) * g.adjacency.inverse();
    pair.m_b.setConstant(60.0);
    ASSERT_EQ(perturb_structure(pair, g.adjacency, true), g.adjacency);
    const auto loss = counterfactual_loss(pair, g, ReadoutProbe::seeded(3, 1), true);
    EXPECT_NEAR(loss.structure_distance, 0.0, 1e-12);
    EXPECT_NEAR(loss.l_g1, -std::sqrt(12.0), 1e-12);
    EXPECT_NEAR(loss.l_g2, 0.0, 1e-12);
    EXPECT_NEAR(loss.total, -std::sqrt(12.0), 1e-12);
}

TEST(CounterfactualLoss, UnchangedGraphsHaveZeroDivergence) {
    auto g = graph_from_edges(4, {{0, 1}, {1, 2}, {2, 3}});
    std::mt19937_64 rng(12);
    g.node_features = random_matrix(4, 2, rng);
    PerturbationPair pair = PerturbationPair::initialise(4, 2, 0.5, 0.5, 6);
    pair.m_a = (60.0 * g.adjacency - 30.0 * Matrix::Ones(4, 4)) * g.adjacency.inverse();
    pair.m_b.setConstant(60.0);
    const auto loss = counterfactual_loss(pair, g, ReadoutProbe::seeded(2, 3), true);
    EXPECT_EQ(loss.kl_structure, 0.0);
    EXPECT_EQ(loss.kl_features, 0.0);
}

TEST(CounterfactualLoss, FourNodeCaseMatchesTermByTermOracle) {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        auto g = random_graph(4, 0.4, rng);
        g.node_features = random_matrix(4, 3, rng);
        PerturbationPair pair = PerturbationPair::initialise(6, 3, 0.5, 0.5, rng());
        const auto probe = ReadoutProbe::seeded(3, rng());
        const auto got = counterfactual_loss(pair, g, probe);
        const auto want = oracle_loss(pair.m_a, pair.m_b, g, probe);
        EXPECT_NEAR(got.l_g1, want.l_g1, 1e-12);
        EXPECT_NEAR(got.l_g2, want.l_g2, 1e-12);
        EXPECT_NEAR(got.total, want.total, 1e-12);
        EXPECT_GE(got.kl_structure, 0.0);
        EXPECT_GE(got.kl_features, 0.0);
    }
}

TEST(CounterfactualLoss, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(78);
    for (int trial = 0; trial < 5; ++trial) {
        auto g = random_graph(3 + rng() % 3, 0.4, rng);
        g.node_features = random_matrix(static_cast<Eigen::Index>(g.num_nodes()), 3, rng);
        PerturbationPair pair = PerturbationPair::initialise(5, 3, 0.5, 0.5, rng());
        const auto probe = ReadoutProbe::seeded(3, rng());
        CounterfactualGrads grads{Matrix::Zero(5, 5), Matrix::Zero(5, 3)};
        counterfactual_loss(pair, g, probe, false, &grads);
        auto f = [&] { return counterfactual_loss(pair, g, probe).total; };
        EXPECT_LT(max_relative_error(grads.m_a, finite_difference(pair.m_a, f)), 1e-4) << "trial " << trial;
        EXPECT_LT(max_relative_error(grads.m_b, finite_difference(pair.m_b, f)), 1e-4) << "trial " << trial;
    }
}

TEST(CounterfactualLoss, SmoothApproachesHardWhenSaturated) {
    std::mt19937_64 rng(79);
    auto g = random_graph(5, 0.4, rng);
    g.node_features = random_matrix(5, 2, rng);
    PerturbationPair pair = PerturbationPair::initialise(5, 2, 0.5, 0.5, 9);
    // Keep logits away from the threshold before scaling them up.
    pair.m_a = random_matrix(5, 5, rng);
    pair.m_b = random_matrix(5, 2, rng);
    for (Eigen::Index i = 0; i < pair.m_a.size(); ++i)
        if (std::abs(pair.m_a(i)) < 0.1) pair.m_a(i) = 0.5;
    for (Eigen::Index i = 0; i < pair.m_b.size(); ++i)
        if (std::abs(pair.m_b(i)) < 0.1) pair.m_b(i) = -0.5;
    // Scale until the smallest structural logit is at least 40 in magnitude.
    const Matrix logits = pair.m_a * g.adjacency;
    ASSERT_GT(logits.cwiseAbs().minCoeff(), 0.0);
    const double scale = std::max(1e3, 40.0 / logits.cwiseAbs().minCoeff());
    pair.m_a *= scale;
    pair.m_b *= scale;
    const Matrix smooth = perturb_structure(pair, g.adjacency, false);
    const Matrix hard = perturb_structure(pair, g.adjacency, true);
    EXPECT_LT((smooth - hard).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((mask_features(pair, g.node_features, false) - mask_features(pair, g.node_features, true))
                  .cwiseAbs()
                  .maxCoeff(),
              1e-6);
}

TEST(TrainPerturbations, ZeroEpochsLeavesInitialisation) {
    auto ds = planted(6, 2, 1);
    std::vector<const Graph*> seeds{&ds.graphs[0], &ds.graphs[1]};
    AugmentConfig cfg;
    cfg.epochs = 0;
    cfg.seed = 42;
    const auto trained = train_perturbations(seeds, ds.n_max, ds.feature_dim(), cfg);
    const auto init = PerturbationPair::initialise(ds.n_max, ds.feature_dim(), 0.5, 0.5, derive_seed(42, "pair"));
    EXPECT_EQ(trained.pair.m_a, init.m_a);
    EXPECT_EQ(trained.pair.m_b, init.m_b);
}

TEST(TrainPerturbations, FiftyEpochsReduceMeanLoss) {
    auto ds = planted(8, 2, 2);
    std::vector<const Graph*> seeds;
    for (int i = 0; i < 5; ++i) seeds.push_back(&ds.graphs[static_cast<std::size_t>(i)]);
    AugmentConfig cfg;
    cfg.epochs = 50;
    cfg.seed = 5;
    const auto trained = train_perturbations(seeds, ds.n_max, ds.feature_dim(), cfg);
    ASSERT_EQ(trained.loss_trace.size(), 51u);
    // Recompute the final mean from the returned pair rather than trusting the trace.
    double final_mean = 0.0;
    for (const Graph* g : seeds) final_mean += counterfactual_loss(trained.pair, *g, trained.probe).total / 5.0;
    EXPECT_NEAR(final_mean, trained.loss_trace.back(), 1e-12);
    EXPECT_LE(final_mean, trained.loss_trace.front());
}

TEST(TrainPerturbations, Deterministic) {
    auto ds = planted(8, 2, 3);
    std::vector<const Graph*> seeds{&ds.graphs[0], &ds.graphs[2], &ds.graphs[4]};
    AugmentConfig cfg;
    cfg.epochs = 10;
    cfg.seed = 17;
    const auto a = train_perturbations(seeds, ds.n_max, ds.feature_dim(), cfg);
    const auto b = train_perturbations(seeds, ds.n_max, ds.feature_dim(), cfg);
    EXPECT_EQ(a.pair.m_a, b.pair.m_a);
    EXPECT_EQ(a.pair.m_b, b.pair.m_b);
    EXPECT_EQ(a.loss_trace, b.loss_trace);
}

TEST(GenerateSamples, ThirtyTenSplitGetsTwentyAbnormal) {
    const auto ds = planted(30, 10, 4);
    AugmentConfig cfg;
    cfg.epochs = 3;
    const auto r = augment_split(ds, all_indices(ds), cfg);
    ASSERT_EQ(r.generated.size(), 20u);
    EXPECT_EQ(r.generated_label, 1);
    for (const auto& g : r.generated) {
        EXPECT_EQ(g.label, 1);
        EXPECT_EQ(g.provenance, Provenance::Generated);
    }
    std::set<std::size_t> distinct(r.seed_indices.begin(), r.seed_indices.end());
    EXPECT_EQ(distinct.size(), 20u);
    for (auto i : r.seed_indices) EXPECT_EQ(ds.graphs[i].label, 0);
}

TEST(GenerateSamples, BalancedSplitGivesNothing) {
    const auto ds = planted(7, 7, 5);
    AugmentConfig cfg;
    cfg.epochs = 2;
    EXPECT_TRUE(augment_split(ds, all_indices(ds), cfg).generated.empty());
}

TEST(GenerateSamples, AbnormalMajorityProducesNormals) {
    const auto ds = planted(4, 9, 6);
    AugmentConfig cfg;
    cfg.epochs = 2;
    const auto r = augment_split(ds, all_indices(ds), cfg);
    ASSERT_EQ(r.generated.size(), 5u);
    EXPECT_EQ(r.generated_label, 0);
    for (const auto& g : r.generated) EXPECT_EQ(g.label, 0);
}

TEST(GenerateSamples, SeedsComeFromTheGivenSplitOnly) {
    const auto ds = planted(10, 3, 7);
    const std::vector<std::size_t> split{0, 2, 4, 6, 10};
    const auto seeds = select_seed_indices(ds, split, 1);
    ASSERT_EQ(seeds.size(), 3u);
    for (auto i : seeds) EXPECT_TRUE(i == 0 || i == 2 || i == 4 || i == 6);
    EXPECT_EQ(seeds, select_seed_indices(ds, split, 1));
}

TEST(GenerateSamples, RefusesSplitWithGeneratedGraphs) {
    auto ds = planted(5, 1, 8);
    ds.graphs[0].provenance = Provenance::Generated;
    EXPECT_THROW(select_seed_indices(ds, {0, 1}, 1), ConfigError);
}

TEST(GenerateSamples, StructuralInvariantsAndClassBalance) {
    std::mt19937_64 rng(80);
    for (int trial = 0; trial < 6; ++trial) {
        const std::size_t n0 = 5 + rng() % 20, n1 = 2 + rng() % 10;
        const auto ds = planted(n0, n1, rng(), 9);
        AugmentConfig cfg;
        cfg.epochs = 5;
        cfg.seed = rng();
        const auto idx = all_indices(ds);
        const auto r = augment_split(ds, idx, cfg);
        auto counts = ds.counts(idx);
        for (const auto& g : r.generated) {
            EXPECT_NO_THROW(validate_graph(g));
            const Graph& src = ds.graphs[g.source_id];
            ASSERT_EQ(g.node_features.rows(), src.node_features.rows());
            for (Eigen::Index i = 0; i < g.node_features.size(); ++i)
                EXPECT_TRUE(g.node_features(i) == 0.0 || g.node_features(i) == src.node_features(i));
            (g.label == 1 ? counts.abnormal : counts.normal)++;
        }
        EXPECT_EQ(counts.normal, counts.abnormal);
    }
}
