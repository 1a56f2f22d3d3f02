// Hot paths of augmentation and detector training. Graph sizes follow the
// small-molecule benchmarks: tens of nodes, a few hundred to a few thousand graphs.

#include "gladcf/counterfactual.hpp"
#include "gladcf/detector.hpp"
#include "gladcf/gcn.hpp"
#include "gladcf/graph.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

using namespace gladcf;

// Random connected molecule-like graph: a chain plus a few chords.
Graph molecule(std::size_t n, std::mt19937_64& rng, int label) {
    Matrix a = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t v = 1; v < n; ++v) {
        const auto u = static_cast<Eigen::Index>(rng() % v);
        a(u, static_cast<Eigen::Index>(v)) = a(static_cast<Eigen::Index>(v), u) = 1.0;
    }
    for (std::size_t k = 0; k < n / 8; ++k) {
        const auto u = static_cast<Eigen::Index>(rng() % n), v = static_cast<Eigen::Index>(rng() % n);
        if (u != v) a(u, v) = a(v, u) = 1.0;
    }
    return Graph::from_adjacency(a, label);
}

std::vector<PreparedGraph> prepared_set(std::size_t count, std::size_t n, std::size_t n_max) {
    std::mt19937_64 rng(7);
    std::vector<PreparedGraph> out;
    for (std::size_t i = 0; i < count; ++i) {
        auto g = molecule(n, rng, static_cast<int>(i % 4 == 0));
        g.node_features = Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n_max));
        auto p = prepare_graph(g);
        if (p.label == 1) p.provenance = i % 8 == 0 ? Provenance::Generated : Provenance::OriginalAbnormal;
        out.push_back(std::move(p));
    }
    return out;
}

void BM_GcnLayerForward(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(1);
    const auto g = molecule(n, rng, 0);
    const Matrix norm = normalize_adjacency(g.adjacency);
    const auto layer = GcnLayerParams::glorot(n, 256, rng);
    const Matrix x = Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (auto _ : state) benchmark::DoNotOptimize(gcn_layer_forward(layer, norm, x));
}
BENCHMARK(BM_GcnLayerForward)->Arg(16)->Arg(40)->Arg(95);

void BM_DetectorLossAndGradients(benchmark::State& state) {
    const auto graphs = prepared_set(static_cast<std::size_t>(state.range(0)), 40, 56);
    const auto params = DetectorParams::initialise(56, DetectorConfig{}, 3);
    for (auto _ : state) {
        DetectorParams grads = params.zeros_like();
        benchmark::DoNotOptimize(detector_loss(params, graphs, 1.2, {}, &grads).total);
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DetectorLossAndGradients)->Arg(64)->Arg(467)->Unit(benchmark::kMillisecond);

void BM_DetectorPredict(benchmark::State& state) {
    const auto graphs = prepared_set(static_cast<std::size_t>(state.range(0)), 40, 56);
    const auto params = DetectorParams::initialise(56, DetectorConfig{}, 3);
    for (auto _ : state) benchmark::DoNotOptimize(predict(params, graphs).scores.data());
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DetectorPredict)->Arg(467)->Unit(benchmark::kMillisecond);

void BM_CounterfactualLoss(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const std::size_t n_max = 56;
    std::mt19937_64 rng(2);
    auto g = molecule(n, rng, 0);
    g.node_features = Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n_max));
    const auto pair = PerturbationPair::initialise(n_max, n_max, 0.5, 0.5, 4);
    const auto probe = ReadoutProbe::seeded(n_max, 5);
    CounterfactualGrads grads{Matrix::Zero(pair.m_a.rows(), pair.m_a.cols()),
                              Matrix::Zero(pair.m_b.rows(), pair.m_b.cols())};
    for (auto _ : state) benchmark::DoNotOptimize(counterfactual_loss(pair, g, probe, false, &grads).total);
}
BENCHMARK(BM_CounterfactualLoss)->Arg(20)->Arg(56);

}  // namespace

BENCHMARK_MAIN();
