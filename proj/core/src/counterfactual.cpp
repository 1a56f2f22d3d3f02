#include "gladcf/counterfactual.hpp"

#include "gladcf/errors.hpp"
#include "gladcf/log.hpp"
#include "gladcf/optim.hpp"
#include "gladcf/seed.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gladcf {

namespace {

constexpr double kProbFloor = 1e-12;

void check_threshold(double v, const char* name) {
    if (!(v > 0.0 && v < 1.0)) throw ConfigError(std::string(name) + " must lie strictly inside (0, 1)");
}

Eigen::Vector2d softmax2(const Eigen::RowVector2d& z) {
    const double m = z.maxCoeff();
    Eigen::Vector2d e(std::exp(z(0) - m), std::exp(z(1) - m));
    return e / e.sum();
}

double kl(const Eigen::Vector2d& p, const Eigen::Vector2d& q) {
    double out = 0.0;
    for (int i = 0; i < 2; ++i) {
        const double pi = std::max(p(i), kProbFloor);
        const double qi = std::max(q(i), kProbFloor);
        out += pi * (std::log(pi) - std::log(qi));
    }
    return out;
}

// Probe forward keeping what the backward pass needs.
struct ProbePass {
    Matrix norm_adj;
    Eigen::Vector2d prob;
};

ProbePass probe_forward(const ReadoutProbe& probe, const Matrix& adjacency, const Matrix& features) {
    ProbePass pass;
    pass.norm_adj = normalize_adjacency(adjacency);
    const Matrix h = gcn_layer_forward(probe.layer, pass.norm_adj, features);
    const Eigen::RowVector2d pooled = h.colwise().mean();
    pass.prob = softmax2(pooled);
    return pass;
}

// dL/dH of the probe output when dL/dlogits = g (mean pooling spreads it evenly).
Matrix pooled_grad(const Eigen::Vector2d& g, Eigen::Index n) {
    Matrix out(n, 2);
    out.col(0).setConstant(g(0) / static_cast<double>(n));
    out.col(1).setConstant(g(1) / static_cast<double>(n));
    return out;
}

// Smooth structural perturbation of an n-block and the argmax bookkeeping of the
// symmetrisation (true where S_uv supplied the max).
Matrix symmetrised_offdiag(const Matrix& s, Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>* from_self) {
    const auto n = s.rows();
    Matrix out = Matrix::Zero(n, n);
    if (from_self) from_self->setConstant(n, n, false);
    for (Eigen::Index u = 0; u < n; ++u)
        for (Eigen::Index v = 0; v < n; ++v) {
            if (u == v) continue;
            const bool self = s(u, v) >= s(v, u);
            out(u, v) = self ? s(u, v) : s(v, u);
            if (from_self) (*from_self)(u, v) = self;
        }
    return out;
}

}  // namespace

PerturbationPair PerturbationPair::initialise(std::size_t n_max, std::size_t h, double sigma, double tau,
                                              std::uint64_t seed) {
    check_threshold(sigma, "sigma");
    check_threshold(tau, "tau");
    std::mt19937_64 rng(seed);
    PerturbationPair p;
    p.sigma = sigma;
    p.tau = tau;
    const auto N = static_cast<Eigen::Index>(n_max), H = static_cast<Eigen::Index>(h);
    const double la = std::sqrt(6.0 / (2.0 * static_cast<double>(std::max<std::size_t>(n_max, 1))));
    const double lb = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(n_max + h, 1)));
    p.m_a = Matrix::Identity(N, N);
    for (Eigen::Index j = 0; j < N; ++j)
        for (Eigen::Index i = 0; i < N; ++i) p.m_a(i, j) += uniform(rng, -la, la);
    p.m_b.resize(N, H);
    for (Eigen::Index j = 0; j < H; ++j)
        for (Eigen::Index i = 0; i < N; ++i) p.m_b(i, j) = uniform(rng, -lb, lb);
    return p;
}

ReadoutProbe ReadoutProbe::seeded(std::size_t h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return ReadoutProbe{GcnLayerParams::glorot(h, 2, rng)};
}

Eigen::Vector2d ReadoutProbe::probabilities(const Matrix& adjacency, const Matrix& features) const {
    if (adjacency.rows() == 0) return {0.5, 0.5};
    return probe_forward(*this, adjacency, features).prob;
}

Matrix perturb_structure(const PerturbationPair& pair, const Matrix& adjacency, bool hard, std::size_t real_nodes) {
    const auto N = adjacency.rows();
    if (adjacency.cols() != N || pair.m_a.rows() != N || pair.m_a.cols() != N)
        throw SizeError("perturb_structure: adjacency and M_a must both be n_max x n_max");
    const auto n = std::min<Eigen::Index>(N, static_cast<Eigen::Index>(std::min<std::size_t>(real_nodes, static_cast<std::size_t>(N))));
    Matrix out = Matrix::Zero(N, N);
    if (n == 0) return out;
    // (M_a A) restricted to the real block only reads M_a's real block because
    // padded rows of A are zero.
    const Matrix logits = pair.m_a.topLeftCorner(n, n) * adjacency.topLeftCorner(n, n);
    Matrix smooth = symmetrised_offdiag(sigmoid(logits), nullptr);
    if (hard) smooth = (smooth.array() >= pair.sigma).select(Matrix::Ones(n, n), 0.0);
    if (hard) smooth.diagonal().setZero();
    out.topLeftCorner(n, n) = smooth;
    return out;
}

Matrix mask_features(const PerturbationPair& pair, const Matrix& features, bool hard) {
    if (features.rows() > pair.m_b.rows() || features.cols() != pair.m_b.cols())
        throw SizeError("mask_features: feature block does not fit M_b");
    const Matrix mask = sigmoid(pair.m_b.topRows(features.rows()));
    if (hard) return (mask.array() >= pair.tau).select(features, 0.0);
    return mask.cwiseProduct(features);
}

CounterfactualLoss counterfactual_loss(const PerturbationPair& pair, const Graph& graph, const ReadoutProbe& probe,
                                       bool hard, CounterfactualGrads* grads) {
    const auto n = static_cast<Eigen::Index>(graph.num_nodes());
    if (graph.node_features.rows() != n || graph.node_features.cols() != pair.m_b.cols())
        throw SizeError("counterfactual_loss: graph features do not match M_b width");
    if (n > pair.m_a.rows()) throw SizeError("counterfactual_loss: graph larger than n_max");

    CounterfactualLoss out;
    if (n == 0) return out;
    const Matrix& a = graph.adjacency;
    const Matrix& x = graph.node_features;

    const Matrix logits = pair.m_a.topLeftCorner(n, n) * a;
    const Matrix s = sigmoid(logits);
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> from_self;
    Matrix a_pert = symmetrised_offdiag(s, &from_self);
    const Matrix mask_smooth = sigmoid(pair.m_b.topRows(n));
    Matrix mask = mask_smooth;
    if (hard) {
        a_pert = (a_pert.array() >= pair.sigma).select(Matrix::Ones(n, n), 0.0);
        a_pert.diagonal().setZero();
        mask = (mask_smooth.array() >= pair.tau).select(Matrix::Ones(n, mask.cols()), 0.0);
    }
    const Matrix x_masked = mask.cwiseProduct(x);

    const Matrix diff = a - a_pert;
    out.structure_distance = diff.norm();
    out.mask_norm = mask.norm();
    out.l_g1 = out.structure_distance - out.mask_norm;

    const ProbePass orig = probe_forward(probe, a, x);
    const ProbePass pa = probe_forward(probe, a_pert, x);
    const ProbePass pb = probe_forward(probe, a, x_masked);
    out.kl_structure = kl(orig.prob, pa.prob);
    out.kl_features = kl(orig.prob, pb.prob);
    out.l_g2 = out.kl_structure + out.kl_features;
    out.total = out.l_g1 - out.l_g2;

    if (!grads || hard) return out;

    // L = ||A - A'|| - ||mask|| - KL(p||p_a) - KL(p||p_b); dKL(p||softmax(z))/dz = q - p.
    Matrix grad_a_pert = Matrix::Zero(n, n);
    if (out.structure_distance > 0.0) grad_a_pert = -diff / out.structure_distance;
    Matrix grad_mask = Matrix::Zero(n, mask.cols());
    if (out.mask_norm > 0.0) grad_mask = -mask / out.mask_norm;

    {
        const Eigen::Vector2d gz = -(pa.prob - orig.prob);
        GcnLayerGrads unused{Matrix::Zero(probe.layer.weight.rows(), 2), Matrix::Zero(1, 2)};
        Matrix grad_norm;
        gcn_layer_backward(probe.layer, pa.norm_adj, x, pooled_grad(gz, n), unused, nullptr, &grad_norm);
        grad_a_pert += normalize_adjacency_backward(a_pert, grad_norm);
    }
    {
        const Eigen::Vector2d gz = -(pb.prob - orig.prob);
        GcnLayerGrads unused{Matrix::Zero(probe.layer.weight.rows(), 2), Matrix::Zero(1, 2)};
        Matrix grad_x;
        gcn_layer_backward(probe.layer, pb.norm_adj, x_masked, pooled_grad(gz, n), unused, &grad_x);
        grad_mask += grad_x.cwiseProduct(x);
    }

    Matrix grad_s = Matrix::Zero(n, n);
    for (Eigen::Index u = 0; u < n; ++u)
        for (Eigen::Index v = 0; v < n; ++v) {
            if (u == v) continue;
            if (from_self(u, v)) grad_s(u, v) += grad_a_pert(u, v);
            else grad_s(v, u) += grad_a_pert(u, v);
        }
    const Matrix grad_logits = grad_s.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix()));
    grads->m_a.topLeftCorner(n, n) += grad_logits * a.transpose();
    grads->m_b.topRows(n) +=
        grad_mask.cwiseProduct(mask_smooth.cwiseProduct((1.0 - mask_smooth.array()).matrix()));
    return out;
}

TrainedPerturbation train_perturbations(const std::vector<const Graph*>& seed_graphs, std::size_t n_max,
                                        std::size_t feature_dim, const AugmentConfig& config) {
    if (config.lr <= 0.0) throw ConfigError("augmenter learning rate must be positive");
    TrainedPerturbation result{
        PerturbationPair::initialise(n_max, feature_dim, config.sigma, config.tau, derive_seed(config.seed, "pair")),
        ReadoutProbe::seeded(feature_dim, derive_seed(config.seed, "probe")),
        {}};
    if (seed_graphs.empty()) return result;

    auto& pair = result.pair;
    Adam adam(config.lr);
    CounterfactualGrads grads;
    const double inv = 1.0 / static_cast<double>(seed_graphs.size());

    auto evaluate = [&](std::size_t epoch, bool with_grads) {
        double mean = 0.0, g1 = 0.0, g2 = 0.0;
        if (with_grads) {
            grads.m_a = Matrix::Zero(pair.m_a.rows(), pair.m_a.cols());
            grads.m_b = Matrix::Zero(pair.m_b.rows(), pair.m_b.cols());
        }
        for (const Graph* g : seed_graphs) {
            const auto l = counterfactual_loss(pair, *g, result.probe, false, with_grads ? &grads : nullptr);
            mean += l.total * inv;
            g1 += l.l_g1 * inv;
            g2 += l.l_g2 * inv;
        }
        if (!std::isfinite(mean) || !pair.finite()) {
            std::ostringstream msg;
            msg << "counterfactual training diverged at epoch " << epoch << ": L_coun=" << mean << " L_G1=" << g1
                << " L_G2=" << g2;
            throw TrainingError(msg.str());
        }
        return mean;
    };

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        result.loss_trace.push_back(evaluate(epoch, true));
        grads.m_a *= inv;
        grads.m_b *= inv;
        adam.step({&pair.m_a, &pair.m_b}, {&grads.m_a, &grads.m_b});
    }
    result.loss_trace.push_back(evaluate(config.epochs, false));
    return result;
}

std::vector<std::size_t> select_seed_indices(const GraphDataset& dataset, const std::vector<std::size_t>& train_indices,
                                             std::uint64_t seed) {
    std::vector<std::size_t> pool[2];
    for (auto i : train_indices) {
        const auto& g = dataset.graphs.at(i);
        if (g.is_generated()) throw ConfigError("select_seed_indices: training split already contains generated graphs");
        pool[g.label == 1 ? 1 : 0].push_back(i);
    }
    const int major = pool[1].size() > pool[0].size() ? 1 : 0;
    const std::size_t gap = pool[major].size() - pool[1 - major].size();
    std::vector<std::size_t> chosen;
    if (gap == 0) return chosen;

    std::mt19937_64 rng(seed);
    auto& candidates = pool[major];
    if (gap <= candidates.size()) {
        // Partial Fisher-Yates: first `gap` slots are a uniform sample without replacement.
        for (std::size_t i = 0; i < gap; ++i) {
            const auto j = i + static_cast<std::size_t>(rng() % (candidates.size() - i));
            std::swap(candidates[i], candidates[j]);
        }
        chosen.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(gap));
    } else {
        log_warning("counterfactual gap " + std::to_string(gap) + " exceeds majority pool of " +
                    std::to_string(candidates.size()) + "; sampling seeds with replacement");
        for (std::size_t i = 0; i < gap; ++i) chosen.push_back(candidates[rng() % candidates.size()]);
    }
    return chosen;
}

std::vector<Graph> generate_samples(const PerturbationPair& pair, const GraphDataset& dataset,
                                    const std::vector<std::size_t>& seed_indices) {
    std::vector<Graph> out;
    out.reserve(seed_indices.size());
    for (auto idx : seed_indices) {
        const Graph& src = dataset.graphs.at(idx);
        const auto n = static_cast<Eigen::Index>(src.num_nodes());
        Matrix padded = Matrix::Zero(pair.m_a.rows(), pair.m_a.cols());
        padded.topLeftCorner(n, n) = src.adjacency;
        Matrix a = perturb_structure(pair, padded, true, src.num_nodes()).topLeftCorner(n, n);
        Graph g = Graph::from_adjacency(std::move(a), 1 - src.label, src.source_id);
        g.node_features = mask_features(pair, src.node_features, true);
        g.provenance = Provenance::Generated;
        out.push_back(std::move(g));
    }
    return out;
}

AugmentationResult augment_split(const GraphDataset& dataset, const std::vector<std::size_t>& train_indices,
                                 const AugmentConfig& config) {
    AugmentationResult r;
    r.seed_indices = select_seed_indices(dataset, train_indices, derive_seed(config.seed, "select"));
    std::vector<const Graph*> seeds;
    seeds.reserve(r.seed_indices.size());
    for (auto i : r.seed_indices) seeds.push_back(&dataset.graphs[i]);
    r.trained = train_perturbations(seeds, dataset.n_max, dataset.feature_dim(), config);
    r.generated = generate_samples(r.trained.pair, dataset, r.seed_indices);
    const auto c = dataset.counts(train_indices);
    r.generated_label = c.abnormal > c.normal ? 0 : 1;
    return r;
}

}  // namespace gladcf
