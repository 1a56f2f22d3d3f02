#include "gladcf/gcn.hpp"

#include "gladcf/errors.hpp"
#include "gladcf/seed.hpp"

#include <cmath>

namespace gladcf {

GcnLayerParams GcnLayerParams::glorot(std::size_t in_dim, std::size_t out_dim, std::mt19937_64& rng) {
    GcnLayerParams p;
    const double limit = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
    p.weight.resize(static_cast<Eigen::Index>(in_dim), static_cast<Eigen::Index>(out_dim));
    for (Eigen::Index j = 0; j < p.weight.cols(); ++j)
        for (Eigen::Index i = 0; i < p.weight.rows(); ++i) p.weight(i, j) = uniform(rng, -limit, limit);
    p.bias = Matrix::Zero(1, static_cast<Eigen::Index>(out_dim));
    return p;
}

namespace {

Vector inv_sqrt_degrees(const Matrix& adjacency) {
    Vector d = adjacency.rowwise().sum().array() + 1.0;
    for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = d(i) == 0.0 ? 1.0 : 1.0 / std::sqrt(d(i));
    return d;
}

}  // namespace

Matrix normalize_adjacency(const Matrix& adjacency) {
    const Vector s = inv_sqrt_degrees(adjacency);
    Matrix tilde = adjacency;
    tilde.diagonal().array() += 1.0;
    return s.asDiagonal() * tilde * s.asDiagonal();
}

Matrix normalize_adjacency_backward(const Matrix& adjacency, const Matrix& grad_normalized) {
    // Â_uv = s_u Ã_uv s_v with s = d^-1/2, d_u = sum_v Ã_uv.
    const Vector s = inv_sqrt_degrees(adjacency);
    Matrix tilde = adjacency;
    tilde.diagonal().array() += 1.0;
    const Matrix& g = grad_normalized;

    // dL/ds_u = sum_v G_uv Ã_uv s_v + sum_w G_wu Ã_wu s_w
    const Matrix ga = g.cwiseProduct(tilde);
    const Vector grad_s = ga * s + ga.transpose() * s;
    Vector grad_d(s.size());
    for (Eigen::Index u = 0; u < s.size(); ++u) {
        const double d = adjacency.row(u).sum() + 1.0;
        grad_d(u) = d == 0.0 ? 0.0 : -0.5 * grad_s(u) * s(u) * s(u) * s(u);
    }
    Matrix grad = s.asDiagonal() * g * s.asDiagonal();
    grad.colwise() += grad_d;
    return grad;
}

Matrix gcn_layer_forward(const GcnLayerParams& p, const Matrix& norm_adj, const Matrix& h) {
    if (h.cols() != p.weight.rows())
        throw SizeError("gcn layer expects input width " + std::to_string(p.weight.rows()) + ", got " +
                        std::to_string(h.cols()));
    Matrix y = norm_adj * (h * p.weight);
    y.rowwise() += p.bias.row(0);
    return y;
}

void gcn_layer_backward(const GcnLayerParams& p, const Matrix& norm_adj, const Matrix& h, const Matrix& grad_out,
                        GcnLayerGrads& grads, Matrix* grad_input, Matrix* grad_adj) {
    const Matrix g = norm_adj.transpose() * grad_out;
    grads.weight.noalias() += h.transpose() * g;
    grads.bias += grad_out.colwise().sum();
    if (grad_input) *grad_input = g * p.weight.transpose();
    if (grad_adj) *grad_adj = grad_out * (h * p.weight).transpose();
}

Matrix linear_forward(const LinearParams& p, const Matrix& x) {
    if (x.cols() != p.weight.rows())
        throw SizeError("linear layer expects input width " + std::to_string(p.weight.rows()) + ", got " +
                        std::to_string(x.cols()));
    Matrix y = x * p.weight;
    y.rowwise() += p.bias.row(0);
    return y;
}

void linear_backward(const LinearParams& p, const Matrix& x, const Matrix& grad_out, GcnLayerGrads& grads,
                     Matrix* grad_input) {
    grads.weight.noalias() += x.transpose() * grad_out;
    grads.bias += grad_out.colwise().sum();
    if (grad_input) *grad_input = grad_out * p.weight.transpose();
}

std::vector<Matrix> gcn_forward(const GcnLayerParams& p, const std::vector<Matrix>& features,
                                const std::vector<Matrix>& adjacency, const PaddedBatch& batch) {
    if (features.size() != batch.size() || adjacency.size() != batch.size())
        throw SizeError("gcn_forward: batch size mismatch");
    std::vector<Matrix> out;
    out.reserve(batch.size());
    const auto N = static_cast<Eigen::Index>(batch.n_max);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto n = static_cast<Eigen::Index>(batch.real_nodes(b));
        Matrix y = Matrix::Zero(N, static_cast<Eigen::Index>(p.out_dim()));
        if (n > 0) {
            const Matrix a_hat = normalize_adjacency(adjacency[b].topLeftCorner(n, n));
            y.topRows(n) = gcn_layer_forward(p, a_hat, features[b].topRows(n));
        }
        out.push_back(std::move(y));
    }
    return out;
}

Matrix GcnStack::forward(const Matrix& norm_adj, const Matrix& h, Cache* cache) const {
    Matrix x = h;
    if (cache) {
        cache->inputs.clear();
        cache->pre_activation.clear();
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Matrix pre = gcn_layer_forward(layers[l], norm_adj, x);
        if (cache) {
            cache->inputs.push_back(std::move(x));
            cache->pre_activation.push_back(pre);
        }
        x = l + 1 < layers.size() ? relu(pre) : std::move(pre);
    }
    return x;
}

Matrix GcnStack::backward(const Matrix& norm_adj, const Cache& cache, const Matrix& grad_out,
                          std::vector<GcnLayerGrads>& grads, bool need_input_grad) const {
    Matrix g = grad_out;
    for (std::size_t l = layers.size(); l-- > 0;) {
        if (l + 1 < layers.size()) g = relu_backward(cache.pre_activation[l], g);
        Matrix gin;
        const bool want_input = l > 0 || need_input_grad;
        gcn_layer_backward(layers[l], norm_adj, cache.inputs[l], g, grads[l], want_input ? &gin : nullptr);
        g = std::move(gin);
    }
    return g;
}

Matrix sigmoid(const Matrix& x) {
    return x.unaryExpr([](double v) { return sigmoid(v); });
}

Matrix relu_backward(const Matrix& pre, const Matrix& grad) {
    return (pre.array() > 0.0).select(grad, 0.0);
}

std::vector<GcnLayerGrads> zero_grads_like(const std::vector<GcnLayerParams>& layers) {
    std::vector<GcnLayerGrads> g;
    g.reserve(layers.size());
    for (const auto& l : layers) g.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()),
                                              Matrix::Zero(1, l.bias.cols())});
    return g;
}

}  // namespace gladcf
