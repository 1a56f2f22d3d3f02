#pragma once

// Dense GCN building blocks with hand-derived gradients.
//
// Every layer works on the real-node block of one graph (n x n adjacency,
// n x in features). Padded rows never enter the arithmetic, so they cannot leak
// into real rows and padded outputs stay exactly zero when scattered back.

#include "gladcf/graph.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace gladcf {

struct GcnLayerParams {
    Matrix weight;  // in_dim x out_dim
    Matrix bias;    // 1 x out_dim

    std::size_t in_dim() const noexcept { return static_cast<std::size_t>(weight.rows()); }
    std::size_t out_dim() const noexcept { return static_cast<std::size_t>(weight.cols()); }

    /// Uniform in +-sqrt(6 / (in + out)), zero bias.
    static GcnLayerParams glorot(std::size_t in_dim, std::size_t out_dim, std::mt19937_64& rng);
};

/// Dense affine map; same layout as a GCN layer without propagation.
using LinearParams = GcnLayerParams;

struct GcnLayerGrads {
    Matrix weight;
    Matrix bias;
};

/// D^-1/2 (A + I) D^-1/2 over real nodes. D is the row sum of (A + I); a zero
/// row sum is replaced by 1.
Matrix normalize_adjacency(const Matrix& adjacency);

/// Pulls dL/d(normalised) back to dL/dA for an arbitrary (possibly non-binary,
/// non-symmetric) adjacency.
Matrix normalize_adjacency_backward(const Matrix& adjacency, const Matrix& grad_normalized);

/// Y = Â (H W) + b on an n-node block.
Matrix gcn_layer_forward(const GcnLayerParams& p, const Matrix& norm_adj, const Matrix& h);

/// Gradients of one GCN layer given dL/dY. Writes dL/dH into grad_input when
/// non-null and dL/dÂ into grad_adj when non-null. Parameter gradients are
/// accumulated into grads.
void gcn_layer_backward(const GcnLayerParams& p, const Matrix& norm_adj, const Matrix& h, const Matrix& grad_out,
                        GcnLayerGrads& grads, Matrix* grad_input, Matrix* grad_adj = nullptr);

Matrix linear_forward(const LinearParams& p, const Matrix& x);
void linear_backward(const LinearParams& p, const Matrix& x, const Matrix& grad_out, GcnLayerGrads& grads,
                     Matrix* grad_input);

/// Batched GCN layer over a padded batch: for every graph, Â·H·W + b on the real
/// block with zero output on padded rows.
std::vector<Matrix> gcn_forward(const GcnLayerParams& p, const std::vector<Matrix>& features,
                                const std::vector<Matrix>& adjacency, const PaddedBatch& batch);

/// Stacked GCN layers with ReLU between layers and none after the last.
struct GcnStack {
    std::vector<GcnLayerParams> layers;

    struct Cache {
        std::vector<Matrix> inputs;       // input to layer l
        std::vector<Matrix> pre_activation;
    };

    Matrix forward(const Matrix& norm_adj, const Matrix& h, Cache* cache = nullptr) const;
    /// Returns dL/dinput; accumulates parameter gradients into grads (sized like layers).
    Matrix backward(const Matrix& norm_adj, const Cache& cache, const Matrix& grad_out,
                    std::vector<GcnLayerGrads>& grads, bool need_input_grad = false) const;
};

inline double sigmoid(double x) noexcept {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

Matrix sigmoid(const Matrix& x);
inline Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }
/// Gradient of ReLU: passes grad where pre > 0.
Matrix relu_backward(const Matrix& pre, const Matrix& grad);

std::vector<GcnLayerGrads> zero_grads_like(const std::vector<GcnLayerParams>& layers);

}  // namespace gladcf
