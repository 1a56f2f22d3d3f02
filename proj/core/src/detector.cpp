#include "gladcf/detector.hpp"

#include "gladcf/errors.hpp"
#include "gladcf/log.hpp"
#include "gladcf/optim.hpp"
#include "gladcf/seed.hpp"

#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace gladcf {

namespace {

constexpr double kLogFloor = 1e-12;

GcnStack make_stack(std::size_t in, std::size_t hidden, std::size_t out, std::mt19937_64& rng) {
    GcnStack s;
    s.layers.push_back(GcnLayerParams::glorot(in, hidden, rng));
    s.layers.push_back(GcnLayerParams::glorot(hidden, out, rng));
    return s;
}

Matrix glorot_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = uniform(rng, -limit, limit);
    return m;
}

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Above this many node rows a batch is processed in chunks, trading one extra
// forward pass for bounded memory.
constexpr Eigen::Index kMaxChunkRows = 65536;

// Several graphs stacked into one block-diagonal problem: node rows of graph b
// occupy [offsets[b], offsets[b + 1]).
struct Stacked {
    SparseMatrix adj;
    Matrix features;
    SparseMatrix sparse_features;  // used instead of features when mostly zero
    bool use_sparse_features = false;
    Matrix degrees;
    // Constant products used by the pooled training path.
    SparseMatrix pool;          // B x N, row b holds 1^T A_b / n_b on block b
    Matrix prop_features;       // A X
    SparseMatrix prop_sparse;   // A X when X is sparse
    Matrix prop_degrees;        // A d
    std::vector<Eigen::Index> offsets;
    std::vector<int> labels;
    std::vector<Provenance> provenance;

    std::size_t size() const noexcept { return labels.size(); }
    Eigen::Index rows(std::size_t b) const { return offsets[b + 1] - offsets[b]; }
};

Stacked stack_graphs(const std::vector<const PreparedGraph*>& graphs) {
    Stacked s;
    s.offsets.reserve(graphs.size() + 1);
    s.offsets.push_back(0);
    Eigen::Index h = 0, nnz_adj = 0, nnz_x = 0;
    for (const auto* g : graphs) {
        const auto n = static_cast<Eigen::Index>(g->num_nodes());
        s.offsets.push_back(s.offsets.back() + n);
        h = std::max(h, g->features.cols());
        nnz_adj += (g->norm_adj.array() != 0.0).count();
        nnz_x += (g->features.array() != 0.0).count();
        s.labels.push_back(g->label);
        s.provenance.push_back(g->provenance);
    }
    const Eigen::Index N = s.offsets.back();
    for (const auto* g : graphs)
        if (g->num_nodes() > 0 && g->features.cols() != h)
            throw SizeError("detector batch mixes feature widths");

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(nnz_adj));
    s.degrees.resize(N, 1);
    s.use_sparse_features = N > 0 && h > 0 && nnz_x * 4 < N * h;
    std::vector<Eigen::Triplet<double>> xtrips;
    if (s.use_sparse_features) xtrips.reserve(static_cast<std::size_t>(nnz_x));
    else s.features.resize(N, h);
    for (std::size_t b = 0; b < graphs.size(); ++b) {
        const auto* g = graphs[b];
        const Eigen::Index off = s.offsets[b], n = s.rows(b);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j)
                if (g->norm_adj(i, j) != 0.0) trips.emplace_back(off + i, off + j, g->norm_adj(i, j));
        if (n == 0) continue;
        s.degrees.middleRows(off, n) = g->degrees;
        if (s.use_sparse_features) {
            for (Eigen::Index i = 0; i < n; ++i)
                for (Eigen::Index j = 0; j < h; ++j)
                    if (g->features(i, j) != 0.0) xtrips.emplace_back(off + i, j, g->features(i, j));
        } else {
            s.features.middleRows(off, n) = g->features;
        }
    }
    s.adj.resize(N, N);
    s.adj.setFromTriplets(trips.begin(), trips.end());
    if (s.use_sparse_features) {
        s.sparse_features.resize(N, h);
        s.sparse_features.setFromTriplets(xtrips.begin(), xtrips.end());
        s.prop_sparse = s.adj * s.sparse_features;
    } else {
        s.prop_features = s.adj * s.features;
    }
    s.prop_degrees = s.adj * s.degrees;

    const Vector col_sums = s.adj.transpose() * Vector::Ones(N);
    std::vector<Eigen::Triplet<double>> ptrips;
    ptrips.reserve(static_cast<std::size_t>(N));
    for (std::size_t b = 0; b < graphs.size(); ++b) {
        const Eigen::Index off = s.offsets[b], n = s.rows(b);
        for (Eigen::Index i = 0; i < n; ++i)
            ptrips.emplace_back(static_cast<Eigen::Index>(b), off + i, col_sums(off + i) / static_cast<double>(n));
    }
    s.pool.resize(static_cast<Eigen::Index>(graphs.size()), N);
    s.pool.setFromTriplets(ptrips.begin(), ptrips.end());
    return s;
}

std::vector<Stacked> stack_in_chunks(const std::vector<const PreparedGraph*>& graphs) {
    std::vector<Stacked> out;
    std::vector<const PreparedGraph*> chunk;
    Eigen::Index rows = 0;
    for (const auto* g : graphs) {
        const auto n = static_cast<Eigen::Index>(g->num_nodes());
        if (!chunk.empty() && rows + n > kMaxChunkRows) {
            out.push_back(stack_graphs(chunk));
            chunk.clear();
            rows = 0;
        }
        chunk.push_back(g);
        rows += n;
    }
    if (!chunk.empty() || out.empty()) out.push_back(stack_graphs(chunk));
    return out;
}

// Literal per-node branch output, A (... relu(A X W0 + b0) ...) W_last + b_last.
template <class Input>
Matrix branch_forward(const GcnStack& st, const SparseMatrix& adj, const Input& x) {
    Matrix h;
    for (std::size_t l = 0; l < st.layers.size(); ++l) {
        const auto& layer = st.layers[l];
        const Matrix hw = l == 0 ? Matrix(x * layer.weight) : Matrix(h * layer.weight);
        Matrix pre = adj * hw;
        pre.rowwise() += RowVector(layer.bias);
        h = l + 1 == st.layers.size() ? std::move(pre) : relu(pre);
    }
    return h;
}

Matrix fuse_stacked(const DetectorParams& p, const Stacked& s) {
    const Eigen::Index N = s.offsets.back();
    Matrix z(N, static_cast<Eigen::Index>(p.config.fused_dim()));
    Eigen::Index col = 0;
    const auto width = static_cast<Eigen::Index>(p.config.branch_dim);
    if (p.config.use_gcn_x) {
        z.middleCols(col, width) = s.use_sparse_features ? branch_forward(p.gcn_x, s.adj, s.sparse_features)
                                                         : branch_forward(p.gcn_x, s.adj, s.features);
        col += width;
    }
    if (p.config.use_gcn_d) z.middleCols(col, width) = branch_forward(p.gcn_d, s.adj, s.degrees);
    return z;
}

// Literal readout: sort rows within each graph, reduce, weight, mean-pool.
Matrix embed_stacked(const DetectorParams& p, const Matrix& z, const std::vector<Eigen::Index>& offsets) {
    const auto B = static_cast<Eigen::Index>(offsets.size() - 1);
    Matrix sorted(z.rows(), z.cols());
    for (Eigen::Index b = 0; b < B; ++b) {
        const Eigen::Index off = offsets[static_cast<std::size_t>(b)];
        const Eigen::Index n = offsets[static_cast<std::size_t>(b) + 1] - off;
        const auto local = p.config.use_adaptive_weight ? l1_row_order(z.middleRows(off, n))
                                                        : std::vector<Eigen::Index>{};
        for (Eigen::Index i = 0; i < n; ++i)
            sorted.row(off + i) = z.row(off + (local.empty() ? i : local[static_cast<std::size_t>(i)]));
    }
    Matrix weighted = linear_forward(p.reducer, sorted);
    if (p.config.use_adaptive_weight) weighted = weighted * p.w_adaptive;
    Matrix embedding = Matrix::Zero(B, static_cast<Eigen::Index>(p.config.reduce_dim));
    for (Eigen::Index b = 0; b < B; ++b) {
        const Eigen::Index off = offsets[static_cast<std::size_t>(b)];
        const Eigen::Index n = offsets[static_cast<std::size_t>(b) + 1] - off;
        if (n == 0) {
            log_warning("graph " + std::to_string(b) + " of the batch has no nodes; zero embedding");
            continue;
        }
        embedding.row(b) = weighted.middleRows(off, n).colwise().mean();
    }
    return embedding;
}

// Training path. Mean pooling is linear and blind to row order, so
//   mean_rows(sort(Z) R + b_R) W = (mean_rows(Z) R + b_R) W,
// and the mean of the last GCN layer is pool * h * W_last + b_last. Only the
// hidden layers are evaluated per node.
struct PooledCache {
    std::vector<Matrix> pre;     // pre-activation of hidden layer l
    std::vector<Matrix> hidden;  // input of layer l, l >= 1
    Matrix pooled_input;         // pool * input of the last layer
};

Matrix pool_product(const SparseMatrix& pool, const Matrix& x) { return pool * x; }
Matrix pool_product(const SparseMatrix& pool, const SparseMatrix& x) { return Matrix(SparseMatrix(pool * x)); }

template <class Prop, class Input>
Matrix pooled_branch_forward(const GcnStack& st, const Stacked& s, const Prop& prop, const Input& x,
                             PooledCache& c) {
    const std::size_t L = st.layers.size();
    c.pre.assign(L, Matrix());
    c.hidden.assign(L, Matrix());
    for (std::size_t l = 0; l + 1 < L; ++l) {
        const auto& layer = st.layers[l];
        Matrix pre = l == 0 ? Matrix(prop * layer.weight) : Matrix(s.adj * (c.hidden[l] * layer.weight));
        pre.rowwise() += RowVector(layer.bias);
        c.hidden[l + 1] = relu(pre);
        c.pre[l] = std::move(pre);
    }
    c.pooled_input = L == 1 ? pool_product(s.pool, x) : Matrix(s.pool * c.hidden[L - 1]);
    Matrix out = c.pooled_input * st.layers.back().weight;
    out.rowwise() += RowVector(st.layers.back().bias);
    return out;
}

// g_out must be zero on rows of empty graphs.
template <class Prop>
void pooled_branch_backward(const GcnStack& st, const Stacked& s, const Prop& prop, const PooledCache& c,
                            const Matrix& g_out, GcnStack& grads) {
    const std::size_t L = st.layers.size();
    grads.layers[L - 1].weight.noalias() += c.pooled_input.transpose() * g_out;
    grads.layers[L - 1].bias += g_out.colwise().sum();
    if (L == 1) return;
    Matrix g = s.pool.transpose() * Matrix(g_out * st.layers[L - 1].weight.transpose());
    for (std::size_t l = L - 1; l-- > 0;) {
        g = relu_backward(c.pre[l], g);
        grads.layers[l].bias += g.colwise().sum();
        if (l == 0) {
            grads.layers[0].weight += Matrix(prop.transpose() * g);
        } else {
            const Matrix ghw = s.adj.transpose() * g;
            grads.layers[l].weight.noalias() += c.hidden[l].transpose() * ghw;
            g = ghw * st.layers[l].weight.transpose();
        }
    }
}

// Everything the backward pass needs from one stacked forward pass.
struct BatchPass {
    PooledCache cache_x, cache_d;
    Matrix pooled;     // B x F, per-graph mean of the fused features
    Matrix reduced;    // B x r
    Matrix embedding;  // B x r
    std::vector<double> scores;
};

double head_logit(const DetectorParams& p, const RowVector& e) {
    return (e.cwiseMax(0.0) * p.w_head)(0, 0) + p.b_head(0, 0);
}

void forward_stacked(const DetectorParams& p, const Stacked& s, BatchPass& pass) {
    const auto B = static_cast<Eigen::Index>(s.size());
    pass.pooled.resize(B, static_cast<Eigen::Index>(p.config.fused_dim()));
    Eigen::Index col = 0;
    const auto width = static_cast<Eigen::Index>(p.config.branch_dim);
    if (p.config.use_gcn_x) {
        pass.pooled.middleCols(col, width) =
            s.use_sparse_features ? pooled_branch_forward(p.gcn_x, s, s.prop_sparse, s.sparse_features, pass.cache_x)
                                  : pooled_branch_forward(p.gcn_x, s, s.prop_features, s.features, pass.cache_x);
        col += width;
    }
    if (p.config.use_gcn_d)
        pass.pooled.middleCols(col, width) = pooled_branch_forward(p.gcn_d, s, s.prop_degrees, s.degrees, pass.cache_d);
    pass.reduced = linear_forward(p.reducer, pass.pooled);
    pass.embedding = p.config.use_adaptive_weight ? Matrix(pass.reduced * p.w_adaptive) : pass.reduced;
    pass.scores.resize(static_cast<std::size_t>(B));
    for (Eigen::Index b = 0; b < B; ++b) {
        if (s.rows(static_cast<std::size_t>(b)) == 0) {
            log_warning("graph " + std::to_string(b) + " of the batch has no nodes; zero embedding");
            pass.embedding.row(b).setZero();
        }
        pass.scores[static_cast<std::size_t>(b)] = sigmoid(head_logit(p, pass.embedding.row(b)));
    }
}

void backward_stacked(const DetectorParams& p, const Stacked& s, const BatchPass& pass, const Vector& grad_logit,
                      DetectorParams& grads) {
    grads.w_head.noalias() += pass.embedding.cwiseMax(0.0).transpose() * grad_logit;
    grads.b_head(0, 0) += grad_logit.sum();
    Matrix grad_e = relu_backward(pass.embedding, grad_logit * p.w_head.transpose());
    for (std::size_t b = 0; b < s.size(); ++b)
        if (s.rows(b) == 0) grad_e.row(static_cast<Eigen::Index>(b)).setZero();

    Matrix grad_reduced;
    if (p.config.use_adaptive_weight) {
        grads.w_adaptive.noalias() += pass.reduced.transpose() * grad_e;
        grad_reduced = grad_e * p.w_adaptive.transpose();
    } else {
        grad_reduced = std::move(grad_e);
    }
    GcnLayerGrads red{std::move(grads.reducer.weight), std::move(grads.reducer.bias)};
    Matrix grad_pooled;
    linear_backward(p.reducer, pass.pooled, grad_reduced, red, &grad_pooled);
    grads.reducer.weight = std::move(red.weight);
    grads.reducer.bias = std::move(red.bias);

    Eigen::Index col = 0;
    const auto width = static_cast<Eigen::Index>(p.config.branch_dim);
    if (p.config.use_gcn_x) {
        const Matrix g = grad_pooled.middleCols(col, width);
        if (s.use_sparse_features) pooled_branch_backward(p.gcn_x, s, s.prop_sparse, pass.cache_x, g, grads.gcn_x);
        else pooled_branch_backward(p.gcn_x, s, s.prop_features, pass.cache_x, g, grads.gcn_x);
        col += width;
    }
    if (p.config.use_gcn_d)
        pooled_branch_backward(p.gcn_d, s, s.prop_degrees, pass.cache_d, grad_pooled.middleCols(col, width),
                               grads.gcn_d);
}

LossBreakdown loss_on_chunks(const DetectorParams& params, const std::vector<Stacked>& chunks, double beta,
                             const LossSwitches& switches, DetectorParams* grads) {
    ScoreVector s;
    std::vector<int> labels;
    std::vector<Provenance> prov;
    std::vector<BatchPass> passes(chunks.size());
    const bool single = chunks.size() == 1;
    for (std::size_t c = 0; c < chunks.size(); ++c) {
        forward_stacked(params, chunks[c], passes[c]);
        if (grads && !single) {
            passes[c].cache_x = PooledCache{};
            passes[c].cache_d = PooledCache{};
        }
        s.scores.insert(s.scores.end(), passes[c].scores.begin(), passes[c].scores.end());
        labels.insert(labels.end(), chunks[c].labels.begin(), chunks[c].labels.end());
        prov.insert(prov.end(), chunks[c].provenance.begin(), chunks[c].provenance.end());
    }
    std::vector<double> grad_scores;
    const auto loss = composite_loss(s, labels, prov, beta, switches, grads ? &grad_scores : nullptr);
    if (!grads) return loss;

    std::size_t base = 0;
    for (std::size_t c = 0; c < chunks.size(); ++c) {
        if (!single) forward_stacked(params, chunks[c], passes[c]);
        const auto B = chunks[c].size();
        Vector grad_logit(static_cast<Eigen::Index>(B));
        for (std::size_t b = 0; b < B; ++b) {
            const double o = passes[c].scores[b];
            grad_logit(static_cast<Eigen::Index>(b)) = grad_scores[base + b] * o * (1.0 - o);
        }
        backward_stacked(params, chunks[c], passes[c], grad_logit, *grads);
        if (!single) passes[c] = BatchPass{};
        base += B;
    }
    return loss;
}

}  // namespace

DetectorParams DetectorParams::initialise(std::size_t feature_dim, const DetectorConfig& config, std::uint64_t seed) {
    if (!config.use_gcn_x && !config.use_gcn_d) throw ConfigError("detector needs at least one GCN branch");
    if (config.reduce_dim == 0 || config.hidden_dim == 0 || config.branch_dim == 0)
        throw ConfigError("detector dimensions must be positive");
    std::mt19937_64 rng(seed);
    DetectorParams p;
    p.config = config;
    if (config.use_gcn_x) p.gcn_x = make_stack(feature_dim, config.hidden_dim, config.branch_dim, rng);
    if (config.use_gcn_d) p.gcn_d = make_stack(1, config.hidden_dim, config.branch_dim, rng);
    p.reducer = LinearParams::glorot(config.fused_dim(), config.reduce_dim, rng);
    const auto r = static_cast<Eigen::Index>(config.reduce_dim);
    p.w_adaptive = glorot_matrix(r, r, rng);
    p.w_head = glorot_matrix(r, 1, rng);
    p.b_head = Matrix::Zero(1, 1);
    return p;
}

DetectorParams DetectorParams::zeros_like() const {
    DetectorParams z = *this;
    for (auto& [name, t] : z.tensors()) t->setZero();
    return z;
}

std::vector<std::pair<std::string, Matrix*>> DetectorParams::tensors() {
    std::vector<std::pair<std::string, Matrix*>> out;
    for (std::size_t l = 0; l < gcn_x.layers.size(); ++l) {
        out.emplace_back("gcn_x." + std::to_string(l) + ".weight", &gcn_x.layers[l].weight);
        out.emplace_back("gcn_x." + std::to_string(l) + ".bias", &gcn_x.layers[l].bias);
    }
    for (std::size_t l = 0; l < gcn_d.layers.size(); ++l) {
        out.emplace_back("gcn_d." + std::to_string(l) + ".weight", &gcn_d.layers[l].weight);
        out.emplace_back("gcn_d." + std::to_string(l) + ".bias", &gcn_d.layers[l].bias);
    }
    out.emplace_back("reducer.weight", &reducer.weight);
    out.emplace_back("reducer.bias", &reducer.bias);
    if (config.use_adaptive_weight) out.emplace_back("w_adaptive", &w_adaptive);
    out.emplace_back("w_head", &w_head);
    out.emplace_back("b_head", &b_head);
    return out;
}

std::vector<std::pair<std::string, const Matrix*>> DetectorParams::tensors() const {
    std::vector<std::pair<std::string, const Matrix*>> out;
    for (auto& [name, t] : const_cast<DetectorParams*>(this)->tensors()) out.emplace_back(name, t);
    return out;
}

bool DetectorParams::finite() const {
    for (const auto& [name, t] : tensors())
        if (!t->allFinite()) return false;
    return true;
}

PreparedGraph prepare_graph(const Graph& g) {
    PreparedGraph p;
    p.norm_adj = normalize_adjacency(g.adjacency);
    p.features = g.node_features;
    p.degrees.resize(static_cast<Eigen::Index>(g.num_nodes()), 1);
    for (std::size_t i = 0; i < g.num_nodes(); ++i) p.degrees(static_cast<Eigen::Index>(i), 0) = g.degrees[i];
    p.label = g.label;
    p.provenance = g.provenance;
    return p;
}

std::vector<PreparedGraph> prepare_batch(const PaddedBatch& batch) {
    std::vector<PreparedGraph> out;
    out.reserve(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto n = static_cast<Eigen::Index>(batch.real_nodes(b));
        PreparedGraph p;
        p.norm_adj = normalize_adjacency(batch.adjacency_stack[b].topLeftCorner(n, n));
        p.features = batch.feature_stack[b].topRows(n);
        p.degrees = batch.degree_stack[b].topRows(n);
        p.label = batch.labels[b];
        p.provenance = batch.provenance[b];
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<Matrix> fuse_features(const DetectorParams& params, const PaddedBatch& batch) {
    const auto prepared = prepare_batch(batch);
    std::vector<const PreparedGraph*> ptrs;
    for (const auto& g : prepared) ptrs.push_back(&g);
    const Stacked s = stack_graphs(ptrs);
    const Matrix z = fuse_stacked(params, s);
    std::vector<Matrix> out;
    out.reserve(prepared.size());
    const auto N = static_cast<Eigen::Index>(batch.n_max);
    for (std::size_t b = 0; b < prepared.size(); ++b) {
        Matrix padded = Matrix::Zero(N, z.cols());
        padded.topRows(s.rows(b)) = z.middleRows(s.offsets[b], s.rows(b));
        out.push_back(std::move(padded));
    }
    return out;
}

std::vector<Eigen::Index> l1_row_order(const Matrix& z) {
    const Vector d = z.cwiseAbs().rowwise().sum();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(z.rows()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return d(a) > d(b); });
    return order;
}

Matrix adaptive_weighting(const DetectorParams& params, const std::vector<Matrix>& z, const PaddedBatch& batch) {
    if (z.size() != batch.size()) throw SizeError("adaptive_weighting: batch size mismatch");
    std::vector<Eigen::Index> offsets{0};
    for (std::size_t b = 0; b < z.size(); ++b)
        offsets.push_back(offsets.back() + static_cast<Eigen::Index>(batch.real_nodes(b)));
    Matrix stacked(offsets.back(), static_cast<Eigen::Index>(params.config.fused_dim()));
    for (std::size_t b = 0; b < z.size(); ++b)
        stacked.middleRows(offsets[b], offsets[b + 1] - offsets[b]) = z[b].topRows(offsets[b + 1] - offsets[b]);
    return embed_stacked(params, stacked, offsets);
}

ScoreVector score(const DetectorParams& params, const Matrix& embedding) {
    ScoreVector s;
    s.scores.reserve(static_cast<std::size_t>(embedding.rows()));
    for (Eigen::Index b = 0; b < embedding.rows(); ++b) s.scores.push_back(sigmoid(head_logit(params, embedding.row(b))));
    return s;
}

std::vector<int> decide(const ScoreVector& scores, double threshold) {
    std::vector<int> out;
    out.reserve(scores.size());
    for (double o : scores.scores) out.push_back(o - threshold > 0.0 ? 1 : 0);
    return out;
}

ScoreVector predict(const DetectorParams& params, const std::vector<PreparedGraph>& graphs) {
    std::vector<const PreparedGraph*> ptrs;
    ptrs.reserve(graphs.size());
    for (const auto& g : graphs) ptrs.push_back(&g);
    ScoreVector s;
    s.scores.reserve(graphs.size());
    for (const auto& chunk : stack_in_chunks(ptrs)) {
        BatchPass pass;
        forward_stacked(params, chunk, pass);
        s.scores.insert(s.scores.end(), pass.scores.begin(), pass.scores.end());
    }
    return s;
}

ScoreVector predict(const DetectorParams& params, const PaddedBatch& batch) {
    return predict(params, prepare_batch(batch));
}

LossBreakdown composite_loss(const ScoreVector& scores, const std::vector<int>& labels,
                             const std::vector<Provenance>& provenance, double beta, const LossSwitches& switches,
                             std::vector<double>* grad_scores) {
    const auto B = scores.size();
    if (labels.size() != B || provenance.size() != B) throw SizeError("composite_loss: input lengths differ");
    LossBreakdown out;
    out.beta = beta;
    for (std::size_t i = 0; i < B; ++i) {
        if (labels[i] == 0) out.n_nor++;
        else if (provenance[i] == Provenance::Generated) out.n_gen++;
        else out.n_ori++;
    }
    const std::size_t n_abn = out.n_ori + out.n_gen;
    if (n_abn == 0) log(LogLevel::Debug, "composite_loss: no abnormal samples, loss reduces to L_nor");
    out.alpha = n_abn == 0 ? 0.0 : static_cast<double>(out.n_gen) / static_cast<double>(n_abn);

    if (grad_scores) grad_scores->assign(B, 0.0);
    const double w_nor = switches.use_normal_loss ? 1.0 : 0.0;
    const double w_ori = switches.use_abnormal_loss ? 1.0 - out.alpha : 0.0;
    const double w_gen = switches.use_abnormal_loss ? beta * out.alpha : 0.0;

    for (std::size_t i = 0; i < B; ++i) {
        const double o = scores.scores[i];
        if (labels[i] == 0) {
            const double arg = 1.0 - o;
            const double c = std::clamp(arg, kLogFloor, 1.0 - kLogFloor);
            out.l_nor -= std::log(c) / static_cast<double>(out.n_nor);
            if (grad_scores && c == arg) (*grad_scores)[i] = w_nor / (static_cast<double>(out.n_nor) * arg);
        } else {
            const bool gen = provenance[i] == Provenance::Generated;
            const double n_part = static_cast<double>(gen ? out.n_gen : out.n_ori);
            const double c = std::clamp(o, kLogFloor, 1.0 - kLogFloor);
            (gen ? out.l_gen : out.l_ori) -= std::log(c) / n_part;
            if (grad_scores && c == o) (*grad_scores)[i] = -(gen ? w_gen : w_ori) / (n_part * o);
        }
    }
    out.total = w_nor * out.l_nor + w_ori * out.l_ori + w_gen * out.l_gen;
    return out;
}

LossBreakdown detector_loss(const DetectorParams& params, const std::vector<const PreparedGraph*>& graphs,
                            double beta, const LossSwitches& switches, DetectorParams* grads) {
    return loss_on_chunks(params, stack_in_chunks(graphs), beta, switches, grads);
}

LossBreakdown detector_loss(const DetectorParams& params, const std::vector<PreparedGraph>& graphs, double beta,
                            const LossSwitches& switches, DetectorParams* grads) {
    std::vector<const PreparedGraph*> ptrs;
    ptrs.reserve(graphs.size());
    for (const auto& g : graphs) ptrs.push_back(&g);
    return detector_loss(params, ptrs, beta, switches, grads);
}

TrainedDetector train_detector(DetectorParams init, const std::vector<PreparedGraph>& train,
                               const DetectorTrainConfig& config) {
    if (config.lr <= 0.0) throw ConfigError("detector learning rate must be positive");
    TrainedDetector result{std::move(init), {}};
    auto& params = result.params;
    Adam adam(config.lr);
    std::mt19937_64 rng(config.seed);

    std::vector<Matrix*> ptrs;
    for (auto& [name, t] : params.tensors()) ptrs.push_back(t);

    const std::size_t bs = config.batch_size == 0 ? train.size() : std::min(config.batch_size, train.size());
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    // Full-batch training stacks the graphs once.
    std::vector<Stacked> full;
    if (bs == train.size() && !train.empty()) {
        std::vector<const PreparedGraph*> all;
        for (const auto& g : train) all.push_back(&g);
        full = stack_in_chunks(all);
    }

    for (std::size_t epoch = 0; epoch < config.epochs && !train.empty(); ++epoch) {
        if (bs < train.size()) {
            for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
        }
        double epoch_loss = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < train.size(); start += bs) {
            const auto end = std::min(train.size(), start + bs);
            DetectorParams grads = params.zeros_like();
            LossBreakdown loss;
            if (!full.empty()) {
                loss = loss_on_chunks(params, full, config.beta, config.switches, &grads);
            } else {
                std::vector<const PreparedGraph*> batch;
                batch.reserve(end - start);
                for (std::size_t i = start; i < end; ++i) batch.push_back(&train[order[i]]);
                loss = detector_loss(params, batch, config.beta, config.switches, &grads);
            }
            if (!std::isfinite(loss.total)) {
                std::ostringstream msg;
                msg << "detector training diverged at epoch " << epoch << ": L_final=" << loss.total
                    << " L_nor=" << loss.l_nor << " L_ori=" << loss.l_ori << " L_gen=" << loss.l_gen;
                throw TrainingError(msg.str());
            }
            std::vector<const Matrix*> gptrs;
            for (auto& [name, t] : grads.tensors()) gptrs.push_back(t);
            adam.step(ptrs, gptrs);
            if (!params.finite())
                throw TrainingError("detector parameters became non-finite at epoch " + std::to_string(epoch));
            epoch_loss += loss.total;
            ++steps;
        }
        result.loss_trace.push_back(epoch_loss / static_cast<double>(steps));
    }
    return result;
}

}  // namespace gladcf
