#pragma once

#include "gladcf/graph.hpp"
#include "gladcf/seed.hpp"
#include "gladcf/tu_io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

namespace gladcf::testing {

inline Graph graph_from_edges(std::size_t n, const std::vector<std::pair<int, int>>& edges, int label = 0) {
    Matrix a = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (auto [u, v] : edges) {
        a(u, v) = 1.0;
        a(v, u) = 1.0;
    }
    return Graph::from_adjacency(std::move(a), label);
}

inline Graph triangle(int label = 0) { return graph_from_edges(3, {{0, 1}, {1, 2}, {0, 2}}, label); }

inline Graph ring(std::size_t n, int label = 0) {
    std::vector<std::pair<int, int>> e;
    for (std::size_t i = 0; i < n; ++i) e.emplace_back(static_cast<int>(i), static_cast<int>((i + 1) % n));
    return graph_from_edges(n, e, label);
}

/// Connected random graph: a random spanning tree plus extra edges with probability p.
inline Graph random_graph(std::size_t n, double p, std::mt19937_64& rng, int label = 0) {
    std::vector<std::pair<int, int>> e;
    for (std::size_t v = 1; v < n; ++v) e.emplace_back(static_cast<int>(rng() % v), static_cast<int>(v));
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = u + 1; v < n; ++v)
            if (uniform01(rng) < p) e.emplace_back(static_cast<int>(u), static_cast<int>(v));
    return graph_from_edges(n, e, label);
}

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
    Matrix m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = uniform(rng, -scale, scale);
    return m;
}

/// Central finite-difference gradient of f with respect to every entry of x.
inline Matrix finite_difference(Matrix& x, const std::function<double()>& f, double step = 1e-5) {
    Matrix g(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            const double keep = x(i, j);
            x(i, j) = keep + step;
            const double up = f();
            x(i, j) = keep - step;
            const double down = f();
            x(i, j) = keep;
            g(i, j) = (up - down) / (2.0 * step);
        }
    return g;
}

/// Largest elementwise |a - b| / max(|a|, |b|, floor).
inline double max_relative_error(const Matrix& a, const Matrix& b, double floor = 1e-6) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            const double den = std::max({std::abs(a(i, j)), std::abs(b(i, j)), floor});
            worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / den);
        }
    return worst;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("gladcf_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

/// Writes a TU directory <root>/<name>. Normal graphs are sparse trees with a
/// few extra edges; abnormal graphs additionally carry a dense planted clique.
/// Raw labels are 0 (normal) and 1 (abnormal) unless abnormal_raw says otherwise.
inline std::filesystem::path write_planted_dataset(const std::filesystem::path& root, const std::string& name,
                                                   std::size_t n_normal, std::size_t n_abnormal, std::uint64_t seed,
                                                   std::size_t min_nodes = 8, std::size_t max_nodes = 14,
                                                   int normal_raw = 0, int abnormal_raw = 1) {
    std::mt19937_64 rng(seed);
    std::vector<Graph> graphs;
    std::vector<int> raw;
    std::vector<int> order;
    for (std::size_t i = 0; i < n_normal; ++i) order.push_back(0);
    for (std::size_t i = 0; i < n_abnormal; ++i) order.push_back(1);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    for (int cls : order) {
        const std::size_t n = min_nodes + rng() % (max_nodes - min_nodes + 1);
        Graph g = random_graph(n, 0.05, rng, cls);
        if (cls == 1) {
            const std::size_t k = 5;
            for (std::size_t u = 0; u < k; ++u)
                for (std::size_t v = u + 1; v < k; ++v) {
                    g.adjacency(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) = 1.0;
                    g.adjacency(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(u)) = 1.0;
                }
            g = Graph::from_adjacency(g.adjacency, 1);
        }
        g.node_features = Matrix(static_cast<Eigen::Index>(g.num_nodes()), 0);
        graphs.push_back(std::move(g));
        raw.push_back(cls == 1 ? abnormal_raw : normal_raw);
    }
    const auto dir = root / name;
    write_tu_graphs(dir, name, graphs);
    std::ofstream labels(dir / (name + "_graph_labels.txt"));
    for (int r : raw) labels << r << '\n';
    std::filesystem::remove(dir / (name + "_node_attributes.txt"));
    return dir;
}

}  // namespace gladcf::testing
