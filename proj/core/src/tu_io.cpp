#include "gladcf/tu_io.hpp"

#include "gladcf/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace gladcf {

namespace fs = std::filesystem;

std::size_t FeatureConfig::feature_dim(std::size_t n_max) const noexcept {
    switch (mode) {
        case FeatureMode::Identity: return n_max;
        case FeatureMode::DegreeBinning: return num_bins;
        case FeatureMode::Ldp: return 5;
    }
    return 0;
}

namespace {

std::ifstream open_required(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    return in;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

long long parse_int(std::string_view tok, const fs::path& file, std::size_t line) {
    tok = trim(tok);
    if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || tok.empty())
        throw FormatError(file.filename().string() + ": expected an integer, got '" + std::string(tok) + "'", line);
    return v;
}

/// One integer per non-blank line.
std::vector<long long> read_int_column(const fs::path& file) {
    auto in = open_required(file);
    std::vector<long long> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        out.push_back(parse_int(line, file, lineno));
    }
    return out;
}

}  // namespace

RawDataset load_tu_dataset(const fs::path& directory, int anomaly_label) {
    LoadOptions opt;
    opt.anomaly_label = anomaly_label;
    return load_tu_dataset(directory, opt);
}

RawDataset load_tu_dataset(const fs::path& directory, const LoadOptions& options) {
    if (!fs::is_directory(directory)) throw IoError("dataset directory not found: " + directory.string());
    fs::path dir = directory;
    if (!dir.has_filename()) dir = dir.parent_path();
    const std::string ds = dir.filename().string();
    const fs::path a_file = dir / (ds + "_A.txt");
    const fs::path ind_file = dir / (ds + "_graph_indicator.txt");
    const fs::path lab_file = dir / (ds + "_graph_labels.txt");
    for (const auto& f : {a_file, ind_file, lab_file})
        if (!fs::exists(f)) throw IoError("missing file " + f.string());

    const auto labels = read_int_column(lab_file);
    const auto num_graphs = labels.size();

    // Node -> graph (1-indexed on disk).
    auto ind_in = open_required(ind_file);
    std::vector<std::size_t> node_graph;
    std::vector<std::size_t> graph_size(num_graphs, 0);
    {
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(ind_in, line)) {
            ++lineno;
            if (trim(line).empty()) continue;
            const auto gid = parse_int(line, ind_file, lineno);
            if (gid < 1 || static_cast<std::size_t>(gid) > num_graphs)
                throw FormatError(ind_file.filename().string() + ": node " + std::to_string(node_graph.size() + 1) +
                                      " references nonexistent graph " + std::to_string(gid),
                                  lineno);
            node_graph.push_back(static_cast<std::size_t>(gid - 1));
            graph_size[static_cast<std::size_t>(gid - 1)]++;
        }
    }
    // Local index of every node inside its graph. TU files list nodes graph by graph,
    // but nothing here relies on that.
    std::vector<std::size_t> local(node_graph.size());
    {
        std::vector<std::size_t> next(num_graphs, 0);
        for (std::size_t v = 0; v < node_graph.size(); ++v) local[v] = next[node_graph[v]]++;
    }

    RawDataset out;
    out.name = ds;
    out.raw_labels.assign(labels.begin(), labels.end());
    out.graphs.resize(num_graphs);
    for (std::size_t g = 0; g < num_graphs; ++g) {
        const auto n = static_cast<Eigen::Index>(graph_size[g]);
        out.graphs[g].adjacency = Matrix::Zero(n, n);
        out.max_nodes = std::max(out.max_nodes, graph_size[g]);
    }

    auto a_in = open_required(a_file);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(a_in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw FormatError(a_file.filename().string() + ": expected 'u, v'", lineno);
        const auto u = parse_int(std::string_view(line).substr(0, comma), a_file, lineno);
        const auto v = parse_int(std::string_view(line).substr(comma + 1), a_file, lineno);
        const auto nn = static_cast<long long>(node_graph.size());
        if (u < 1 || v < 1 || u > nn || v > nn)
            throw FormatError(a_file.filename().string() + ": node id out of range", lineno);
        const auto uu = static_cast<std::size_t>(u - 1), vv = static_cast<std::size_t>(v - 1);
        if (node_graph[uu] != node_graph[vv])
            throw FormatError(a_file.filename().string() + ": edge joins nodes of different graphs", lineno);
        if (uu == vv) continue;
        auto& adj = out.graphs[node_graph[uu]].adjacency;
        const auto i = static_cast<Eigen::Index>(local[uu]), j = static_cast<Eigen::Index>(local[vv]);
        adj(i, j) = 1.0;
        adj(j, i) = 1.0;
    }

    std::size_t n_abn = 0;
    for (std::size_t g = 0; g < num_graphs; ++g) {
        const int label = labels[g] == options.anomaly_label ? 1 : 0;
        n_abn += static_cast<std::size_t>(label);
        out.graphs[g] = Graph::from_adjacency(std::move(out.graphs[g].adjacency), label, g);
    }
    out.minority_label = n_abn > num_graphs - n_abn ? 0 : 1;

    if (options.load_node_labels) {
        const fs::path nl_file = dir / (ds + "_node_labels.txt");
        const auto node_labels = read_int_column(nl_file);
        if (node_labels.size() != node_graph.size())
            throw FormatError(nl_file.filename().string() + ": expected one label per node");
        std::set<long long> distinct(node_labels.begin(), node_labels.end());
        std::map<long long, Eigen::Index> column;
        for (auto l : distinct) column.emplace(l, static_cast<Eigen::Index>(column.size()));
        const auto width = static_cast<Eigen::Index>(column.size());
        for (auto& g : out.graphs) g.node_features = Matrix::Zero(static_cast<Eigen::Index>(g.num_nodes()), width);
        for (std::size_t v = 0; v < node_graph.size(); ++v)
            out.graphs[node_graph[v]].node_features(static_cast<Eigen::Index>(local[v]), column[node_labels[v]]) = 1.0;
    }
    return out;
}

Matrix identity_features(const Graph& g, std::size_t n_max) {
    const auto n = static_cast<Eigen::Index>(g.num_nodes());
    Matrix x = Matrix::Zero(n, static_cast<Eigen::Index>(n_max));
    for (Eigen::Index i = 0; i < n; ++i) x(i, i) = 1.0;
    return x;
}

std::size_t degree_bin(int degree, std::size_t num_bins, int max_degree) noexcept {
    if (num_bins <= 1 || max_degree <= 0 || degree <= 0) return 0;
    if (degree >= max_degree) return num_bins - 1;
    const double width = static_cast<double>(max_degree) / static_cast<double>(num_bins);
    const auto b = static_cast<std::size_t>(std::floor(static_cast<double>(degree) / width));
    return std::min(b, num_bins - 1);
}

Matrix degree_bin_features(const Graph& g, std::size_t num_bins, int max_degree) {
    const auto n = static_cast<Eigen::Index>(g.num_nodes());
    Matrix x = Matrix::Zero(n, static_cast<Eigen::Index>(num_bins));
    for (Eigen::Index i = 0; i < n; ++i)
        x(i, static_cast<Eigen::Index>(degree_bin(g.degrees[static_cast<std::size_t>(i)], num_bins, max_degree))) = 1.0;
    return x;
}

Matrix ldp_features(const Graph& g) {
    const auto n = static_cast<Eigen::Index>(g.num_nodes());
    Matrix x = Matrix::Zero(n, 5);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double deg = g.degrees[static_cast<std::size_t>(i)];
        x(i, 0) = deg;
        if (deg == 0) continue;
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0, sum = 0.0, sq = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (g.adjacency(i, j) == 0.0) continue;
            const double dj = g.degrees[static_cast<std::size_t>(j)];
            lo = std::min(lo, dj);
            hi = std::max(hi, dj);
            sum += dj;
            sq += dj * dj;
        }
        const double mean = sum / deg;
        x(i, 1) = lo;
        x(i, 2) = hi;
        x(i, 3) = mean;
        x(i, 4) = std::sqrt(std::max(0.0, sq / deg - mean * mean));  // population std
    }
    return x;
}

GraphDataset build_features(const std::vector<Graph>& graphs, const FeatureConfig& config, std::size_t n_max,
                            std::string name) {
    if (config.mode == FeatureMode::DegreeBinning && config.num_bins == 0)
        throw ConfigError("degree binning needs num_bins >= 1");
    int max_degree = 0;
    for (std::size_t i = 0; i < graphs.size(); ++i) {
        if (graphs[i].num_nodes() > n_max)
            throw SizeError("graph " + std::to_string(i) + " has " + std::to_string(graphs[i].num_nodes()) +
                            " nodes, more than n_max = " + std::to_string(n_max));
        for (int d : graphs[i].degrees) max_degree = std::max(max_degree, d);
    }

    GraphDataset ds;
    ds.name = std::move(name);
    ds.n_max = n_max;
    ds.feature_mode = config.mode;
    ds.graphs = graphs;
    for (auto& g : ds.graphs) {
        switch (config.mode) {
            case FeatureMode::Identity: g.node_features = identity_features(g, n_max); break;
            case FeatureMode::DegreeBinning: g.node_features = degree_bin_features(g, config.num_bins, max_degree); break;
            case FeatureMode::Ldp: g.node_features = ldp_features(g); break;
        }
    }
    return ds;
}

void write_tu_graphs(const fs::path& directory, const std::string& prefix, const std::vector<Graph>& graphs) {
    fs::create_directories(directory);
    auto open = [&](const std::string& suffix) {
        const auto p = directory / (prefix + suffix);
        std::ofstream out(p);
        if (!out) throw IoError("cannot write " + p.string());
        return out;
    };
    auto a_out = open("_A.txt");
    auto ind_out = open("_graph_indicator.txt");
    auto lab_out = open("_graph_labels.txt");
    auto attr_out = open("_node_attributes.txt");
    attr_out.precision(17);

    std::size_t offset = 0;
    for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
        const Graph& g = graphs[gi];
        const auto n = static_cast<Eigen::Index>(g.num_nodes());
        for (Eigen::Index i = 0; i < n; ++i) {
            ind_out << gi + 1 << '\n';
            for (Eigen::Index j = 0; j < n; ++j)
                if (g.adjacency(i, j) != 0.0)
                    a_out << offset + static_cast<std::size_t>(i) + 1 << ", " << offset + static_cast<std::size_t>(j) + 1 << '\n';
            for (Eigen::Index c = 0; c < g.node_features.cols(); ++c)
                attr_out << (c ? ", " : "") << g.node_features(i, c);
            attr_out << '\n';
        }
        lab_out << g.label << '\n';
        offset += static_cast<std::size_t>(n);
    }
}

}  // namespace gladcf
