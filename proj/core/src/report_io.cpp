#include "gladcf/errors.hpp"
#include "gladcf/experiment.hpp"

#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <sstream>

namespace gladcf {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
    json data = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto& data = j.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw FormatError("checkpoint tensor size mismatch");
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = data[static_cast<std::size_t>(i * cols + k)].get<double>();
    return m;
}

Provenance parse_provenance(const std::string& s) {
    if (s == "original_normal") return Provenance::OriginalNormal;
    if (s == "original_abnormal") return Provenance::OriginalAbnormal;
    if (s == "generated") return Provenance::Generated;
    throw FormatError("unknown provenance '" + s + "'");
}

json config_json(const ExperimentConfig& c) {
    json j = json::object();
    for (const auto& [k, v] : parse_config_text(to_config_text(c))) j[k] = v;
    return j;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace

std::string report_to_json(const EvalReport& r, bool include_scores) {
    json folds = json::array();
    for (const auto& f : r.folds) {
        json jf = {{"fold", f.fold},
                   {"auc", f.auc},
                   {"train_size", f.train_size},
                   {"generated", f.generated},
                   {"generated_label", f.generated_label},
                   {"test_size", f.test_size},
                   {"augment_loss_trace", f.augment_loss_trace},
                   {"detector_loss_trace", f.detector_loss_trace},
                   {"augment_seconds", f.augment_seconds},
                   {"train_seconds", f.train_seconds}};
        if (include_scores) {
            json scores = json::array();
            for (const auto& s : f.scores)
                scores.push_back({{"graph_id", s.graph_id},
                                  {"label", s.label},
                                  {"provenance", std::string(to_string(s.provenance))},
                                  {"score", s.score},
                                  {"decision", s.decision}});
            jf["scores"] = std::move(scores);
        }
        folds.push_back(std::move(jf));
    }
    json j = {{"schema", "gladcf.report"},
              {"version", kReportSchemaVersion},
              {"config_hash", r.config_hash},
              {"config", config_json(r.config)},
              {"dataset",
               {{"name", r.dataset.name},
                {"graphs", r.dataset.graphs},
                {"avg_nodes", r.dataset.avg_nodes},
                {"avg_edges", r.dataset.avg_edges},
                {"normal", r.dataset.normal},
                {"abnormal", r.dataset.abnormal},
                {"n_max", r.dataset.n_max},
                {"feature_dim", r.dataset.feature_dim},
                {"minority_label", r.dataset.minority_label}}},
              {"folds", std::move(folds)},
              {"mean_auc", r.mean_auc},
              {"std_auc", r.std_auc},
              {"total_seconds", r.total_seconds}};
    return j.dump(2) + "\n";
}

EvalReport report_from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("report is not valid JSON: ") + e.what());
    }
    try {
        if (j.at("schema") != "gladcf.report") throw FormatError("not a gladcf report");
        if (j.at("version").get<int>() != kReportSchemaVersion)
            throw FormatError("unsupported report version " + j.at("version").dump());
        EvalReport r;
        ExperimentConfig c;
        for (const auto& [k, v] : j.at("config").items()) apply_config_entry(c, k, v.get<std::string>());
        r.config = c;
        r.config_hash = j.at("config_hash").get<std::string>();
        const auto& d = j.at("dataset");
        r.dataset.name = d.at("name").get<std::string>();
        r.dataset.graphs = d.at("graphs").get<std::size_t>();
        r.dataset.avg_nodes = d.at("avg_nodes").get<double>();
        r.dataset.avg_edges = d.at("avg_edges").get<double>();
        r.dataset.normal = d.at("normal").get<std::size_t>();
        r.dataset.abnormal = d.at("abnormal").get<std::size_t>();
        r.dataset.n_max = d.at("n_max").get<std::size_t>();
        r.dataset.feature_dim = d.at("feature_dim").get<std::size_t>();
        r.dataset.minority_label = d.at("minority_label").get<int>();
        for (const auto& jf : j.at("folds")) {
            FoldResult f;
            f.fold = jf.at("fold").get<std::size_t>();
            f.auc = jf.at("auc").get<double>();
            f.train_size = jf.at("train_size").get<std::size_t>();
            f.generated = jf.at("generated").get<std::size_t>();
            f.generated_label = jf.at("generated_label").get<int>();
            f.test_size = jf.at("test_size").get<std::size_t>();
            f.augment_loss_trace = jf.at("augment_loss_trace").get<std::vector<double>>();
            f.detector_loss_trace = jf.at("detector_loss_trace").get<std::vector<double>>();
            f.augment_seconds = jf.value("augment_seconds", 0.0);
            f.train_seconds = jf.value("train_seconds", 0.0);
            if (jf.contains("scores"))
                for (const auto& s : jf.at("scores"))
                    f.scores.push_back({s.at("graph_id").get<std::size_t>(), s.at("label").get<int>(),
                                        parse_provenance(s.at("provenance").get<std::string>()),
                                        s.at("score").get<double>(), s.at("decision").get<int>()});
            r.folds.push_back(std::move(f));
        }
        r.mean_auc = j.at("mean_auc").get<double>();
        r.std_auc = j.at("std_auc").get<double>();
        r.total_seconds = j.value("total_seconds", 0.0);
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed report: ") + e.what());
    }
}

std::string scores_to_csv(const std::vector<GraphScore>& scores, std::optional<std::size_t> fold) {
    std::ostringstream os;
    os << (fold ? "fold," : "") << "graph_id,label,provenance,score,decision\n";
    for (const auto& s : scores) {
        if (fold) os << *fold << ',';
        os << s.graph_id << ',' << s.label << ',' << to_string(s.provenance) << ',' << fmt(s.score) << ','
           << s.decision << '\n';
    }
    return os.str();
}

std::vector<GraphScore> scores_from_csv(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(in, line)) throw FormatError("scores CSV is empty");
    const bool with_fold = line.rfind("fold,", 0) == 0;
    const std::string expected = std::string(with_fold ? "fold," : "") + "graph_id,label,provenance,score,decision";
    if (line != expected) throw FormatError("unexpected scores CSV header '" + line + "'", 1);
    std::vector<GraphScore> out;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        const std::size_t off = with_fold ? 1 : 0;
        if (cells.size() != 5 + off) throw FormatError("scores CSV row has wrong column count", lineno);
        try {
            out.push_back({std::stoull(cells[off]), std::stoi(cells[off + 1]), parse_provenance(cells[off + 2]),
                           std::stod(cells[off + 3]), std::stoi(cells[off + 4])});
        } catch (const std::logic_error&) {
            throw FormatError("scores CSV row has an unparsable value", lineno);
        }
    }
    return out;
}

std::string histogram_to_csv(const ScoreHistogram& h) {
    std::ostringstream os;
    os << "bin,lower,upper,normal,abnormal\n";
    for (std::size_t b = 0; b < h.bins; ++b)
        os << b << ',' << fmt(h.lower(b)) << ',' << fmt(h.upper(b)) << ',' << h.normal[b] << ',' << h.abnormal[b]
           << '\n';
    return os.str();
}

std::string sweep_to_csv(const std::vector<EvalReport>& reports) {
    std::ostringstream os;
    os << "beta,mean_auc,std_auc,config_hash\n";
    for (const auto& r : reports)
        os << fmt(r.config.resolved_beta()) << ',' << fmt(r.mean_auc) << ',' << fmt(r.std_auc) << ','
           << r.config_hash << '\n';
    return os.str();
}

std::string checkpoint_to_json(const DetectorParams& params, const PerturbationPair* pair, const std::string& hash) {
    json tensors = json::object();
    for (const auto& [name, t] : params.tensors()) tensors[name] = matrix_to_json(*t);
    const auto& c = params.config;
    json j = {{"format", "gladcf.checkpoint"},
              {"version", kCheckpointVersion},
              {"config_hash", hash},
              {"detector",
               {{"hidden_dim", c.hidden_dim},
                {"branch_dim", c.branch_dim},
                {"reduce_dim", c.reduce_dim},
                {"use_gcn_x", c.use_gcn_x},
                {"use_gcn_d", c.use_gcn_d},
                {"use_adaptive_weight", c.use_adaptive_weight},
                {"feature_dim", c.use_gcn_x ? params.gcn_x.layers.front().weight.rows() : 0}}},
              {"tensors", std::move(tensors)}};
    if (pair)
        j["perturbation"] = {{"sigma", pair->sigma},
                             {"tau", pair->tau},
                             {"m_a", matrix_to_json(pair->m_a)},
                             {"m_b", matrix_to_json(pair->m_b)}};
    return j.dump() + "\n";
}

DetectorParams checkpoint_from_json(std::string_view text) {
    try {
        const auto j = json::parse(text);
        if (j.at("format") != "gladcf.checkpoint") throw FormatError("not a gladcf checkpoint");
        if (j.at("version").get<int>() != kCheckpointVersion) throw FormatError("unsupported checkpoint version");
        const auto& d = j.at("detector");
        DetectorConfig c;
        c.hidden_dim = d.at("hidden_dim").get<std::size_t>();
        c.branch_dim = d.at("branch_dim").get<std::size_t>();
        c.reduce_dim = d.at("reduce_dim").get<std::size_t>();
        c.use_gcn_x = d.at("use_gcn_x").get<bool>();
        c.use_gcn_d = d.at("use_gcn_d").get<bool>();
        c.use_adaptive_weight = d.at("use_adaptive_weight").get<bool>();
        auto params = DetectorParams::initialise(std::max<std::size_t>(d.at("feature_dim").get<std::size_t>(), 1), c, 0);
        for (auto& [name, t] : params.tensors()) {
            Matrix m = matrix_from_json(j.at("tensors").at(name));
            if (m.rows() != t->rows() || m.cols() != t->cols())
                throw FormatError("checkpoint tensor '" + name + "' has the wrong shape");
            *t = std::move(m);
        }
        return params;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed checkpoint: ") + e.what());
    }
}

std::string read_text_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text_file(const std::filesystem::path& p, std::string_view text) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write " + p.string());
    out << text;
}

std::filesystem::path write_run(const EvalReport& report) {
    const auto dir = run_directory(report.config);
    std::filesystem::create_directories(dir);
    write_text_file(dir / "report.json", report_to_json(report));
    write_text_file(dir / "config.txt", to_config_text(report.config));
    std::string all = "fold,graph_id,label,provenance,score,decision\n";
    for (const auto& f : report.folds) {
        write_text_file(dir / ("fold" + std::to_string(f.fold)) / "scores.csv", scores_to_csv(f.scores));
        const auto part = scores_to_csv(f.scores, f.fold);
        all += part.substr(part.find('\n') + 1);
    }
    write_text_file(dir / "scores.csv", all);
    return dir;
}

}  // namespace gladcf
