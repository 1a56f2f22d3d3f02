#include "gladcf/experiment.hpp"

#include "gladcf/errors.hpp"
#include "gladcf/log.hpp"
#include "gladcf/seed.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <future>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace gladcf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string upper(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "' expects a boolean, got '" + v + "'");
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
    }
}

unsigned long long parse_unsigned(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        if (!v.empty() && v.front() == '-') throw std::invalid_argument(v);
        const auto d = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' expects a non-negative integer, got '" + v + "'");
    }
}

// Shortest text that reads back to the same double.
std::string fmt_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace

// ---- ablations ------------------------------------------------------------

const std::vector<std::string>& variant_names() {
    static const std::vector<std::string> names{"full",     "no_asgm",     "no_awlm",    "no_gcn_d",
                                                "no_gcn_x", "no_loss_nor", "no_loss_abn"};
    return names;
}

Ablation parse_variant(std::string_view name) {
    Ablation a;
    if (name == "full") return a;
    if (name == "no_asgm") a.no_asgm = true;
    else if (name == "no_awlm") a.no_awlm = true;
    else if (name == "no_gcn_d") a.no_gcn_d = true;
    else if (name == "no_gcn_x") a.no_gcn_x = true;
    else if (name == "no_loss_nor") a.no_loss_nor = true;
    else if (name == "no_loss_abn") a.no_loss_abn = true;
    else throw ConfigError("unknown variant '" + std::string(name) + "'");
    return a;
}

std::string variant_name(const Ablation& a) {
    std::string out;
    auto add = [&](bool on, const char* n) {
        if (!on) return;
        if (!out.empty()) out += "+";
        out += n;
    };
    add(a.no_asgm, "no_asgm");
    add(a.no_awlm, "no_awlm");
    add(a.no_gcn_d, "no_gcn_d");
    add(a.no_gcn_x, "no_gcn_x");
    add(a.no_loss_nor, "no_loss_nor");
    add(a.no_loss_abn, "no_loss_abn");
    return out.empty() ? "full" : out;
}

// ---- configuration --------------------------------------------------------

double default_beta(std::string_view dataset) noexcept {
    const auto ds = upper(dataset);
    if (ds == "BZR") return 0.6;
    if (ds == "DHFR") return 1.4;
    return 1.2;
}

double default_lr(std::string_view dataset) noexcept {
    const auto ds = upper(dataset);
    return ds == "AIDS" || ds == "NCI1" ? 1e-4 : 1e-3;
}

double ExperimentConfig::resolved_beta() const { return beta.value_or(default_beta(dataset)); }
double ExperimentConfig::resolved_lr() const { return lr.value_or(default_lr(dataset)); }

void ExperimentConfig::validate() const {
    if (folds < 2) throw ConfigError("folds must be at least 2");
    if (!(sigma > 0.0 && sigma < 1.0)) throw ConfigError("sigma must lie strictly inside (0, 1)");
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie strictly inside (0, 1)");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie strictly inside (0, 1)");
    if (!(resolved_lr() > 0.0) || !(cf_lr > 0.0)) throw ConfigError("learning rates must be positive");
    if (!(resolved_beta() >= 0.0) || !std::isfinite(resolved_beta())) throw ConfigError("beta must be finite and >= 0");
    if (reduce_dim == 0) throw ConfigError("reduce-dim must be positive");
    if (feature_mode == FeatureMode::DegreeBinning && num_bins == 0) throw ConfigError("num-bins must be positive");
    if (ablation.no_gcn_d && ablation.no_gcn_x) throw ConfigError("cannot drop both GCN branches");
    if (parallel_folds == 0) throw ConfigError("parallel-folds must be at least 1");
}

std::string to_config_text(const ExperimentConfig& c, bool include_execution) {
    std::ostringstream os;
    os << "dataset = " << c.dataset << '\n'
       << "data-dir = " << c.data_dir << '\n'
       << "feature-mode = " << to_string(c.feature_mode) << '\n'
       << "num-bins = " << c.num_bins << '\n'
       << "anomaly-label = " << c.anomaly_label << '\n'
       << "folds = " << c.folds << '\n'
       << "seed = " << c.seed << '\n'
       << "beta = " << fmt_double(c.resolved_beta()) << '\n'
       << "lr = " << fmt_double(c.resolved_lr()) << '\n'
       << "cf-lr = " << fmt_double(c.cf_lr) << '\n'
       << "epochs = " << c.epochs << '\n'
       << "cf-epochs = " << c.cf_epochs << '\n'
       << "batch-size = " << c.batch_size << '\n'
       << "sigma = " << fmt_double(c.sigma) << '\n'
       << "tau = " << fmt_double(c.tau) << '\n'
       << "reduce-dim = " << c.reduce_dim << '\n'
       << "threshold = " << fmt_double(c.threshold) << '\n'
       << "variant = " << variant_name(c.ablation) << '\n';
    if (include_execution)
        os << "out-dir = " << c.out_dir << '\n' << "parallel-folds = " << c.parallel_folds << '\n';
    return os.str();
}

std::map<std::string, std::string> parse_config_text(std::string_view text) {
    std::map<std::string, std::string> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string{};
        return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("config: expected 'key = value'", lineno);
        auto key = trim(line.substr(0, eq));
        auto value = trim(line.substr(eq + 1));
        if (key.empty()) throw FormatError("config: empty key", lineno);
        std::replace(key.begin(), key.end(), '_', '-');
        out[key] = value;
    }
    return out;
}

void apply_config_entry(ExperimentConfig& c, const std::string& key, const std::string& value) {
    if (key == "dataset") c.dataset = value;
    else if (key == "data-dir") c.data_dir = value;
    else if (key == "feature-mode") c.feature_mode = parse_feature_mode(value);
    else if (key == "num-bins") c.num_bins = parse_unsigned(key, value);
    else if (key == "anomaly-label") c.anomaly_label = static_cast<int>(parse_double(key, value));
    else if (key == "folds") c.folds = parse_unsigned(key, value);
    else if (key == "seed") c.seed = parse_unsigned(key, value);
    else if (key == "beta") c.beta = parse_double(key, value);
    else if (key == "lr") c.lr = parse_double(key, value);
    else if (key == "cf-lr") c.cf_lr = parse_double(key, value);
    else if (key == "epochs") c.epochs = parse_unsigned(key, value);
    else if (key == "cf-epochs") c.cf_epochs = parse_unsigned(key, value);
    else if (key == "batch-size") c.batch_size = parse_unsigned(key, value);
    else if (key == "sigma") c.sigma = parse_double(key, value);
    else if (key == "tau") c.tau = parse_double(key, value);
    else if (key == "reduce-dim") c.reduce_dim = parse_unsigned(key, value);
    else if (key == "threshold") c.threshold = parse_double(key, value);
    else if (key == "variant") {
        Ablation a;
        std::size_t start = 0;
        while (start <= value.size()) {
            const auto plus = value.find('+', start);
            const auto part = value.substr(start, plus == std::string::npos ? std::string::npos : plus - start);
            const auto one = parse_variant(part);
            a.no_asgm |= one.no_asgm;
            a.no_awlm |= one.no_awlm;
            a.no_gcn_d |= one.no_gcn_d;
            a.no_gcn_x |= one.no_gcn_x;
            a.no_loss_nor |= one.no_loss_nor;
            a.no_loss_abn |= one.no_loss_abn;
            if (plus == std::string::npos) break;
            start = plus + 1;
        }
        c.ablation = a;
    } else if (key == "out-dir") c.out_dir = value;
    else if (key == "parallel-folds") c.parallel_folds = parse_unsigned(key, value);
    else if (key == "checkpoints") c.write_checkpoints = parse_bool(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
}

ExperimentConfig config_from_text(std::string_view text) {
    ExperimentConfig c;
    for (const auto& [k, v] : parse_config_text(text)) apply_config_entry(c, k, v);
    return c;
}

std::string config_hash(const ExperimentConfig& c) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(to_config_text(c));
    return os.str();
}

// ---- metrics --------------------------------------------------------------

double compute_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw SizeError("compute_auc: scores and labels differ in length");
    std::size_t n_pos = 0;
    for (int l : labels) n_pos += l == 1 ? 1 : 0;
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw MetricError("AUC is undefined unless both classes are present");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Sum of (1-based, tie-averaged) ranks of the positives; half-integers are exact in double.
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]] == 1) rank_sum += avg_rank;
        i = j + 1;
    }
    const double u = rank_sum - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// ---- protocol -------------------------------------------------------------

DatasetStats dataset_stats(const GraphDataset& ds) {
    DatasetStats s;
    s.name = ds.name;
    s.graphs = ds.size();
    s.n_max = ds.n_max;
    s.feature_dim = ds.feature_dim();
    double nodes = 0.0, edges = 0.0;
    for (const auto& g : ds.graphs) {
        nodes += static_cast<double>(g.num_nodes());
        edges += static_cast<double>(g.num_edges());
        (g.label == 1 ? s.abnormal : s.normal)++;
    }
    if (s.graphs) {
        s.avg_nodes = nodes / static_cast<double>(s.graphs);
        s.avg_edges = edges / static_cast<double>(s.graphs);
    }
    s.minority_label = s.abnormal > s.normal ? 0 : 1;
    return s;
}

GraphDataset load_dataset(const ExperimentConfig& config) {
    if (config.dataset.empty()) throw ConfigError("no dataset given");
    const auto dir = std::filesystem::path(config.data_dir) / config.dataset;
    if (!std::filesystem::is_directory(dir)) throw IoError("dataset not found: " + dir.string());
    const auto raw = load_tu_dataset(dir, config.anomaly_label);
    FeatureConfig fc{config.feature_mode, config.num_bins};
    return build_features(raw.graphs, fc, raw.max_nodes, raw.name);
}

std::vector<Fold> experiment_folds(const ExperimentConfig& config, const GraphDataset& dataset) {
    return stratified_kfold(dataset, config.folds, derive_seed(config.seed, "split"));
}

AugmentConfig augment_config(const ExperimentConfig& config, std::size_t fold_index) {
    return {config.cf_epochs, config.cf_lr, config.sigma, config.tau, derive_seed(config.seed, "augment", fold_index)};
}

FoldResult run_fold(const ExperimentConfig& config, const GraphDataset& dataset, const Fold& fold,
                    std::size_t fold_index, DetectorParams* trained, AugmentationResult* augmentation) {
    FoldResult res;
    res.fold = fold_index;

    std::vector<Graph> generated;
    auto t0 = Clock::now();
    if (!config.ablation.no_asgm) {
        auto aug = augment_split(dataset, fold.train_indices, augment_config(config, fold_index));
        generated = std::move(aug.generated);
        res.generated_label = aug.generated_label;
        res.augment_loss_trace = aug.trained.loss_trace;
        if (augmentation) {
            *augmentation = std::move(aug);
            augmentation->generated = generated;
        }
    }
    res.augment_seconds = seconds_since(t0);
    res.generated = generated.size();

    std::vector<PreparedGraph> train;
    train.reserve(fold.train_indices.size() + generated.size());
    std::size_t n_lab[2] = {0, 0};
    for (auto i : fold.train_indices) {
        train.push_back(prepare_graph(dataset.graphs[i]));
        n_lab[dataset.graphs[i].label]++;
    }
    for (const auto& g : generated) {
        train.push_back(prepare_graph(g));
        n_lab[g.label]++;
    }
    if (!config.ablation.no_asgm && n_lab[0] != n_lab[1])
        throw Error("augmentation left the training split unbalanced (" + std::to_string(n_lab[0]) + " normal vs " +
                    std::to_string(n_lab[1]) + " abnormal)");
    res.train_size = train.size();

    DetectorConfig dc;
    dc.reduce_dim = config.reduce_dim;
    dc.use_gcn_x = !config.ablation.no_gcn_x;
    dc.use_gcn_d = !config.ablation.no_gcn_d;
    dc.use_adaptive_weight = !config.ablation.no_awlm;
    DetectorTrainConfig tc;
    tc.epochs = config.epochs;
    tc.lr = config.resolved_lr();
    tc.beta = config.resolved_beta();
    tc.batch_size = config.batch_size;
    tc.switches.use_normal_loss = !config.ablation.no_loss_nor;
    tc.switches.use_abnormal_loss = !config.ablation.no_loss_abn;
    tc.seed = derive_seed(config.seed, "minibatch", fold_index);

    t0 = Clock::now();
    auto init = DetectorParams::initialise(dataset.feature_dim(), dc, derive_seed(config.seed, "detector", fold_index));
    auto model = train_detector(std::move(init), train, tc);
    res.train_seconds = seconds_since(t0);
    res.detector_loss_trace = model.loss_trace;

    std::vector<PreparedGraph> test;
    test.reserve(fold.test_indices.size());
    for (auto i : fold.test_indices) {
        const Graph& g = dataset.graphs[i];
        if (g.is_generated()) throw Error("generated graph found in test fold " + std::to_string(fold_index));
        test.push_back(prepare_graph(g));
    }
    const auto scores = predict(model.params, test);
    const auto decisions = decide(scores, config.threshold);
    std::vector<int> labels;
    for (std::size_t k = 0; k < test.size(); ++k) {
        const Graph& g = dataset.graphs[fold.test_indices[k]];
        res.scores.push_back({g.source_id, g.label, g.provenance, scores.scores[k], decisions[k]});
        labels.push_back(g.label);
    }
    res.test_size = test.size();
    res.auc = compute_auc(scores.scores, labels);
    if (trained) *trained = std::move(model.params);
    return res;
}

EvalReport run_cv(const ExperimentConfig& config, const GraphDataset& dataset) {
    config.validate();
    const auto t0 = Clock::now();
    EvalReport report;
    report.config = config;
    report.config_hash = config_hash(config);
    report.dataset = dataset_stats(dataset);

    const auto folds = experiment_folds(config, dataset);
    report.folds.resize(folds.size());
    const auto run_dir = run_directory(config);

    auto one = [&](std::size_t f) {
        try {
            DetectorParams params;
            AugmentationResult aug;
            report.folds[f] = run_fold(config, dataset, folds[f], f, &params, &aug);
            if (config.write_checkpoints) {
                const auto dir = run_dir / ("fold" + std::to_string(f));
                std::filesystem::create_directories(dir);
                write_text_file(dir / "checkpoint.json",
                                checkpoint_to_json(params, config.ablation.no_asgm ? nullptr : &aug.trained.pair,
                                                   report.config_hash));
            }
            log_info(dataset.name + " fold " + std::to_string(f) + ": AUC " + fmt_double(report.folds[f].auc));
        } catch (const std::exception& e) {
            throw Error("fold " + std::to_string(f) + " failed: " + e.what());
        }
    };

    const std::size_t workers = std::min(config.parallel_folds, folds.size());
    if (workers <= 1) {
        for (std::size_t f = 0; f < folds.size(); ++f) one(f);
    } else {
        for (std::size_t start = 0; start < folds.size(); start += workers) {
            std::vector<std::future<void>> jobs;
            for (std::size_t f = start; f < std::min(folds.size(), start + workers); ++f)
                jobs.push_back(std::async(std::launch::async, one, f));
            for (auto& j : jobs) j.get();
        }
    }

    double sum = 0.0;
    for (const auto& f : report.folds) sum += f.auc;
    report.mean_auc = sum / static_cast<double>(report.folds.size());
    double var = 0.0;
    for (const auto& f : report.folds) var += (f.auc - report.mean_auc) * (f.auc - report.mean_auc);
    report.std_auc = std::sqrt(var / static_cast<double>(report.folds.size()));
    report.total_seconds = seconds_since(t0);
    return report;
}

EvalReport run_cv(const ExperimentConfig& config) {
    config.validate();
    return run_cv(config, load_dataset(config));
}

std::vector<double> default_beta_grid() {
    std::vector<double> b;
    for (int i = 1; i <= 11; ++i) b.push_back(0.2 * i);
    return b;
}

std::vector<EvalReport> sweep_beta(const ExperimentConfig& config, const GraphDataset& dataset,
                                   const std::vector<double>& betas) {
    if (betas.empty()) throw ConfigError("beta sweep needs at least one value");
    std::vector<EvalReport> out;
    out.reserve(betas.size());
    for (double b : betas) {
        auto c = config;
        c.beta = b;
        out.push_back(run_cv(c, dataset));
    }
    return out;
}

ScoreHistogram score_histogram(const std::vector<double>& scores, const std::vector<int>& labels, std::size_t bins) {
    if (bins == 0) throw ConfigError("histogram needs at least one bin");
    if (scores.size() != labels.size()) throw SizeError("score_histogram: scores and labels differ in length");
    ScoreHistogram h;
    h.bins = bins;
    h.normal.assign(bins, 0);
    h.abnormal.assign(bins, 0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double s = std::clamp(scores[i], 0.0, 1.0);
        const auto b = std::min(bins - 1, static_cast<std::size_t>(s * static_cast<double>(bins)));
        (labels[i] == 1 ? h.abnormal : h.normal)[b]++;
    }
    return h;
}

ScoreHistogram export_score_histogram(const EvalReport& report, std::size_t bins) {
    std::vector<double> s;
    std::vector<int> l;
    for (const auto& f : report.folds)
        for (const auto& g : f.scores) {
            s.push_back(g.score);
            l.push_back(g.label);
        }
    return score_histogram(s, l, bins);
}

std::filesystem::path run_directory(const ExperimentConfig& config) {
    return std::filesystem::path(config.out_dir) / (config.dataset.empty() ? "unnamed" : config.dataset) /
           config_hash(config);
}

}  // namespace gladcf
