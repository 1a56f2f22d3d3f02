#include "cli.hpp"

#include "gladcf/errors.hpp"
#include "gladcf/experiment.hpp"
#include "gladcf/log.hpp"
#include "gladcf/seed.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace gladcf::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// Raised for anything the user got wrong on the command line; maps to exit 1.
struct UsageError : Error {
    using Error::Error;
};

struct Flag {
    const char* name;
    const char* type;
    const char* default_text;
    const char* help;
};

const std::vector<Flag> kDataFlags = {
    {"dataset", "NAME", "", "TU dataset name; the directory <data-dir>/<dataset> holds <dataset>_A.txt etc."},
    {"data-dir", "DIR", "$GLADCF_DATA_DIR or .", "directory containing dataset directories"},
    {"feature-mode", "MODE", "identity", "node features: identity, db (degree binning) or ldp"},
    {"num-bins", "INT", "10", "number of degree bins for --feature-mode db"},
    {"anomaly-label", "INT", "1", "raw graph label that marks a graph abnormal"},
};

const std::vector<Flag> kRunFlags = {
    {"folds", "INT", "5", "number of cross-validation folds"},
    {"seed", "INT", "0", "master seed; fold, augmenter and detector seeds derive from it"},
    {"beta", "FLOAT", "1.2 (0.6 for BZR, 1.4 for DHFR)", "weight of the generated-abnormal loss term"},
    {"lr", "FLOAT", "1e-3 (1e-4 for AIDS and NCI1)", "detector learning rate"},
    {"cf-lr", "FLOAT", "0.01", "learning rate of the perturbation matrices"},
    {"epochs", "INT", "100", "detector training epochs"},
    {"cf-epochs", "INT", "100", "perturbation training epochs"},
    {"batch-size", "INT", "0", "detector minibatch size (0 = whole training split per step)"},
    {"sigma", "FLOAT", "0.5", "structure threshold, inclusive"},
    {"tau", "FLOAT", "0.5", "feature-mask threshold, inclusive"},
    {"reduce-dim", "INT", "64", "width of the reduced node representation"},
    {"threshold", "FLOAT", "0.5", "decision threshold on the anomaly score"},
    {"variant", "NAME", "full", "ablation: full, no_asgm, no_awlm, no_gcn_d, no_gcn_x, no_loss_nor, no_loss_abn"},
    {"out-dir", "DIR", "runs", "root of run directories (<out-dir>/<dataset>/<config-hash>)"},
    {"parallel-folds", "INT", "1", "number of folds trained concurrently"},
};

// Values of the experiment flags as given on the command line.
class FlagSet {
public:
    void add(CLI::App& app, const std::vector<Flag>& flags) {
        for (const auto& f : flags) {
            auto* opt = app.add_option("--" + std::string(f.name), values_[f.name], f.help);
            opt->type_name(f.type);
            if (*f.default_text) opt->default_str(f.default_text);
            options_.emplace_back(f.name, opt);
        }
    }

    void add_config_file(CLI::App& app) {
        config_opt_ = app.add_option("--config", config_path_, "key = value file; flags on the command line win");
    }

    void add_checkpoint_flag(CLI::App& app) {
        checkpoint_opt_ = app.add_flag("--checkpoints", "write fold<i>/checkpoint.json with the trained weights");
    }

    /// Defaults, then $GLADCF_DATA_DIR, then the config file, then flags. The
    /// flag named by skip is left for the caller to interpret.
    ExperimentConfig resolve(const std::string& skip = {}) const {
        ExperimentConfig c;
        if (const char* env = std::getenv("GLADCF_DATA_DIR"); env && *env) c.data_dir = env;
        try {
            if (config_opt_ && config_opt_->count() > 0) {
                for (const auto& [key, value] : parse_config_text(read_text_file(config_path_)))
                    apply_config_entry(c, key, value);
            }
            for (const auto& [name, opt] : options_)
                if (opt->count() > 0 && name != skip) apply_config_entry(c, name, values_.at(name));
            if (checkpoint_opt_ && checkpoint_opt_->count() > 0) c.write_checkpoints = true;
            c.validate();
        } catch (const ConfigError& e) {
            throw UsageError(e.what());
        } catch (const FormatError& e) {
            throw UsageError(std::string("config file: ") + e.what());
        } catch (const IoError& e) {
            throw UsageError(e.what());
        }
        return c;
    }

    bool given(const std::string& name) const {
        for (const auto& [n, opt] : options_)
            if (n == name) return opt->count() > 0;
        return false;
    }
    const std::string& value(const std::string& name) const { return values_.at(name); }

private:
    std::map<std::string, std::string> values_;
    std::vector<std::pair<std::string, CLI::Option*>> options_;
    std::string config_path_;
    CLI::Option* config_opt_ = nullptr;
    CLI::Option* checkpoint_opt_ = nullptr;
};

std::string fixed(double v, int digits = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void log_config(const ExperimentConfig& c, std::ostream& err) {
    err << "resolved config (hash " << config_hash(c) << "):\n" << to_config_text(c, true);
}

void require_dataset(const ExperimentConfig& c) {
    if (c.dataset.empty()) throw UsageError("--dataset is required");
}

fs::path locate_run(const FlagSet& flags, const std::string& run_dir, std::ostream& err) {
    if (!run_dir.empty()) return run_dir;
    const auto c = flags.resolve();
    require_dataset(c);
    log_config(c, err);
    return run_directory(c);
}

// ---- subcommands -----------------------------------------------------------

int cmd_ingest(const FlagSet& flags, std::ostream& out, std::ostream& err) {
    const auto c = flags.resolve();
    require_dataset(c);
    log_config(c, err);
    const auto ds = load_dataset(c);
    const auto st = dataset_stats(ds);
    out << std::left << std::setw(12) << "dataset" << std::setw(8) << "graphs" << std::setw(11) << "avg_nodes"
        << std::setw(11) << "avg_edges" << std::setw(8) << "normal" << std::setw(10) << "abnormal" << std::setw(7)
        << "n_max" << std::setw(13) << "feature_dim"
        << "minority\n";
    out << std::left << std::setw(12) << st.name << std::setw(8) << st.graphs << std::setw(11) << fixed(st.avg_nodes, 2)
        << std::setw(11) << fixed(st.avg_edges, 2) << std::setw(8) << st.normal << std::setw(10) << st.abnormal
        << std::setw(7) << st.n_max << std::setw(13) << st.feature_dim << (st.minority_label == 1 ? "abnormal" : "normal")
        << '\n';
    return 0;
}

int cmd_augment(const FlagSet& flags, std::size_t fold_index, std::ostream& out, std::ostream& err) {
    const auto c = flags.resolve();
    require_dataset(c);
    log_config(c, err);
    if (fold_index >= c.folds) throw UsageError("--fold must be below --folds");
    const auto ds = load_dataset(c);
    const auto folds = experiment_folds(c, ds);
    const auto ac = augment_config(c, fold_index);
    const auto aug = augment_split(ds, folds[fold_index].train_indices, ac);

    const auto dir = run_directory(c) / ("fold" + std::to_string(fold_index)) / "generated";
    const std::string prefix = ds.name + "_generated";
    write_tu_graphs(dir, prefix, aug.generated);

    ordered_json m;
    m["format"] = "gladcf.generated";
    m["dataset"] = ds.name;
    m["fold"] = fold_index;
    m["config_hash"] = config_hash(c);
    m["seed"] = ac.seed;
    m["sigma"] = ac.sigma;
    m["tau"] = ac.tau;
    m["epochs"] = ac.epochs;
    m["lr"] = ac.lr;
    m["generated"] = aug.generated.size();
    m["generated_label"] = aug.generated_label;
    std::vector<std::size_t> sources;
    for (auto i : aug.seed_indices) sources.push_back(ds.graphs[i].source_id);
    m["seed_graph_ids"] = sources;
    m["loss_trace"] = aug.trained.loss_trace;
    write_text_file(dir / (prefix + "_manifest.json"), m.dump(2) + "\n");

    out << "generated " << aug.generated.size() << " graphs with label " << aug.generated_label << " for fold "
        << fold_index << " -> " << dir.string() << '\n';
    return 0;
}

void print_report(const EvalReport& r, std::ostream& out) {
    for (const auto& f : r.folds) out << "fold " << f.fold << ": AUC " << fixed(f.auc) << '\n';
    out << r.dataset.name << " [" << variant_name(r.config.ablation) << "] mean AUC " << fixed(r.mean_auc) << " ± "
        << fixed(r.std_auc) << '\n';
}

int cmd_train(const FlagSet& flags, std::ostream& out, std::ostream& err) {
    const auto c = flags.resolve();
    require_dataset(c);
    log_config(c, err);
    const auto report = run_cv(c);
    const auto dir = write_run(report);
    print_report(report, out);
    out << "run directory: " << dir.string() << '\n';
    return 0;
}

int cmd_ablate(const FlagSet& flags, std::ostream& out, std::ostream& err) {
    auto base = flags.resolve("variant");
    require_dataset(base);
    std::vector<std::string> variants{variant_name(base.ablation)};
    if (flags.given("variant")) {
        variants = split_list(flags.value("variant"));
        if (variants.size() == 1 && variants[0] == "all") variants = variant_names();
    }
    std::vector<ExperimentConfig> configs;
    for (const auto& v : variants) {
        auto c = base;
        try {
            apply_config_entry(c, "variant", v);
        } catch (const ConfigError& e) {
            throw UsageError(e.what());
        }
        configs.push_back(c);
    }
    base.ablation = {};
    log_config(base, err);
    const auto ds = load_dataset(base);
    std::ostringstream csv;
    csv << std::setprecision(17) << "variant,mean_auc,std_auc,config_hash\n";
    for (const auto& c : configs) {
        const auto report = run_cv(c, ds);
        write_run(report);
        print_report(report, out);
        csv << variant_name(c.ablation) << ',' << report.mean_auc << ',' << report.std_auc << ','
            << report.config_hash << '\n';
    }
    const auto path = fs::path(base.out_dir) / base.dataset / ("ablation-" + config_hash(base) + ".csv");
    write_text_file(path, csv.str());
    out << "ablation table: " << path.string() << '\n';
    return 0;
}

int cmd_sweep(const FlagSet& flags, const std::string& betas_text, std::ostream& out, std::ostream& err) {
    const auto base = flags.resolve();
    require_dataset(base);
    std::vector<double> betas = default_beta_grid();
    if (!betas_text.empty()) {
        betas.clear();
        for (const auto& b : split_list(betas_text)) {
            try {
                std::size_t used = 0;
                betas.push_back(std::stod(b, &used));
                if (used != b.size()) throw std::invalid_argument(b);
            } catch (const std::exception&) {
                throw UsageError("--betas: not a number: " + b);
            }
        }
        if (betas.empty()) throw UsageError("--betas needs at least one value");
    }
    log_config(base, err);
    const auto ds = load_dataset(base);
    const auto reports = sweep_beta(base, ds, betas);
    for (const auto& r : reports) write_run(r);

    auto unset = base;
    unset.beta.reset();
    const auto dir = fs::path(base.out_dir) / base.dataset / ("sweep-" + config_hash(unset));
    write_text_file(dir / "sweep_beta.csv", sweep_to_csv(reports));
    ordered_json j;
    j["schema"] = "gladcf.sweep";
    j["version"] = kReportSchemaVersion;
    j["dataset"] = base.dataset;
    j["entries"] = ordered_json::array();
    for (const auto& r : reports) {
        ordered_json e;
        e["beta"] = r.config.resolved_beta();
        e["mean_auc"] = r.mean_auc;
        e["std_auc"] = r.std_auc;
        std::vector<double> aucs;
        for (const auto& f : r.folds) aucs.push_back(f.auc);
        e["fold_auc"] = aucs;
        e["config_hash"] = r.config_hash;
        j["entries"].push_back(e);
    }
    write_text_file(dir / "sweep_beta.json", j.dump(2) + "\n");
    for (const auto& r : reports)
        out << "beta " << fixed(r.config.resolved_beta(), 2) << ": mean AUC " << fixed(r.mean_auc) << " ± "
            << fixed(r.std_auc) << '\n';
    out << "sweep table: " << (dir / "sweep_beta.csv").string() << '\n';
    return 0;
}

int cmd_eval(const FlagSet& flags, const std::string& run_dir_text, std::ostream& out, std::ostream& err) {
    const auto dir = locate_run(flags, run_dir_text, err);
    if (!fs::is_directory(dir)) throw IoError("run directory not found: " + dir.string());
    std::vector<std::pair<std::size_t, fs::path>> fold_files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (entry.is_directory() && name.rfind("fold", 0) == 0 && fs::exists(entry.path() / "scores.csv")) {
            try {
                fold_files.emplace_back(std::stoul(name.substr(4)), entry.path() / "scores.csv");
            } catch (const std::exception&) {
            }
        }
    }
    if (fold_files.empty()) throw IoError("no fold<i>/scores.csv under " + dir.string());
    std::sort(fold_files.begin(), fold_files.end());

    std::vector<double> aucs;
    ordered_json j;
    j["schema"] = "gladcf.eval";
    j["version"] = kReportSchemaVersion;
    j["run_directory"] = dir.string();
    j["folds"] = ordered_json::array();
    for (const auto& [fold, path] : fold_files) {
        const auto scores = scores_from_csv(read_text_file(path));
        std::vector<double> s;
        std::vector<int> y;
        for (const auto& g : scores) {
            if (g.provenance == Provenance::Generated)
                throw FormatError("generated graph " + std::to_string(g.graph_id) + " in test scores " + path.string());
            s.push_back(g.score);
            y.push_back(g.label);
        }
        const double auc = compute_auc(s, y);
        aucs.push_back(auc);
        j["folds"].push_back({{"fold", fold}, {"auc", auc}, {"test_size", scores.size()}});
        out << "fold " << fold << ": AUC " << fixed(auc) << " (" << scores.size() << " graphs)\n";
    }
    double mean = 0.0, var = 0.0;
    for (double a : aucs) mean += a / static_cast<double>(aucs.size());
    for (double a : aucs) var += (a - mean) * (a - mean) / static_cast<double>(aucs.size());
    j["mean_auc"] = mean;
    j["std_auc"] = std::sqrt(var);
    out << "mean AUC " << fixed(mean) << " ± " << fixed(std::sqrt(var)) << '\n';

    if (fs::exists(dir / "report.json")) {
        const auto report = report_from_json(read_text_file(dir / "report.json"));
        if (std::abs(report.mean_auc - mean) > 1e-12)
            err << "warning: report.json records mean AUC " << report.mean_auc << ", recomputed " << mean << '\n';
    }
    write_text_file(dir / "eval.json", j.dump(2) + "\n");
    return 0;
}

std::string histogram_svg(const ScoreHistogram& h, const std::string& title) {
    const double width = 640, height = 360, left = 50, bottom = 40, top = 30;
    std::size_t peak = 1;
    for (std::size_t b = 0; b < h.bins; ++b) peak = std::max({peak, h.normal[b], h.abnormal[b]});
    const double slot = (width - left - 10) / static_cast<double>(h.bins);
    const double bar = slot * 0.4;
    const double plot_h = height - bottom - top;
    std::ostringstream s;
    s << std::fixed << std::setprecision(1);
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    s << "<text x=\"" << left << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\">" << title << "</text>\n";
    for (std::size_t b = 0; b < h.bins; ++b) {
        const double x = left + slot * static_cast<double>(b);
        const double hn = plot_h * static_cast<double>(h.normal[b]) / static_cast<double>(peak);
        const double ha = plot_h * static_cast<double>(h.abnormal[b]) / static_cast<double>(peak);
        s << "<rect x=\"" << x + slot * 0.1 << "\" y=\"" << height - bottom - hn << "\" width=\"" << bar
          << "\" height=\"" << hn << "\" fill=\"#f4a6b7\"/>\n";
        s << "<rect x=\"" << x + slot * 0.5 << "\" y=\"" << height - bottom - ha << "\" width=\"" << bar
          << "\" height=\"" << ha << "\" fill=\"#8c8c8c\"/>\n";
        s << "<text x=\"" << x << "\" y=\"" << height - bottom + 15
          << "\" font-family=\"sans-serif\" font-size=\"10\">" << std::setprecision(2) << h.lower(b)
          << std::setprecision(1) << "</text>\n";
    }
    s << "<line x1=\"" << left << "\" y1=\"" << height - bottom << "\" x2=\"" << width - 10 << "\" y2=\""
      << height - bottom << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << width - 200 << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#d0607a\">"
      << "normal</text>\n";
    s << "<text x=\"" << width - 140 << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#555\">"
      << "abnormal</text>\n";
    s << "</svg>\n";
    return s.str();
}

int cmd_plot(const FlagSet& flags, const std::string& run_dir_text, std::size_t bins, std::ostream& out,
             std::ostream& err) {
    if (bins == 0) throw UsageError("--bins must be positive");
    const auto dir = locate_run(flags, run_dir_text, err);
    const auto report_path = dir / "report.json";
    if (!fs::exists(report_path)) throw IoError("no report.json in " + dir.string());
    const auto report = report_from_json(read_text_file(report_path));
    const auto h = export_score_histogram(report, bins);
    write_text_file(dir / "histogram.csv", histogram_to_csv(h));

    ordered_json j;
    j["schema"] = "gladcf.histogram";
    j["version"] = kReportSchemaVersion;
    j["dataset"] = report.dataset.name;
    j["config_hash"] = report.config_hash;
    j["bins"] = bins;
    j["edges"] = ordered_json::array();
    for (std::size_t b = 0; b <= bins; ++b) j["edges"].push_back(static_cast<double>(b) / static_cast<double>(bins));
    j["normal"] = h.normal;
    j["abnormal"] = h.abnormal;
    write_text_file(dir / "histogram.json", j.dump(2) + "\n");
    write_text_file(dir / "histogram.svg", histogram_svg(h, report.dataset.name + " anomaly scores"));

    std::size_t n_nor = 0, n_abn = 0;
    for (std::size_t b = 0; b < bins; ++b) {
        n_nor += h.normal[b];
        n_abn += h.abnormal[b];
    }
    out << "histogram of " << n_nor << " normal and " << n_abn << " abnormal test scores -> "
        << (dir / "histogram.csv").string() << '\n';
    return 0;
}

LogLevel parse_log_level(const std::string& s) {
    if (s == "debug") return LogLevel::Debug;
    if (s == "info") return LogLevel::Info;
    if (s == "warning") return LogLevel::Warning;
    if (s == "error") return LogLevel::Error;
    if (s == "off") return LogLevel::Off;
    throw UsageError("unknown log level '" + s + "'");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Graph-level anomaly detection with counterfactual augmentation", "gladcf"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "debug, info, warning, error or off")->capture_default_str();

    FlagSet ingest_flags, augment_flags, train_flags, ablate_flags, sweep_flags, eval_flags, plot_flags;
    std::size_t augment_fold = 0, bins = 10;
    std::string betas, eval_run_dir, plot_run_dir;

    auto* ingest = app.add_subcommand("ingest", "validate a local TU dataset and print its statistics");
    ingest_flags.add(*ingest, kDataFlags);
    ingest_flags.add_config_file(*ingest);

    auto* augment = app.add_subcommand("augment", "train the perturbations on one fold and export generated graphs");
    augment_flags.add(*augment, kDataFlags);
    augment_flags.add(*augment, kRunFlags);
    augment_flags.add_config_file(*augment);
    augment->add_option("--fold", augment_fold, "fold whose training split is augmented")->capture_default_str();

    auto* train = app.add_subcommand("train", "run k-fold augmentation, training and evaluation");
    train_flags.add(*train, kDataFlags);
    train_flags.add(*train, kRunFlags);
    train_flags.add_config_file(*train);
    train_flags.add_checkpoint_flag(*train);

    auto* eval = app.add_subcommand("eval", "recompute fold AUCs from a run directory's score files");
    eval->add_option("--run-dir", eval_run_dir, "run directory; derived from the other flags when omitted");
    eval_flags.add(*eval, kDataFlags);
    eval_flags.add(*eval, kRunFlags);
    eval_flags.add_config_file(*eval);

    auto* ablate = app.add_subcommand("ablate", "run ablation variants on shared folds (--variant a,b or all)");
    ablate_flags.add(*ablate, kDataFlags);
    ablate_flags.add(*ablate, kRunFlags);
    ablate_flags.add_config_file(*ablate);

    auto* sweep = app.add_subcommand("sweep-beta", "one k-fold run per beta on shared folds");
    sweep_flags.add(*sweep, kDataFlags);
    sweep_flags.add(*sweep, kRunFlags);
    sweep_flags.add_config_file(*sweep);
    sweep->add_option("--betas", betas, "comma-separated beta values")->default_str("0.2,0.4,...,2.2");

    auto* plot = app.add_subcommand("plot-scores", "bin a run's test scores by label (CSV, JSON and SVG)");
    plot->add_option("--run-dir", plot_run_dir, "run directory; derived from the other flags when omitted");
    plot->add_option("--bins", bins, "number of equal-width bins over [0, 1]")->capture_default_str();
    plot_flags.add(*plot, kDataFlags);
    plot_flags.add(*plot, kRunFlags);
    plot_flags.add_config_file(*plot);

    for (auto* sub : {ingest, augment, train, eval, ablate, sweep, plot}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    try {
        set_log_level(parse_log_level(log_level));
        if (*ingest) return cmd_ingest(ingest_flags, out, err);
        if (*augment) return cmd_augment(augment_flags, augment_fold, out, err);
        if (*train) return cmd_train(train_flags, out, err);
        if (*eval) return cmd_eval(eval_flags, eval_run_dir, out, err);
        if (*ablate) return cmd_ablate(ablate_flags, out, err);
        if (*sweep) return cmd_sweep(sweep_flags, betas, out, err);
        if (*plot) return cmd_plot(plot_flags, plot_run_dir, bins, out, err);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\nRun with --help for usage.\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}

}  // namespace gladcf::cli
