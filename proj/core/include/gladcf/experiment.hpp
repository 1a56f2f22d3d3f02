#pragma once

#include "gladcf/counterfactual.hpp"
#include "gladcf/detector.hpp"
#include "gladcf/graph.hpp"
#include "gladcf/tu_io.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gladcf {

/// Ablation switches; each removes one part and leaves the rest unchanged.
struct Ablation {
    bool no_asgm = false;      // no counterfactual augmentation
    bool no_awlm = false;      // no L1 sort / adaptive weight matrix
    bool no_gcn_d = false;
    bool no_gcn_x = false;
    bool no_loss_nor = false;
    bool no_loss_abn = false;

    bool operator==(const Ablation&) const = default;
};

/// "full", "no_asgm", "no_awlm", "no_gcn_d", "no_gcn_x", "no_loss_nor", "no_loss_abn".
Ablation parse_variant(std::string_view name);
std::string variant_name(const Ablation& a);
const std::vector<std::string>& variant_names();

struct ExperimentConfig {
    std::string dataset;
    std::string data_dir = ".";
    FeatureMode feature_mode = FeatureMode::Identity;
    std::size_t num_bins = 10;
    int anomaly_label = 1;
    std::size_t folds = 5;
    std::uint64_t seed = 0;
    std::optional<double> beta;  // unset: per-dataset default
    std::optional<double> lr;    // unset: per-dataset default
    double cf_lr = 0.01;
    std::size_t epochs = 100;
    std::size_t cf_epochs = 100;
    std::size_t batch_size = 0;  // 0 = full training set per step
    double sigma = 0.5;
    double tau = 0.5;
    std::size_t reduce_dim = 64;
    double threshold = 0.5;
    Ablation ablation;

    // Execution only; excluded from the config hash.
    std::string out_dir = "runs";
    std::size_t parallel_folds = 1;
    bool write_checkpoints = false;  // fold<i>/checkpoint.json under run_directory()

    double resolved_beta() const;
    double resolved_lr() const;
    /// Throws ConfigError on out-of-range values.
    void validate() const;
};

/// beta 0.6 for BZR, 1.4 for DHFR, 1.2 otherwise.
double default_beta(std::string_view dataset) noexcept;
/// 1e-4 for AIDS and NCI1, 1e-3 otherwise.
double default_lr(std::string_view dataset) noexcept;

/// Flat "key = value" serialisation; every result-affecting field, resolved.
std::string to_config_text(const ExperimentConfig& c, bool include_execution = false);
/// '#' starts a comment; blank lines ignored. Throws FormatError on a malformed line.
std::map<std::string, std::string> parse_config_text(std::string_view text);
/// Sets one field from its key (flag name without dashes). Throws ConfigError on unknown keys/values.
void apply_config_entry(ExperimentConfig& c, const std::string& key, const std::string& value);
ExperimentConfig config_from_text(std::string_view text);
/// 16 hex digits of FNV-1a over to_config_text(c).
std::string config_hash(const ExperimentConfig& c);

struct GraphScore {
    std::size_t graph_id = 0;  // index in the on-disk dataset
    int label = 0;
    Provenance provenance = Provenance::OriginalNormal;
    double score = 0.5;
    int decision = 0;
};

struct FoldResult {
    std::size_t fold = 0;
    double auc = 0.0;
    std::size_t train_size = 0;   // after augmentation
    std::size_t generated = 0;
    int generated_label = 1;
    std::size_t test_size = 0;
    std::vector<GraphScore> scores;
    std::vector<double> augment_loss_trace;
    std::vector<double> detector_loss_trace;
    double augment_seconds = 0.0;
    double train_seconds = 0.0;
};

struct DatasetStats {
    std::string name;
    std::size_t graphs = 0;
    double avg_nodes = 0.0;
    double avg_edges = 0.0;
    std::size_t normal = 0;
    std::size_t abnormal = 0;
    std::size_t n_max = 0;
    std::size_t feature_dim = 0;
    int minority_label = 1;
};

DatasetStats dataset_stats(const GraphDataset& ds);

struct EvalReport {
    ExperimentConfig config;
    std::string config_hash;
    DatasetStats dataset;
    std::vector<FoldResult> folds;
    double mean_auc = 0.0;
    double std_auc = 0.0;  // population standard deviation over folds
    double total_seconds = 0.0;
};

/// Rank-based AUC with tied scores sharing their average rank. Throws MetricError
/// unless both classes are present.
double compute_auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Loads <data_dir>/<dataset> and builds the configured node features.
GraphDataset load_dataset(const ExperimentConfig& config);

/// The run's fold split (seeded from the master seed, shared by every variant).
std::vector<Fold> experiment_folds(const ExperimentConfig& config, const GraphDataset& dataset);
/// Augmenter settings for one fold.
AugmentConfig augment_config(const ExperimentConfig& config, std::size_t fold_index);

/// Trains one fold: augments the training split (unless no_asgm), trains the
/// detector and scores the untouched test split.
FoldResult run_fold(const ExperimentConfig& config, const GraphDataset& dataset, const Fold& fold,
                    std::size_t fold_index, DetectorParams* trained = nullptr,
                    AugmentationResult* augmentation = nullptr);

/// Full stratified k-fold protocol on a loaded dataset. Any fold failure is
/// rethrown as a gladcf::Error naming the fold.
EvalReport run_cv(const ExperimentConfig& config, const GraphDataset& dataset);
EvalReport run_cv(const ExperimentConfig& config);

/// One run_cv per beta with everything else, splits included, fixed.
std::vector<EvalReport> sweep_beta(const ExperimentConfig& config, const GraphDataset& dataset,
                                   const std::vector<double>& betas);
/// 0.2, 0.4, ..., 2.2
std::vector<double> default_beta_grid();

struct ScoreHistogram {
    std::size_t bins = 0;
    std::vector<std::size_t> normal;
    std::vector<std::size_t> abnormal;

    double lower(std::size_t b) const noexcept { return static_cast<double>(b) / static_cast<double>(bins); }
    double upper(std::size_t b) const noexcept { return static_cast<double>(b + 1) / static_cast<double>(bins); }
};

/// Bins every test score of the report over [0, 1] (last bin closed), split by label.
ScoreHistogram export_score_histogram(const EvalReport& report, std::size_t bins);
ScoreHistogram score_histogram(const std::vector<double>& scores, const std::vector<int>& labels, std::size_t bins);

// ---- artifacts -----------------------------------------------------------

inline constexpr int kReportSchemaVersion = 1;
inline constexpr int kCheckpointVersion = 1;

/// Report as JSON text. Timing fields live under keys ending in "_seconds".
std::string report_to_json(const EvalReport& report, bool include_scores = true);
EvalReport report_from_json(std::string_view text);
std::string scores_to_csv(const std::vector<GraphScore>& scores, std::optional<std::size_t> fold = std::nullopt);
std::vector<GraphScore> scores_from_csv(std::string_view text);
std::string histogram_to_csv(const ScoreHistogram& h);
std::string sweep_to_csv(const std::vector<EvalReport>& reports);

std::string checkpoint_to_json(const DetectorParams& params, const PerturbationPair* pair, const std::string& hash);
DetectorParams checkpoint_from_json(std::string_view text);

/// runs/<dataset>/<config-hash>
std::filesystem::path run_directory(const ExperimentConfig& config);
/// Writes report.json, config.txt, scores.csv and per-fold fold<i>/scores.csv.
std::filesystem::path write_run(const EvalReport& report);

std::string read_text_file(const std::filesystem::path& p);
void write_text_file(const std::filesystem::path& p, std::string_view text);

}  // namespace gladcf
