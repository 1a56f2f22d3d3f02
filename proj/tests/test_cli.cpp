#include "cli.hpp"
#include "gladcf/experiment.hpp"
#include "support.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <sstream>

using namespace gladcf;
using namespace gladcf::testing;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "gladcf");
    std::vector<const char*> argv;
    for (auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::vector<std::string> quick_flags(const fs::path& root) {
    return {"--data-dir", root.string(), "--out-dir", (root / "runs").string(), "--folds", "3",
            "--epochs", "3", "--cf-epochs", "2", "--reduce-dim", "8", "--log-level", "warning"};
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

// Drops every key ending in "_seconds", recursively.
void strip_timings(nlohmann::json& j) {
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end();) {
            const std::string& k = it.key();
            if (k.size() >= 8 && k.compare(k.size() - 8, 8, "_seconds") == 0) it = j.erase(it);
            else strip_timings(*it++);
        }
    } else if (j.is_array()) {
        for (auto& v : j) strip_timings(v);
    }
}

}  // namespace

TEST(Cli, HelpListsEveryFlagWithDefaults) {
    for (const char* sub : {"train", "ablate", "sweep-beta", "augment"}) {
        const auto r = run_cli({sub, "--help"});
        EXPECT_EQ(r.code, 0);
        for (const char* flag : {"--dataset", "--data-dir", "--feature-mode", "--num-bins", "--folds", "--seed",
                                 "--beta", "--lr", "--cf-lr", "--epochs", "--cf-epochs", "--sigma", "--tau",
                                 "--reduce-dim", "--threshold", "--variant", "--out-dir", "--parallel-folds"})
            EXPECT_NE(r.out.find(flag), std::string::npos) << sub << " " << flag;
        EXPECT_NE(r.out.find("[1.2 (0.6 for BZR, 1.4 for DHFR)]"), std::string::npos);
        EXPECT_NE(r.out.find("[1e-3 (1e-4 for AIDS and NCI1)]"), std::string::npos);
        EXPECT_NE(r.out.find("[100]"), std::string::npos);
    }
    for (const char* sub : {"ingest", "eval", "plot-scores"}) EXPECT_EQ(run_cli({sub, "--help"}).code, 0);
}

TEST(Cli, UsageErrorsExitOne) {
    EXPECT_EQ(run_cli({}).code, 1);
    EXPECT_EQ(run_cli({"frobnicate"}).code, 1);
    EXPECT_EQ(run_cli({"train", "--no-such-flag"}).code, 1);
    EXPECT_EQ(run_cli({"train", "--dataset", "X", "--folds", "1"}).code, 1);
    EXPECT_EQ(run_cli({"train", "--dataset", "X", "--variant", "no_everything"}).code, 1);
    EXPECT_EQ(run_cli({"train"}).code, 1);
}

TEST(Cli, MissingDatasetExitsTwo) {
    TempDir tmp("cli_missing");
    const auto r = run_cli(concat({"train", "--dataset", "MISSING"}, quick_flags(tmp.path())));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("dataset not found"), std::string::npos);
}

TEST(Cli, IngestPrintsStatistics) {
    TempDir tmp("cli_ingest");
    write_planted_dataset(tmp.path(), "TOY", 12, 4, 1);
    const auto r = run_cli({"ingest", "--dataset", "TOY", "--data-dir", tmp.path().string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("TOY"), std::string::npos);
    EXPECT_NE(r.out.find("16"), std::string::npos);
    EXPECT_NE(r.err.find("resolved config"), std::string::npos);
}

TEST(Cli, TrainTwiceGivesIdenticalReportsModuloTiming) {
    TempDir tmp("cli_train");
    write_planted_dataset(tmp.path(), "TOY", 18, 6, 2);
    const auto args = concat({"train", "--dataset", "TOY", "--seed", "7", "--beta", "1.2"}, quick_flags(tmp.path()));
    const auto first = run_cli(args);
    ASSERT_EQ(first.code, 0) << first.err;
    EXPECT_NE(first.out.find("mean AUC"), std::string::npos);
    ExperimentConfig c;
    c.dataset = "TOY";
    const auto dirs = fs::directory_iterator(tmp.path() / "runs" / "TOY");
    const fs::path run = dirs->path();
    auto a = nlohmann::json::parse(read_text_file(run / "report.json"));
    ASSERT_EQ(run_cli(args).code, 0);
    auto b = nlohmann::json::parse(read_text_file(run / "report.json"));
    strip_timings(a);
    strip_timings(b);
    EXPECT_EQ(a.dump(), b.dump());
}

TEST(Cli, ConfigFileIsOverriddenByFlags) {
    TempDir tmp("cli_cfg");
    write_planted_dataset(tmp.path(), "TOY", 18, 6, 3);
    write_text_file(tmp.path() / "run.cfg", "dataset = TOY\nseed = 3\nbeta = 0.9\n");
    const auto r = run_cli(concat({"train", "--config", (tmp.path() / "run.cfg").string(), "--beta", "1.7"},
                                  quick_flags(tmp.path())));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.err.find("beta = 1.7"), std::string::npos);
    EXPECT_NE(r.err.find("seed = 3"), std::string::npos);
    EXPECT_EQ(run_cli(concat({"train", "--config", (tmp.path() / "nope.cfg").string()}, quick_flags(tmp.path()))).code,
              1);
}

TEST(Cli, AblateEvalAndPlotRoundTrip) {
    TempDir tmp("cli_abl");
    write_planted_dataset(tmp.path(), "BZR", 18, 6, 4);
    const auto r = run_cli(concat({"ablate", "--dataset", "BZR", "--variant", "no_gcn_x"}, quick_flags(tmp.path())));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("[no_gcn_x]"), std::string::npos);
    EXPECT_NE(r.err.find("beta = 0.6"), std::string::npos);

    fs::path run;
    for (const auto& e : fs::directory_iterator(tmp.path() / "runs" / "BZR"))
        if (e.is_directory()) run = e.path();
    ASSERT_FALSE(run.empty());
    const auto report = report_from_json(read_text_file(run / "report.json"));
    EXPECT_TRUE(report.config.ablation.no_gcn_x);

    const auto ev = run_cli({"eval", "--run-dir", run.string()});
    ASSERT_EQ(ev.code, 0) << ev.err;
    const auto eval = nlohmann::json::parse(read_text_file(run / "eval.json"));
    EXPECT_NEAR(eval["mean_auc"].get<double>(), report.mean_auc, 1e-12);

    const auto pl = run_cli({"plot-scores", "--run-dir", run.string(), "--bins", "4"});
    ASSERT_EQ(pl.code, 0) << pl.err;
    const auto hist = nlohmann::json::parse(read_text_file(run / "histogram.json"));
    std::size_t normal = 0, abnormal = 0;
    for (auto v : hist["normal"]) normal += v.get<std::size_t>();
    for (auto v : hist["abnormal"]) abnormal += v.get<std::size_t>();
    EXPECT_EQ(normal, 18u);
    EXPECT_EQ(abnormal, 6u);
    EXPECT_TRUE(fs::exists(run / "histogram.svg"));
    EXPECT_EQ(run_cli({"eval", "--run-dir", (tmp.path() / "absent").string()}).code, 2);
}

TEST(Cli, AugmentExportsLoadableTuFiles) {
    TempDir tmp("cli_aug");
    write_planted_dataset(tmp.path(), "TOY", 18, 6, 5);
    const auto r = run_cli(concat({"augment", "--dataset", "TOY", "--fold", "2"}, quick_flags(tmp.path())));
    ASSERT_EQ(r.code, 0) << r.err;
    fs::path gen;
    for (const auto& e : fs::recursive_directory_iterator(tmp.path() / "runs"))
        if (e.path().filename() == "generated") gen = e.path();
    ASSERT_FALSE(gen.empty());
    const auto manifest = nlohmann::json::parse(read_text_file(gen / "TOY_generated_manifest.json"));
    EXPECT_EQ(manifest["generated"].get<std::size_t>(), 8u);  // 12 normal vs 4 abnormal in a 3-fold train split
    EXPECT_EQ(manifest["loss_trace"].size(), 3u);
    // The exported files use the TU layout, so the loader reads them back.
    const auto dir = tmp.path() / "TOY_generated";
    fs::create_directories(dir);
    for (const char* part : {"_A.txt", "_graph_indicator.txt", "_graph_labels.txt"})
        fs::copy_file(gen / (std::string("TOY_generated") + part), dir / (std::string("TOY_generated") + part));
    const auto raw = load_tu_dataset(dir, 1);
    EXPECT_EQ(raw.graphs.size(), 8u);
    for (const auto& g : raw.graphs) EXPECT_EQ(g.label, 1);
}
