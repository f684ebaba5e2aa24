// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>

#include "sitgru/pipeline.hpp"

namespace sitgru {
namespace {

namespace fs = std::filesystem;

class TempDir {
public:
    TempDir() {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        path_ = fs::temp_directory_path() /
                ("sitgru_" + std::string(info->test_suite_name()) + "_" + info->name() + "_" + std::to_string(::getpid()));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

struct CliResult {
    int code;
    std::string output;  // stdout and stderr
};

CliResult cli(const std::string& args) {
    const std::string cmd = std::string(SITGRU_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) return {-1, "popen failed"};
    std::string out;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
    const int status = ::pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

// Small enough to train in well under a second.
const std::string kTiny =
    " --frame-size 8 --units 6,3,6,1 --epochs 3 --batch 4 --synth-videos 2 --synth-length 20 --test-videos 1"
    " --test-window 8,14 --strides 1,2 ";

TEST(RunConfigTest, DefaultsValidate) {
    RunConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    EXPECT_EQ(cfg.network().frame_pixels, 1024u);
    EXPECT_EQ(cfg.units.back(), 1u);
}

TEST(RunConfigTest, SetParsesEveryKindOfValue) {
    RunConfig cfg;
    cfg.set("cell", "lstm");
    cfg.set("frame-size", "16");
    cfg.set("units", "8, 4,8 ,1");
    cfg.set("heatmaps", "yes");
    cfg.set("sweep_opts", "adam");
    cfg.set("lr", "0.5");
    EXPECT_EQ(cfg.cell, CellKind::Lstm);
    EXPECT_EQ(cfg.frame_size, 16u);
    EXPECT_EQ(cfg.units, (std::vector<std::size_t>{8, 4, 8, 1}));
    EXPECT_TRUE(cfg.heatmaps);
    EXPECT_EQ(cfg.sweep_opts, std::vector<OptimizerKind>{OptimizerKind::Adam});
    EXPECT_EQ(cfg.lr, 0.5);
}

TEST(RunConfigTest, ErrorsNameTheField) {
    RunConfig cfg;
    auto message = [&](const std::string& k, const std::string& v) {
        try {
            cfg.set(k, v);
        } catch (const UsageError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    EXPECT_EQ(message("epochs", "ten").rfind("epochs:", 0), 0u);
    EXPECT_EQ(message("cell", "rnn").rfind("cell:", 0), 0u);
    EXPECT_EQ(message("batch", "-3").rfind("batch:", 0), 0u);
    EXPECT_NE(message("colour", "red").find("colour"), std::string::npos);
    cfg = RunConfig{};
    cfg.units = {8, 4};
    EXPECT_THROW(cfg.validate(), UsageError);
}

TEST(RunConfigTest, FileThenKeys) {
    TempDir dir;
    std::ofstream(dir.path() / "run.cfg") << "# comment\nepochs = 7\n\ncell=gru  # trailing\n";
    RunConfig cfg;
    cfg.load_file(dir.path() / "run.cfg");
    EXPECT_EQ(cfg.epochs, 7u);
    EXPECT_EQ(cfg.cell, CellKind::Gru);
    std::ofstream(dir.path() / "bad.cfg") << "epochs 7\n";
    EXPECT_THROW(cfg.load_file(dir.path() / "bad.cfg"), UsageError);
    EXPECT_THROW(cfg.load_file(dir.path() / "none.cfg"), IoError);
}

TEST(RunConfigTest, JsonHasEveryKey) {
    const auto j = RunConfig{}.to_json();
    for (const auto& k : RunConfig::keys()) EXPECT_TRUE(j.contains(k)) << k;
}

TEST(ParallelForTest, RunsEveryIndexOnce) {
    std::vector<std::atomic<int>> hits(37);
    parallel_for(hits.size(), [&](std::size_t i) { ++hits[i]; });
    for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
}

TEST(EvalTest, TrainingVideoLooksMoreRegularThanAnomalousOne) {
    RunConfig cfg;
    cfg.frame_size = 16;
    cfg.units = {16, 8, 16, 1};
    cfg.epochs = 15;
    cfg.synth_videos = 2;
    cfg.strides = {1, 2};
    const Checkpoint ck = train_model(cfg).checkpoint;
    const Video normal = training_videos(cfg, 1).front();
    SyntheticConfig s = cfg.synthetic(derive_seed(cfg.seed, "synth-train", 0));
    s.anomaly = AnomalyType::Speed;
    s.anomaly_start = 20;
    s.anomaly_end = 40;
    const SyntheticVideo fast = synth_generate(s);
    // One shared normalization: per-video scores are each scaled to their own maximum.
    std::vector<double> errors = score_video(ck, normal, cfg.batch, false).errors;
    const std::size_t split = errors.size();
    const auto fast_errors = score_video(ck, {fast.sequence, fast.labels}, cfg.batch, false).errors;
    errors.insert(errors.end(), fast_errors.begin(), fast_errors.end());
    const auto r = regularity_score(errors);
    const double mean_normal = std::accumulate(r.begin(), r.begin() + split, 0.0) / static_cast<double>(split);
    const double mean_fast =
        std::accumulate(r.begin() + split, r.end(), 0.0) / static_cast<double>(r.size() - split);
    EXPECT_GT(mean_normal, mean_fast);
}

TEST(CliTest, TrainThenEvalWritesArtifacts) {
    TempDir dir;
    const std::string out = dir.path().string();
    const CliResult train = cli("train" + kTiny + "--out " + out);
    ASSERT_EQ(train.code, 0) << train.output;
    for (const char* f : {"checkpoint.bin", "epochs.csv", "epoch_times.csv", "run.json"})
        EXPECT_TRUE(fs::exists(dir.path() / f)) << f;
    EXPECT_EQ(slurp(dir.path() / "epochs.csv").rfind("epoch,train_loss,val_loss\n1,", 0), 0u);
    const auto run = nlohmann::json::parse(slurp(dir.path() / "run.json"));
    EXPECT_EQ(run["command"], "train");
    EXPECT_EQ(run["config"]["epochs"], 3);

    const CliResult eval = cli("eval" + kTiny + "--heatmaps true --svg true --out " + out);
    ASSERT_EQ(eval.code, 0) << eval.output;
    const std::string scores = slurp(dir.path() / "scores.csv");
    EXPECT_EQ(std::count(scores.begin(), scores.end(), '\n'), 21);
    const auto summary = nlohmann::json::parse(slurp(dir.path() / "summary.json"));
    EXPECT_GE(summary["auc"].get<double>(), 0.0);
    EXPECT_LE(summary["auc"].get<double>(), 1.0);
    EXPECT_EQ(summary["timing"]["epochs"], 3);
    EXPECT_TRUE(fs::exists(dir.path() / "roc.csv"));
    EXPECT_TRUE(fs::exists(dir.path() / "roc.svg"));
    EXPECT_TRUE(fs::exists(dir.path() / "heatmaps" / "video0_frame0019.pgm"));
}

TEST(CliTest, SameSeedSameBytes) {
    TempDir dir;
    for (const char* run : {"a", "b"}) {
        const CliResult r = cli("train" + kTiny + "--seed 9 --out " + (dir.path() / run).string());
        ASSERT_EQ(r.code, 0) << r.output;
    }
    EXPECT_EQ(slurp(dir.path() / "a" / "epochs.csv"), slurp(dir.path() / "b" / "epochs.csv"));
    EXPECT_EQ(slurp(dir.path() / "a" / "checkpoint.bin"), slurp(dir.path() / "b" / "checkpoint.bin"));
}

TEST(CliTest, ConfigFileIsOverriddenByFlags) {
    TempDir dir;
    std::ofstream(dir.path() / "run.cfg") << "epochs=5\nframe_size=8\nunits=6,3,6,1\nsynth_videos=2\nsynth_length=20\n";
    const CliResult r =
        cli("train --config " + (dir.path() / "run.cfg").string() + " --epochs 2 --out " + dir.path().string());
    ASSERT_EQ(r.code, 0) << r.output;
    const auto run = nlohmann::json::parse(slurp(dir.path() / "run.json"));
    EXPECT_EQ(run["config"]["epochs"], 2);
    EXPECT_EQ(run["config"]["frame_size"], 8);
}

TEST(CliTest, SynthWritesLoadableManifest) {
    TempDir dir;
    const CliResult r = cli("synth --synth-length 12 --anomaly speed --window 4,8 --out " + dir.path().string());
    ASSERT_EQ(r.code, 0) << r.output;
    const LabeledFrames lf = load_frames(dir.path() / "manifest.jsonl");
    ASSERT_EQ(lf.sequence.size(), 12u);
    EXPECT_EQ(std::count(lf.labels.begin(), lf.labels.end(), 1), 4);
}

TEST(CliTest, GradcheckPassesAndCatchesInjectedFault) {
    const CliResult ok = cli("gradcheck --gradcheck-seeds 2 --kinds sitgru,gru");
    EXPECT_EQ(ok.code, 0) << ok.output;
    EXPECT_NE(ok.output.find("PASS sitgru"), std::string::npos) << ok.output;
    const CliResult bad = cli("gradcheck --gradcheck-seeds 2 --kinds sitgru --inject-fault true");
    EXPECT_EQ(bad.code, 3) << bad.output;
    EXPECT_NE(bad.output.find("FAIL sitgru"), std::string::npos) << bad.output;
}

TEST(CliTest, UsageErrorsExitOne) {
    EXPECT_EQ(cli("").code, 1);
    EXPECT_EQ(cli("fly").code, 1);
    const CliResult r = cli("train --epochs many");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.output.find("epochs"), std::string::npos) << r.output;
    EXPECT_EQ(cli("train --units 8,4").code, 1);
}

TEST(CliTest, DataErrorsExitTwo) {
    TempDir dir;
    const CliResult missing = cli("eval --checkpoint " + (dir.path() / "nope.bin").string() + " --out " + dir.path().string());
    EXPECT_EQ(missing.code, 2) << missing.output;
    EXPECT_NE(missing.output.find("nope.bin"), std::string::npos) << missing.output;
}

TEST(CliTest, EmptyOrSingleClassTestSetIsReported) {
    TempDir dir;
    const std::string out = dir.path().string();
    ASSERT_EQ(cli("train" + kTiny + "--out " + out).code, 0);
    std::ofstream(dir.path() / "empty.jsonl").close();
    const CliResult empty = cli("eval --test " + (dir.path() / "empty.jsonl").string() + " --out " + out);
    EXPECT_EQ(empty.code, 1) << empty.output;
    EXPECT_NE(empty.output.find("no frames"), std::string::npos) << empty.output;

    ASSERT_EQ(cli("synth --synth-length 20 --out " + (dir.path() / "normal").string()).code, 0);
    const CliResult one = cli("eval --test " + (dir.path() / "normal" / "manifest.jsonl").string() + " --out " + out);
    EXPECT_EQ(one.code, 1) << one.output;
    EXPECT_NE(one.output.find("single class"), std::string::npos) << one.output;
}

TEST(CliTest, FrameSizeMismatchIsACompatibilityError) {
    TempDir dir;
    const std::string out = dir.path().string();
    ASSERT_EQ(cli("train" + kTiny + "--out " + out).code, 0);
    write_dataset(dir.path() / "small", FrameSequence{std::vector<Tensor>(6, Tensor({16, 16}))}, {0, 0, 1, 1, 0, 0});
    const CliResult r = cli("eval --test " + (dir.path() / "small" / "manifest.jsonl").string() + " --out " + out);
    EXPECT_EQ(r.code, 2) << r.output;
    EXPECT_NE(r.output.find("checkpoint was trained on"), std::string::npos) << r.output;
}

}  // namespace
}  // namespace sitgru
