// SPDX-License-Identifier: Apache-2.0
//
// End-to-end stages behind the command-line tool: configuration, training,
// evaluation, gradient checks, timing benchmark, loss x optimizer sweep and
// synthetic data export. Every stage writes plain files into an output
// directory plus a run.json describing how it was produced.
#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "sitgru/data.hpp"
#include "sitgru/eval.hpp"
#include "sitgru/gradcheck.hpp"
#include "sitgru/network.hpp"
#include "sitgru/optim.hpp"
#include "sitgru/serialize.hpp"

namespace sitgru {

inline constexpr const char* kToolVersion = "0.1.0";

// Bad configuration value or command-line usage.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// -------------------------------------------------------------- config ---

namespace detail {

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const char* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end) throw UsageError(key + ": '" + value + "' is not a valid number");
    return out;
}

inline std::size_t parse_count(const std::string& key, const std::string& value) {
    if (!value.empty() && value.front() == '-') throw UsageError(key + ": must not be negative");
    return parse_number<std::size_t>(key, value);
}

inline std::vector<std::size_t> parse_counts(const std::string& key, const std::string& value) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(value)) out.push_back(parse_count(key, item));
    if (out.empty()) throw UsageError(key + ": empty list");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true" || value == "yes" || value == "on") return true;
    if (value == "0" || value == "false" || value == "no" || value == "off") return false;
    throw UsageError(key + ": expected true/false, got '" + value + "'");
}

template <typename F>
auto parse_enum(const std::string& key, const std::string& value, F parse) {
    try {
        return parse(value);
    } catch (const ArgumentError& e) {
        throw UsageError(key + ": " + e.what());
    }
}

inline std::string join(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

}  // namespace detail

/// Every knob of every command. Defaults, then a key=value file, then
/// command-line flags; later sources win.
struct RunConfig {
    std::uint64_t seed = 0;
    std::filesystem::path out = "out";

    // model and training
    CellKind cell = CellKind::SiTGru;
    LossKind loss = LossKind::Mse;
    OptimizerKind opt = OptimizerKind::Adam;
    double lr = 1e-3;
    std::size_t frame_size = 32;
    std::size_t t = 4;
    std::size_t epochs = 60;
    std::size_t batch = 8;
    double split = 0.85;
    double clip_norm = 0.0;
    std::vector<std::size_t> units{32, 16, 8, 16, 32, 1};
    std::vector<std::size_t> strides{1, 2, 3};

    // training data: synthetic videos, or manifests of normal footage
    std::string synth = "default";  // "default" or "none"
    std::vector<std::filesystem::path> train;
    std::size_t synth_videos = 8;
    std::size_t synth_length = 60;
    std::size_t object_size = 6;
    double speed = 1.0;
    double noise = 0.0;

    // test data: a manifest, or synthetic videos with an injected anomaly
    std::filesystem::path test;
    std::size_t test_videos = 3;
    AnomalyType test_anomaly = AnomalyType::Speed;
    std::vector<std::size_t> test_window{20, 40};
    double speed_factor = 3.0;
    std::filesystem::path checkpoint;  // defaults to <out>/checkpoint.bin
    bool heatmaps = false;
    bool svg = false;

    // synth command
    AnomalyType anomaly = AnomalyType::None;
    std::vector<std::size_t> window{0, 0};

    // gradcheck / bench / sweep
    std::vector<CellKind> kinds{kAllCellKinds.begin(), kAllCellKinds.end()};
    std::size_t gradcheck_seeds = 20;
    bool inject_fault = false;
    std::vector<CellKind> bench_kinds{CellKind::SiTGru, CellKind::Gru, CellKind::Lstm};
    std::size_t bench_epochs = 3;
    std::size_t bench_reps = 5;
    std::size_t bench_videos = 1;
    std::vector<LossKind> sweep_losses{LossKind::Mse, LossKind::Xent};
    std::vector<OptimizerKind> sweep_opts{OptimizerKind::AdaGrad, OptimizerKind::Adam, OptimizerKind::RmsProp};

    static const std::vector<std::string>& keys() {
        static const std::vector<std::string> k{
            "seed",        "out",          "cell",         "loss",           "opt",          "lr",
            "frame_size",  "t",            "epochs",       "batch",          "split",        "clip_norm",
            "units",       "strides",      "synth",        "train",          "synth_videos", "synth_length",
            "object_size", "speed",        "noise",        "test",           "test_videos",  "test_anomaly",
            "test_window", "speed_factor", "checkpoint",   "heatmaps",       "svg",          "anomaly",
            "window",      "kinds",        "gradcheck_seeds", "inject_fault", "bench_kinds", "bench_epochs",
            "bench_reps",  "bench_videos", "sweep_losses", "sweep_opts"};
        return k;
    }

    /// Sets one field from text. Dashes in `key` count as underscores.
    void set(std::string key, const std::string& raw) {
        std::replace(key.begin(), key.end(), '-', '_');
        const std::string v = detail::trim(raw);
        using namespace detail;
        if (key == "seed") seed = parse_number<std::uint64_t>(key, v);
        else if (key == "out") out = v;
        else if (key == "cell") cell = parse_enum(key, v, parse_cell_kind);
        else if (key == "loss") loss = parse_enum(key, v, parse_loss_kind);
        else if (key == "opt") opt = parse_enum(key, v, parse_optimizer_kind);
        else if (key == "lr") lr = parse_number<double>(key, v);
        else if (key == "frame_size") frame_size = parse_count(key, v);
        else if (key == "t") t = parse_count(key, v);
        else if (key == "epochs") epochs = parse_count(key, v);
        else if (key == "batch") batch = parse_count(key, v);
        else if (key == "split") split = parse_number<double>(key, v);
        else if (key == "clip_norm") clip_norm = parse_number<double>(key, v);
        else if (key == "units") units = parse_counts(key, v);
        else if (key == "strides") strides = parse_counts(key, v);
        else if (key == "synth") {
            if (v != "default" && v != "none") throw UsageError("synth: expected 'default' or 'none', got '" + v + "'");
            synth = v;
        } else if (key == "train") {
            train.clear();
            for (const auto& p : split_list(v)) train.emplace_back(p);
        } else if (key == "synth_videos") synth_videos = parse_count(key, v);
        else if (key == "synth_length") synth_length = parse_count(key, v);
        else if (key == "object_size") object_size = parse_count(key, v);
        else if (key == "speed") speed = parse_number<double>(key, v);
        else if (key == "noise") noise = parse_number<double>(key, v);
        else if (key == "test") test = v;
        else if (key == "test_videos") test_videos = parse_count(key, v);
        else if (key == "test_anomaly") test_anomaly = parse_enum(key, v, parse_anomaly_type);
        else if (key == "test_window") test_window = parse_counts(key, v);
        else if (key == "speed_factor") speed_factor = parse_number<double>(key, v);
        else if (key == "checkpoint") checkpoint = v;
        else if (key == "heatmaps") heatmaps = parse_bool(key, v);
        else if (key == "svg") svg = parse_bool(key, v);
        else if (key == "anomaly") anomaly = parse_enum(key, v, parse_anomaly_type);
        else if (key == "window") window = parse_counts(key, v);
        else if (key == "kinds" || key == "bench_kinds") {
            std::vector<CellKind> ks;
            for (const auto& s : split_list(v)) ks.push_back(parse_enum(key, s, parse_cell_kind));
            if (ks.empty()) throw UsageError(key + ": empty list");
            (key == "kinds" ? kinds : bench_kinds) = ks;
        } else if (key == "gradcheck_seeds") gradcheck_seeds = parse_count(key, v);
        else if (key == "inject_fault") inject_fault = parse_bool(key, v);
        else if (key == "bench_epochs") bench_epochs = parse_count(key, v);
        else if (key == "bench_reps") bench_reps = parse_count(key, v);
        else if (key == "bench_videos") bench_videos = parse_count(key, v);
        else if (key == "sweep_losses") {
            sweep_losses.clear();
            for (const auto& s : split_list(v)) sweep_losses.push_back(parse_enum(key, s, parse_loss_kind));
        } else if (key == "sweep_opts") {
            sweep_opts.clear();
            for (const auto& s : split_list(v)) sweep_opts.push_back(parse_enum(key, s, parse_optimizer_kind));
        } else {
            throw UsageError("unknown config key '" + key + "'");
        }
    }

    /// Flat key=value lines; '#' starts a comment.
    void load_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config '" + path.string() + "'");
        std::string line;
        std::size_t n = 0;
        while (std::getline(in, line)) {
            ++n;
            if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            line = detail::trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw UsageError(path.string() + ":" + std::to_string(n) + ": expected key=value");
            set(detail::trim(line.substr(0, eq)), line.substr(eq + 1));
        }
    }

    std::filesystem::path checkpoint_path() const { return checkpoint.empty() ? out / "checkpoint.bin" : checkpoint; }

    NetworkConfig network() const {
        NetworkConfig n;
        n.layer_units = units;
        n.cell_kind = cell;
        n.frame_pixels = frame_size * frame_size;
        n.timesteps = t;
        return n;
    }

    TrainConfig training() const {
        TrainConfig c;
        c.epochs = epochs;
        c.batch_size = batch;
        c.split = split;
        c.loss = loss;
        c.optimizer = opt;
        c.lr = lr;
        c.seed = derive_seed(seed, "train");
        c.clip_norm = clip_norm;
        return c;
    }

    SyntheticConfig synthetic(std::uint64_t video_seed) const {
        SyntheticConfig s;
        s.length = synth_length;
        s.object_size = object_size;
        s.speed = speed;
        s.noise = noise;
        s.speed_factor = speed_factor;
        s.seed = video_seed;
        return s;
    }

    void validate() const {
        auto wrap = [](const std::string& field, auto&& fn) {
            try {
                fn();
            } catch (const ArgumentError& e) {
                throw UsageError(field + ": " + e.what());
            }
        };
        wrap("units", [&] { network().validate(); });
        wrap("epochs/batch/split/lr", [&] { training().validate(); });
        if (frame_size < 2) throw UsageError("frame_size: must be at least 2");
        if (test_window.size() != 2 || test_window[0] > test_window[1])
            throw UsageError("test_window: expected start,end with start <= end");
        if (window.size() != 2 || window[0] > window[1]) throw UsageError("window: expected start,end with start <= end");
        if (synth == "none" && train.empty()) throw UsageError("train: no training manifest given and synth=none");
    }

    nlohmann::json to_json() const {
        auto kinds_str = [](const std::vector<CellKind>& ks) {
            std::string s;
            for (std::size_t i = 0; i < ks.size(); ++i) s += (i ? "," : "") + std::string(to_string(ks[i]));
            return s;
        };
        std::string losses, opts, trains;
        for (std::size_t i = 0; i < sweep_losses.size(); ++i) losses += (i ? "," : "") + std::string(to_string(sweep_losses[i]));
        for (std::size_t i = 0; i < sweep_opts.size(); ++i) opts += (i ? "," : "") + std::string(to_string(sweep_opts[i]));
        for (std::size_t i = 0; i < train.size(); ++i) trains += (i ? "," : "") + train[i].generic_string();
        return {{"seed", seed},
                {"out", out.generic_string()},
                {"cell", std::string(to_string(cell))},
                {"loss", std::string(to_string(loss))},
                {"opt", std::string(to_string(opt))},
                {"lr", lr},
                {"frame_size", frame_size},
                {"t", t},
                {"epochs", epochs},
                {"batch", batch},
                {"split", split},
                {"clip_norm", clip_norm},
                {"units", detail::join(units)},
                {"strides", detail::join(strides)},
                {"synth", synth},
                {"train", trains},
                {"synth_videos", synth_videos},
                {"synth_length", synth_length},
                {"object_size", object_size},
                {"speed", speed},
                {"noise", noise},
                {"test", test.generic_string()},
                {"test_videos", test_videos},
                {"test_anomaly", std::string(to_string(test_anomaly))},
                {"test_window", detail::join(test_window)},
                {"speed_factor", speed_factor},
                {"checkpoint", checkpoint_path().generic_string()},
                {"heatmaps", heatmaps},
                {"svg", svg},
                {"anomaly", std::string(to_string(anomaly))},
                {"window", detail::join(window)},
                {"kinds", kinds_str(kinds)},
                {"gradcheck_seeds", gradcheck_seeds},
                {"inject_fault", inject_fault},
                {"bench_kinds", kinds_str(bench_kinds)},
                {"bench_epochs", bench_epochs},
                {"bench_reps", bench_reps},
                {"bench_videos", bench_videos},
                {"sweep_losses", losses},
                {"sweep_opts", opts}};
    }
};

// ------------------------------------------------------------- helpers ---

inline void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline void write_run_manifest(const RunConfig& cfg, const std::string& command, nlohmann::json extra = {}) {
    nlohmann::json j = {{"tool", "sitgru"}, {"version", kToolVersion}, {"command", command}, {"config", cfg.to_json()}};
    if (!extra.is_null()) j["result"] = std::move(extra);
    write_text(cfg.out / "run.json", j.dump(2) + "\n");
}

/// Runs fn(0..count-1) on up to SITGRU_THREADS workers (default: hardware
/// concurrency). Each index runs exactly once.
inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
    std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("SITGRU_THREADS")) {
        const std::size_t cap = detail::parse_count("SITGRU_THREADS", env);
        if (cap > 0) workers = std::min(workers, cap);
    }
    workers = std::min(workers, count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) fn(i);
        });
    for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------- data ---

struct Video {
    FrameSequence frames;  // raw grey levels
    std::vector<int> labels;
};

inline std::vector<Video> training_videos(const RunConfig& cfg, std::size_t count) {
    std::vector<Video> out;
    if (cfg.synth == "none") {
        for (const auto& m : cfg.train) {
            LabeledFrames lf = load_frames(m);
            if (lf.sequence.empty()) throw UsageError("train: manifest '" + m.string() + "' lists no frames");
            out.push_back({std::move(lf.sequence), std::move(lf.labels)});
        }
        return out;
    }
    for (std::size_t v = 0; v < count; ++v) {
        SyntheticVideo s = synth_generate(cfg.synthetic(derive_seed(cfg.seed, "synth-train", v)));
        out.push_back({std::move(s.sequence), std::move(s.labels)});
    }
    return out;
}

inline std::vector<Video> test_videos(const RunConfig& cfg) {
    std::vector<Video> out;
    if (!cfg.test.empty()) {
        LabeledFrames lf = load_frames(cfg.test);
        if (lf.sequence.empty()) throw UsageError("test: manifest '" + cfg.test.string() + "' lists no frames");
        out.push_back({std::move(lf.sequence), std::move(lf.labels)});
        return out;
    }
    if (cfg.synth == "none") throw UsageError("test: no test manifest given and synth=none");
    for (std::size_t v = 0; v < cfg.test_videos; ++v) {
        SyntheticConfig s = cfg.synthetic(derive_seed(cfg.seed, "synth-test", v));
        s.anomaly = cfg.test_anomaly;
        s.anomaly_start = cfg.test_window[0];
        s.anomaly_end = cfg.test_window[1];
        SyntheticVideo sv = synth_generate(s);
        out.push_back({std::move(sv.sequence), std::move(sv.labels)});
    }
    return out;
}

struct PreparedTraining {
    std::vector<Cuboid> cuboids;
    PreprocessStats stats;
    FrameSize source_size;
};

/// Preprocessing statistics over all training frames, then cuboids whose
/// input is the standardized clip and whose target is the [0,1] clip.
inline PreparedTraining prepare_training(const std::vector<Video>& videos, const RunConfig& cfg) {
    if (videos.empty()) throw UsageError("no training videos");
    const FrameSize target{cfg.frame_size, cfg.frame_size};
    PreparedTraining p;
    p.source_size = {videos.front().frames.height(), videos.front().frames.width()};
    FrameSequence all;
    for (const auto& v : videos) {
        if (v.frames.height() != p.source_size.height || v.frames.width() != p.source_size.width)
            throw FormatError("training videos differ in frame size");
        all.frames.insert(all.frames.end(), v.frames.frames.begin(), v.frames.frames.end());
    }
    p.stats = compute_preprocess_stats(scale_to_unit(all, target));
    for (const auto& v : videos) {
        const PreprocessResult r = preprocess(v.frames, p.stats, target);
        auto cs = build_cuboids(r.standardized, cfg.t, cfg.strides, &r.unit);
        p.cuboids.insert(p.cuboids.end(), std::make_move_iterator(cs.begin()), std::make_move_iterator(cs.end()));
    }
    return p;
}

// --------------------------------------------------------------- train ---

struct TrainOutcome {
    Checkpoint checkpoint;
    FitResult fit;
};

inline TrainOutcome train_model(const RunConfig& cfg, const EpochCallback& on_epoch = {}) {
    cfg.validate();
    const PreparedTraining prep = prepare_training(training_videos(cfg, cfg.synth_videos), cfg);
    TrainOutcome out;
    out.fit = fit(Model::create(cfg.network(), derive_seed(cfg.seed, "init")), prep.cuboids, cfg.training(), on_epoch);
    out.checkpoint.model = out.fit.model;
    out.checkpoint.stats = prep.stats;
    out.checkpoint.frame_size = {cfg.frame_size, cfg.frame_size};
    out.checkpoint.source_size = prep.source_size;
    out.checkpoint.metadata = {{"best_epoch", out.fit.best_epoch},
                               {"best_val_loss", out.fit.best_val_loss},
                               {"loss", std::string(to_string(cfg.loss))},
                               {"cuboids", prep.cuboids.size()}};
    return out;
}

inline std::string epoch_times_csv(std::span<const EpochRecord> records) {
    std::ostringstream os;
    os << "epoch,seconds\n";
    for (const auto& r : records) os << r.epoch << ',' << format_double(r.seconds) << '\n';
    return os.str();
}

/// checkpoint.bin, epochs.csv (epoch,train_loss,val_loss), epoch_times.csv
/// and run.json.
inline TrainOutcome cmd_train(const RunConfig& cfg, const EpochCallback& on_epoch = {}) {
    TrainOutcome out = train_model(cfg, on_epoch);
    ensure_dir(cfg.out);
    const auto ck = cfg.checkpoint_path();
    if (ck.has_parent_path()) ensure_dir(ck.parent_path());
    save_checkpoint(ck, out.checkpoint);
    write_text(cfg.out / "epochs.csv", epochs_csv(out.fit.epochs, false));
    write_text(cfg.out / "epoch_times.csv", epoch_times_csv(out.fit.epochs));
    write_run_manifest(cfg, "train", {{"best_epoch", out.fit.best_epoch}, {"best_val_loss", out.fit.best_val_loss}});
    return out;
}

// ---------------------------------------------------------------- eval ---

struct VideoScores {
    std::vector<double> errors;      // per-frame r_e
    std::vector<double> regularity;  // per-frame r_s
    std::vector<int> labels;
    std::vector<Tensor> heatmaps;    // per frame, when requested
};

struct EvalOutcome {
    std::vector<VideoScores> videos;
    std::vector<double> scores;  // 1 - r_s over all videos, in order
    std::vector<int> labels;
    RocResult roc;
};

/// Scores one video: stride-1 cuboids, L2 cost per cuboid, costs averaged in
/// groups of `group` and interpolated to frames, then r_s per video.
inline VideoScores score_video(const Checkpoint& ck, const Video& video, std::size_t group, bool heatmaps) {
    if (video.frames.empty()) throw UsageError("test video has no frames");
    if (video.frames.height() != ck.source_size.height || video.frames.width() != ck.source_size.width) {
        throw CompatibilityError("test frames are [" + std::to_string(video.frames.height()) + "x" +
                                 std::to_string(video.frames.width()) + "] but the checkpoint was trained on [" +
                                 std::to_string(ck.source_size.height) + "x" + std::to_string(ck.source_size.width) + "]");
    }
    const PreprocessResult r = preprocess(video.frames, ck.stats, ck.frame_size);
    const auto cuboids = build_cuboids(r.standardized, ck.model.config.timesteps, {1}, &r.unit);
    std::vector<TimedCost> costs;
    std::vector<Tensor> recons;
    for (const Cuboid& c : cuboids) {
        Tensor recon = forward_cuboid(ck.model, c.frames);
        costs.push_back({c.center(), reconstruction_error(c.reconstruction_target(), recon)});
        if (heatmaps) recons.push_back(std::move(recon));
    }
    VideoScores s;
    s.errors = frame_costs_from_cuboids(costs, video.frames.size(), group);
    s.regularity = regularity_score(s.errors);
    s.labels = video.labels;
    s.labels.resize(video.frames.size(), 0);
    if (heatmaps) {
        const std::size_t hw = ck.frame_size.pixels();
        for (std::size_t f = 0; f < video.frames.size(); ++f) {
            const std::size_t i = std::min(f, cuboids.size() - 1);
            const std::size_t t = f - i;
            Tensor frame({ck.frame_size.height, ck.frame_size.width});
            Tensor recon(frame.shape());
            std::copy_n(cuboids[i].reconstruction_target().data() + t * hw, hw, frame.data());
            std::copy_n(recons[i].data() + t * hw, hw, recon.data());
            s.heatmaps.push_back(residual_heatmap(frame, recon));
        }
    }
    return s;
}

inline EvalOutcome evaluate_videos(const Checkpoint& ck, const std::vector<Video>& videos, std::size_t group,
                                   bool heatmaps = false) {
    if (videos.empty()) throw UsageError("no test videos");
    EvalOutcome out;
    for (const Video& v : videos) {
        VideoScores s = score_video(ck, v, group, heatmaps);
        for (std::size_t f = 0; f < s.regularity.size(); ++f) {
            out.scores.push_back(1.0 - s.regularity[f]);
            out.labels.push_back(s.labels[f]);
        }
        out.videos.push_back(std::move(s));
    }
    out.roc = roc_auc_eer(out.scores, out.labels);
    return out;
}

namespace detail {

inline std::string polyline_svg(const std::string& title, const std::vector<std::pair<double, double>>& pts,
                                double x_max, double y_max) {
    const double w = 480, h = 320, pad = 40;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << pad << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n"
       << "<path d=\"M" << pad << ' ' << h - pad << " H" << w - pad << " M" << pad << ' ' << h - pad << " V" << pad
       << "\" stroke=\"black\" fill=\"none\"/>\n<path d=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double x = pad + (w - 2 * pad) * (x_max > 0 ? pts[i].first / x_max : 0.0);
        const double y = h - pad - (h - 2 * pad) * (y_max > 0 ? pts[i].second / y_max : 0.0);
        os << (i ? " L" : "M") << x << ' ' << y;
    }
    os << "\" stroke=\"steelblue\" stroke-width=\"1.5\" fill=\"none\"/>\n</svg>\n";
    return os.str();
}

}  // namespace detail

/// scores.csv, roc.csv, summary.json, run.json; heatmaps/ and SVG charts
/// when enabled.
inline EvalOutcome cmd_eval(const RunConfig& cfg) {
    cfg.validate();
    const Checkpoint ck = load_checkpoint(cfg.checkpoint_path());
    const std::vector<Video> videos = test_videos(cfg);
    EvalOutcome ev = evaluate_videos(ck, videos, cfg.batch, cfg.heatmaps);
    ensure_dir(cfg.out);

    std::ostringstream scores;
    scores << "video,frame,error,regularity,label,score\n";
    for (std::size_t v = 0; v < ev.videos.size(); ++v) {
        const auto& s = ev.videos[v];
        for (std::size_t f = 0; f < s.errors.size(); ++f)
            scores << v << ',' << f << ',' << format_double(s.errors[f]) << ',' << format_double(s.regularity[f]) << ','
                   << s.labels[f] << ',' << format_double(1.0 - s.regularity[f]) << '\n';
    }
    write_text(cfg.out / "scores.csv", scores.str());

    std::ostringstream roc;
    roc << "threshold,fpr,tpr\n";
    for (const auto& p : ev.roc.points)
        roc << format_double(p.threshold) << ',' << format_double(p.fpr) << ',' << format_double(p.tpr) << '\n';
    write_text(cfg.out / "roc.csv", roc.str());

    nlohmann::json summary = {{"auc", ev.roc.auc},
                              {"eer", ev.roc.eer},
                              {"frames", ev.scores.size()},
                              {"videos", ev.videos.size()},
                              {"checkpoint", cfg.checkpoint_path().generic_string()},
                              {"best_epoch", ck.metadata.value("best_epoch", 0)}};
    const auto times = cfg.checkpoint_path().parent_path() / "epoch_times.csv";
    if (std::filesystem::exists(times)) {
        std::ifstream in(times);
        std::string line;
        std::vector<double> secs;
        std::getline(in, line);
        while (std::getline(in, line))
            if (const auto c = line.find(','); c != std::string::npos) secs.push_back(std::stod(line.substr(c + 1)));
        if (!secs.empty())
            summary["timing"] = {{"epochs", secs.size()},
                                 {"min_s", *std::min_element(secs.begin(), secs.end())},
                                 {"max_s", *std::max_element(secs.begin(), secs.end())}};
    }
    write_text(cfg.out / "summary.json", summary.dump(2) + "\n");

    if (cfg.heatmaps) {
        ensure_dir(cfg.out / "heatmaps");
        for (std::size_t v = 0; v < ev.videos.size(); ++v)
            for (std::size_t f = 0; f < ev.videos[v].heatmaps.size(); ++f) {
                std::ostringstream name;
                name << "video" << v << "_frame" << std::setw(4) << std::setfill('0') << f << ".pgm";
                write_pgm(cfg.out / "heatmaps" / name.str(), scale(ev.videos[v].heatmaps[f], 255.0));
            }
    }
    if (cfg.svg) {
        const auto& r0 = ev.videos.front().regularity;
        std::vector<std::pair<double, double>> reg, rc;
        for (std::size_t f = 0; f < r0.size(); ++f) reg.emplace_back(static_cast<double>(f), r0[f]);
        for (const auto& p : ev.roc.points) rc.emplace_back(p.fpr, p.tpr);
        write_text(cfg.out / "regularity.svg",
                   detail::polyline_svg("regularity score, video 0", reg, static_cast<double>(r0.size() - 1), 1.0));
        write_text(cfg.out / "roc.svg", detail::polyline_svg("ROC (AUC " + format_double(ev.roc.auc) + ")", rc, 1.0, 1.0));
    }
    write_run_manifest(cfg, "eval", {{"auc", ev.roc.auc}, {"eer", ev.roc.eer}});
    return ev;
}

// ----------------------------------------------------------- gradcheck ---

struct GradCheckLine {
    CellKind kind;
    GradCheckReport cell;
    GradCheckReport network;
    bool passed() const { return cell.passed() && network.passed(); }
};

inline std::vector<GradCheckLine> run_gradcheck(const RunConfig& cfg) {
    if (cfg.gradcheck_seeds == 0) throw UsageError("gradcheck_seeds: must be positive");
    struct FaultGuard {
        explicit FaultGuard(bool on) { fault_injection::flip_candidate_gradient() = on; }
        ~FaultGuard() { fault_injection::flip_candidate_gradient() = false; }
    } guard(cfg.inject_fault);
    std::vector<GradCheckLine> lines;
    for (CellKind kind : cfg.kinds) {
        GradCheckLine line{kind, {}, {}};
        line.cell.subject = std::string(to_string(kind)) + "/cell";
        line.network.subject = std::string(to_string(kind)) + "/network";
        for (std::size_t s = 0; s < cfg.gradcheck_seeds; ++s) {
            const std::uint64_t seed = derive_seed(cfg.seed, "gradcheck", s);
            line.cell.merge(check_cell_gradients(kind, seed, {2, 3, 4, 2}));
            line.network.merge(check_network_gradients(kind, seed));
        }
        lines.push_back(std::move(line));
    }
    return lines;
}

inline std::string gradcheck_text(const std::vector<GradCheckLine>& lines) {
    std::ostringstream os;
    for (const auto& l : lines) {
        const GradCheckReport& worst = l.cell.max_rel_error >= l.network.max_rel_error ? l.cell : l.network;
        os << (l.passed() ? "PASS " : "FAIL ") << to_string(l.kind) << " max_rel_error=" << format_double(worst.max_rel_error)
           << " worst=" << (worst.worst.empty() ? "-" : worst.worst) << " checked=" << l.cell.checked + l.network.checked
           << '\n';
    }
    return os.str();
}

// --------------------------------------------------------------- bench ---

struct BenchRow {
    CellKind kind;
    std::vector<double> seconds;            // every epoch of every repetition
    std::vector<double> median_per_rep;
    double min = 0.0, max = 0.0, median = 0.0;
};

inline double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Trains each kind for bench_epochs epochs on the same cuboids, bench_reps
/// times, interleaving kinds inside every repetition.
inline std::vector<BenchRow> run_bench(const RunConfig& cfg) {
    cfg.validate();
    if (cfg.bench_reps == 0 || cfg.bench_epochs == 0) throw UsageError("bench_reps/bench_epochs: must be positive");
    const PreparedTraining prep = prepare_training(training_videos(cfg, cfg.bench_videos), cfg);
    std::vector<BenchRow> rows;
    for (CellKind k : cfg.bench_kinds) rows.push_back({k, {}, {}});
    for (std::size_t rep = 0; rep < cfg.bench_reps; ++rep) {
        for (auto& row : rows) {
            RunConfig c = cfg;
            c.cell = row.kind;
            TrainConfig tc = c.training();
            tc.epochs = cfg.bench_epochs;
            const FitResult r = fit(Model::create(c.network(), derive_seed(cfg.seed, "init")), prep.cuboids, tc);
            std::vector<double> secs;
            for (const auto& e : r.epochs) secs.push_back(e.seconds);
            row.median_per_rep.push_back(median_of(secs));
            row.seconds.insert(row.seconds.end(), secs.begin(), secs.end());
        }
    }
    for (auto& row : rows) {
        row.min = *std::min_element(row.seconds.begin(), row.seconds.end());
        row.max = *std::max_element(row.seconds.begin(), row.seconds.end());
        row.median = median_of(row.seconds);
    }
    return rows;
}

/// Repetitions in which the per-repetition medians are strictly increasing
/// in row order.
inline std::size_t ordered_repetitions(const std::vector<BenchRow>& rows) {
    if (rows.empty()) return 0;
    std::size_t ok = 0;
    for (std::size_t rep = 0; rep < rows.front().median_per_rep.size(); ++rep) {
        bool ordered = true;
        for (std::size_t i = 1; i < rows.size(); ++i)
            ordered = ordered && rows[i - 1].median_per_rep[rep] < rows[i].median_per_rep[rep];
        ok += ordered;
    }
    return ok;
}

inline std::vector<BenchRow> cmd_bench(const RunConfig& cfg) {
    const auto rows = run_bench(cfg);
    ensure_dir(cfg.out);
    std::ostringstream os;
    os << "kind,min_s,max_s,median_s\n";
    for (const auto& r : rows)
        os << to_string(r.kind) << ',' << format_double(r.min) << ',' << format_double(r.max) << ','
           << format_double(r.median) << '\n';
    write_text(cfg.out / "timing.csv", os.str());
    std::ostringstream reps;
    reps << "repetition,kind,median_s\n";
    for (std::size_t rep = 0; rep < cfg.bench_reps; ++rep)
        for (const auto& r : rows) reps << rep << ',' << to_string(r.kind) << ',' << format_double(r.median_per_rep[rep]) << '\n';
    write_text(cfg.out / "timing_reps.csv", reps.str());
    write_run_manifest(cfg, "bench", {{"ordered_repetitions", ordered_repetitions(rows)}, {"repetitions", cfg.bench_reps}});
    return rows;
}

// --------------------------------------------------------------- sweep ---

/// Trains and evaluates one model per (loss, optimizer) pair with the same
/// seed and data.
inline SweepResult run_sweep(const RunConfig& cfg) {
    cfg.validate();
    if (cfg.sweep_losses.empty() || cfg.sweep_opts.empty()) throw UsageError("sweep grid is empty");
    std::vector<std::pair<LossKind, OptimizerKind>> grid;
    for (LossKind l : cfg.sweep_losses)
        for (OptimizerKind o : cfg.sweep_opts) grid.emplace_back(l, o);
    const PreparedTraining prep = prepare_training(training_videos(cfg, cfg.synth_videos), cfg);
    const std::vector<Video> tests = test_videos(cfg);
    auto evaluate = [&](LossKind l, OptimizerKind o) {
        RunConfig c = cfg;
        c.loss = l;
        c.opt = o;
        Checkpoint ck;
        ck.model = fit(Model::create(c.network(), derive_seed(cfg.seed, "init")), prep.cuboids, c.training()).model;
        ck.stats = prep.stats;
        ck.frame_size = {cfg.frame_size, cfg.frame_size};
        ck.source_size = prep.source_size;
        const EvalOutcome ev = evaluate_videos(ck, tests, cfg.batch);
        return DetectionScore{ev.roc.auc, ev.roc.eer};
    };
    const std::string tag = cfg.test.empty() ? "synthetic" : cfg.test.generic_string();
    return sweep_loss_optimizer(tag, grid, evaluate, parallel_for);
}

inline std::string sweep_csv(const SweepResult& r) {
    std::ostringstream os;
    os << "loss,optimizer,auc,eer,status\n";
    for (const auto& c : r.cells) {
        os << to_string(c.loss) << ',' << to_string(c.optimizer) << ',';
        if (c.ok) os << format_double(c.score.auc) << ',' << format_double(c.score.eer) << ",ok\n";
        else os << ",,failed\n";
    }
    if (r.best) os << "best=" << to_string(r.cells[*r.best].loss) << ',' << to_string(r.cells[*r.best].optimizer) << '\n';
    else os << "best=none\n";
    return os.str();
}

inline SweepResult cmd_sweep(const RunConfig& cfg) {
    const SweepResult r = run_sweep(cfg);
    ensure_dir(cfg.out);
    write_text(cfg.out / "sweep.csv", sweep_csv(r));
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& c : r.cells)
        if (!c.ok) failures.push_back({{"loss", to_string(c.loss)}, {"optimizer", to_string(c.optimizer)}, {"error", c.error}});
    write_run_manifest(cfg, "sweep", {{"dataset", r.dataset}, {"failed", failures}});
    return r;
}

// --------------------------------------------------------------- synth ---

inline std::filesystem::path cmd_synth(const RunConfig& cfg) {
    SyntheticConfig s = cfg.synthetic(derive_seed(cfg.seed, "synth"));
    if (cfg.window.size() != 2) throw UsageError("window: expected start,end");
    s.anomaly = cfg.anomaly;
    s.anomaly_start = cfg.window[0];
    s.anomaly_end = cfg.window[1];
    try {
        s.validate();
    } catch (const ArgumentError& e) {
        throw UsageError(e.what());
    }
    const SyntheticVideo v = synth_generate(s);
    ensure_dir(cfg.out);
    const auto manifest = write_dataset(cfg.out, v.sequence, v.labels);
    write_run_manifest(cfg, "synth", {{"frames", v.sequence.size()}, {"manifest", manifest.generic_string()}});
    return manifest;
}

}  // namespace sitgru
