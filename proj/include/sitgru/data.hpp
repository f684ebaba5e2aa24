// SPDX-License-Identifier: Apache-2.0
//
// Frame ingestion (binary PGM + JSON-lines manifests), preprocessing,
// temporal cuboid construction and a synthetic moving-square generator.
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sitgru/cuboid.hpp"
#include "sitgru/error.hpp"
#include "sitgru/random.hpp"
#include "sitgru/tensor.hpp"

namespace sitgru {

/// Grayscale frames of one video, each [H x W].
struct FrameSequence {
    std::vector<Tensor> frames;

    std::size_t size() const { return frames.size(); }
    bool empty() const { return frames.empty(); }
    std::size_t height() const { return frames.empty() ? 0 : frames.front().dim(0); }
    std::size_t width() const { return frames.empty() ? 0 : frames.front().dim(1); }
};

struct FrameSize {
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t pixels() const { return height * width; }
    friend bool operator==(const FrameSize&, const FrameSize&) = default;
};

// ---------------------------------------------------------------- PGM ---

inline Tensor read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    auto fail = [&](const std::string& why) { return FormatError("'" + path.string() + "': " + why); };
    auto next_token = [&]() {
        std::string tok;
        while (in) {
            int c = in.peek();
            if (c == '#') {
                std::string skip;
                std::getline(in, skip);
            } else if (std::isspace(c)) {
                in.get();
            } else {
                break;
            }
        }
        in >> tok;
        return tok;
    };
    if (next_token() != "P5") throw fail("not a binary PGM (P5)");
    std::size_t width = 0, height = 0, maxval = 0;
    try {
        width = std::stoul(next_token());
        height = std::stoul(next_token());
        maxval = std::stoul(next_token());
    } catch (const std::exception&) {
        throw fail("malformed header");
    }
    if (width == 0 || height == 0) throw fail("zero-sized image");
    if (maxval != 255) throw fail("maxval " + std::to_string(maxval) + " unsupported (need 255)");
    in.get();  // single whitespace after maxval
    std::vector<unsigned char> bytes(width * height);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw fail("truncated pixel data");
    Tensor t({height, width});
    for (std::size_t i = 0; i < bytes.size(); ++i) t[i] = bytes[i];
    return t;
}

/// Writes a frame as P5; values are rounded and clamped to [0, 255].
inline void write_pgm(const std::filesystem::path& path, const Tensor& frame) {
    if (frame.rank() != 2) throw DimensionError("write_pgm expects [H x W], got " + shape_string(frame.shape()));
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << "P5\n" << frame.dim(1) << ' ' << frame.dim(0) << "\n255\n";
    std::vector<unsigned char> bytes(frame.size());
    for (std::size_t i = 0; i < frame.size(); ++i)
        bytes[i] = static_cast<unsigned char>(std::clamp(std::lround(frame[i]), 0L, 255L));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

// ----------------------------------------------------------- manifest ---

struct ManifestEntry {
    std::filesystem::path path;
    int label = 0;
};

/// One object per line: {"path": str, "label": 0|1}. Relative paths resolve
/// against the manifest's directory.
inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw IoError("cannot open manifest '" + manifest.string() + "'");
    std::vector<ManifestEntry> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(manifest.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (!j.contains("path") || !j["path"].is_string())
            throw FormatError(manifest.string() + ":" + std::to_string(line_no) + ": missing \"path\"");
        ManifestEntry e;
        e.path = j["path"].get<std::string>();
        if (e.path.is_relative()) e.path = manifest.parent_path() / e.path;
        e.label = j.value("label", 0);
        if (e.label != 0 && e.label != 1)
            throw FormatError(manifest.string() + ":" + std::to_string(line_no) + ": label must be 0 or 1");
        out.push_back(std::move(e));
    }
    return out;
}

inline void write_manifest(const std::filesystem::path& manifest, const std::vector<ManifestEntry>& entries) {
    std::ofstream out(manifest, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest '" + manifest.string() + "'");
    for (const auto& e : entries) {
        nlohmann::json j;
        j["path"] = e.path.generic_string();
        j["label"] = e.label;
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("write failed for '" + manifest.string() + "'");
}

struct LabeledFrames {
    FrameSequence sequence;
    std::vector<int> labels;
};

inline LabeledFrames load_frames(const std::vector<ManifestEntry>& manifest) {
    LabeledFrames out;
    for (const auto& e : manifest) {
        Tensor frame = read_pgm(e.path);
        if (!out.sequence.empty() && frame.shape() != out.sequence.frames.front().shape()) {
            throw FormatError("'" + e.path.string() + "' is " + shape_string(frame.shape()) + ", earlier frames are " +
                              shape_string(out.sequence.frames.front().shape()));
        }
        out.sequence.frames.push_back(std::move(frame));
        out.labels.push_back(e.label);
    }
    return out;
}

inline LabeledFrames load_frames(const std::filesystem::path& manifest) { return load_frames(read_manifest(manifest)); }

// ------------------------------------------------------ preprocessing ---

/// Bilinear resize with corner-aligned sampling: output pixel (i, j) samples
/// the source at (i * (H-1)/(H'-1), j * (W-1)/(W'-1)).
inline Tensor resize_bilinear(const Tensor& frame, FrameSize target) {
    const std::size_t h = frame.dim(0), w = frame.dim(1);
    Tensor out({target.height, target.width});
    auto coord = [](std::size_t i, std::size_t src, std::size_t dst) {
        return dst > 1 ? static_cast<double>(i) * static_cast<double>(src - 1) / static_cast<double>(dst - 1) : 0.0;
    };
    for (std::size_t i = 0; i < target.height; ++i) {
        const double y = coord(i, h, target.height);
        const std::size_t y0 = std::min(static_cast<std::size_t>(y), h - 1);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const double fy = y - static_cast<double>(y0);
        for (std::size_t j = 0; j < target.width; ++j) {
            const double x = coord(j, w, target.width);
            const std::size_t x0 = std::min(static_cast<std::size_t>(x), w - 1);
            const std::size_t x1 = std::min(x0 + 1, w - 1);
            const double fx = x - static_cast<double>(x0);
            const double top = frame.at(y0, x0) * (1.0 - fx) + frame.at(y0, x1) * fx;
            const double bottom = frame.at(y1, x0) * (1.0 - fx) + frame.at(y1, x1) * fx;
            out.at(i, j) = top * (1.0 - fy) + bottom * fy;
        }
    }
    return out;
}

/// Resize, then map [0,255] to [0,1].
inline FrameSequence scale_to_unit(const FrameSequence& seq, FrameSize target) {
    if (seq.empty()) throw ArgumentError("preprocess: empty frame sequence");
    FrameSequence out;
    out.frames.reserve(seq.size());
    for (const Tensor& f : seq.frames) out.frames.push_back(scale(resize_bilinear(f, target), 1.0 / 255.0));
    return out;
}

/// Statistics learned from training frames only.
struct PreprocessStats {
    Tensor mean_image;  // [H x W], in [0,1] units
    double mean = 0.0;  // of mean-subtracted training pixels
    double stddev = 1.0;
    bool from_training = false;
};

/// Two-pass statistics over the (already resized and scaled) training frames.
inline PreprocessStats compute_preprocess_stats(const FrameSequence& training_unit_frames) {
    if (training_unit_frames.empty()) throw ArgumentError("preprocess: no training frames for statistics");
    PreprocessStats s;
    s.mean_image = Tensor(training_unit_frames.frames.front().shape());
    for (const Tensor& f : training_unit_frames.frames) axpy(s.mean_image, f);
    const double n_frames = static_cast<double>(training_unit_frames.size());
    for (double& v : s.mean_image.values()) v /= n_frames;

    double sum = 0.0, count = 0.0;
    for (const Tensor& f : training_unit_frames.frames)
        for (std::size_t i = 0; i < f.size(); ++i) {
            sum += f[i] - s.mean_image[i];
            count += 1.0;
        }
    s.mean = sum / count;
    double sq = 0.0;
    for (const Tensor& f : training_unit_frames.frames)
        for (std::size_t i = 0; i < f.size(); ++i) {
            const double d = f[i] - s.mean_image[i] - s.mean;
            sq += d * d;
        }
    s.stddev = std::sqrt(sq / count);
    if (s.stddev == 0.0) s.stddev = 1.0;  // all-identical frames stay at zero
    s.from_training = true;
    return s;
}

struct PreprocessResult {
    FrameSequence unit;          // resized, [0,1]
    FrameSequence standardized;  // mean-image subtracted, zero mean / unit variance
    PreprocessStats stats;
};

/// Resize -> [0,1] -> subtract the mean image -> standardize. When `stats`
/// is empty, the sequence is treated as training data and statistics are
/// computed from it.
inline PreprocessResult preprocess(const FrameSequence& seq, const std::optional<PreprocessStats>& stats, FrameSize target) {
    PreprocessResult r;
    r.unit = scale_to_unit(seq, target);
    r.stats = stats ? *stats : compute_preprocess_stats(r.unit);
    if (!r.stats.from_training) throw ArgumentError("preprocess: statistics were not computed from training frames");
    if (r.stats.mean_image.shape() != Shape{target.height, target.width}) {
        throw DimensionError("preprocess: mean image " + shape_string(r.stats.mean_image.shape()) + " vs target [" +
                             std::to_string(target.height) + "x" + std::to_string(target.width) + "]");
    }
    r.standardized.frames.reserve(r.unit.size());
    for (const Tensor& f : r.unit.frames) {
        Tensor z(f.shape());
        for (std::size_t i = 0; i < f.size(); ++i) z[i] = (f[i] - r.stats.mean_image[i] - r.stats.mean) / r.stats.stddev;
        r.standardized.frames.push_back(std::move(z));
    }
    return r;
}

// ------------------------------------------------------------ cuboids ---

inline std::size_t cuboid_count(std::size_t length, std::size_t T, std::size_t stride) {
    const std::size_t span = (T - 1) * stride;
    return length > span ? length - span : 0;
}

/// Every window {i, i+s, ..., i+(T-1)s} for each stride s. `targets`, when
/// given, must align with `seq` and supplies each cuboid's target frames.
inline std::vector<Cuboid> build_cuboids(const FrameSequence& seq, std::size_t T, const std::vector<std::size_t>& strides,
                                         const FrameSequence* targets = nullptr) {
    if (T == 0) throw ArgumentError("build_cuboids: T must be positive");
    if (strides.empty()) throw ArgumentError("build_cuboids: no strides given");
    const std::size_t max_stride = *std::max_element(strides.begin(), strides.end());
    if (*std::min_element(strides.begin(), strides.end()) == 0) throw ArgumentError("build_cuboids: stride must be >= 1");
    const std::size_t min_length = (T - 1) * max_stride + 1;
    if (seq.size() < min_length) {
        throw ArgumentError("build_cuboids: sequence of " + std::to_string(seq.size()) + " frames is too short, need at least " +
                            std::to_string(min_length));
    }
    if (targets && targets->size() != seq.size()) throw DimensionError("build_cuboids: target sequence length differs");
    const std::size_t h = seq.height(), w = seq.width();
    std::vector<Cuboid> out;
    for (std::size_t s : strides) {
        for (std::size_t i = 0; i + (T - 1) * s < seq.size(); ++i) {
            Cuboid c;
            c.stride = s;
            c.frames = Tensor({T, h, w});
            if (targets) c.target = Tensor({T, h, w});
            for (std::size_t t = 0; t < T; ++t) {
                const std::size_t idx = i + t * s;
                c.indices.push_back(idx);
                std::copy_n(seq.frames[idx].data(), h * w, c.frames.data() + t * h * w);
                if (targets) std::copy_n(targets->frames[idx].data(), h * w, c.target.data() + t * h * w);
            }
            out.push_back(std::move(c));
        }
    }
    return out;
}

// ---------------------------------------------------------- synthetic ---

enum class AnomalyType { None, Speed, ExtraObject };

inline std::string_view to_string(AnomalyType a) {
    switch (a) {
        case AnomalyType::None: return "none";
        case AnomalyType::Speed: return "speed";
        case AnomalyType::ExtraObject: return "extra_object";
    }
    return "?";
}

inline AnomalyType parse_anomaly_type(std::string_view s) {
    for (AnomalyType a : {AnomalyType::None, AnomalyType::Speed, AnomalyType::ExtraObject})
        if (to_string(a) == s) return a;
    throw ArgumentError("unknown anomaly type '" + std::string(s) + "' (expected none|speed|extra_object)");
}

struct SyntheticConfig {
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t length = 60;
    std::size_t object_size = 6;
    double speed = 1.0;  // pixels per frame
    AnomalyType anomaly = AnomalyType::None;
    double speed_factor = 3.0;
    std::size_t anomaly_start = 0;
    std::size_t anomaly_end = 0;  // exclusive
    double background = 16.0;
    double foreground = 224.0;
    double noise = 0.0;  // uniform +/- amplitude in grey levels
    std::uint64_t seed = 0;

    void validate() const {
        if (height < 2 || width < 2 || length == 0) throw ArgumentError("synthetic: frame size and length must be positive");
        if (object_size == 0 || object_size >= std::min(height, width))
            throw ArgumentError("synthetic: object_size must be smaller than the frame");
        if (speed < 1.0) throw ArgumentError("synthetic: speed must be >= 1 px/frame");
        if (anomaly == AnomalyType::Speed && speed_factor < 1.0) throw ArgumentError("synthetic: speed_factor must be >= 1");
        if (anomaly_start > anomaly_end || anomaly_end > length)
            throw ArgumentError("synthetic: anomaly window [" + std::to_string(anomaly_start) + "," +
                                std::to_string(anomaly_end) + ") outside the sequence");
        if (background < 0 || background > 255 || foreground < 0 || foreground > 255 || noise < 0)
            throw ArgumentError("synthetic: intensities must lie in [0,255]");
    }
};

struct SyntheticVideo {
    FrameSequence sequence;
    std::vector<int> labels;
};

namespace detail {

struct Mover {
    double x, y, vx, vy;

    void advance(double factor, double max_x, double max_y) {
        x += vx * factor;
        y += vy * factor;
        // Reflect off the walls.
        for (int guard = 0; guard < 8 && (x < 0.0 || x > max_x); ++guard) x = x < 0.0 ? -x : 2.0 * max_x - x, vx = -vx;
        for (int guard = 0; guard < 8 && (y < 0.0 || y > max_y); ++guard) y = y < 0.0 ? -y : 2.0 * max_y - y, vy = -vy;
        x = std::clamp(x, 0.0, max_x);
        y = std::clamp(y, 0.0, max_y);
    }
};

inline void paint_square(Tensor& frame, double x, double y, std::size_t size, double value) {
    const std::size_t x0 = static_cast<std::size_t>(std::lround(x));
    const std::size_t y0 = static_cast<std::size_t>(std::lround(y));
    for (std::size_t i = y0; i < std::min(y0 + size, frame.dim(0)); ++i)
        for (std::size_t j = x0; j < std::min(x0 + size, frame.dim(1)); ++j) frame.at(i, j) = value;
}

}  // namespace detail

/// A bright square bouncing diagonally across a dark background. Inside the
/// anomaly window the square speeds up (Speed) or a second square appears
/// (ExtraObject); those frames are labelled 1.
inline SyntheticVideo synth_generate(const SyntheticConfig& cfg) {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, "synthetic"));
    const double max_x = static_cast<double>(cfg.width - cfg.object_size);
    const double max_y = static_cast<double>(cfg.height - cfg.object_size);
    auto random_mover = [&]() {
        // Diagonal-ish heading in a random quadrant.
        const double pi = 3.14159265358979323846;
        const double angle = uniform(rng, 0.15, 0.35) * pi + static_cast<double>(rng() % 4) * pi / 2.0;
        return detail::Mover{uniform(rng, 0.0, max_x), uniform(rng, 0.0, max_y), cfg.speed * std::cos(angle),
                             cfg.speed * std::sin(angle)};
    };
    detail::Mover main = random_mover();
    detail::Mover extra = random_mover();
    Rng noise_rng(derive_seed(cfg.seed, "synthetic-noise"));

    SyntheticVideo out;
    for (std::size_t t = 0; t < cfg.length; ++t) {
        const bool anomalous = t >= cfg.anomaly_start && t < cfg.anomaly_end && cfg.anomaly != AnomalyType::None;
        Tensor frame({cfg.height, cfg.width}, cfg.background);
        detail::paint_square(frame, main.x, main.y, cfg.object_size, cfg.foreground);
        if (anomalous && cfg.anomaly == AnomalyType::ExtraObject)
            detail::paint_square(frame, extra.x, extra.y, cfg.object_size, cfg.foreground);
        if (cfg.noise > 0.0)
            for (double& v : frame.values()) v = std::clamp(v + uniform(noise_rng, -cfg.noise, cfg.noise), 0.0, 255.0);
        out.sequence.frames.push_back(std::move(frame));
        out.labels.push_back(anomalous ? 1 : 0);

        const bool next_fast = cfg.anomaly == AnomalyType::Speed && t + 1 >= cfg.anomaly_start && t + 1 < cfg.anomaly_end;
        main.advance(next_fast ? cfg.speed_factor : 1.0, max_x, max_y);
        extra.advance(1.0, max_x, max_y);
    }
    return out;
}

/// Writes frame_0000.pgm ... and manifest.jsonl into `dir`.
inline std::filesystem::path write_dataset(const std::filesystem::path& dir, const FrameSequence& seq,
                                           const std::vector<int>& labels) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
    std::vector<ManifestEntry> entries;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        std::ostringstream name;
        name << "frame_" << std::setw(4) << std::setfill('0') << i << ".pgm";
        write_pgm(dir / name.str(), seq.frames[i]);
        entries.push_back({name.str(), i < labels.size() ? labels[i] : 0});
    }
    const auto manifest = dir / "manifest.jsonl";
    write_manifest(manifest, entries);
    return manifest;
}

}  // namespace sitgru
