// SPDX-License-Identifier: Apache-2.0
//
// Binary parameter files: one line of JSON describing the tensors, a
// newline, then every tensor's values as little-endian IEEE-754 doubles in
// the order the header lists them.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sitgru/cells.hpp"
#include "sitgru/data.hpp"
#include "sitgru/error.hpp"
#include "sitgru/network.hpp"

namespace sitgru {

namespace detail {

inline void write_doubles(std::ostream& out, std::span<const double> values) {
    for (double v : values) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
        char buf[8];
        std::memcpy(buf, &bits, 8);
        out.write(buf, 8);
    }
}

inline void read_doubles(std::istream& in, std::span<double> values, const std::string& what) {
    for (double& v : values) {
        char buf[8];
        if (!in.read(buf, 8)) throw FormatError(what + ": truncated tensor data");
        std::uint64_t bits;
        std::memcpy(&bits, buf, 8);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
        v = std::bit_cast<double>(bits);
    }
}

struct NamedTensor {
    std::string name;
    Tensor* tensor;
};

inline nlohmann::json describe(const std::vector<NamedTensor>& tensors) {
    nlohmann::json blobs = nlohmann::json::array();
    for (const auto& t : tensors) blobs.push_back({{"name", t.name}, {"shape", t.tensor->shape()}});
    return blobs;
}

inline void write_blob_file(const std::filesystem::path& path, const nlohmann::json& header,
                            const std::vector<NamedTensor>& tensors) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << header.dump() << '\n';
    for (const auto& t : tensors) write_doubles(out, t.tensor->values());
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline nlohmann::json read_header(std::istream& in, const std::string& what) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError(what + ": missing header");
    try {
        return nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(what + ": bad header: " + e.what());
    }
}

// Fills `tensors` from the stream, checking names and shapes against the header.
inline void read_blobs(std::istream& in, const nlohmann::json& header, const std::vector<NamedTensor>& tensors,
                       const std::string& what) {
    const auto& blobs = header.at("blobs");
    if (blobs.size() != tensors.size()) {
        throw FormatError(what + ": header lists " + std::to_string(blobs.size()) + " tensors, expected " +
                          std::to_string(tensors.size()));
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const auto name = blobs[i].at("name").get<std::string>();
        const auto shape = blobs[i].at("shape").get<Shape>();
        if (name != tensors[i].name || shape != tensors[i].tensor->shape()) {
            throw FormatError(what + ": tensor #" + std::to_string(i) + " is " + name + shape_string(shape) + ", expected " +
                              tensors[i].name + shape_string(tensors[i].tensor->shape()));
        }
        read_doubles(in, tensors[i].tensor->values(), what);
    }
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError(what + ": trailing bytes after tensor data");
}

inline std::vector<NamedTensor> named_cell_tensors(CellParams& p, const std::string& prefix) {
    std::vector<NamedTensor> out;
    const auto layout = gate_layout(p.kind);
    for (std::size_t g = 0; g < layout.size(); ++g) {
        const std::string suffix = "_" + std::string(to_string(layout[g]));
        out.push_back({prefix + "W" + suffix, &p.gates[g].W});
        out.push_back({prefix + "U" + suffix, &p.gates[g].U});
        out.push_back({prefix + "b" + suffix, &p.gates[g].b});
    }
    return out;
}

}  // namespace detail

// ----------------------------------------------------------- cell file ---

inline void save_cell_params(const std::filesystem::path& path, const CellParams& params) {
    CellParams p = params;
    auto tensors = detail::named_cell_tensors(p, "");
    nlohmann::json header = {{"format", "sitgru-cell"},
                             {"version", 1},
                             {"kind", std::string(to_string(p.kind))},
                             {"input", p.input_size},
                             {"hidden", p.hidden_size},
                             {"blobs", detail::describe(tensors)}};
    detail::write_blob_file(path, header, tensors);
}

inline CellParams load_cell_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    const auto header = detail::read_header(in, path.string());
    try {
        if (header.at("format") != "sitgru-cell") throw FormatError(path.string() + ": not a cell parameter file");
        CellParams p = CellParams::zeros(parse_cell_kind(header.at("kind").get<std::string>()),
                                         header.at("input").get<std::size_t>(), header.at("hidden").get<std::size_t>());
        detail::read_blobs(in, header, detail::named_cell_tensors(p, ""), path.string());
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------- checkpoint ---

struct Checkpoint {
    Model model;
    PreprocessStats stats;
    FrameSize frame_size;   // network frame size after resizing
    FrameSize source_size;  // raw frame size the model was trained on
    nlohmann::json metadata = nlohmann::json::object();
};

inline nlohmann::json config_to_json(const NetworkConfig& c) {
    return {{"layer_units", c.layer_units},
            {"cell", std::string(to_string(c.cell_kind))},
            {"inter_activation", to_string(c.inter_activation)},
            {"frame_pixels", c.frame_pixels},
            {"timesteps", c.timesteps}};
}

inline NetworkConfig config_from_json(const nlohmann::json& j) {
    NetworkConfig c;
    c.layer_units = j.at("layer_units").get<std::vector<std::size_t>>();
    c.cell_kind = parse_cell_kind(j.at("cell").get<std::string>());
    const auto act = j.at("inter_activation").get<std::string>();
    if (act == "tanh") c.inter_activation = ActivationKind::Tanh;
    else if (act == "sigmoid") c.inter_activation = ActivationKind::Sigmoid;
    else if (act == "relu") c.inter_activation = ActivationKind::Relu;
    else throw FormatError("unknown activation '" + act + "'");
    c.frame_pixels = j.at("frame_pixels").get<std::size_t>();
    c.timesteps = j.at("timesteps").get<std::size_t>();
    c.validate();
    return c;
}

namespace detail {

struct CheckpointTensors {
    std::vector<NamedTensor> list;
    Tensor scalars{Shape{2}};  // preprocessing mean, stddev
};

inline void collect_checkpoint_tensors(Checkpoint& ck, CheckpointTensors& out) {
    Model& m = ck.model;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const std::string prefix = "layer" + std::to_string(l) + ".";
        for (auto& t : named_cell_tensors(m.layers[l], prefix)) out.list.push_back(t);
        out.list.push_back({prefix + "bn.gamma", &m.norms[l].gamma});
        out.list.push_back({prefix + "bn.beta", &m.norms[l].beta});
        out.list.push_back({prefix + "bn.running_mean", &m.norms[l].running_mean});
        out.list.push_back({prefix + "bn.running_var", &m.norms[l].running_var});
    }
    out.list.push_back({"readout.weight", &m.readout.weight});
    out.list.push_back({"readout.bias", &m.readout.bias});
    for (auto& t : named_cell_tensors(m.output_cell, "output.")) out.list.push_back(t);
    out.list.push_back({"preprocess.mean_image", &ck.stats.mean_image});
    out.list.push_back({"preprocess.scalars", &out.scalars});
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
    Checkpoint ck = checkpoint;
    detail::CheckpointTensors tensors;
    tensors.scalars[0] = ck.stats.mean;
    tensors.scalars[1] = ck.stats.stddev;
    detail::collect_checkpoint_tensors(ck, tensors);
    nlohmann::json header = {{"format", "sitgru-checkpoint"},
                             {"version", 1},
                             {"config", config_to_json(ck.model.config)},
                             {"frame_size", {ck.frame_size.height, ck.frame_size.width}},
                             {"source_size", {ck.source_size.height, ck.source_size.width}},
                             {"metadata", ck.metadata},
                             {"blobs", detail::describe(tensors.list)}};
    detail::write_blob_file(path, header, tensors.list);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
    const auto header = detail::read_header(in, path.string());
    try {
        if (header.at("format") != "sitgru-checkpoint") throw FormatError(path.string() + ": not a checkpoint");
        Checkpoint ck;
        ck.model = Model::create(config_from_json(header.at("config")), 0);
        const auto fs = header.at("frame_size").get<std::vector<std::size_t>>();
        const auto ss = header.at("source_size").get<std::vector<std::size_t>>();
        ck.frame_size = {fs.at(0), fs.at(1)};
        ck.source_size = {ss.at(0), ss.at(1)};
        if (ck.frame_size.pixels() != ck.model.config.frame_pixels)
            throw FormatError(path.string() + ": frame size disagrees with frame_pixels");
        ck.metadata = header.value("metadata", nlohmann::json::object());
        ck.stats.mean_image = Tensor({ck.frame_size.height, ck.frame_size.width});
        detail::CheckpointTensors tensors;
        detail::collect_checkpoint_tensors(ck, tensors);
        detail::read_blobs(in, header, tensors.list, path.string());
        ck.stats.mean = tensors.scalars[0];
        ck.stats.stddev = tensors.scalars[1];
        ck.stats.from_training = true;
        return ck;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace sitgru
