#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spn/error.hpp"
#include "spn/network.hpp"
#include "spn/optimizer.hpp"

namespace spn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format stores raw little-endian doubles");

struct BadMagicError : DataError {
    using DataError::DataError;
};
struct VersionError : DataError {
    using DataError::DataError;
};
struct TruncatedError : DataError {
    using DataError::DataError;
};
struct FormatError : DataError {
    using DataError::DataError;
};

// Training-log summary carried inside the checkpoint header.
struct TrainingSummary {
    int epochs_run = 0;
    double final_loss = 0.0;
    double final_accuracy = 0.0;
    double mean_walk_iterations = 0.0;
};

namespace detail {

constexpr char kCheckpointMagic[4] = {'S', 'P', 'N', '1'};
constexpr int kCheckpointVersion = 1;

inline nlohmann::json spec_to_json(const NetworkSpec& spec) {
    nlohmann::json j;
    j["input"] = {spec.in_channels, spec.in_height, spec.in_width};
    j["class_count"] = spec.class_count;
    j["loss_mode"] = spec.loss_mode == LossMode::softmax_cross_entropy ? "softmax" : "sigmoid";
    j["sp_force_uniform"] = spec.sp_force_uniform;
    j["sp_config"] = {{"epsilon_factor", spec.sp_config.epsilon_factor},
                      {"max_iters", spec.sp_config.max_iters},
                      {"convergence_tol", spec.sp_config.convergence_tol},
                      {"damping", spec.sp_config.damping},
                      {"degenerate_threshold", spec.sp_config.degenerate_threshold}};
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : spec.layers) {
        nlohmann::json jl;
        switch (l.kind) {
        case LayerKind::conv:
            jl["kind"] = "conv";
            jl["out"] = l.out_channels;
            jl["kernel"] = l.kernel;
            jl["stride"] = l.stride;
            jl["padding"] = l.padding;
            break;
        case LayerKind::relu: jl["kind"] = "relu"; break;
        case LayerKind::maxpool2: jl["kind"] = "maxpool2"; break;
        case LayerKind::soft_proposal: jl["kind"] = "sp"; break;
        case LayerKind::global_avg_pool: jl["kind"] = "gap"; break;
        case LayerKind::fully_connected: jl["kind"] = "fc"; break;
        }
        layers.push_back(jl);
    }
    j["layers"] = layers;
    return j;
}

inline NetworkSpec spec_from_json(const nlohmann::json& j) {
    NetworkSpec spec;
    spec.in_channels = j.at("input").at(0).get<std::size_t>();
    spec.in_height = j.at("input").at(1).get<std::size_t>();
    spec.in_width = j.at("input").at(2).get<std::size_t>();
    spec.class_count = j.at("class_count").get<std::size_t>();
    const std::string mode = j.at("loss_mode").get<std::string>();
    if (mode == "softmax")
        spec.loss_mode = LossMode::softmax_cross_entropy;
    else if (mode == "sigmoid")
        spec.loss_mode = LossMode::per_class_sigmoid;
    else
        throw FormatError("checkpoint: unknown loss mode '" + mode + "'");
    spec.sp_force_uniform = j.at("sp_force_uniform").get<bool>();
    const auto& sp = j.at("sp_config");
    spec.sp_config.epsilon_factor = sp.at("epsilon_factor").get<double>();
    spec.sp_config.max_iters = sp.at("max_iters").get<int>();
    spec.sp_config.convergence_tol = sp.at("convergence_tol").get<double>();
    spec.sp_config.damping = sp.at("damping").get<double>();
    spec.sp_config.degenerate_threshold = sp.at("degenerate_threshold").get<double>();
    for (const auto& jl : j.at("layers")) {
        const std::string kind = jl.at("kind").get<std::string>();
        if (kind == "conv")
            spec.layers.push_back(conv_spec(jl.at("out").get<std::size_t>(), jl.at("kernel").get<std::size_t>(),
                                            jl.at("stride").get<std::size_t>(),
                                            jl.at("padding").get<std::size_t>()));
        else if (kind == "relu")
            spec.layers.push_back({LayerKind::relu});
        else if (kind == "maxpool2")
            spec.layers.push_back({LayerKind::maxpool2});
        else if (kind == "sp")
            spec.layers.push_back({LayerKind::soft_proposal});
        else if (kind == "gap")
            spec.layers.push_back({LayerKind::global_avg_pool});
        else if (kind == "fc")
            spec.layers.push_back({LayerKind::fully_connected});
        else
            throw FormatError("checkpoint: unknown layer kind '" + kind + "'");
    }
    return spec;
}

} // namespace detail

// Single-file format: 4-byte magic "SPN1", 4-byte little-endian header
// length, UTF-8 JSON header (version, architecture, optimizer, training
// summary, tensor index with shapes and byte offsets), then the tensors as
// raw little-endian doubles in index order. Offsets are relative to the
// start of the data section.
inline void save_checkpoint(Network& net, const OptimizerConfig& opt, const SgdState* state,
                            const TrainingSummary& training, const std::filesystem::path& path) {
    auto refs = parameter_refs(net);

    nlohmann::json header;
    header["version"] = detail::kCheckpointVersion;
    header["spec"] = detail::spec_to_json(net.spec);
    header["optimizer"] = {{"learning_rate", opt.learning_rate}, {"momentum", opt.momentum},
                           {"weight_decay", opt.weight_decay},  {"batch_size", opt.batch_size},
                           {"epochs", opt.epochs},              {"seed", opt.seed}};
    header["training"] = {{"epochs_run", training.epochs_run},
                          {"final_loss", training.final_loss},
                          {"final_accuracy", training.final_accuracy},
                          {"mean_walk_iterations", training.mean_walk_iterations}};

    nlohmann::json index = nlohmann::json::array();
    std::size_t offset = 0;
    auto add_entry = [&](const std::string& name, const std::vector<std::size_t>& shape, std::size_t size,
                         const char* role) {
        index.push_back({{"name", name}, {"shape", shape}, {"offset", offset}, {"role", role}});
        offset += size * sizeof(double);
    };
    for (const auto& r : refs) add_entry(r.name, r.shape, r.size, "param");
    if (state != nullptr) {
        if (state->velocity.size() != refs.size())
            throw InputError("save_checkpoint: optimizer state does not match the network");
        for (std::size_t i = 0; i < refs.size(); ++i)
            add_entry(refs[i].name + ".velocity", refs[i].shape, state->velocity[i].size(), "velocity");
    }
    header["tensors"] = index;

    const std::string header_text = header.dump();
    if (header_text.size() > 0xffffffffull) throw InputError("save_checkpoint: header too large");

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("save_checkpoint: cannot open " + path.string());
    f.write(detail::kCheckpointMagic, 4);
    const std::uint32_t header_len = static_cast<std::uint32_t>(header_text.size());
    f.write(reinterpret_cast<const char*>(&header_len), 4);
    f.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto& r : refs)
        f.write(reinterpret_cast<const char*>(r.data), static_cast<std::streamsize>(r.size * sizeof(double)));
    if (state != nullptr)
        for (const auto& v : state->velocity)
            f.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!f) throw IoError("save_checkpoint: write failed for " + path.string());
}

struct LoadedCheckpoint {
    Network net;
    OptimizerConfig optimizer;
    SgdState state; // empty velocity if the checkpoint carries none
    TrainingSummary training;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("load_checkpoint: cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    if (bytes.size() < 8) throw TruncatedError("load_checkpoint: file shorter than the fixed prefix");
    if (std::memcmp(bytes.data(), detail::kCheckpointMagic, 4) != 0)
        throw BadMagicError("load_checkpoint: bad magic, not a checkpoint file");
    std::uint32_t header_len = 0;
    std::memcpy(&header_len, bytes.data() + 4, 4);
    if (bytes.size() < 8 + static_cast<std::size_t>(header_len))
        throw TruncatedError("load_checkpoint: header extends past end of file");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + header_len);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("load_checkpoint: malformed header: ") + e.what());
    }

    LoadedCheckpoint out;
    try {
        const int version = header.at("version").get<int>();
        if (version != detail::kCheckpointVersion)
            throw VersionError("load_checkpoint: unsupported format version " + std::to_string(version));

        out.net = make_network(detail::spec_from_json(header.at("spec")), 0);
        const auto& jopt = header.at("optimizer");
        out.optimizer.learning_rate = jopt.at("learning_rate").get<double>();
        out.optimizer.momentum = jopt.at("momentum").get<double>();
        out.optimizer.weight_decay = jopt.at("weight_decay").get<double>();
        out.optimizer.batch_size = jopt.at("batch_size").get<std::size_t>();
        out.optimizer.epochs = jopt.at("epochs").get<int>();
        out.optimizer.seed = jopt.at("seed").get<std::uint64_t>();
        const auto& jtr = header.at("training");
        out.training.epochs_run = jtr.at("epochs_run").get<int>();
        out.training.final_loss = jtr.at("final_loss").get<double>();
        out.training.final_accuracy = jtr.at("final_accuracy").get<double>();
        out.training.mean_walk_iterations = jtr.at("mean_walk_iterations").get<double>();

        const std::size_t data_start = 8 + header_len;
        const std::size_t data_size = bytes.size() - data_start;

        auto refs = parameter_refs(out.net);
        const auto& index = header.at("tensors");

        std::size_t expected_offset = 0;
        std::size_t param_idx = 0;
        std::vector<Vec> velocities;
        for (const auto& entry : index) {
            const std::string name = entry.at("name").get<std::string>();
            const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
            const std::size_t offset = entry.at("offset").get<std::size_t>();
            const std::string role = entry.at("role").get<std::string>();
            std::size_t count = 1;
            for (std::size_t s : shape) count *= s;

            if (offset != expected_offset)
                throw FormatError("load_checkpoint: tensor '" + name + "' offset is inconsistent");
            if (offset + count * sizeof(double) > data_size)
                throw TruncatedError("load_checkpoint: tensor '" + name + "' extends past end of file");

            double* dst = nullptr;
            if (role == "param") {
                if (param_idx >= refs.size() || refs[param_idx].name != name ||
                    refs[param_idx].size != count)
                    throw FormatError("load_checkpoint: tensor '" + name +
                                      "' does not match the declared architecture");
                dst = refs[param_idx].data;
                ++param_idx;
            } else if (role == "velocity") {
                velocities.emplace_back(count, 0.0);
                dst = velocities.back().data();
            } else {
                throw FormatError("load_checkpoint: unknown tensor role '" + role + "'");
            }
            std::memcpy(dst, bytes.data() + data_start + offset, count * sizeof(double));
            expected_offset = offset + count * sizeof(double);
        }
        if (param_idx != refs.size())
            throw FormatError("load_checkpoint: missing parameter tensors in index");
        if (expected_offset != data_size)
            throw FormatError("load_checkpoint: data section size does not match the tensor index");
        if (!velocities.empty()) {
            if (velocities.size() != refs.size())
                throw FormatError("load_checkpoint: velocity tensor count mismatch");
            out.state.velocity = std::move(velocities);
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("load_checkpoint: bad header field: ") + e.what());
    }
    return out;
}

} // namespace spn
