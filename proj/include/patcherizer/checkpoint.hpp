#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "patcherizer/common.hpp"
#include "patcherizer/tensor.hpp"

namespace patcherizer {

// Checkpoint file: 8-byte magic, little-endian u64 manifest length, JSON
// manifest listing (name, shape) in name order, then the raw f32 payloads in
// the same order. Weights only; optimizer state is rebuilt on load.
inline const char kCheckpointMagic[8] = {'P', 'Z', 'C', 'K', 'P', 'T', '0', '1'};

inline void save_checkpoint(const ParamMap& params, const std::string& path) {
    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& [name, t] : params) {
        nlohmann::json entry;
        entry["name"] = name;
        entry["shape"] = t.shape();
        manifest.push_back(entry);
    }
    std::string head = manifest.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw FileNotFound("cannot write " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    std::uint64_t len = head.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    for (const auto& [name, t] : params) {
        out.write(reinterpret_cast<const char*>(t.value().data()),
                  static_cast<std::streamsize>(t.numel() * sizeof(float)));
    }
    if (!out) throw FileNotFound("short write to " + path);
}

// Copies stored tensors into an already initialized ParamMap. Every stored
// tensor must exist with the stored shape. In strict mode the parameter set
// must match the file exactly; non-strict lets freshly added head parameters
// keep their initialization (used when fine-tuning on top of a pre-trained
// checkpoint).
inline void load_checkpoint(ParamMap& params, const std::string& path, bool strict = true) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileNotFound(path);

    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw CheckpointMismatch(path + " is not a checkpoint file");
    }
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!in) throw CheckpointMismatch(path + " has a truncated manifest header");
    std::string head(len, '\0');
    in.read(head.data(), static_cast<std::streamsize>(len));
    if (!in) throw CheckpointMismatch(path + " has a truncated manifest");

    nlohmann::json manifest = nlohmann::json::parse(head, nullptr, false);
    if (manifest.is_discarded() || !manifest.is_array()) {
        throw CheckpointMismatch(path + " manifest is not a JSON array");
    }

    std::size_t seen = 0;
    for (const auto& entry : manifest) {
        if (!entry.contains("name") || !entry.contains("shape")) {
            throw CheckpointMismatch(path + " manifest entry lacks name/shape");
        }
        std::string name = entry["name"].get<std::string>();
        std::vector<int> shape = entry["shape"].get<std::vector<int>>();
        auto it = params.find(name);
        if (it == params.end()) {
            throw CheckpointMismatch("checkpoint tensor \"" + name + "\" has no parameter slot");
        }
        if (it->second.shape() != shape) {
            throw CheckpointMismatch("tensor \"" + name + "\" shape " +
                                     Tensor::shape_str(shape) + " does not match parameter " +
                                     Tensor::shape_str(it->second.shape()));
        }
        std::vector<float>& dst = it->second.mutable_value();
        in.read(reinterpret_cast<char*>(dst.data()),
                static_cast<std::streamsize>(dst.size() * sizeof(float)));
        if (!in) throw CheckpointMismatch(path + " payload ends inside tensor \"" + name + "\"");
        ++seen;
    }
    if (strict && seen != params.size()) {
        throw CheckpointMismatch(path + " holds " + std::to_string(seen) + " tensors, model has " +
                                 std::to_string(params.size()));
    }
}

}  // namespace patcherizer
