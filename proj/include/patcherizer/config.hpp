#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "patcherizer/common.hpp"
#include "patcherizer/graph_intention.hpp"
#include "patcherizer/transformer.hpp"

namespace patcherizer {

// One JSON file with sections {data, model, gcn, train, decode}. Every knob
// has a desk-scale default except model.d_e, which fixes all tensor shapes
// and must be stated explicitly.
struct Config {
    struct Data {
        std::string train;
        std::string correctness;
        std::string bug_vectors;
    } data;

    struct Model {
        int d_e = 0;
        int l_max = 64;
        int n_heads = 2;
        int n_layers = 2;
        float dropout = 0.1f;
        int vocab_size = 512;
        int n_g = 2000;
    } model;

    struct Gcn {
        int layers = 2;
        float alpha = 0.1f;
        std::vector<float> betas;
        std::string pooling = "all";
    } gcn;

    struct Train {
        float lr = 0.001f;
        int epochs = 30;
        int batch_size = 8;
        float mask_rate = 0.15f;
        int steps = 0;
    } train;

    struct Decode {
        int beam = 3;
        int max_out = 32;
    } decode;

    TransformerConfig tf_config(int vocab_size_actual) const {
        TransformerConfig tf;
        tf.vocab_size = vocab_size_actual;
        tf.d_e = model.d_e;
        tf.l_max = model.l_max;
        tf.n_heads = model.n_heads;
        tf.n_layers = model.n_layers;
        tf.dropout = model.dropout;
        tf.validate();
        return tf;
    }

    GcnConfig gcn_config() const {
        GcnConfig g = GcnConfig::defaults(gcn.layers);
        g.alpha = gcn.alpha;
        if (!gcn.betas.empty()) g.betas = gcn.betas;
        if (gcn.pooling == "all") {
            g.pooling = PoolMode::All;
        } else if (gcn.pooling == "changed") {
            g.pooling = PoolMode::Changed;
        } else {
            throw SchemaError("gcn.pooling must be \"all\" or \"changed\", got \"" + gcn.pooling +
                              "\"");
        }
        g.validate();
        return g;
    }
};

namespace config_detail {

template <typename T>
void read_opt(const nlohmann::json& sec, const char* key, T& slot) {
    if (!sec.contains(key)) return;
    try {
        slot = sec[key].get<T>();
    } catch (const nlohmann::json::exception&) {
        throw SchemaError(std::string("config key \"") + key + "\" has the wrong type");
    }
}

}  // namespace config_detail

inline Config config_from_json(const nlohmann::json& j) {
    using config_detail::read_opt;
    if (!j.is_object()) throw SchemaError("config root must be a JSON object");
    Config c;

    nlohmann::json empty = nlohmann::json::object();
    const nlohmann::json& data = j.contains("data") ? j["data"] : empty;
    const nlohmann::json& model = j.contains("model") ? j["model"] : empty;
    const nlohmann::json& gcn = j.contains("gcn") ? j["gcn"] : empty;
    const nlohmann::json& train = j.contains("train") ? j["train"] : empty;
    const nlohmann::json& decode = j.contains("decode") ? j["decode"] : empty;

    read_opt(data, "train", c.data.train);
    read_opt(data, "correctness", c.data.correctness);
    read_opt(data, "bug_vectors", c.data.bug_vectors);

    if (!model.contains("d_e")) throw MissingConfigKey("model.d_e");
    read_opt(model, "d_e", c.model.d_e);
    read_opt(model, "l_max", c.model.l_max);
    read_opt(model, "n_heads", c.model.n_heads);
    read_opt(model, "n_layers", c.model.n_layers);
    read_opt(model, "dropout", c.model.dropout);
    read_opt(model, "vocab_size", c.model.vocab_size);
    read_opt(model, "n_g", c.model.n_g);

    read_opt(gcn, "layers", c.gcn.layers);
    read_opt(gcn, "alpha", c.gcn.alpha);
    read_opt(gcn, "betas", c.gcn.betas);
    read_opt(gcn, "pooling", c.gcn.pooling);

    read_opt(train, "lr", c.train.lr);
    read_opt(train, "epochs", c.train.epochs);
    read_opt(train, "batch_size", c.train.batch_size);
    read_opt(train, "mask_rate", c.train.mask_rate);
    read_opt(train, "steps", c.train.steps);

    read_opt(decode, "beam", c.decode.beam);
    read_opt(decode, "max_out", c.decode.max_out);

    if (c.model.d_e <= 0) throw SchemaError("model.d_e must be positive");
    if (c.model.l_max <= 0) throw SchemaError("model.l_max must be positive");
    if (c.train.batch_size <= 0) throw SchemaError("train.batch_size must be positive");
    if (c.train.mask_rate <= 0.0f || c.train.mask_rate >= 1.0f) {
        throw SchemaError("train.mask_rate must lie in (0,1)");
    }
    if (c.decode.beam < 1) throw SchemaError("decode.beam must be at least 1");
    return c;
}

inline Config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFound(path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw SchemaError(path + " is not valid JSON");
    return config_from_json(j);
}

}  // namespace patcherizer
