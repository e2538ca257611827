#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "patcherizer/common.hpp"

namespace patcherizer {

struct GenRecord {
    std::string id;
    std::string diff;
    std::string msg;
};

struct CorrectnessRecord {
    std::string id;
    std::string diff;
    std::string bug_report;
    std::optional<std::vector<float>> bug_vec;
    int label = 0;
};

namespace corpus_detail {

inline std::vector<nlohmann::json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileNotFound(path);
    std::vector<nlohmann::json> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw SchemaError(path + ":" + std::to_string(lineno) + " is not a JSON object");
        }
        rows.push_back(std::move(j));
    }
    return rows;
}

inline std::string field_str(const nlohmann::json& j, const char* key, const std::string& where) {
    if (!j.contains(key) || !j[key].is_string()) {
        throw SchemaError(where + " needs string field \"" + key + "\"");
    }
    return j[key].get<std::string>();
}

inline std::string id_or_index(const nlohmann::json& j, std::size_t index) {
    if (j.contains("id") && j["id"].is_string()) return j["id"].get<std::string>();
    return std::to_string(index);
}

inline std::vector<float> field_vec(const nlohmann::json& j, const char* key,
                                    const std::string& where) {
    if (!j.contains(key) || !j[key].is_array()) {
        throw SchemaError(where + " needs numeric array \"" + key + "\"");
    }
    std::vector<float> v;
    for (const auto& x : j[key]) {
        if (!x.is_number()) throw SchemaError(where + " has a non-numeric entry in \"" + key + "\"");
        v.push_back(x.get<float>());
    }
    return v;
}

}  // namespace corpus_detail

// Description corpus: one {"diff","msg"} object per line, optional "id".
inline std::vector<GenRecord> load_gen_corpus(const std::string& path) {
    std::vector<GenRecord> out;
    auto rows = corpus_detail::read_jsonl(path);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::string where = path + ":" + std::to_string(i + 1);
        GenRecord r;
        r.id = corpus_detail::id_or_index(rows[i], i);
        r.diff = corpus_detail::field_str(rows[i], "diff", where);
        r.msg = corpus_detail::field_str(rows[i], "msg", where);
        out.push_back(std::move(r));
    }
    if (out.empty()) throw CorpusEmpty(path);
    return out;
}

// Correctness corpus: {"diff","bug_report","label"} per line, label 0/1.
inline std::vector<CorrectnessRecord> load_correctness_corpus(const std::string& path) {
    std::vector<CorrectnessRecord> out;
    auto rows = corpus_detail::read_jsonl(path);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::string where = path + ":" + std::to_string(i + 1);
        CorrectnessRecord r;
        r.id = corpus_detail::id_or_index(rows[i], i);
        r.diff = corpus_detail::field_str(rows[i], "diff", where);
        r.bug_report = corpus_detail::field_str(rows[i], "bug_report", where);
        if (!rows[i].contains("label") || !rows[i]["label"].is_number_integer()) {
            throw SchemaError(where + " needs integer field \"label\"");
        }
        r.label = rows[i]["label"].get<int>();
        if (r.label != 0 && r.label != 1) throw SchemaError(where + " label must be 0 or 1");
        out.push_back(std::move(r));
    }
    if (out.empty()) throw CorpusEmpty(path);
    return out;
}

// Vector file: {"id","vec"} per line. Used for both embedding export and
// precomputed bug-report vectors.
inline std::map<std::string, std::vector<float>> load_vectors(const std::string& path) {
    std::map<std::string, std::vector<float>> out;
    auto rows = corpus_detail::read_jsonl(path);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::string where = path + ":" + std::to_string(i + 1);
        std::string id = corpus_detail::field_str(rows[i], "id", where);
        out[id] = corpus_detail::field_vec(rows[i], "vec", where);
    }
    return out;
}

inline void write_vectors(const std::string& path,
                          const std::vector<std::pair<std::string, std::vector<float>>>& rows) {
    std::ofstream out(path);
    if (!out) throw FileNotFound("cannot write " + path);
    for (const auto& [id, vec] : rows) {
        nlohmann::json j;
        j["id"] = id;
        j["vec"] = vec;
        out << j.dump() << "\n";
    }
}

inline void write_predictions(const std::string& path,
                              const std::vector<std::pair<std::string, std::string>>& rows) {
    std::ofstream out(path);
    if (!out) throw FileNotFound("cannot write " + path);
    for (const auto& [id, pred] : rows) {
        nlohmann::json j;
        j["id"] = id;
        j["prediction"] = pred;
        out << j.dump() << "\n";
    }
}

}  // namespace patcherizer
