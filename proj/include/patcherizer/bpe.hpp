#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "patcherizer/common.hpp"

namespace patcherizer {

// Reserved token ids. Encoded streams are right-padded with kPad; the
// pre-training masker writes kMask; characters outside the trained vocabulary
// fall back to kUnk so encoding never fails.
constexpr int kPad = 0;
constexpr int kBos = 1;
constexpr int kEos = 2;
constexpr int kMask = 3;
constexpr int kUnk = 4;
constexpr int kFirstRegularId = 5;

struct Vocab {
    std::vector<std::pair<std::string, std::string>> merges;
    std::vector<std::string> base_chars;  // sorted single-character symbols
    std::map<std::string, int> token_to_id;
    std::vector<std::string> id_to_token;

    int size() const { return static_cast<int>(id_to_token.size()); }
};

struct Encoded {
    std::vector<int> ids;
    std::vector<float> mask;  // 1.0 at real positions, 0.0 at padding
};

namespace bpe_detail {

inline const std::vector<std::pair<std::string, int>>& special_tokens() {
    static const std::vector<std::pair<std::string, int>> s = {
        {"<pad>", kPad}, {"<s>", kBos}, {"</s>", kEos}, {"<mask>", kMask}, {"<unk>", kUnk}};
    return s;
}

// Pre-tokens are word_tokens of the whitespace-normalized text; every token
// that followed a space keeps that space as its first symbol, so decoding is
// plain concatenation.
inline std::vector<std::string> pretokenize(const std::string& text) {
    std::string norm = normalize_ws(text);
    std::vector<std::string> out;
    std::string cur;
    bool pending_space = false;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back((pending_space ? " " : "") + cur);
            pending_space = false;
            cur.clear();
        }
    };
    for (char c : norm) {
        if (c == ' ') {
            flush();
            pending_space = true;
        } else if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
            cur.push_back(c);
        } else {
            flush();
            out.push_back((pending_space ? " " : "") + std::string(1, c));
            pending_space = false;
        }
    }
    flush();
    return out;
}

inline std::vector<std::string> to_symbols(const std::string& pretoken) {
    std::vector<std::string> sym;
    for (char c : pretoken) sym.emplace_back(1, c);
    return sym;
}

inline void apply_merge(std::vector<std::string>& sym, const std::string& a,
                        const std::string& b) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < sym.size()) {
        if (i + 1 < sym.size() && sym[i] == a && sym[i + 1] == b) {
            out.push_back(a + b);
            i += 2;
        } else {
            out.push_back(sym[i]);
            ++i;
        }
    }
    sym = std::move(out);
}

inline void rebuild_maps(Vocab& v) {
    v.token_to_id.clear();
    v.id_to_token.clear();
    for (const auto& [tok, id] : special_tokens()) {
        v.id_to_token.push_back(tok);
        v.token_to_id[tok] = id;
    }
    for (const std::string& c : v.base_chars) {
        if (v.token_to_id.count(c)) continue;
        v.token_to_id[c] = static_cast<int>(v.id_to_token.size());
        v.id_to_token.push_back(c);
    }
    for (const auto& [a, b] : v.merges) {
        std::string tok = a + b;
        if (v.token_to_id.count(tok)) continue;
        v.token_to_id[tok] = static_cast<int>(v.id_to_token.size());
        v.id_to_token.push_back(tok);
    }
}

}  // namespace bpe_detail

inline Vocab train_bpe(const std::vector<std::string>& corpus, int target_size) {
    using namespace bpe_detail;

    std::vector<std::pair<std::vector<std::string>, long>> words;  // first-appearance order
    std::map<std::vector<std::string>, std::size_t> word_index;
    std::set<std::string> chars;
    for (const std::string& text : corpus) {
        for (const std::string& pre : pretokenize(text)) {
            std::vector<std::string> sym = to_symbols(pre);
            for (const std::string& s : sym) chars.insert(s);
            auto [it, fresh] = word_index.try_emplace(sym, words.size());
            if (fresh) {
                words.emplace_back(sym, 1);
            } else {
                ++words[it->second].second;
            }
        }
    }
    if (words.empty()) throw CorpusEmpty("no text to train on");

    Vocab v;
    v.base_chars.assign(chars.begin(), chars.end());
    int floor_size = 5 + static_cast<int>(v.base_chars.size());
    if (target_size <= floor_size) {
        throw TargetSizeTooSmall("target " + std::to_string(target_size) +
                                 " must exceed specials+characters = " +
                                 std::to_string(floor_size));
    }

    int budget = target_size - floor_size;
    for (int step = 0; step < budget; ++step) {
        std::map<std::pair<std::string, std::string>, long> pair_freq;
        for (const auto& [sym, freq] : words) {
            for (std::size_t i = 0; i + 1 < sym.size(); ++i) {
                pair_freq[{sym[i], sym[i + 1]}] += freq;
            }
        }
        if (pair_freq.empty()) break;
        auto best = pair_freq.begin();
        for (auto it = std::next(pair_freq.begin()); it != pair_freq.end(); ++it) {
            if (it->second > best->second) best = it;  // map order breaks ties low
        }
        const auto& [a, b] = best->first;
        v.merges.emplace_back(a, b);
        for (auto& [sym, freq] : words) apply_merge(sym, a, b);
    }

    rebuild_maps(v);
    return v;
}

inline std::vector<int> encode_ids(const Vocab& v, const std::string& text) {
    using namespace bpe_detail;
    std::map<std::pair<std::string, std::string>, int> rank;
    for (std::size_t i = 0; i < v.merges.size(); ++i) rank[v.merges[i]] = static_cast<int>(i);

    std::vector<int> ids;
    for (const std::string& pre : pretokenize(text)) {
        std::vector<std::string> sym = to_symbols(pre);
        while (sym.size() > 1) {
            int best_rank = -1;
            std::size_t best_at = 0;
            for (std::size_t i = 0; i + 1 < sym.size(); ++i) {
                auto it = rank.find({sym[i], sym[i + 1]});
                if (it != rank.end() && (best_rank < 0 || it->second < best_rank)) {
                    best_rank = it->second;
                    best_at = i;
                }
            }
            if (best_rank < 0) break;
            std::string a = sym[best_at], b = sym[best_at + 1];
            apply_merge(sym, a, b);
        }
        for (const std::string& s : sym) {
            auto it = v.token_to_id.find(s);
            ids.push_back(it == v.token_to_id.end() ? kUnk : it->second);
        }
    }
    return ids;
}

inline Encoded encode(const Vocab& v, const std::string& text, int max_len) {
    std::vector<int> ids = encode_ids(v, text);
    Encoded out;
    out.ids.assign(max_len, kPad);
    out.mask.assign(max_len, 0.0f);
    int n = std::min<int>(max_len, static_cast<int>(ids.size()));
    for (int i = 0; i < n; ++i) {
        out.ids[i] = ids[i];
        out.mask[i] = 1.0f;
    }
    return out;
}

inline std::string decode(const Vocab& v, const std::vector<int>& ids) {
    std::string out;
    for (int id : ids) {
        if (id == kPad || id == kBos || id == kEos) continue;
        if (id < 0 || id >= v.size()) throw UnknownId("token id " + std::to_string(id));
        out += v.id_to_token[id];
    }
    if (!out.empty() && out.front() == ' ') out.erase(out.begin());
    return out;
}

inline nlohmann::json vocab_to_json(const Vocab& v) {
    nlohmann::json specials = nlohmann::json::object();
    for (const auto& [tok, id] : bpe_detail::special_tokens()) specials[tok] = id;
    nlohmann::json merges = nlohmann::json::array();
    for (const auto& [a, b] : v.merges) merges.push_back({a, b});
    return {{"specials", specials}, {"chars", v.base_chars}, {"merges", merges}};
}

inline Vocab vocab_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("merges") || !j.contains("chars") ||
        !j["merges"].is_array() || !j["chars"].is_array()) {
        throw SchemaError("vocab document needs \"merges\" and \"chars\" arrays");
    }
    Vocab v;
    for (const auto& c : j["chars"]) {
        if (!c.is_string()) throw SchemaError("vocab chars must be strings");
        v.base_chars.push_back(c.get<std::string>());
    }
    for (const auto& m : j["merges"]) {
        if (!m.is_array() || m.size() != 2 || !m[0].is_string() || !m[1].is_string()) {
            throw SchemaError("vocab merge must be a [string, string] pair");
        }
        v.merges.emplace_back(m[0].get<std::string>(), m[1].get<std::string>());
    }
    bpe_detail::rebuild_maps(v);
    return v;
}

}  // namespace patcherizer
