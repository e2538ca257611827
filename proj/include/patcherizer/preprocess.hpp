#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "patcherizer/ast.hpp"
#include "patcherizer/common.hpp"
#include "patcherizer/diff.hpp"

namespace patcherizer {

// Everything downstream stages need from one single-file patch: the changed
// lines with their positions, both reconstructed code chunks, and the AST
// graph of each side.
struct PreprocessedPatch {
    std::vector<NumberedLine> cc_p;
    std::vector<NumberedLine> cc_m;
    std::string cbp;
    std::string cap;
    AstGraph g_cbp;
    AstGraph g_cap;
};

namespace preprocess_detail {

inline std::string strip_kind(const std::string& what) {
    const std::string prefix = "ParseError: ";
    if (starts_with(what, prefix)) return what.substr(prefix.size());
    return what;
}

inline AstGraph parse_side(const std::string& src, const char* side) {
    try {
        return ast_to_graph(parse_source(src));
    } catch (const ParseError& e) {
        throw ParseError(side, strip_kind(e.what()));
    }
}

}  // namespace preprocess_detail

// Turn one single-file unified diff into a PreprocessedPatch. When the
// original file is given the chunks are rebuilt against it; otherwise the
// hunk context stands in. A side that does not parse raises ParseError
// tagged "before" or "after" so callers can drop to sequence-only handling.
inline PreprocessedPatch preprocess_patch(const std::string& diff_text,
                                          const std::optional<std::string>& original = std::nullopt) {
    RawPatch raw = parse_unified_diff(diff_text);
    Reconstruction rec = reconstruct(raw, original);

    PreprocessedPatch out;
    out.cc_p = rec.plus_lines;
    out.cc_m = rec.minus_lines;
    out.cbp = rec.cbp;
    out.cap = rec.cap;
    out.g_cbp = preprocess_detail::parse_side(rec.cbp, "before");
    out.g_cap = preprocess_detail::parse_side(rec.cap, "after");
    return out;
}

// Fallback for patches whose code does not parse: the token streams are
// still available, the graphs stay empty and the graph term contributes
// nothing downstream.
inline PreprocessedPatch preprocess_sequence_only(const std::string& diff_text,
                                                  const std::optional<std::string>& original =
                                                      std::nullopt) {
    RawPatch raw = parse_unified_diff(diff_text);
    Reconstruction rec = reconstruct(raw, original);
    PreprocessedPatch out;
    out.cc_p = rec.plus_lines;
    out.cc_m = rec.minus_lines;
    out.cbp = rec.cbp;
    out.cap = rec.cap;
    return out;
}

// One PreprocessedPatch per file section of a possibly multi-file diff.
inline std::vector<PreprocessedPatch> preprocess_multi(const std::string& diff_text) {
    std::vector<PreprocessedPatch> out;
    for (const std::string& part : split_multi_file_diff(diff_text)) {
        out.push_back(preprocess_patch(part));
    }
    return out;
}

// Distinct word tokens appearing on any changed line; the static graph is
// pruned against this set before alignment.
inline std::set<std::string> patch_token_set(const PreprocessedPatch& p) {
    std::set<std::string> toks;
    for (const NumberedLine& l : p.cc_p)
        for (const std::string& t : word_tokens(l.text)) toks.insert(t);
    for (const NumberedLine& l : p.cc_m)
        for (const std::string& t : word_tokens(l.text)) toks.insert(t);
    return toks;
}

// Concatenated changed-line text, plus stream then minus stream; this is the
// surface the BPE token streams are built from.
inline std::string changed_text(const std::vector<NumberedLine>& lines) {
    std::vector<std::string> texts;
    texts.reserve(lines.size());
    for (const NumberedLine& l : lines) texts.push_back(l.text);
    return join_lines(texts);
}

}  // namespace patcherizer
