#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "patcherizer/common.hpp"

namespace patcherizer {

enum class LineTag { Context, Plus, Minus };

struct DiffLine {
    LineTag tag;
    std::string text;
};

struct Hunk {
    int old_start = 1;  // 1-based
    int old_len = 0;
    int new_start = 1;
    int new_len = 0;
    std::vector<DiffLine> lines;
};

struct RawPatch {
    std::vector<Hunk> hunks;
};

struct NumberedLine {
    std::string text;
    int line = 0;  // 1-based position in the reconstructed file
};

struct Reconstruction {
    std::string cbp;
    std::string cap;
    std::vector<NumberedLine> plus_lines;   // positions in cap
    std::vector<NumberedLine> minus_lines;  // positions in cbp
};

// Marker standing in for unchanged code between hunks when no original file
// is available. Kept identical on both sides so it is plain context.
inline const char* kElisionMarker = "...";

namespace detail {

inline bool parse_hunk_header(const std::string& line, Hunk& h) {
    // "@@ -a[,b] +c[,d] @@" with omitted counts meaning 1
    if (!starts_with(line, "@@ -")) return false;
    std::size_t i = 4;
    auto read_int = [&](int& out) {
        if (i >= line.size() || !std::isdigit(static_cast<unsigned char>(line[i]))) return false;
        long v = 0;
        while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) {
            v = v * 10 + (line[i] - '0');
            ++i;
        }
        out = static_cast<int>(v);
        return true;
    };
    if (!read_int(h.old_start)) return false;
    h.old_len = 1;
    if (i < line.size() && line[i] == ',') {
        ++i;
        if (!read_int(h.old_len)) return false;
    }
    if (i + 1 >= line.size() || line[i] != ' ' || line[i + 1] != '+') return false;
    i += 2;
    if (!read_int(h.new_start)) return false;
    h.new_len = 1;
    if (i < line.size() && line[i] == ',') {
        ++i;
        if (!read_int(h.new_len)) return false;
    }
    while (i < line.size() && line[i] == ' ') ++i;
    return i + 1 < line.size() && line[i] == '@' && line[i + 1] == '@';
}

}  // namespace detail

// Parse a single-file unified diff. File headers (---/+++/diff/index) are
// optional and skipped; hunk counts are validated against the body.
inline RawPatch parse_unified_diff(const std::string& text) {
    if (normalize_ws(text).empty()) throw EmptyInput("diff text is empty");

    RawPatch patch;
    std::vector<std::string> lines = split_lines(text);
    std::size_t i = 0;
    while (i < lines.size()) {
        const std::string& line = lines[i];
        if (starts_with(line, "@@")) {
            Hunk h;
            if (!detail::parse_hunk_header(line, h)) {
                throw MalformedDiff("bad hunk header: " + line);
            }
            ++i;
            int old_count = 0, new_count = 0;
            while (i < lines.size() && !starts_with(lines[i], "@@") &&
                   (old_count < h.old_len || new_count < h.new_len)) {
                const std::string& body = lines[i];
                if (starts_with(body, "\\")) {  // "\ No newline at end of file"
                    ++i;
                    continue;
                }
                DiffLine dl;
                if (!body.empty() && body[0] == '+') {
                    dl = {LineTag::Plus, body.substr(1)};
                    ++new_count;
                } else if (!body.empty() && body[0] == '-') {
                    dl = {LineTag::Minus, body.substr(1)};
                    ++old_count;
                } else if (body.empty() || body[0] == ' ') {
                    dl = {LineTag::Context, body.empty() ? "" : body.substr(1)};
                    ++old_count;
                    ++new_count;
                } else {
                    throw MalformedDiff("unexpected line inside hunk: " + body);
                }
                h.lines.push_back(std::move(dl));
                ++i;
            }
            if (old_count != h.old_len || new_count != h.new_len) {
                throw MalformedDiff(
                    "hunk @@ -" + std::to_string(h.old_start) + "," + std::to_string(h.old_len) +
                    " +" + std::to_string(h.new_start) + "," + std::to_string(h.new_len) +
                    " @@ body has " + std::to_string(old_count) + " old / " +
                    std::to_string(new_count) + " new lines");
            }
            patch.hunks.push_back(std::move(h));
        } else {
            ++i;  // header or junk between hunks
        }
    }
    if (patch.hunks.empty()) throw MalformedDiff("no hunks found");

    std::sort(patch.hunks.begin(), patch.hunks.end(),
              [](const Hunk& a, const Hunk& b) { return a.old_start < b.old_start; });
    for (std::size_t k = 1; k < patch.hunks.size(); ++k) {
        const Hunk& prev = patch.hunks[k - 1];
        if (patch.hunks[k].old_start < prev.old_start + prev.old_len) {
            throw MalformedDiff("overlapping hunks at old line " +
                                std::to_string(patch.hunks[k].old_start));
        }
    }
    return patch;
}

// Rebuild (cbp, cap) from the hunks. With an original file, hunks are placed
// at their recorded line numbers and context/minus lines are verified against
// it. Without one, cbp/cap are the self-contained hunk bodies with a single
// elision marker per inter-hunk gap; recorded line numbers are rewritten to
// positions in the reconstructed files.
inline Reconstruction reconstruct(const RawPatch& raw,
                                  const std::optional<std::string>& original = std::nullopt) {
    Reconstruction out;
    std::vector<std::string> cbp_lines, cap_lines;

    if (original.has_value()) {
        std::vector<std::string> orig = split_lines(*original);
        std::size_t cursor = 0;  // 0-based index into orig
        for (const Hunk& h : raw.hunks) {
            std::size_t hunk_begin = h.old_len > 0 ? static_cast<std::size_t>(h.old_start - 1)
                                                   : static_cast<std::size_t>(h.old_start);
            if (hunk_begin > orig.size()) {
                throw ContextMismatch("hunk starts past end of original file");
            }
            while (cursor < hunk_begin) {
                cap_lines.push_back(orig[cursor]);
                ++cursor;
            }
            for (const DiffLine& dl : h.lines) {
                if (dl.tag == LineTag::Plus) {
                    cap_lines.push_back(dl.text);
                    out.plus_lines.push_back({dl.text, static_cast<int>(cap_lines.size())});
                } else {
                    if (cursor >= orig.size() || orig[cursor] != dl.text) {
                        throw ContextMismatch(
                            "original line " + std::to_string(cursor + 1) + " is \"" +
                            (cursor < orig.size() ? orig[cursor] : "<eof>") +
                            "\", diff expects \"" + dl.text + "\"");
                    }
                    if (dl.tag == LineTag::Minus) {
                        out.minus_lines.push_back({dl.text, static_cast<int>(cursor + 1)});
                    } else {
                        cap_lines.push_back(dl.text);
                    }
                    ++cursor;
                }
            }
        }
        while (cursor < orig.size()) {
            cap_lines.push_back(orig[cursor]);
            ++cursor;
        }
        cbp_lines = orig;
    } else {
        bool first = true;
        for (const Hunk& h : raw.hunks) {
            if (!first) {
                cbp_lines.push_back(kElisionMarker);
                cap_lines.push_back(kElisionMarker);
            }
            first = false;
            for (const DiffLine& dl : h.lines) {
                switch (dl.tag) {
                    case LineTag::Context:
                        cbp_lines.push_back(dl.text);
                        cap_lines.push_back(dl.text);
                        break;
                    case LineTag::Minus:
                        cbp_lines.push_back(dl.text);
                        out.minus_lines.push_back({dl.text, static_cast<int>(cbp_lines.size())});
                        break;
                    case LineTag::Plus:
                        cap_lines.push_back(dl.text);
                        out.plus_lines.push_back({dl.text, static_cast<int>(cap_lines.size())});
                        break;
                }
            }
        }
    }

    out.cbp = join_lines(cbp_lines);
    out.cap = join_lines(cap_lines);
    return out;
}

// Apply the patch to a before-file. Hunks are located structurally: each
// hunk's context+minus block is matched as the next exact run of lines at or
// after the cursor, so both original files and elided reconstructions apply.
inline std::string apply_patch(const RawPatch& raw, const std::string& before) {
    std::vector<std::string> src = split_lines(before);
    std::vector<std::string> dst;
    std::size_t cursor = 0;

    for (const Hunk& h : raw.hunks) {
        std::vector<std::string> old_block;
        for (const DiffLine& dl : h.lines) {
            if (dl.tag != LineTag::Plus) old_block.push_back(dl.text);
        }
        std::size_t at = cursor;
        bool found = false;
        for (; at + old_block.size() <= src.size(); ++at) {
            bool match = true;
            for (std::size_t k = 0; k < old_block.size(); ++k) {
                if (src[at + k] != old_block[k]) {
                    match = false;
                    break;
                }
            }
            if (match) {
                found = true;
                break;
            }
        }
        if (!found && !old_block.empty()) {
            throw ContextMismatch("hunk context not found in before-file");
        }
        if (old_block.empty()) at = cursor;  // pure insertion applies at cursor
        while (cursor < at) {
            dst.push_back(src[cursor]);
            ++cursor;
        }
        for (const DiffLine& dl : h.lines) {
            if (dl.tag == LineTag::Minus) {
                ++cursor;
            } else if (dl.tag == LineTag::Context) {
                dst.push_back(src[cursor]);
                ++cursor;
            } else {
                dst.push_back(dl.text);
            }
        }
    }
    while (cursor < src.size()) {
        dst.push_back(src[cursor]);
        ++cursor;
    }
    return join_lines(dst);
}

// Split a multi-file diff into per-file single-file diff texts. Boundaries
// are "diff " lines or "--- " file headers that precede a "+++" line.
inline std::vector<std::string> split_multi_file_diff(const std::string& text) {
    std::vector<std::string> lines = split_lines(text);
    std::vector<std::vector<std::string>> parts;
    std::vector<std::string> cur;
    auto flush = [&] {
        bool has_hunk = false;
        for (const auto& l : cur)
            if (starts_with(l, "@@")) has_hunk = true;
        if (has_hunk) parts.push_back(cur);
        cur.clear();
    };
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string& l = lines[i];
        bool file_header = starts_with(l, "diff ") ||
                           (starts_with(l, "--- ") && i + 1 < lines.size() &&
                            starts_with(lines[i + 1], "+++ "));
        if (file_header && !cur.empty()) flush();
        cur.push_back(l);
    }
    flush();

    std::vector<std::string> out;
    for (const auto& p : parts) out.push_back(join_lines(p));
    if (out.empty()) out.push_back(text);
    return out;
}

}  // namespace patcherizer
