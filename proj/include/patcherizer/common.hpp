#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace patcherizer {

// Typed errors. kind() is the stable machine-parsable name the CLI prints.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& msg)
        : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

#define PATCHERIZER_ERROR(NAME)                                        \
    class NAME : public Error {                                        \
    public:                                                            \
        explicit NAME(const std::string& msg) : Error(#NAME, msg) {}   \
    }

PATCHERIZER_ERROR(EmptyInput);
PATCHERIZER_ERROR(MalformedDiff);
PATCHERIZER_ERROR(ContextMismatch);
PATCHERIZER_ERROR(SchemaError);
PATCHERIZER_ERROR(CorpusEmpty);
PATCHERIZER_ERROR(UnknownId);
PATCHERIZER_ERROR(ShapeMismatch);
PATCHERIZER_ERROR(NonScalarLoss);
PATCHERIZER_ERROR(AllMaskedSource);
PATCHERIZER_ERROR(EmptyAfterPrune);
PATCHERIZER_ERROR(NonSymmetric);
PATCHERIZER_ERROR(MissingBugReport);
PATCHERIZER_ERROR(LengthMismatch);
PATCHERIZER_ERROR(EmptyReference);
PATCHERIZER_ERROR(EmptyIndex);
PATCHERIZER_ERROR(MissingConfigKey);
PATCHERIZER_ERROR(FileNotFound);
PATCHERIZER_ERROR(CheckpointMismatch);
PATCHERIZER_ERROR(TargetSizeTooSmall);

#undef PATCHERIZER_ERROR

// ParseError carries a source location and, for patch preprocessing, which
// side (before/after) failed.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, int line, int col)
        : Error("ParseError", msg + " at line " + std::to_string(line) +
                                  ", col " + std::to_string(col)),
          line_(line), col_(col) {}
    ParseError(const std::string& side, const std::string& msg)
        : Error("ParseError", "[" + side + "] " + msg), side_(side) {}
    int line() const { return line_; }
    int col() const { return col_; }
    const std::string& side() const { return side_; }

private:
    int line_ = 0;
    int col_ = 0;
    std::string side_;
};

// Deterministic RNG. The raw engine is standard-specified; the float draws
// below avoid std::uniform_* distributions, whose output is
// implementation-defined, so runs are bit-identical across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0,1) with 24 bits of mantissa
    float uniform() {
        return static_cast<float>((engine_() >> 40) * (1.0 / 16777216.0));
    }

    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

    float normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        // Box-Muller on two uniform draws
        float u1 = uniform();
        float u2 = uniform();
        if (u1 < 1e-12f) u1 = 1e-12f;
        float r = std::sqrt(-2.0f * std::log(u1));
        float a = 6.28318530717958647692f * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

    bool bernoulli(float p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
    bool have_cached_ = false;
    float cached_ = 0.0f;
};

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
    // splitmix64 finalizer over seed^tag
    std::uint64_t z = seed ^ (tag + 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

enum class LogLevel { error = 0, info = 1, debug = 2 };

inline LogLevel log_level() {
    static LogLevel level = [] {
        const char* v = std::getenv("PATCHERIZER_LOG");
        if (!v) return LogLevel::error;
        std::string s(v);
        if (s == "debug") return LogLevel::debug;
        if (s == "info") return LogLevel::info;
        return LogLevel::error;
    }();
    return level;
}

inline void log_info(const std::string& msg) {
    if (log_level() >= LogLevel::info) std::cerr << "[info] " << msg << "\n";
}

inline void log_debug(const std::string& msg) {
    if (log_level() >= LogLevel::debug) std::cerr << "[debug] " << msg << "\n";
}

inline void log_warn(const std::string& msg) {
    std::cerr << "[warn] " << msg << "\n";
}

inline void log_error(const std::string& msg) {
    std::cerr << "[error] " << msg << "\n";
}

inline std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) lines.push_back(cur);
    return lines;
}

inline std::string join_lines(const std::vector<std::string>& lines) {
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i) out.push_back('\n');
        out += lines[i];
    }
    return out;
}

inline bool starts_with(const std::string& s, const std::string& prefix) {
    return s.size() >= prefix.size() && s.compare(0, prefix.size(), prefix) == 0;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileNotFound(path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FileNotFound("cannot open for writing: " + path);
    out << content;
}

// Collapse runs of whitespace to single spaces and trim the ends.
inline std::string normalize_ws(const std::string& s) {
    std::string out;
    bool pending_space = false;
    for (char c : s) {
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            if (!out.empty()) pending_space = true;
        } else {
            if (pending_space) out.push_back(' ');
            pending_space = false;
            out.push_back(c);
        }
    }
    return out;
}

// Word-level pre-tokenization shared by the BPE trainer and the graph pruning
// path: maximal identifier/number runs, single characters otherwise,
// whitespace dropped.
inline std::vector<std::string> word_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    auto is_word = [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
               (c >= '0' && c <= '9') || c == '_';
    };
    while (i < text.size()) {
        char c = text[i];
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            ++i;
            continue;
        }
        if (is_word(c)) {
            std::size_t j = i;
            while (j < text.size() && is_word(text[j])) ++j;
            out.push_back(text.substr(i, j - i));
            i = j;
        } else {
            out.push_back(std::string(1, c));
            ++i;
        }
    }
    return out;
}

}  // namespace patcherizer
