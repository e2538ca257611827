#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "patcherizer/common.hpp"

namespace patcherizer {

using TokenList = std::vector<std::string>;

namespace metrics_detail {

inline std::map<TokenList, int> ngram_counts(const TokenList& toks, int n) {
    std::map<TokenList, int> counts;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
        counts[TokenList(toks.begin() + i, toks.begin() + i + n)] += 1;
    }
    return counts;
}

inline int lcs_length(const TokenList& a, const TokenList& b) {
    std::size_t n = a.size(), m = b.size();
    std::vector<int> prev(m + 1, 0), cur(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

// Minimal chunk count over all alignments that realize the maximal match
// counts (per token: min of the two occurrence counts). Exhaustive with
// pruning; message-length inputs keep this tiny. Long inputs fall back to
// first-available greedy matching.
struct ChunkSearch {
    const TokenList& cand;
    const TokenList& ref;
    std::map<std::string, int> need;          // matches still owed per token
    std::map<std::string, int> cand_left;     // candidate occurrences at >= i
    std::vector<bool> ref_used;
    int best = 1 << 20;

    ChunkSearch(const TokenList& c, const TokenList& r) : cand(c), ref(r) {
        std::map<std::string, int> cc, rc;
        for (const auto& t : c) ++cc[t];
        for (const auto& t : r) ++rc[t];
        for (const auto& [t, n] : cc) {
            int m = std::min(n, rc.count(t) ? rc[t] : 0);
            if (m > 0) need[t] = m;
        }
        cand_left = cc;
        ref_used.assign(r.size(), false);
    }

    bool done_needing() const {
        for (const auto& [t, n] : need)
            if (n > 0) return false;
        return true;
    }

    void walk(std::size_t i, int last_ref, int chunks) {
        if (chunks >= best) return;
        if (done_needing()) {
            best = std::min(best, chunks);
            return;
        }
        if (i >= cand.size()) return;
        const std::string& w = cand[i];
        auto it = need.find(w);
        int owed = it == need.end() ? 0 : it->second;

        if (owed > 0) {
            for (std::size_t j = 0; j < ref.size(); ++j) {
                if (ref_used[j] || ref[j] != w) continue;
                bool contiguous = last_ref >= 0 && static_cast<int>(j) == last_ref + 1;
                ref_used[j] = true;
                --it->second;
                --cand_left[w];
                walk(i + 1, static_cast<int>(j), chunks + (contiguous ? 0 : 1));
                ++cand_left[w];
                ++it->second;
                ref_used[j] = false;
            }
        }
        if (owed == 0 || cand_left[w] > owed) {
            --cand_left[w];
            walk(i + 1, -2, chunks);
            ++cand_left[w];
        }
    }
};

inline int minimal_chunks(const TokenList& cand, const TokenList& ref) {
    if (cand.size() > 30) {
        std::map<std::string, int> rc;
        for (const auto& t : ref) ++rc[t];
        std::vector<bool> used(ref.size(), false);
        int chunks = 0, last = -2;
        for (const auto& w : cand) {
            int pick = -1;
            for (std::size_t j = 0; j < ref.size(); ++j) {
                if (!used[j] && ref[j] == w) {
                    pick = static_cast<int>(j);
                    break;
                }
            }
            if (pick < 0) {
                last = -2;
                continue;
            }
            used[pick] = true;
            if (pick != last + 1) ++chunks;
            last = pick;
        }
        return chunks;
    }
    ChunkSearch s(cand, ref);
    s.walk(0, -2, 0);
    return s.best;
}

}  // namespace metrics_detail

// Sentence BLEU: geometric mean of modified n-gram precisions with add-one
// smoothing on zero-match orders, times the brevity penalty.
inline double bleu(const TokenList& cand, const TokenList& ref, int max_n = 4) {
    using metrics_detail::ngram_counts;
    if (ref.empty()) throw EmptyReference("BLEU needs a nonempty reference");
    if (cand.empty()) return 0.0;

    double log_sum = 0.0;
    for (int n = 1; n <= max_n; ++n) {
        auto cc = ngram_counts(cand, n);
        auto rc = ngram_counts(ref, n);
        long total = 0, matched = 0;
        for (const auto& [gram, count] : cc) {
            total += count;
            auto it = rc.find(gram);
            if (it != rc.end()) matched += std::min(count, it->second);
        }
        double p = matched > 0 ? static_cast<double>(matched) / static_cast<double>(total)
                               : (matched + 1.0) / (total + 1.0);
        log_sum += std::log(p);
    }
    double geo = std::exp(log_sum / max_n);

    double c = static_cast<double>(cand.size());
    double r = static_cast<double>(ref.size());
    double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
    return geo * bp;
}

// ROUGE-L F1 from the longest common subsequence.
inline double rouge_l(const TokenList& cand, const TokenList& ref) {
    if (cand.empty() || ref.empty()) return 0.0;
    int lcs = metrics_detail::lcs_length(cand, ref);
    if (lcs == 0) return 0.0;
    double p = static_cast<double>(lcs) / cand.size();
    double r = static_cast<double>(lcs) / ref.size();
    return 2.0 * p * r / (p + r);
}

// Exact-unigram METEOR: alignment maximizes matches, then minimizes chunks;
// F_mean = 10PR/(R+9P); penalty = 0.5 (chunks/matches)^3.
inline double meteor(const TokenList& cand, const TokenList& ref) {
    if (cand.empty() || ref.empty()) return 0.0;
    std::map<std::string, int> cc, rc;
    for (const auto& t : cand) ++cc[t];
    for (const auto& t : ref) ++rc[t];
    long m = 0;
    for (const auto& [t, n] : cc) {
        auto it = rc.find(t);
        if (it != rc.end()) m += std::min(n, it->second);
    }
    if (m == 0) return 0.0;

    double p = static_cast<double>(m) / cand.size();
    double r = static_cast<double>(m) / ref.size();
    double f_mean = 10.0 * p * r / (r + 9.0 * p);
    int chunks = metrics_detail::minimal_chunks(cand, ref);
    double penalty = 0.5 * std::pow(static_cast<double>(chunks) / static_cast<double>(m), 3.0);
    return f_mean * (1.0 - penalty);
}

// Recall over the correct (label 1) and incorrect (label 0) subsets. A subset
// with no members yields an absent value rather than zero.
inline std::pair<std::optional<double>, std::optional<double>> plus_minus_recall(
    const std::vector<float>& preds, const std::vector<int>& labels, float threshold = 0.5f) {
    if (preds.size() != labels.size()) {
        throw LengthMismatch("got " + std::to_string(preds.size()) + " predictions and " +
                             std::to_string(labels.size()) + " labels");
    }
    long tp = 0, fn = 0, tn = 0, fp = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        bool positive = preds[i] >= threshold;
        if (labels[i] == 1) {
            positive ? ++tp : ++fn;
        } else {
            positive ? ++fp : ++tn;
        }
    }
    std::optional<double> plus, minus;
    if (tp + fn > 0) plus = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (tn + fp > 0) minus = static_cast<double>(tn) / static_cast<double>(tn + fp);
    return {plus, minus};
}

// Corpus scores are plain means of per-sample scores.
inline double corpus_mean(const std::vector<double>& scores) {
    if (scores.empty()) return 0.0;
    double s = 0.0;
    for (double v : scores) s += v;
    return s / static_cast<double>(scores.size());
}

}  // namespace patcherizer
