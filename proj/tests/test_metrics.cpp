#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "patcherizer/metrics.hpp"

using namespace patcherizer;

namespace {

TokenList toks(const std::string& text) {
    TokenList out;
    std::string cur;
    for (char ch : text) {
        if (ch == ' ') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

// Plain recursive LCS with memoization, no rolling rows.
int lcs_slow(const TokenList& a, const TokenList& b, std::size_t i, std::size_t j,
             std::map<std::pair<std::size_t, std::size_t>, int>& memo) {
    if (i == a.size() || j == b.size()) return 0;
    auto key = std::make_pair(i, j);
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    int r;
    if (a[i] == b[j]) {
        r = 1 + lcs_slow(a, b, i + 1, j + 1, memo);
    } else {
        r = std::max(lcs_slow(a, b, i + 1, j, memo), lcs_slow(a, b, i, j + 1, memo));
    }
    memo[key] = r;
    return r;
}

double rouge_slow(const TokenList& a, const TokenList& b) {
    std::map<std::pair<std::size_t, std::size_t>, int> memo;
    int lcs = lcs_slow(a, b, 0, 0, memo);
    if (lcs == 0 || a.empty() || b.empty()) return 0.0;
    double p = static_cast<double>(lcs) / a.size();
    double r = static_cast<double>(lcs) / b.size();
    return 2.0 * p * r / (p + r);
}

}  // namespace

TEST(Bleu, ShorterPrefixCandidateIsPureBrevityPenalty) {
    // All four precisions are 1 (orders past the candidate length smooth to
    // (0+1)/(0+1)), so the score collapses to exp(1 - 4/3).
    double got = bleu(toks("the cat sat"), toks("the cat sat down"));
    EXPECT_NEAR(got, std::exp(-1.0 / 3.0), 1e-12);
}

TEST(Bleu, LongerCandidateAgainstPrefixReference) {
    // p1..p3 = 3/4, 2/3, 1/2; the 4-gram order has one unmatched candidate
    // gram, smoothing to 1/2; no brevity penalty.
    double got = bleu(toks("the cat sat down"), toks("the cat sat"));
    EXPECT_NEAR(got, std::pow(1.0 / 8.0, 0.25), 1e-12);
}

TEST(Bleu, DisjointLongCandidateScoresBelowFiveHundredths) {
    TokenList cand, ref;
    for (int i = 0; i < 32; ++i) {
        cand.push_back("c" + std::to_string(i));
        ref.push_back("r" + std::to_string(i));
    }
    double got = bleu(cand, ref);
    EXPECT_NEAR(got, std::pow(1.0 / (33.0 * 32.0 * 31.0 * 30.0), 0.25), 1e-12);
    EXPECT_LT(got, 0.05);
}

TEST(Bleu, IdenticalSentenceScoresExactlyOne) {
    TokenList s = toks("a b c d e f g h i j k l");
    EXPECT_NEAR(bleu(s, s), 1.0, 1e-9);
}

TEST(Bleu, EmptyCandidateScoresZero) {
    EXPECT_EQ(bleu({}, toks("a b")), 0.0);
}

TEST(Bleu, EmptyReferenceThrows) {
    EXPECT_THROW(bleu(toks("a"), {}), EmptyReference);
}

TEST(Bleu, RepeatedCandidateTokensAreClipped) {
    // "the the the" vs "the cat": the unigram count is clipped to the single
    // reference occurrence (p1 = 1/3), both bigrams miss (smoothed 1/3), the
    // lone trigram misses (smoothed 1/2), and 4-grams smooth to 1.
    double expect = std::pow((1.0 / 3.0) * (1.0 / 3.0) * 0.5, 0.25);
    EXPECT_NEAR(bleu(toks("the the the"), toks("the cat")), expect, 1e-12);
}

TEST(RougeL, HandComputedPrefixPair) {
    double got = rouge_l(toks("the cat sat"), toks("the cat sat down"));
    EXPECT_NEAR(got, 6.0 / 7.0, 1e-12);
}

TEST(RougeL, NoCommonTokenScoresZero) {
    EXPECT_EQ(rouge_l(toks("a b c"), toks("d e f")), 0.0);
}

TEST(RougeL, IdenticalSentenceScoresExactlyOne) {
    TokenList s = toks("fix the off by one loop bound");
    EXPECT_NEAR(rouge_l(s, s), 1.0, 1e-9);
}

TEST(RougeL, CrossedOrderKeepsOnlyTheSubsequence) {
    // LCS("a b c d", "a c b d") = 3, P = R = 3/4.
    EXPECT_NEAR(rouge_l(toks("a b c d"), toks("a c b d")), 0.75, 1e-12);
}

TEST(RougeL, MatchesRecursiveOracleOnRandomPairs) {
    Rng rng(404);
    std::vector<std::string> alphabet = {"a", "b", "c", "d"};
    for (int trial = 0; trial < 200; ++trial) {
        TokenList a, b;
        int na = 1 + static_cast<int>(rng.index(8));
        int nb = 1 + static_cast<int>(rng.index(8));
        for (int i = 0; i < na; ++i) a.push_back(alphabet[rng.index(alphabet.size())]);
        for (int i = 0; i < nb; ++i) b.push_back(alphabet[rng.index(alphabet.size())]);
        EXPECT_NEAR(rouge_l(a, b), rouge_slow(a, b), 1e-12);
    }
}

TEST(Meteor, SwappedTailCostsHalfTheScore) {
    // Three matches in three chunks: penalty = 0.5 * (3/3)^3 = 0.5, F = 1.
    EXPECT_NEAR(meteor(toks("a b c"), toks("a c b")), 0.5, 1e-12);
}

TEST(Meteor, SingleSubstitutionKeepsTwoChunks) {
    // m = 5 of 6 tokens; the duplicate "the" must be matched at position 0 so
    // the alignment splits into [the cat sat on] and [mat]: 2 chunks.
    double f = 5.0 / 6.0;
    double penalty = 0.5 * std::pow(2.0 / 5.0, 3.0);
    double got = meteor(toks("the cat sat on the mat"), toks("the cat sat on a mat"));
    EXPECT_NEAR(got, f * (1.0 - penalty), 1e-12);
}

TEST(Meteor, IdenticalSentenceKeepsOnlyTheSingleChunkPenalty) {
    double got = meteor(toks("the quick brown fox"), toks("the quick brown fox"));
    EXPECT_NEAR(got, 1.0 - 0.5 / 64.0, 1e-12);
}

TEST(Meteor, ChunkSearchBeatsFirstAvailableGreedy) {
    // "b a b" vs "a b b": taking the second reference "b" first lets the final
    // "b" extend the chunk started by "a", giving 2 chunks where greedy
    // first-available matching yields 3.
    double penalty = 0.5 * std::pow(2.0 / 3.0, 3.0);
    EXPECT_NEAR(meteor(toks("b a b"), toks("a b b")), 1.0 - penalty, 1e-12);
}

TEST(Meteor, NoOverlapScoresZero) {
    EXPECT_EQ(meteor(toks("a b"), toks("c d")), 0.0);
    EXPECT_EQ(meteor({}, toks("a")), 0.0);
}

TEST(Meteor, RecallHeavyMeanLeansTowardRecall) {
    // cand "a", ref "a b": P = 1, R = 1/2, F = 10*0.5/(0.5 + 9) ; one chunk of
    // one match, penalty 0.5.
    double f = 5.0 / 9.5;
    EXPECT_NEAR(meteor(toks("a"), toks("a b")), f * 0.5, 1e-12);
}

TEST(Recall, HandConfusionMatrix) {
    auto [plus, minus] = plus_minus_recall({0.9f, 0.4f, 0.6f, 0.2f}, {1, 1, 0, 0});
    ASSERT_TRUE(plus.has_value());
    ASSERT_TRUE(minus.has_value());
    EXPECT_NEAR(*plus, 0.5, 1e-12);
    EXPECT_NEAR(*minus, 0.5, 1e-12);
}

TEST(Recall, ThresholdBoundaryCountsAsPositive) {
    auto [plus, minus] = plus_minus_recall({0.5f}, {1});
    EXPECT_NEAR(*plus, 1.0, 1e-12);
    EXPECT_FALSE(minus.has_value());
}

TEST(Recall, MissingSubsetIsAbsentNotZero) {
    auto [plus, minus] = plus_minus_recall({0.1f, 0.9f}, {0, 0});
    EXPECT_FALSE(plus.has_value());
    ASSERT_TRUE(minus.has_value());
    EXPECT_NEAR(*minus, 0.5, 1e-12);
}

TEST(Recall, CustomThresholdMovesTheCut) {
    auto [plus, minus] = plus_minus_recall({0.6f, 0.8f}, {1, 1}, 0.7f);
    EXPECT_NEAR(*plus, 0.5, 1e-12);
    EXPECT_FALSE(minus.has_value());
}

TEST(Recall, LengthMismatchThrows) {
    EXPECT_THROW(plus_minus_recall({0.5f}, {1, 0}), LengthMismatch);
}

TEST(CorpusMean, PlainMeanAndPermutationInvariance) {
    std::vector<double> s = {0.25, 0.5, 1.0, 0.0};
    double a = corpus_mean(s);
    std::reverse(s.begin(), s.end());
    EXPECT_NEAR(a, 0.4375, 1e-12);
    EXPECT_EQ(a, corpus_mean(s));
}

TEST(CorpusMean, EmptyIsZero) {
    EXPECT_EQ(corpus_mean({}), 0.0);
}
