#include "patcherizer/bpe.hpp"

#include <gtest/gtest.h>

using namespace patcherizer;

namespace {

std::vector<std::pair<std::string, std::string>> merge_list(const Vocab& v) { return v.merges; }

}  // namespace

TEST(TrainBpe, RepeatedCharacterLearnsNestedMerges) {
    // Hand simulation for corpus ["aaaa"]: symbols a a a a; pair ("a","a")
    // has frequency 3, merging gives [aa, aa]; pair ("aa","aa") frequency 1,
    // merging gives [aaaa]. Vocab = 5 specials + "a" + two merge outputs = 8.
    Vocab v = train_bpe({"aaaa"}, 8);
    ASSERT_EQ(merge_list(v),
              (std::vector<std::pair<std::string, std::string>>{{"a", "a"}, {"aa", "aa"}}));
    EXPECT_EQ(v.size(), 8);
    Encoded e = encode(v, "aaaa", 4);
    EXPECT_EQ(e.ids, (std::vector<int>{v.token_to_id.at("aaaa"), kPad, kPad, kPad}));
    EXPECT_EQ(e.mask, (std::vector<float>{1, 0, 0, 0}));
}

TEST(TrainBpe, BudgetStopsMergeLearning) {
    Vocab v = train_bpe({"aaaa"}, 7);
    ASSERT_EQ(merge_list(v), (std::vector<std::pair<std::string, std::string>>{{"a", "a"}}));
    Encoded e = encode(v, "aaaa", 4);
    int aa = v.token_to_id.at("aa");
    EXPECT_EQ(e.ids, (std::vector<int>{aa, aa, kPad, kPad}));
}

TEST(TrainBpe, EmptyCorpusRejected) {
    EXPECT_THROW(train_bpe({}, 100), CorpusEmpty);
    EXPECT_THROW(train_bpe({"", "   "}, 100), CorpusEmpty);
}

TEST(TrainBpe, TargetMustExceedCharsPlusSpecials) {
    // "ab" has 2 base characters, so the floor is 7.
    EXPECT_THROW(train_bpe({"ab"}, 7), TargetSizeTooSmall);
    EXPECT_NO_THROW(train_bpe({"ab"}, 8));
}

TEST(TrainBpe, FrequencyOrdersMerges) {
    // "abab" contributes ("a","b") twice and ("b","a") once; "ab" adds one
    // more ("a","b"). Highest frequency merges first.
    Vocab v = train_bpe({"abab", "ab"}, 10);
    ASSERT_GE(v.merges.size(), 1u);
    EXPECT_EQ(v.merges[0], (std::pair<std::string, std::string>{"a", "b"}));
}

TEST(TrainBpe, LexicographicTieBreak) {
    Vocab v1 = train_bpe({"ab", "cd"}, 10);
    ASSERT_GE(v1.merges.size(), 1u);
    EXPECT_EQ(v1.merges[0], (std::pair<std::string, std::string>{"a", "b"}));

    Vocab v2 = train_bpe({"ac", "ab"}, 10);
    ASSERT_GE(v2.merges.size(), 1u);
    EXPECT_EQ(v2.merges[0], (std::pair<std::string, std::string>{"a", "b"}));
}

TEST(TrainBpe, DeterministicGivenCorpusOrder) {
    std::vector<std::string> corpus = {"x = a + b;", "y = a - b;", "return x * y;"};
    Vocab v1 = train_bpe(corpus, 40);
    Vocab v2 = train_bpe(corpus, 40);
    EXPECT_EQ(v1.merges, v2.merges);
    EXPECT_EQ(v1.id_to_token, v2.id_to_token);
}

TEST(Vocab, MapsAreExactInversesWithDenseIds) {
    Vocab v = train_bpe({"x = a + b;", "while (a < b) { a = a + 1; }"}, 50);
    ASSERT_EQ(static_cast<int>(v.id_to_token.size()), v.size());
    for (int id = 0; id < v.size(); ++id) {
        ASSERT_TRUE(v.token_to_id.count(v.id_to_token[id]));
        EXPECT_EQ(v.token_to_id.at(v.id_to_token[id]), id);
    }
    EXPECT_EQ(v.id_to_token[kPad], "<pad>");
    EXPECT_EQ(v.id_to_token[kBos], "<s>");
    EXPECT_EQ(v.id_to_token[kEos], "</s>");
    EXPECT_EQ(v.id_to_token[kMask], "<mask>");
    EXPECT_EQ(v.id_to_token[kUnk], "<unk>");
}

TEST(Encode, EmptyTextIsAllPadding) {
    Vocab v = train_bpe({"ab"}, 9);
    Encoded e = encode(v, "", 5);
    EXPECT_EQ(e.ids, std::vector<int>(5, kPad));
    EXPECT_EQ(e.mask, std::vector<float>(5, 0.0f));
}

TEST(Encode, LongTextTruncates) {
    Vocab v = train_bpe({"abcdef"}, 12);
    Encoded e = encode(v, "abcdef abcdef abcdef", 4);
    EXPECT_EQ(e.ids.size(), 4u);
    EXPECT_EQ(e.mask, std::vector<float>(4, 1.0f));
}

TEST(Encode, UnknownCharactersBecomeUnk) {
    Vocab v = train_bpe({"ab"}, 9);
    Encoded e = encode(v, "xyz", 4);
    EXPECT_EQ(e.ids, (std::vector<int>{kUnk, kUnk, kUnk, kPad}));
}

TEST(Decode, SpecialsStripped) {
    Vocab v = train_bpe({"ab"}, 9);
    EXPECT_EQ(decode(v, {kPad, kPad}), "");
    EXPECT_EQ(decode(v, {kBos, kEos}), "");
}

TEST(Decode, UnknownIdRejected) {
    Vocab v = train_bpe({"ab"}, 9);
    EXPECT_THROW(decode(v, {v.size()}), UnknownId);
    EXPECT_THROW(decode(v, {-1}), UnknownId);
}

TEST(RoundTrip, CorpusLinesSurviveModuloWhitespace) {
    std::vector<std::string> corpus = {
        "x = 1",
        "int total = a + b;",
        "if (next > cap) { return cap; }",
        "this.log(\"done\", next);",
        "while  (a <   b) { a = a + 1; }",
    };
    Vocab v = train_bpe(corpus, 120);
    for (const std::string& line : corpus) {
        Encoded e = encode(v, line, 64);
        EXPECT_EQ(decode(v, e.ids), normalize_ws(line)) << line;
    }
}

TEST(RoundTrip, SharedSpacingReconstructs) {
    Vocab v = train_bpe({"ab ab", "ab"}, 9);
    ASSERT_EQ(merge_list(v), (std::vector<std::pair<std::string, std::string>>{{"a", "b"}}));
    Encoded e = encode(v, "ab ab", 8);
    std::vector<int> want = {v.token_to_id.at("ab"), v.token_to_id.at(" "),
                             v.token_to_id.at("ab"), kPad, kPad, kPad, kPad, kPad};
    EXPECT_EQ(e.ids, want);
    EXPECT_EQ(decode(v, e.ids), "ab ab");
}

TEST(VocabJson, RoundTripRebuildsIdenticalVocab) {
    Vocab v = train_bpe({"x = a + b;", "y = a - b;"}, 40);
    Vocab back = vocab_from_json(vocab_to_json(v));
    EXPECT_EQ(v.merges, back.merges);
    EXPECT_EQ(v.base_chars, back.base_chars);
    EXPECT_EQ(v.id_to_token, back.id_to_token);
}

TEST(VocabJson, BadDocumentsRejected) {
    EXPECT_THROW(vocab_from_json(nlohmann::json::array()), SchemaError);
    EXPECT_THROW(vocab_from_json(nlohmann::json{{"merges", nlohmann::json::array()}}),
                 SchemaError);
    nlohmann::json bad = {{"chars", nlohmann::json::array({"a"})},
                          {"merges", nlohmann::json::array({nlohmann::json::array({"a"})})}};
    EXPECT_THROW(vocab_from_json(bad), SchemaError);
}
