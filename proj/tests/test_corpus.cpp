#include <gtest/gtest.h>

#include <string>

#include "patcherizer/corpus.hpp"
#include "test_util.hpp"

using namespace patcherizer;

namespace {

std::string jl(testutil::TempDir& dir, const std::string& name, const std::string& body) {
    std::string path = dir.file(name);
    write_file(path, body);
    return path;
}

}  // namespace

TEST(GenCorpus, ReadsRecordsAndDefaultsIdsToLineIndex) {
    testutil::TempDir dir("scratch");
    auto path = jl(dir, "g.jsonl",
                   R"({"diff": "d0", "msg": "m0"})"
                   "\n"
                   R"({"id": "named", "diff": "d1", "msg": "m1"})"
                   "\n");
    auto recs = load_gen_corpus(path);
    ASSERT_EQ(recs.size(), 2u);
    EXPECT_EQ(recs[0].id, "0");
    EXPECT_EQ(recs[0].diff, "d0");
    EXPECT_EQ(recs[1].id, "named");
    EXPECT_EQ(recs[1].msg, "m1");
}

TEST(GenCorpus, BlankLinesAreSkipped) {
    testutil::TempDir dir("scratch");
    auto path = jl(dir, "g.jsonl", "\n" R"({"diff": "d", "msg": "m"})" "\n\n");
    EXPECT_EQ(load_gen_corpus(path).size(), 1u);
}

TEST(GenCorpus, MissingFieldAndBadJsonAreSchemaErrors) {
    testutil::TempDir dir("scratch");
    EXPECT_THROW(load_gen_corpus(jl(dir, "a.jsonl", R"({"diff": "d"})" "\n")), SchemaError);
    EXPECT_THROW(load_gen_corpus(jl(dir, "b.jsonl", "not json\n")), SchemaError);
    EXPECT_THROW(load_gen_corpus(jl(dir, "c.jsonl", "[1, 2]\n")), SchemaError);
}

TEST(GenCorpus, EmptyFileThrowsCorpusEmptyAndMissingFileFileNotFound) {
    testutil::TempDir dir("scratch");
    EXPECT_THROW(load_gen_corpus(jl(dir, "e.jsonl", "")), CorpusEmpty);
    EXPECT_THROW(load_gen_corpus(dir.file("nope.jsonl")), FileNotFound);
}

TEST(CorrectnessCorpus, ReadsLabelsAndOptionalIds) {
    testutil::TempDir dir("scratch");
    auto path = jl(dir, "c.jsonl",
                   R"({"diff": "d0", "bug_report": "crashes", "label": 1})"
                   "\n"
                   R"({"id": "x", "diff": "d1", "bug_report": "slow", "label": 0})"
                   "\n");
    auto recs = load_correctness_corpus(path);
    ASSERT_EQ(recs.size(), 2u);
    EXPECT_EQ(recs[0].label, 1);
    EXPECT_EQ(recs[1].id, "x");
    EXPECT_EQ(recs[1].label, 0);
    EXPECT_FALSE(recs[0].bug_vec.has_value());
}

TEST(CorrectnessCorpus, LabelMustBeZeroOrOne) {
    testutil::TempDir dir("scratch");
    EXPECT_THROW(
        load_correctness_corpus(jl(dir, "a.jsonl", R"({"diff":"d","bug_report":"b","label":2})")),
        SchemaError);
    EXPECT_THROW(
        load_correctness_corpus(jl(dir, "b.jsonl", R"({"diff":"d","bug_report":"b","label":"1"})")),
        SchemaError);
    EXPECT_THROW(load_correctness_corpus(jl(dir, "c.jsonl", R"({"diff":"d","bug_report":"b"})")),
                 SchemaError);
}

TEST(Vectors, RoundTripThroughDisk) {
    testutil::TempDir dir("scratch");
    std::string path = dir.file("v.jsonl");
    write_vectors(path, {{"a", {1.0f, 2.5f}}, {"b", {-0.5f}}});
    auto got = load_vectors(path);
    ASSERT_EQ(got.size(), 2u);
    ASSERT_EQ(got.at("a").size(), 2u);
    EXPECT_FLOAT_EQ(got.at("a")[1], 2.5f);
    EXPECT_FLOAT_EQ(got.at("b")[0], -0.5f);
}

TEST(Vectors, NonNumericEntryIsASchemaError) {
    testutil::TempDir dir("scratch");
    EXPECT_THROW(load_vectors(jl(dir, "v.jsonl", R"({"id": "a", "vec": [1, "x"]})")), SchemaError);
    EXPECT_THROW(load_vectors(jl(dir, "w.jsonl", R"({"id": "a", "vec": 3})")), SchemaError);
}

TEST(Predictions, WritesOneObjectPerLine) {
    testutil::TempDir dir("scratch");
    std::string path = dir.file("p.jsonl");
    write_predictions(path, {{"0", "fix the loop"}, {"1", ""}});
    auto lines = split_lines(read_file(path));
    ASSERT_EQ(lines.size(), 2u);
    auto j = nlohmann::json::parse(lines[0]);
    EXPECT_EQ(j["id"], "0");
    EXPECT_EQ(j["prediction"], "fix the loop");
}
