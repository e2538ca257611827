#include <gtest/gtest.h>

#include <fstream>
#include <string>
#include <vector>

#include "patcherizer/checkpoint.hpp"
#include "test_util.hpp"

using namespace patcherizer;

namespace {

ParamMap sample_params(std::uint64_t seed) {
    ParamMap p;
    Rng rng(seed);
    p.emplace("a.w", xavier_init({3, 2}, rng));
    p.emplace("a.b", Tensor::zeros({2}, true));
    p.emplace("z.w", xavier_init({2, 2}, rng));
    return p;
}

ParamMap zeros_like(const ParamMap& src) {
    ParamMap p;
    for (const auto& [name, t] : src) p.emplace(name, Tensor::zeros(t.shape(), true));
    return p;
}

std::string file_bytes(const std::string& path) { return read_file(path); }

}  // namespace

TEST(Checkpoint, RoundTripRestoresEveryValue) {
    testutil::TempDir dir("scratch");
    std::string path = dir.file("m.ckpt");
    ParamMap src = sample_params(11);
    save_checkpoint(src, path);

    ParamMap dst = zeros_like(src);
    load_checkpoint(dst, path);
    for (const auto& [name, t] : src) {
        const auto& got = dst.at(name).value();
        ASSERT_EQ(got.size(), t.value().size()) << name;
        for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i], t.value()[i]) << name;
    }
}

TEST(Checkpoint, SavingTwiceIsByteIdentical) {
    testutil::TempDir dir("scratch");
    std::string p1 = dir.file("a.ckpt");
    std::string p2 = dir.file("b.ckpt");
    ParamMap src = sample_params(7);
    save_checkpoint(src, p1);
    save_checkpoint(src, p2);
    EXPECT_EQ(file_bytes(p1), file_bytes(p2));
}

TEST(Checkpoint, UnknownTensorInFileThrows) {
    testutil::TempDir dir("scratch");
    std::string path = dir.file("m.ckpt");
    save_checkpoint(sample_params(3), path);

    ParamMap dst = zeros_like(sample_params(3));
    dst.erase("z.w");
    EXPECT_THROW(load_checkpoint(dst, path), CheckpointMismatch);
    EXPECT_THROW(load_checkpoint(dst, path, false), CheckpointMismatch);
}

TEST(Checkpoint, StrictRejectsExtraModelParamsButNonStrictKeepsThem) {
    testutil::TempDir dir("scratch");
    std::string path = dir.file("m.ckpt");
    ParamMap src = sample_params(3);
    save_checkpoint(src, path);

    ParamMap dst = zeros_like(src);
    dst.emplace("head.w", Tensor::from_data({2}, {5.0f, 6.0f}));
    EXPECT_THROW(load_checkpoint(dst, path), CheckpointMismatch);

    load_checkpoint(dst, path, false);
    EXPECT_FLOAT_EQ(dst.at("head.w").value()[0], 5.0f);
    EXPECT_EQ(dst.at("a.w").value(), src.at("a.w").value());
}

TEST(Checkpoint, ShapeMismatchThrows) {
    testutil::TempDir dir("scratch");
    std::string path = dir.file("m.ckpt");
    save_checkpoint(sample_params(3), path);

    ParamMap dst = zeros_like(sample_params(3));
    dst.erase("a.w");
    dst.emplace("a.w", Tensor::zeros({2, 3}, true));
    EXPECT_THROW(load_checkpoint(dst, path), CheckpointMismatch);
}

TEST(Checkpoint, BadMagicAndTruncationAreDetected) {
    testutil::TempDir dir("scratch");
    std::string path = dir.file("m.ckpt");
    ParamMap src = sample_params(3);
    ParamMap dst = zeros_like(src);

    write_file(path, "definitely not a checkpoint");
    EXPECT_THROW(load_checkpoint(dst, path), CheckpointMismatch);

    save_checkpoint(src, path);
    std::string whole = file_bytes(path);
    {
        std::ofstream out(path, std::ios::binary);
        out.write(whole.data(), static_cast<std::streamsize>(whole.size() - 5));
    }
    EXPECT_THROW(load_checkpoint(dst, path), CheckpointMismatch);
}

TEST(Checkpoint, MissingFileThrowsFileNotFound) {
    testutil::TempDir dir("scratch");
    ParamMap dst = sample_params(1);
    EXPECT_THROW(load_checkpoint(dst, dir.file("gone.ckpt")), FileNotFound);
}
