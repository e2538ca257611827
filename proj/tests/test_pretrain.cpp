#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include "patcherizer/pretraining.hpp"
#include "test_util.hpp"

using namespace patcherizer;

namespace {

std::vector<std::string> tiny_diffs() {
    return {
        "--- a/A.mini\n+++ b/A.mini\n@@ -1,6 +1,6 @@\n"
        " class A {\n     int x;\n     int get() {\n-        return x;\n+        return x + 1;\n"
        "     }\n }\n",
        "--- a/B.mini\n+++ b/B.mini\n@@ -1,6 +1,6 @@\n"
        " class B {\n     int y;\n     int put() {\n-        return y + 2;\n+        return y * 2;\n"
        "     }\n }\n",
        "--- a/C.mini\n+++ b/C.mini\n@@ -1,6 +1,7 @@\n"
        " class C {\n     int z;\n+    int w;\n     int zero() {\n"
        "         return 0;\n     }\n }\n",
    };
}

struct Tiny {
    Model model;
    std::vector<EncodedPatch> corpus;
};

Tiny build_tiny(std::uint64_t seed) {
    Config cfg;
    cfg.model.d_e = 8;
    cfg.model.l_max = 16;
    cfg.model.n_heads = 2;
    cfg.model.n_layers = 1;
    cfg.model.dropout = 0.0f;
    cfg.model.n_g = 16;

    std::vector<PreprocessedPatch> pps;
    std::vector<std::string> texts;
    std::vector<AstGraph> graphs;
    for (const std::string& d : tiny_diffs()) {
        PreprocessedPatch pp = preprocess_patch(d);
        texts.push_back(pp.cbp);
        texts.push_back(pp.cap);
        graphs.push_back(pp.g_cbp);
        graphs.push_back(pp.g_cap);
        pps.push_back(std::move(pp));
    }
    Vocab v = train_bpe(texts, 64);
    StaticGraph sg = build_static_graph(graphs, cfg.model.n_g);

    Tiny t{make_model(cfg, std::move(v), std::move(sg), {}, seed), {}};
    for (const PreprocessedPatch& pp : pps) t.corpus.push_back(encode_inputs(t.model, pp));
    return t;
}

Tiny& shared_tiny() {
    static Tiny t = build_tiny(99);
    return t;
}

double sequence_score(const Model& m, const PatchEmbedding& emb, const std::vector<int>& seq) {
    Rng rng(0);
    decode_detail::Hypothesis h{{kBos}, 0.0, false};
    double total = 0.0;
    for (int tok : seq) {
        total += decode_detail::log_probs_at(m, h, emb, rng)[tok];
        h.prefix.push_back(tok);
    }
    return total;
}

}  // namespace

TEST(MaskTokens, DeterministicUnderSeedAndSensitiveToIt) {
    std::vector<int> ids{7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18};
    MlmBatch a = mask_tokens(ids, 0.4f, 5);
    MlmBatch b = mask_tokens(ids, 0.4f, 5);
    EXPECT_EQ(a.positions, b.positions);
    EXPECT_EQ(a.input_ids, b.input_ids);
    EXPECT_EQ(a.target_ids, b.target_ids);

    bool any_diff = false;
    for (std::uint64_t s = 6; s < 16 && !any_diff; ++s) {
        any_diff = mask_tokens(ids, 0.4f, s).positions != a.positions;
    }
    EXPECT_TRUE(any_diff);
}

TEST(MaskTokens, MaskedPositionsCarryMaskTokenAndOriginalTarget) {
    std::vector<int> ids{5, 6, 7, 8};
    MlmBatch b = mask_tokens(ids, 0.9f, 1);
    ASSERT_FALSE(b.positions.empty());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        bool masked = std::find(b.positions.begin(), b.positions.end(), static_cast<int>(i)) !=
                      b.positions.end();
        if (masked) {
            EXPECT_EQ(b.input_ids[i], kMask);
            EXPECT_EQ(b.target_ids[i], ids[i]);
        } else {
            EXPECT_EQ(b.input_ids[i], ids[i]);
            EXPECT_EQ(b.target_ids[i], kPad);
        }
    }
}

TEST(MaskTokens, VanishingRateStillForcesExactlyOnePick) {
    std::vector<int> ids{9, 9, 9, 9, 9, 9};
    for (std::uint64_t s = 0; s < 20; ++s) {
        MlmBatch b = mask_tokens(ids, 1e-9f, s);
        EXPECT_EQ(b.positions.size(), 1u) << "seed " << s;
    }
}

TEST(MaskTokens, AllPadSequenceStaysUntouched) {
    std::vector<int> ids(8, kPad);
    MlmBatch b = mask_tokens(ids, 0.5f, 3);
    EXPECT_TRUE(b.positions.empty());
    EXPECT_EQ(b.input_ids, ids);
    for (int t : b.target_ids) EXPECT_EQ(t, kPad);
}

TEST(MaskTokens, SpecialTokensAreNeverEligible) {
    std::vector<int> ids{kBos, kUnk, 7, kEos, kPad};
    MlmBatch b = mask_tokens(ids, 1.0f, 11);
    ASSERT_EQ(b.positions.size(), 1u);
    EXPECT_EQ(b.positions[0], 2);
    EXPECT_EQ(b.input_ids[0], kBos);
    EXPECT_EQ(b.input_ids[1], kUnk);
    EXPECT_EQ(b.input_ids[3], kEos);
}

TEST(MaskTokens, EmpiricalRateMatchesBernoulliParameter) {
    std::vector<int> ids(10000, 7);
    MlmBatch b = mask_tokens(ids, 0.15f, 123);
    double frac = static_cast<double>(b.positions.size()) / ids.size();
    EXPECT_NEAR(frac, 0.15, 0.02);
}

TEST(MlmLoss, FirstStepSitsNearLogVocab) {
    Tiny& t = shared_tiny();
    std::vector<const EncodedPatch*> batch;
    for (const EncodedPatch& ep : t.corpus) batch.push_back(&ep);
    Rng rng(1);
    float loss = mlm_loss(t.model, batch, 0.15f, 7, rng).item();
    double ln_v = std::log(static_cast<double>(t.model.vocab.size()));
    EXPECT_GT(loss, 0.8 * ln_v);
    EXPECT_LT(loss, 1.2 * ln_v);
}

TEST(Pretrain, LossFallsOnTheTinyCorpus) {
    Tiny t = build_tiny(3);
    auto log = pretrain(t.model, t.corpus, 40, 2, 0.3f, 0.01f, 5);
    ASSERT_EQ(log.size(), 40u);
    EXPECT_EQ(log.front().step, 1);
    EXPECT_EQ(log.back().step, 40);
    float tail = 0.0f;
    for (int i = 35; i < 40; ++i) tail += log[i].loss;
    tail /= 5.0f;
    EXPECT_LT(tail, log.front().loss);
}

TEST(Pretrain, TwoRunsFromTheSameSeedAreBitIdentical) {
    testutil::TempDir dir("ckpt_twin");
    Tiny a = build_tiny(42);
    Tiny b = build_tiny(42);
    pretrain(a.model, a.corpus, 10, 2, 0.3f, 0.01f, 9);
    pretrain(b.model, b.corpus, 10, 2, 0.3f, 0.01f, 9);
    save_checkpoint(a.model.params, dir.file("a.ckpt"));
    save_checkpoint(b.model.params, dir.file("b.ckpt"));
    EXPECT_EQ(read_file(dir.file("a.ckpt")), read_file(dir.file("b.ckpt")));

    Tiny c = build_tiny(42);
    pretrain(c.model, c.corpus, 10, 2, 0.3f, 0.01f, 10);
    save_checkpoint(c.model.params, dir.file("c.ckpt"));
    EXPECT_NE(read_file(dir.file("a.ckpt")), read_file(dir.file("c.ckpt")));
}

TEST(TrainLog, CsvRoundTrip) {
    testutil::TempDir dir("trainlog");
    write_train_log(dir.file("log.csv"), {{1, 5.5f, 0.01f}, {2, 4.25f, 0.01f}});
    auto lines = split_lines(read_file(dir.file("log.csv")));
    ASSERT_EQ(lines.size(), 3u);
    EXPECT_EQ(lines[0], "step,loss,lr");
    EXPECT_EQ(lines[1], "1,5.5,0.01");
    EXPECT_EQ(lines[2], "2,4.25,0.01");
}

TEST(Decode, ZeroBudgetDecodesToNothing) {
    Tiny& t = shared_tiny();
    Rng rng(2);
    PatchEmbedding emb = encode_patch(t.model, t.corpus[0], false, rng);
    EXPECT_TRUE(decode_tokens(t.model, emb, 3, 0).empty());
    EXPECT_THROW(decode_tokens(t.model, emb, 0, 4), SchemaError);
}

TEST(Decode, GreedyBeamEqualsStepwiseArgmax) {
    Tiny& t = shared_tiny();
    Rng rng(2);
    PatchEmbedding emb = encode_patch(t.model, t.corpus[1], false, rng);

    std::vector<int> want;
    decode_detail::Hypothesis h{{kBos}, 0.0, false};
    int budget = std::min(6, t.model.tf.l_max - 1);
    for (int step = 0; step < budget; ++step) {
        std::vector<double> lp = decode_detail::log_probs_at(t.model, h, emb, rng);
        int pick = -1;
        for (int tok = 0; tok < static_cast<int>(lp.size()); ++tok) {
            if (tok == kPad || tok == kBos) continue;
            if (pick < 0 || lp[tok] > lp[pick]) pick = tok;
        }
        if (pick == kEos) break;
        want.push_back(pick);
        h.prefix.push_back(pick);
    }
    EXPECT_EQ(decode_tokens(t.model, emb, 1, 6), want);
}

TEST(Decode, OutputIsCleanAndDeterministic) {
    Tiny& t = shared_tiny();
    Rng rng(2);
    PatchEmbedding emb = encode_patch(t.model, t.corpus[2], false, rng);
    std::vector<int> out = decode_tokens(t.model, emb, 3, 10);
    EXPECT_LE(out.size(), 10u);
    for (int tok : out) {
        EXPECT_NE(tok, kPad);
        EXPECT_NE(tok, kBos);
        EXPECT_NE(tok, kEos);
    }
    EXPECT_EQ(decode_tokens(t.model, emb, 3, 10), out);
}

TEST(Decode, WiderBeamNeverReturnsAWorseScoredSequence) {
    Tiny& t = shared_tiny();
    Rng rng(2);
    PatchEmbedding emb = encode_patch(t.model, t.corpus[0], false, rng);
    std::vector<int> g1 = decode_tokens(t.model, emb, 1, 8);
    std::vector<int> g3 = decode_tokens(t.model, emb, 3, 8);
    EXPECT_GE(sequence_score(t.model, emb, g3), sequence_score(t.model, emb, g1) - 1e-9);
}

TEST(SharedEmbedding, OneTableDrivesInputAndOutputProjections) {
    Tiny t = build_tiny(8);
    ASSERT_EQ(t.model.params.count("tf.tok_emb"), 1u);
    for (const auto& [name, tensor] : t.model.params) {
        EXPECT_EQ(name.find("lm_head"), std::string::npos);
        EXPECT_EQ(name.find("out_emb"), std::string::npos);
    }

    Rng rng(2);
    int tok = t.corpus[0].cbp.ids[0];
    ASSERT_GE(tok, kFirstRegularId);
    PatchEmbedding emb = encode_patch(t.model, t.corpus[0], false, rng);
    decode_detail::Hypothesis h{{kBos, tok}, 0.0, false};
    std::vector<double> lp_before = decode_detail::log_probs_at(t.model, h, emb, rng);

    Tensor& table = t.model.params.at("tf.tok_emb");
    int d = t.model.tf.d_e;
    for (int j = 0; j < d; ++j) table.mutable_value()[tok * d + j] += 1.0f;

    PatchEmbedding emb2 = encode_patch(t.model, t.corpus[0], false, rng);
    std::vector<double> lp_after = decode_detail::log_probs_at(t.model, h, emb2, rng);
    EXPECT_NE(lp_before[tok], lp_after[tok]);

    bool encoder_moved = false;
    for (std::size_t i = 0; i < emb.memory.value().size() && !encoder_moved; ++i) {
        encoder_moved = emb.memory.value()[i] != emb2.memory.value()[i];
    }
    EXPECT_TRUE(encoder_moved);
}
