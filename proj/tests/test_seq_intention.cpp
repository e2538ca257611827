#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "patcherizer/seq_intention.hpp"
#include "seq_oracle.hpp"
#include "test_util.hpp"

using namespace patcherizer;

namespace {

TransformerConfig small_cfg() {
    TransformerConfig cfg;
    cfg.vocab_size = 16;
    cfg.d_e = 8;
    cfg.l_max = 4;
    cfg.n_heads = 2;
    cfg.n_layers = 2;
    cfg.dropout = 0.0f;
    return cfg;
}

Tensor make_mask(std::vector<float> m) {
    int n = static_cast<int>(m.size());
    return Tensor::from_data({n}, std::move(m));
}

ParamMap init_model(const TransformerConfig& cfg, std::uint64_t seed) {
    ParamMap p;
    Rng rng(seed);
    transformer_init(cfg, p, rng);
    seq_intention_init(cfg, p);
    return p;
}

}  // namespace

TEST(CrossAttention, SingleUnmaskedSourceRowIsCopiedToEveryQuery) {
    Tensor src = Tensor::from_data({3, 2}, {9.0f, 9.0f, 0.5f, -0.25f, 7.0f, 7.0f});
    Tensor qry = Tensor::from_data({3, 2}, {1.0f, 2.0f, -3.0f, 0.0f, 0.1f, 0.1f});
    Tensor v = cross_attention(src, qry, make_mask({0, 1, 0}));
    for (int i = 0; i < 3; ++i) {
        EXPECT_FLOAT_EQ(v.at(i, 0), 0.5f);
        EXPECT_FLOAT_EQ(v.at(i, 1), -0.25f);
    }
}

TEST(CrossAttention, LargeAlignedQueryConcentratesWeight) {
    std::vector<float> eye(16, 0.0f);
    for (int i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0f;
    Tensor src = Tensor::from_data({4, 4}, eye);
    Tensor qry = Tensor::from_data({1, 4}, {0.0f, 0.0f, 100.0f, 0.0f});
    Tensor v = cross_attention(src, qry, make_mask({1, 1, 1, 1}));
    // v row equals the attention weights themselves here, so v[2] is alpha_2.
    EXPECT_GT(v.at(0, 2), 0.99f);
}

TEST(CrossAttention, HandComputedTwoByTwo) {
    Tensor src = Tensor::from_data({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
    Tensor qry = Tensor::from_data({1, 2}, {1.0f, 0.0f});
    Tensor v = cross_attention(src, qry, make_mask({1, 1}));
    float e = std::exp(1.0f);
    EXPECT_NEAR(v.at(0, 0), e / (e + 1.0f), 1e-6f);
    EXPECT_NEAR(v.at(0, 1), 1.0f / (e + 1.0f), 1e-6f);
}

TEST(CrossAttention, WeightsSumToOnePerQueryRow) {
    Rng rng(42);
    std::vector<float> sv(5 * 3), qv(4 * 3);
    for (auto& x : sv) x = rng.normal();
    for (auto& x : qv) x = rng.normal();
    Tensor src = Tensor::from_data({5, 3}, sv);
    Tensor qry = Tensor::from_data({4, 3}, qv);
    Tensor mask = make_mask({1, 0, 1, 1, 0});
    Tensor scores = matmul(qry, src, false, true);
    Tensor attn = softmax_rows(scores, mask);
    for (int i = 0; i < 4; ++i) {
        float s = 0.0f;
        for (int j = 0; j < 5; ++j) s += attn.at(i, j);
        EXPECT_NEAR(s, 1.0f, 1e-6f);
    }
}

TEST(CrossAttention, FullyMaskedSourceThrows) {
    Tensor src = Tensor::from_data({2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
    Tensor qry = Tensor::from_data({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
    try {
        cross_attention(src, qry, make_mask({0, 0}));
        FAIL() << "expected AllMaskedSource";
    } catch (const AllMaskedSource& e) {
        EXPECT_EQ(e.kind(), "AllMaskedSource");
    }
}

TEST(CrossResnet, NegatedContextLeavesPureNormPath) {
    TransformerConfig cfg = small_cfg();
    ParamMap p = init_model(cfg, 3);
    Rng rng(5);
    std::vector<float> ev(4 * 8);
    for (auto& x : ev) x = rng.normal();
    Tensor e = Tensor::from_data({4, 8}, ev);
    Tensor out = cross_resnet(p, "seq.cc_ln", e, scale(e, -1.0f));
    Tensor expected = relu(layer_norm_rows(e));
    for (std::size_t i = 0; i < out.numel(); ++i)
        EXPECT_NEAR(out.value()[i], expected.value()[i], 1e-6f);
}

TEST(SeqIntention, EmptyMinusStreamGivesZeroMinusOutputAndFiniteplusOutput) {
    TransformerConfig cfg = small_cfg();
    ParamMap p = init_model(cfg, 11);
    Rng fwd(0);
    SeqIntentionOut out = encode_seq_intention(cfg, p, {5, 6, 7, 0}, make_mask({1, 1, 1, 0}),
                                               {0, 0, 0, 0}, make_mask({0, 0, 0, 0}),
                                               {5, 6, 7, 8}, make_mask({1, 1, 1, 1}), false, fwd);
    for (float v : out.o_cc_m.value()) EXPECT_EQ(v, 0.0f);
    for (float v : out.o_ct2cc_m.value()) EXPECT_EQ(v, 0.0f);
    float live = 0.0f;
    for (float v : out.o_cc_p.value()) {
        EXPECT_TRUE(std::isfinite(v));
        live += std::fabs(v);
    }
    EXPECT_GT(live, 0.0f);
}

TEST(SeqIntention, PadRowsOfEachOutputAreZero) {
    TransformerConfig cfg = small_cfg();
    ParamMap p = init_model(cfg, 13);
    Rng fwd(0);
    SeqIntentionOut out = encode_seq_intention(cfg, p, {5, 6, 0, 0}, make_mask({1, 1, 0, 0}),
                                               {7, 0, 0, 0}, make_mask({1, 0, 0, 0}),
                                               {5, 6, 7, 0}, make_mask({1, 1, 1, 0}), false, fwd);
    for (int c = 0; c < cfg.d_e; ++c) {
        EXPECT_EQ(out.o_cc_p.at(2, c), 0.0f);
        EXPECT_EQ(out.o_cc_p.at(3, c), 0.0f);
        EXPECT_EQ(out.o_cc_m.at(1, c), 0.0f);
        EXPECT_EQ(out.o_ct2cc_m.at(3, c), 0.0f);
    }
}

TEST(SeqIntention, IdenticalStreamsProduceIdenticalOutputs) {
    TransformerConfig cfg = small_cfg();
    ParamMap p = init_model(cfg, 17);
    Rng fwd(0);
    SeqIntentionOut out = encode_seq_intention(cfg, p, {5, 9, 12, 0}, make_mask({1, 1, 1, 0}),
                                               {5, 9, 12, 0}, make_mask({1, 1, 1, 0}),
                                               {5, 9, 12, 0}, make_mask({1, 1, 1, 0}), false, fwd);
    for (std::size_t i = 0; i < out.o_cc_p.numel(); ++i)
        EXPECT_EQ(out.o_cc_p.value()[i], out.o_cc_m.value()[i]);
    for (std::size_t i = 0; i < out.o_ct2cc_p.numel(); ++i)
        EXPECT_EQ(out.o_ct2cc_p.value()[i], out.o_ct2cc_m.value()[i]);
}

TEST(SeqIntention, SwappingStreamsSwapsOutputsExactly) {
    TransformerConfig cfg = small_cfg();
    ParamMap p = init_model(cfg, 19);
    std::vector<int> ids_p = {5, 6, 7, 0}, ids_m = {8, 9, 0, 0}, ids_c = {5, 6, 8, 9};
    Tensor mp = make_mask({1, 1, 1, 0}), mm = make_mask({1, 1, 0, 0}), mc = make_mask({1, 1, 1, 1});
    Rng f1(0), f2(0);
    SeqIntentionOut a = encode_seq_intention(cfg, p, ids_p, mp, ids_m, mm, ids_c, mc, false, f1);
    SeqIntentionOut b = encode_seq_intention(cfg, p, ids_m, mm, ids_p, mp, ids_c, mc, false, f2);
    for (std::size_t i = 0; i < a.o_cc_p.numel(); ++i) {
        EXPECT_EQ(a.o_cc_p.value()[i], b.o_cc_m.value()[i]);
        EXPECT_EQ(a.o_cc_m.value()[i], b.o_cc_p.value()[i]);
        EXPECT_EQ(a.o_ct2cc_p.value()[i], b.o_ct2cc_m.value()[i]);
        EXPECT_EQ(a.o_ct2cc_m.value()[i], b.o_ct2cc_p.value()[i]);
    }
}

TEST(SeqIntention, GradientReachesUnmaskedTokenEmbeddingsAndSharedNorms) {
    TransformerConfig cfg = small_cfg();
    ParamMap p = init_model(cfg, 23);
    Rng fwd(0);
    SeqIntentionOut out = encode_seq_intention(cfg, p, {5, 6, 0, 0}, make_mask({1, 1, 0, 0}),
                                               {7, 0, 0, 0}, make_mask({1, 0, 0, 0}),
                                               {5, 6, 7, 0}, make_mask({1, 1, 1, 0}), false, fwd);
    Tensor loss = sum(add(add(out.o_cc_p, out.o_cc_m), add(out.o_ct2cc_p, out.o_ct2cc_m)));
    zero_grads(p);
    backward(loss);
    const auto& tok_grad = p.at("tf.tok_emb").grad();
    for (int id : {5, 6, 7}) {
        float row = 0.0f;
        for (int c = 0; c < cfg.d_e; ++c)
            row += std::fabs(tok_grad[static_cast<std::size_t>(id) * cfg.d_e + c]);
        EXPECT_GT(row, 0.0f) << "token " << id;
    }
    float g4 = 0.0f, g5 = 0.0f;
    for (float g : p.at("seq.cc_ln.gamma").grad()) g4 += std::fabs(g);
    for (float g : p.at("seq.ct2cc_ln.gamma").grad()) g5 += std::fabs(g);
    EXPECT_GT(g4, 0.0f);
    EXPECT_GT(g5, 0.0f);
}

// Full forward against the double precision straight-line rebuild.
TEST(SeqIntention, MatchesStraightLineReference) {
    TransformerConfig cfg = small_cfg();
    ParamMap p = init_model(cfg, 29);
    std::vector<int> ids_p = {5, 6, 7, 0}, ids_m = {8, 9, 10, 0}, ids_c = {5, 8, 11, 12};
    std::vector<float> mp = {1, 1, 1, 0}, mm = {1, 1, 1, 0}, mc = {1, 1, 1, 1};
    Rng fwd(0);
    SeqIntentionOut got = encode_seq_intention(cfg, p, ids_p, make_mask(mp), ids_m, make_mask(mm),
                                               ids_c, make_mask(mc), false, fwd);
    seq_oracle::OracleOut want = seq_oracle::forward(p, cfg.d_e, cfg.l_max, cfg.n_heads,
                                                     cfg.n_layers, ids_p, mp, ids_m, mm, ids_c, mc);
    auto compare = [&](const Tensor& g, const seq_oracle::Mat& w, const char* tag) {
        for (int i = 0; i < cfg.l_max; ++i)
            for (int j = 0; j < cfg.d_e; ++j)
                EXPECT_NEAR(g.at(i, j), w[i][j], 1e-5) << tag << " at " << i << "," << j;
    };
    compare(got.o_cc_p, want.o_cc_p, "o_cc_p");
    compare(got.o_cc_m, want.o_cc_m, "o_cc_m");
    compare(got.o_ct2cc_p, want.o_ct2cc_p, "o_ct2cc_p");
    compare(got.o_ct2cc_m, want.o_ct2cc_m, "o_ct2cc_m");
}
