#pragma once

#include <string>
#include <vector>

#include "patcherizer/bpe.hpp"
#include "patcherizer/tensor.hpp"

namespace patcherizer {

struct TransformerConfig {
    int vocab_size = 0;
    int d_e = 64;
    int l_max = 64;
    int n_heads = 2;
    int n_layers = 2;
    float dropout = 0.1f;

    int head_dim() const { return d_e / n_heads; }

    void validate() const {
        if (d_e % n_heads != 0) {
            throw ShapeMismatch("d_e " + std::to_string(d_e) + " not divisible by " +
                                std::to_string(n_heads) + " heads");
        }
        if (l_max < 1) throw ShapeMismatch("l_max must be at least 1");
    }
};

// One parameter table serves encoder and decoder: the decoder reuses every
// encoder block (self-attention, feed-forward, both norms) and adds only its
// per-layer cross-attention and the norm that follows it. Output logits are
// tied to the token embedding.
namespace transformer_detail {

inline std::string lname(int layer, const std::string& suffix) {
    return "tf.layer" + std::to_string(layer) + "." + suffix;
}

inline void init_linear(ParamMap& p, const std::string& name, int in, int out, Rng& rng) {
    p[name + ".w"] = xavier_init({in, out}, rng);
    p[name + ".b"] = Tensor::zeros({out}, true);
}

inline void init_ln(ParamMap& p, const std::string& name, int dim) {
    p[name + ".gamma"] = Tensor::from_data({dim}, std::vector<float>(dim, 1.0f), true);
    p[name + ".beta"] = Tensor::zeros({dim}, true);
}

inline Tensor linear(const ParamMap& p, const std::string& name, const Tensor& x) {
    return add(matmul(x, p.at(name + ".w")), p.at(name + ".b"));
}

inline Tensor layer_norm_affine(const ParamMap& p, const std::string& name, const Tensor& x) {
    return add(mul(layer_norm_rows(x), p.at(name + ".gamma")), p.at(name + ".beta"));
}

// Scaled dot-product attention over column-sliced heads. src_mask is [L]
// for plain padding or [LxL] when causal structure is needed.
inline Tensor multi_head_attention(const TransformerConfig& cfg, const ParamMap& p,
                                   const std::string& name, const Tensor& q_in,
                                   const Tensor& kv_in, const Tensor& src_mask) {
    Tensor q = linear(p, name + ".q", q_in);
    Tensor k = linear(p, name + ".k", kv_in);
    Tensor v = linear(p, name + ".v", kv_in);
    int hd = cfg.head_dim();
    float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(hd));
    std::vector<Tensor> heads;
    for (int h = 0; h < cfg.n_heads; ++h) {
        Tensor qh = col_slice(q, h * hd, (h + 1) * hd);
        Tensor kh = col_slice(k, h * hd, (h + 1) * hd);
        Tensor vh = col_slice(v, h * hd, (h + 1) * hd);
        Tensor scores = scale(matmul(qh, kh, false, true), inv_sqrt);
        Tensor attn = softmax_rows(scores, src_mask);
        heads.push_back(matmul(attn, vh));
    }
    Tensor ctx = cfg.n_heads == 1 ? heads[0] : concat_cols(heads);
    return linear(p, name + ".o", ctx);
}

inline Tensor causal_and_padding_mask(const Tensor& pad_mask) {
    int L = pad_mask.shape()[0];
    std::vector<float> m(static_cast<std::size_t>(L) * L, 0.0f);
    for (int i = 0; i < L; ++i)
        for (int j = 0; j <= i; ++j)
            m[static_cast<std::size_t>(i) * L + j] = pad_mask.value()[j];
    return Tensor::from_data({L, L}, std::move(m));
}

}  // namespace transformer_detail

inline void transformer_init(const TransformerConfig& cfg, ParamMap& p, Rng& rng) {
    using namespace transformer_detail;
    cfg.validate();
    p["tf.tok_emb"] = xavier_init({cfg.vocab_size, cfg.d_e}, rng);
    p["tf.pos_emb"] = xavier_init({cfg.l_max, cfg.d_e}, rng);
    for (int l = 0; l < cfg.n_layers; ++l) {
        init_linear(p, lname(l, "self.q"), cfg.d_e, cfg.d_e, rng);
        init_linear(p, lname(l, "self.k"), cfg.d_e, cfg.d_e, rng);
        init_linear(p, lname(l, "self.v"), cfg.d_e, cfg.d_e, rng);
        init_linear(p, lname(l, "self.o"), cfg.d_e, cfg.d_e, rng);
        init_ln(p, lname(l, "ln1"), cfg.d_e);
        init_linear(p, lname(l, "ffn1"), cfg.d_e, 4 * cfg.d_e, rng);
        init_linear(p, lname(l, "ffn2"), 4 * cfg.d_e, cfg.d_e, rng);
        init_ln(p, lname(l, "ln2"), cfg.d_e);
        init_linear(p, lname(l, "cross.q"), cfg.d_e, cfg.d_e, rng);
        init_linear(p, lname(l, "cross.k"), cfg.d_e, cfg.d_e, rng);
        init_linear(p, lname(l, "cross.v"), cfg.d_e, cfg.d_e, rng);
        init_linear(p, lname(l, "cross.o"), cfg.d_e, cfg.d_e, rng);
        init_ln(p, lname(l, "ln3"), cfg.d_e);
    }
}

// Init(X): token plus learned position embeddings.
inline Tensor embed_tokens(const TransformerConfig& cfg, const ParamMap& p,
                           const std::vector<int>& ids) {
    if (static_cast<int>(ids.size()) != cfg.l_max) {
        throw ShapeMismatch("expected " + std::to_string(cfg.l_max) + " ids, got " +
                            std::to_string(ids.size()));
    }
    std::vector<int> positions(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) positions[i] = static_cast<int>(i);
    return add(embedding_lookup(p.at("tf.tok_emb"), ids),
               embedding_lookup(p.at("tf.pos_emb"), positions));
}

inline Tensor encoder_forward(const TransformerConfig& cfg, const ParamMap& p,
                              const std::vector<int>& ids, const Tensor& mask, bool train,
                              Rng& rng) {
    using namespace transformer_detail;
    Tensor x = embed_tokens(cfg, p, ids);
    x = dropout(x, cfg.dropout, train, rng);
    for (int l = 0; l < cfg.n_layers; ++l) {
        Tensor attn = multi_head_attention(cfg, p, lname(l, "self"), x, x, mask);
        x = layer_norm_affine(p, lname(l, "ln1"), add(x, dropout(attn, cfg.dropout, train, rng)));
        Tensor ffn = linear(p, lname(l, "ffn2"), relu(linear(p, lname(l, "ffn1"), x)));
        x = layer_norm_affine(p, lname(l, "ln2"), add(x, dropout(ffn, cfg.dropout, train, rng)));
    }
    return scale_rows(x, mask);
}

// Teacher-forced decoder pass over a full target prefix; causal self-attention
// over the shared blocks, then cross-attention into the encoder memory.
inline Tensor decoder_forward(const TransformerConfig& cfg, const ParamMap& p,
                              const std::vector<int>& ids, const Tensor& self_mask,
                              const Tensor& memory, const Tensor& memory_mask, bool train,
                              Rng& rng) {
    using namespace transformer_detail;
    Tensor x = embed_tokens(cfg, p, ids);
    x = dropout(x, cfg.dropout, train, rng);
    Tensor causal = causal_and_padding_mask(self_mask);
    bool memory_empty = true;
    for (float m : memory_mask.value())
        if (m != 0.0f) memory_empty = false;
    for (int l = 0; l < cfg.n_layers; ++l) {
        Tensor attn = multi_head_attention(cfg, p, lname(l, "self"), x, x, causal);
        x = layer_norm_affine(p, lname(l, "ln1"), add(x, dropout(attn, cfg.dropout, train, rng)));
        if (!memory_empty) {
            Tensor cross =
                multi_head_attention(cfg, p, lname(l, "cross"), x, memory, memory_mask);
            x = layer_norm_affine(p, lname(l, "ln3"),
                                  add(x, dropout(cross, cfg.dropout, train, rng)));
        }
        Tensor ffn = linear(p, lname(l, "ffn2"), relu(linear(p, lname(l, "ffn1"), x)));
        x = layer_norm_affine(p, lname(l, "ln2"), add(x, dropout(ffn, cfg.dropout, train, rng)));
    }
    return x;
}

// Output projection tied to the token embedding.
inline Tensor tied_logits(const ParamMap& p, const Tensor& hidden) {
    return matmul(hidden, p.at("tf.tok_emb"), false, true);
}

}  // namespace patcherizer
