#pragma once

#include <string>
#include <vector>

#include "patcherizer/tensor.hpp"
#include "patcherizer/transformer.hpp"

namespace patcherizer {

// Attention from one token stream into another: every query row attends over
// the unmasked source rows and pulls back a convex mix of them. Scores are
// raw dot products, no temperature.
inline Tensor cross_attention(const Tensor& src, const Tensor& qry, const Tensor& src_mask) {
    bool any = false;
    for (float m : src_mask.value())
        if (m != 0.0f) any = true;
    if (!any) throw AllMaskedSource("cross_attention: source stream fully masked");
    Tensor scores = matmul(qry, src, false, true);
    Tensor attn = softmax_rows(scores, src_mask);
    return matmul(attn, src);
}

// O = relu(norm(E) + (E + v)): the attended context is folded into the stream
// through a residual path so a useless context degrades toward plain E.
inline Tensor cross_resnet(const ParamMap& p, const std::string& ln_name, const Tensor& e,
                           const Tensor& v) {
    Tensor normed = add(mul(layer_norm_rows(e), p.at(ln_name + ".gamma")), p.at(ln_name + ".beta"));
    return relu(add(normed, add(e, v)));
}

struct SeqIntentionOut {
    Tensor o_cc_p;
    Tensor o_cc_m;
    Tensor o_ct2cc_p;
    Tensor o_ct2cc_m;
    Tensor e_cc_p;
    Tensor e_cc_m;
    Tensor mask_p;
    Tensor mask_m;
    Tensor mask_cbp;
};

inline void seq_intention_init(const TransformerConfig& cfg, ParamMap& p) {
    auto ln = [&](const std::string& name) {
        p[name + ".gamma"] = Tensor::from_data({cfg.d_e}, std::vector<float>(cfg.d_e, 1.0f), true);
        p[name + ".beta"] = Tensor::zeros({cfg.d_e}, true);
    };
    ln("seq.cc_ln");
    ln("seq.ct2cc_ln");
}

// The four intention streams. cc_p and cc_m attend into each other through one
// shared residual norm, so swapping the two streams swaps the two outputs
// exactly. The ct2cc streams mix each changed-code stream with the buggy
// context directly. A fully padded opposite stream contributes v = 0.
inline SeqIntentionOut encode_seq_intention(const TransformerConfig& cfg, const ParamMap& p,
                                            const std::vector<int>& ids_p, const Tensor& mask_p,
                                            const std::vector<int>& ids_m, const Tensor& mask_m,
                                            const std::vector<int>& ids_cbp,
                                            const Tensor& mask_cbp, bool train, Rng& rng) {
    Tensor e_p = encoder_forward(cfg, p, ids_p, mask_p, train, rng);
    Tensor e_m = encoder_forward(cfg, p, ids_m, mask_m, train, rng);
    Tensor e_cbp = encoder_forward(cfg, p, ids_cbp, mask_cbp, train, rng);

    auto attended = [](const Tensor& src, const Tensor& qry, const Tensor& src_mask) {
        for (float m : src_mask.value())
            if (m != 0.0f) return cross_attention(src, qry, src_mask);
        return Tensor::zeros(qry.shape());
    };
    Tensor v_p = attended(e_m, e_p, mask_m);
    Tensor v_m = attended(e_p, e_m, mask_p);

    SeqIntentionOut out;
    out.o_cc_p = scale_rows(cross_resnet(p, "seq.cc_ln", e_p, v_p), mask_p);
    out.o_cc_m = scale_rows(cross_resnet(p, "seq.cc_ln", e_m, v_m), mask_m);
    out.o_ct2cc_p = scale_rows(cross_resnet(p, "seq.ct2cc_ln", e_p, e_cbp), mask_p);
    out.o_ct2cc_m = scale_rows(cross_resnet(p, "seq.ct2cc_ln", e_m, e_cbp), mask_m);
    out.e_cc_p = e_p;
    out.e_cc_m = e_m;
    out.mask_p = mask_p;
    out.mask_m = mask_m;
    out.mask_cbp = mask_cbp;
    return out;
}

}  // namespace patcherizer
