#pragma once

#include <vector>

#include "patcherizer/seq_intention.hpp"
#include "patcherizer/tensor.hpp"

namespace patcherizer {

struct AblationFlags {
    bool use_seq_intention = true;
    bool use_graph_intention = true;
};

// Final patch representation: a pooled vector for similarity work plus the
// full sequence memory the decoder attends over. PAD rows of memory are zero
// and pooled is the masked mean of the rest.
struct PatchEmbedding {
    Tensor pooled;
    Tensor memory;
    Tensor memory_mask;
};

inline Tensor stream_union_mask(const Tensor& mask_p, const Tensor& mask_m) {
    if (mask_p.shape() != mask_m.shape()) {
        throw ShapeMismatch("stream_union_mask: " + Tensor::shape_str(mask_p.shape()) + " vs " +
                            Tensor::shape_str(mask_m.shape()));
    }
    std::vector<float> u(mask_p.numel());
    for (std::size_t i = 0; i < u.size(); ++i) {
        u[i] = (mask_p.value()[i] != 0.0f || mask_m.value()[i] != 0.0f) ? 1.0f : 0.0f;
    }
    int n = static_cast<int>(u.size());
    return Tensor::from_data({n}, std::move(u));
}

// Merge the four intention streams and the graph vector into one embedding.
// The graph vector is broadcast onto every live row so it rides along into
// both the pooled vector and the decoder memory. Ablation flags swap the
// streams for the raw encoder outputs or drop the graph term entirely.
inline PatchEmbedding aggregate(const SeqIntentionOut& seq, const Tensor& graph_vec,
                                const AblationFlags& flags) {
    Tensor base = flags.use_seq_intention
                      ? add(add(seq.o_cc_p, seq.o_cc_m), add(seq.o_ct2cc_p, seq.o_ct2cc_m))
                      : add(seq.e_cc_p, seq.e_cc_m);
    Tensor umask = stream_union_mask(seq.mask_p, seq.mask_m);

    Tensor memory;
    if (flags.use_graph_intention) {
        Tensor g = graph_vec;
        if (g.shape().size() == 2) {
            if (g.rows() != 1 || g.cols() != base.cols()) {
                throw ShapeMismatch("aggregate: graph vector " + Tensor::shape_str(g.shape()) +
                                    " vs memory " + Tensor::shape_str(base.shape()));
            }
            g = reshape(g, {g.cols()});
        }
        memory = scale_rows(add(base, g), umask);
    } else {
        memory = scale_rows(base, umask);
    }

    PatchEmbedding out;
    out.memory = memory;
    out.memory_mask = umask;
    out.pooled = mean_pool_masked(memory, umask);
    return out;
}

}  // namespace patcherizer
