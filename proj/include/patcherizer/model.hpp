#pragma once

#include <set>
#include <string>
#include <vector>

#include "patcherizer/bpe.hpp"
#include "patcherizer/config.hpp"
#include "patcherizer/fusion.hpp"
#include "patcherizer/graph_intention.hpp"
#include "patcherizer/preprocess.hpp"
#include "patcherizer/seq_intention.hpp"
#include "patcherizer/transformer.hpp"

namespace patcherizer {

// The assembled model: tokenizer, static alignment graph, every parameter
// tensor, and the ablation switches. Encoder and decoder live in the same
// ParamMap, so there is exactly one copy of the shared weights.
struct Model {
    Config cfg;
    TransformerConfig tf;
    GcnConfig gcn;
    Vocab vocab;
    StaticGraph sgraph;
    AblationFlags flags;
    ParamMap params;
};

inline Model make_model(const Config& cfg, Vocab vocab, StaticGraph sgraph, AblationFlags flags,
                        std::uint64_t seed) {
    Model m;
    m.cfg = cfg;
    m.tf = cfg.tf_config(vocab.size());
    m.gcn = cfg.gcn_config();
    m.vocab = std::move(vocab);
    m.sgraph = std::move(sgraph);
    m.flags = flags;

    Rng rng(mix_seed(seed, 0x6d6f64656cULL));
    transformer_init(m.tf, m.params, rng);
    seq_intention_init(m.tf, m.params);
    gcn_init(m.gcn, m.tf.d_e, m.params, rng);
    graph_resnet_init(m.tf.d_e, m.params, rng);
    return m;
}

// Token streams and aligned graphs of one patch, ready for a forward pass.
// has_graph is false when the patch brought no parsable AST, in which case
// the graph term contributes zero.
struct EncodedPatch {
    Encoded p;
    Encoded m;
    Encoded cbp;
    AlignedGraph ag_cbp;
    AlignedGraph ag_cap;
    bool has_graph = false;
};

namespace model_detail {

inline AstGraph prune_or_keep(const AstGraph& g, const std::set<std::string>& tokens) {
    try {
        return prune_graph(g, tokens);
    } catch (const EmptyAfterPrune&) {
        return g;
    }
}

}  // namespace model_detail

inline EncodedPatch encode_inputs(const Model& m, const PreprocessedPatch& pp) {
    EncodedPatch ep;
    ep.p = encode(m.vocab, changed_text(pp.cc_p), m.tf.l_max);
    ep.m = encode(m.vocab, changed_text(pp.cc_m), m.tf.l_max);
    ep.cbp = encode(m.vocab, pp.cbp, m.tf.l_max);

    bool graphs_ready = !pp.g_cbp.nodes.empty() && !pp.g_cap.nodes.empty() &&
                        !m.sgraph.graph.nodes.empty();
    if (m.flags.use_graph_intention && graphs_ready) {
        std::set<std::string> tokens = patch_token_set(pp);
        const Tensor& table = m.params.at("tf.tok_emb");
        ep.ag_cbp = align_graph(model_detail::prune_or_keep(pp.g_cbp, tokens), m.sgraph, m.vocab,
                                table, tokens);
        ep.ag_cap = align_graph(model_detail::prune_or_keep(pp.g_cap, tokens), m.sgraph, m.vocab,
                                table, tokens);
        ep.has_graph = true;
    }
    return ep;
}

inline Tensor stream_mask(const Encoded& e) {
    std::vector<float> m = e.mask;
    int n = static_cast<int>(m.size());
    return Tensor::from_data({n}, std::move(m));
}

// Full forward pass to the fused patch embedding. cbp_override substitutes
// the context token ids (the MLM path feeds the masked ids through here).
inline PatchEmbedding encode_patch(const Model& m, const EncodedPatch& ep, bool train, Rng& rng,
                                   const std::vector<int>* cbp_override = nullptr) {
    const std::vector<int>& cbp_ids = cbp_override ? *cbp_override : ep.cbp.ids;
    SeqIntentionOut seq =
        encode_seq_intention(m.tf, m.params, ep.p.ids, stream_mask(ep.p), ep.m.ids,
                             stream_mask(ep.m), cbp_ids, stream_mask(ep.cbp), train, rng);

    Tensor graph_vec;
    if (m.flags.use_graph_intention) {
        if (ep.has_graph) {
            AlignedGraph cbp = ep.ag_cbp;
            AlignedGraph cap = ep.ag_cap;
            refresh_features(cbp, m.params.at("tf.tok_emb"));
            refresh_features(cap, m.params.at("tf.tok_emb"));
            graph_vec = encode_graph_intention(cbp, cap, m.gcn, m.params);
        } else {
            graph_vec = Tensor::zeros({1, m.tf.d_e});
        }
    }
    return aggregate(seq, graph_vec, m.flags);
}

// Masked mean of the plain sequence encoder; used to embed bug-report text
// next to patch embeddings with matching width.
inline Tensor embed_text(const Model& m, const std::string& text, bool train, Rng& rng) {
    Encoded e = encode(m.vocab, text, m.tf.l_max);
    Tensor mask = stream_mask(e);
    Tensor enc = encoder_forward(m.tf, m.params, e.ids, mask, train, rng);
    return mean_pool_masked(enc, mask);
}

}  // namespace patcherizer
