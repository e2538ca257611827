#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "patcherizer/checkpoint.hpp"
#include "patcherizer/model.hpp"

namespace patcherizer {

struct MlmBatch {
    std::vector<int> input_ids;
    std::vector<int> target_ids;
    std::vector<int> positions;
};

// Independent Bernoulli(rate) mask over the non-special positions, with one
// forced pick so a nonempty sequence always contributes loss. An all-PAD
// sequence stays untouched.
inline MlmBatch mask_tokens(const std::vector<int>& ids, float rate, std::uint64_t seed) {
    MlmBatch out;
    out.input_ids = ids;
    out.target_ids.assign(ids.size(), kPad);

    std::vector<int> eligible;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= kFirstRegularId) eligible.push_back(static_cast<int>(i));
    }
    if (eligible.empty()) return out;

    Rng rng(seed);
    for (int i : eligible) {
        if (rng.uniform() < rate) out.positions.push_back(i);
    }
    if (out.positions.empty()) {
        out.positions.push_back(eligible[rng.index(eligible.size())]);
    }
    for (int i : out.positions) {
        out.input_ids[i] = kMask;
        out.target_ids[i] = ids[i];
    }
    return out;
}

namespace pretrain_detail {

// Teacher-forced decoder input: BOS then the sequence shifted right by one,
// so position t predicts token t of the original.
inline std::vector<int> shifted_input(const std::vector<int>& ids) {
    std::vector<int> dec(ids.size(), kPad);
    if (dec.empty()) return dec;
    dec[0] = kBos;
    for (std::size_t t = 1; t < ids.size(); ++t) dec[t] = ids[t - 1];
    return dec;
}

inline Tensor shifted_mask(const std::vector<int>& ids) {
    std::vector<float> m(ids.size(), 0.0f);
    if (!m.empty()) m[0] = 1.0f;
    for (std::size_t t = 1; t < ids.size(); ++t) m[t] = ids[t - 1] != kPad ? 1.0f : 0.0f;
    int n = static_cast<int>(m.size());
    return Tensor::from_data({n}, std::move(m));
}

}  // namespace pretrain_detail

// One MLM step over a batch: mask each patch's context stream, run the full
// encoder on the masked inputs, teacher-force the decoder on the original
// sequence, and average the masked-token cross entropies. Returns the loss
// with its backward graph still attached; callers do backward + Adam.
inline Tensor mlm_loss(const Model& m, const std::vector<const EncodedPatch*>& batch,
                       float mask_rate, std::uint64_t seed, Rng& rng) {
    if (batch.empty()) throw EmptyInput("mlm_loss needs at least one patch");
    Tensor total = Tensor::scalar(0.0f);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const EncodedPatch& ep = *batch[b];
        MlmBatch mlm = mask_tokens(ep.cbp.ids, mask_rate, mix_seed(seed, b));

        PatchEmbedding emb = encode_patch(m, ep, true, rng, &mlm.input_ids);
        std::vector<int> dec_in = pretrain_detail::shifted_input(ep.cbp.ids);
        Tensor dec_mask = pretrain_detail::shifted_mask(ep.cbp.ids);
        Tensor hid =
            decoder_forward(m.tf, m.params, dec_in, dec_mask, emb.memory, emb.memory_mask, true, rng);
        Tensor logits = tied_logits(m.params, hid);
        total = add(total, cross_entropy(logits, mlm.target_ids, kPad));
    }
    return scale(total, 1.0f / static_cast<float>(batch.size()));
}

struct TrainLogRow {
    int step = 0;
    float loss = 0.0f;
    float lr = 0.0f;
};

inline void write_train_log(const std::string& path, const std::vector<TrainLogRow>& rows) {
    std::ofstream out(path);
    if (!out) throw FileNotFound("cannot write " + path);
    out << "step,loss,lr\n";
    for (const TrainLogRow& r : rows) out << r.step << "," << r.loss << "," << r.lr << "\n";
}

// Round-robin batching over the corpus for a fixed number of optimizer
// steps. Deterministic under (corpus order, seed).
template <typename LossFn>
inline std::vector<TrainLogRow> train_loop(Model& m, std::size_t n_items, int steps,
                                           int batch_size, float lr, std::uint64_t seed,
                                           LossFn&& loss_of_batch) {
    AdamState adam;
    adam.lr = lr;
    Rng rng(mix_seed(seed, 0x747261696eULL));
    std::vector<TrainLogRow> log;
    std::size_t cursor = 0;
    for (int step = 0; step < steps; ++step) {
        std::vector<std::size_t> idx;
        for (int k = 0; k < batch_size; ++k) {
            idx.push_back(cursor);
            cursor = (cursor + 1) % n_items;
        }
        zero_grads(m.params);
        Tensor loss = loss_of_batch(idx, static_cast<std::uint64_t>(step), rng);
        backward(loss);
        adam_step(adam, m.params);
        log.push_back({step + 1, loss.item(), lr});
    }
    return log;
}

inline std::vector<TrainLogRow> pretrain(Model& m, const std::vector<EncodedPatch>& corpus,
                                         int steps, int batch_size, float mask_rate, float lr,
                                         std::uint64_t seed) {
    if (corpus.empty()) throw CorpusEmpty("pretraining corpus is empty");
    return train_loop(m, corpus.size(), steps, batch_size, lr, seed,
                      [&](const std::vector<std::size_t>& idx, std::uint64_t step, Rng& rng) {
                          std::vector<const EncodedPatch*> batch;
                          for (std::size_t i : idx) batch.push_back(&corpus[i]);
                          return mlm_loss(m, batch, mask_rate, mix_seed(seed, step), rng);
                      });
}

namespace decode_detail {

struct Hypothesis {
    std::vector<int> prefix;  // starts with BOS
    double logp = 0.0;
    bool done = false;
};

inline std::vector<double> log_probs_at(const Model& m, const Hypothesis& h,
                                        const PatchEmbedding& emb, Rng& rng) {
    std::vector<int> dec(m.tf.l_max, kPad);
    int n = std::min<int>(m.tf.l_max, static_cast<int>(h.prefix.size()));
    for (int i = 0; i < n; ++i) dec[i] = h.prefix[i];
    std::vector<float> mask(m.tf.l_max, 0.0f);
    for (int i = 0; i < n; ++i) mask[i] = 1.0f;
    Tensor hid = decoder_forward(m.tf, m.params, dec, Tensor::from_data({m.tf.l_max}, std::move(mask)),
                                 emb.memory, emb.memory_mask, false, rng);
    Tensor logits = tied_logits(m.params, hid);

    int row = n - 1;
    int v = logits.cols();
    double mx = -1e300;
    for (int c = 0; c < v; ++c) mx = std::max(mx, static_cast<double>(logits.at(row, c)));
    double denom = 0.0;
    for (int c = 0; c < v; ++c) denom += std::exp(static_cast<double>(logits.at(row, c)) - mx);
    std::vector<double> lp(v);
    for (int c = 0; c < v; ++c) {
        lp[c] = static_cast<double>(logits.at(row, c)) - mx - std::log(denom);
    }
    return lp;
}

}  // namespace decode_detail

// Beam search over the shared decoder. beam=1 is stepwise argmax. Hypotheses
// are ranked by summed log-probability; exact ties go to the lower token id.
// Emission stops at EOS or after max_out tokens.
inline std::vector<int> decode_tokens(const Model& m, const PatchEmbedding& emb, int beam,
                                      int max_out) {
    using decode_detail::Hypothesis;
    if (beam < 1) throw SchemaError("beam must be at least 1");
    if (max_out <= 0) return {};

    Rng rng(0);
    std::vector<Hypothesis> hyps{{{kBos}, 0.0, false}};
    int budget = std::min(max_out, m.tf.l_max - 1);
    for (int t = 0; t < budget; ++t) {
        bool all_done = true;
        for (const Hypothesis& h : hyps)
            if (!h.done) all_done = false;
        if (all_done) break;

        struct Cand {
            Hypothesis hyp;
            int tok = -1;
        };
        std::vector<Cand> cands;
        for (const Hypothesis& h : hyps) {
            if (h.done) {
                cands.push_back({h, -1});
                continue;
            }
            std::vector<double> lp = decode_detail::log_probs_at(m, h, emb, rng);
            for (int tok = 0; tok < static_cast<int>(lp.size()); ++tok) {
                if (tok == kPad || tok == kBos) continue;
                Hypothesis next = h;
                next.logp += lp[tok];
                next.prefix.push_back(tok);
                if (tok == kEos) next.done = true;
                cands.push_back({std::move(next), tok});
            }
        }
        std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.hyp.logp != b.hyp.logp) return a.hyp.logp > b.hyp.logp;
            return a.tok < b.tok;
        });
        if (static_cast<int>(cands.size()) > beam) cands.resize(beam);
        hyps.clear();
        for (Cand& c : cands) hyps.push_back(std::move(c.hyp));
    }

    const Hypothesis* best = &hyps[0];
    for (const Hypothesis& h : hyps)
        if (h.logp > best->logp) best = &h;
    std::vector<int> out;
    for (std::size_t i = 1; i < best->prefix.size(); ++i) {
        if (best->prefix[i] == kEos) break;
        out.push_back(best->prefix[i]);
    }
    return out;
}

}  // namespace patcherizer
