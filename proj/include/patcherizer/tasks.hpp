#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "patcherizer/corpus.hpp"
#include "patcherizer/pretraining.hpp"

namespace patcherizer {

// ---- description generation ----

// Message token targets padded to l_max with EOS terminating the message.
// A message that fills the whole window loses its last token to EOS.
inline std::vector<int> message_targets(const Model& m, const std::string& msg) {
    Encoded enc = encode(m.vocab, msg, m.tf.l_max);
    std::vector<int> t = enc.ids;
    int eos_at = m.tf.l_max - 1;
    for (int i = 0; i < m.tf.l_max; ++i) {
        if (t[i] == kPad) {
            eos_at = i;
            break;
        }
    }
    t[eos_at] = kEos;
    return t;
}

inline Tensor generation_loss(const Model& m,
                              const std::vector<std::pair<const EncodedPatch*,
                                                          const std::vector<int>*>>& batch,
                              Rng& rng) {
    if (batch.empty()) throw EmptyInput("generation_loss needs at least one pair");
    Tensor total = Tensor::scalar(0.0f);
    for (const auto& [ep, targets] : batch) {
        PatchEmbedding emb = encode_patch(m, *ep, true, rng);
        std::vector<int> dec_in = pretrain_detail::shifted_input(*targets);
        Tensor dec_mask = pretrain_detail::shifted_mask(*targets);
        Tensor hid = decoder_forward(m.tf, m.params, dec_in, dec_mask, emb.memory,
                                     emb.memory_mask, true, rng);
        Tensor logits = tied_logits(m.params, hid);
        total = add(total, cross_entropy(logits, *targets, kPad));
    }
    return scale(total, 1.0f / static_cast<float>(batch.size()));
}

// Fine-tune the shared encoder-decoder to emit description messages. Records
// with an empty message are dropped up front with a warning.
inline std::vector<TrainLogRow> finetune_generation(Model& m,
                                                    const std::vector<EncodedPatch>& patches,
                                                    const std::vector<std::string>& messages,
                                                    int steps, int batch_size, float lr,
                                                    std::uint64_t seed) {
    if (patches.size() != messages.size()) {
        throw LengthMismatch("got " + std::to_string(patches.size()) + " patches and " +
                             std::to_string(messages.size()) + " messages");
    }
    std::vector<const EncodedPatch*> keep;
    std::vector<std::vector<int>> targets;
    for (std::size_t i = 0; i < patches.size(); ++i) {
        if (normalize_ws(messages[i]).empty()) {
            log_warn("skipping record " + std::to_string(i) + ": empty message");
            continue;
        }
        keep.push_back(&patches[i]);
        targets.push_back(message_targets(m, messages[i]));
    }
    if (keep.empty()) throw CorpusEmpty("no records with nonempty messages");

    return train_loop(m, keep.size(), steps, batch_size, lr, seed,
                      [&](const std::vector<std::size_t>& idx, std::uint64_t, Rng& rng) {
                          std::vector<std::pair<const EncodedPatch*, const std::vector<int>*>> b;
                          for (std::size_t i : idx) b.emplace_back(keep[i], &targets[i]);
                          return generation_loss(m, b, rng);
                      });
}

// ---- correctness classification ----

inline void classifier_init(int d_e, int d_b, ParamMap& p, Rng& rng) {
    p["cls.w"] = xavier_init({d_e + d_b, 1}, rng);
    p["cls.b"] = Tensor::zeros({1}, true);
}

// sigmoid(FC(E_patch concat E_bugReport)) -> probability the patch is correct.
inline Tensor classify_correctness(const Tensor& e_patch, const Tensor& e_bug, const ParamMap& p) {
    Tensor joint = concat_cols({e_patch, e_bug});
    Tensor logit = add(matmul(joint, p.at("cls.w")), p.at("cls.b"));
    return sigmoid(logit);
}

// Bug-report vector for one record: precomputed vector if the record carries
// one, otherwise the sequence encoder's masked mean of the report text.
inline Tensor bug_report_vector(const Model& m, const CorrectnessRecord& rec, Rng& rng) {
    if (rec.bug_vec.has_value()) {
        if (static_cast<int>(rec.bug_vec->size()) != m.tf.d_e) {
            throw ShapeMismatch("bug vector of " + std::to_string(rec.bug_vec->size()) +
                                " dims, model wants " + std::to_string(m.tf.d_e));
        }
        return Tensor::from_data({1, m.tf.d_e}, *rec.bug_vec);
    }
    if (normalize_ws(rec.bug_report).empty()) {
        throw MissingBugReport("record " + rec.id + " has neither text nor vector");
    }
    return embed_text(m, rec.bug_report, false, rng);
}

// L = -sum_i [ y_i ln p_i + (1-y_i) ln(1-p_i) ], probabilities pre-clipped
// inside binary_cross_entropy.
inline Tensor correctness_loss(const std::vector<Tensor>& preds, const std::vector<int>& labels) {
    if (preds.size() != labels.size()) {
        throw LengthMismatch("got " + std::to_string(preds.size()) + " predictions and " +
                             std::to_string(labels.size()) + " labels");
    }
    if (preds.empty()) throw EmptyInput("correctness_loss needs at least one sample");
    Tensor total = Tensor::scalar(0.0f);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        total = add(total, binary_cross_entropy(preds[i], static_cast<float>(labels[i])));
    }
    return total;
}

inline std::vector<TrainLogRow> finetune_correctness(Model& m,
                                                     const std::vector<EncodedPatch>& patches,
                                                     const std::vector<CorrectnessRecord>& recs,
                                                     int steps, int batch_size, float lr,
                                                     std::uint64_t seed) {
    if (patches.size() != recs.size()) {
        throw LengthMismatch("got " + std::to_string(patches.size()) + " patches and " +
                             std::to_string(recs.size()) + " records");
    }
    if (patches.empty()) throw CorpusEmpty("no correctness records");

    return train_loop(m, patches.size(), steps, batch_size, lr, seed,
                      [&](const std::vector<std::size_t>& idx, std::uint64_t, Rng& rng) {
                          std::vector<Tensor> preds;
                          std::vector<int> labels;
                          for (std::size_t i : idx) {
                              PatchEmbedding emb = encode_patch(m, patches[i], true, rng);
                              Tensor e_bug = bug_report_vector(m, recs[i], rng);
                              preds.push_back(classify_correctness(emb.pooled, e_bug, m.params));
                              labels.push_back(recs[i].label);
                          }
                          return correctness_loss(preds, labels);
                      });
}

// ---- retrieval ----

struct RetrievalEntry {
    std::string id;
    std::vector<float> vec;
    std::string message;
};

// Pooled training-set embeddings, L2-normalized at insert so retrieval is a
// plain dot-product argmax.
class RetrievalIndex {
public:
    void insert(std::string id, std::vector<float> vec, std::string message) {
        float norm = 0.0f;
        for (float v : vec) norm += v * v;
        norm = std::sqrt(norm);
        if (norm > 0.0f) {
            for (float& v : vec) v /= norm;
        }
        entries_.push_back({std::move(id), std::move(vec), std::move(message)});
    }

    const std::vector<RetrievalEntry>& entries() const { return entries_; }
    bool empty() const { return entries_.empty(); }

private:
    std::vector<RetrievalEntry> entries_;
};

struct RetrievalHit {
    std::string id;
    std::string message;
    float score = 0.0f;
};

// Argmax cosine over the index. Entries are scanned in ascending id order so
// an exact tie lands on the lowest id.
inline RetrievalHit retrieve(const RetrievalIndex& index, const std::vector<float>& query) {
    if (index.empty()) throw EmptyIndex("retrieval index has no entries");

    std::vector<float> q = query;
    float norm = 0.0f;
    for (float v : q) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0f) {
        for (float& v : q) v /= norm;
    }

    std::vector<const RetrievalEntry*> order;
    for (const RetrievalEntry& e : index.entries()) order.push_back(&e);
    std::sort(order.begin(), order.end(),
              [](const RetrievalEntry* a, const RetrievalEntry* b) { return a->id < b->id; });

    const RetrievalEntry* best = nullptr;
    float best_score = 0.0f;
    for (const RetrievalEntry* e : order) {
        if (e->vec.size() != q.size()) {
            throw ShapeMismatch("query of " + std::to_string(q.size()) + " dims vs entry of " +
                                std::to_string(e->vec.size()));
        }
        float s = 0.0f;
        for (std::size_t i = 0; i < q.size(); ++i) s += q[i] * e->vec[i];
        if (!best || s > best_score) {
            best = e;
            best_score = s;
        }
    }
    return {best->id, best->message, best_score};
}

inline void save_index(const RetrievalIndex& index, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FileNotFound("cannot write " + path);
    for (const RetrievalEntry& e : index.entries()) {
        nlohmann::json j;
        j["id"] = e.id;
        j["vec"] = e.vec;
        j["msg"] = e.message;
        out << j.dump() << "\n";
    }
}

inline RetrievalIndex load_index(const std::string& path) {
    RetrievalIndex index;
    for (const nlohmann::json& j : corpus_detail::read_jsonl(path)) {
        std::string id = corpus_detail::field_str(j, "id", path);
        std::vector<float> vec = corpus_detail::field_vec(j, "vec", path);
        std::string msg = corpus_detail::field_str(j, "msg", path);
        index.insert(std::move(id), std::move(vec), std::move(msg));
    }
    return index;
}

}  // namespace patcherizer
