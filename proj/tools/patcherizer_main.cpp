#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "patcherizer/checkpoint.hpp"
#include "patcherizer/config.hpp"
#include "patcherizer/corpus.hpp"
#include "patcherizer/metrics.hpp"
#include "patcherizer/model.hpp"
#include "patcherizer/pretraining.hpp"
#include "patcherizer/preprocess.hpp"
#include "patcherizer/tasks.hpp"

namespace fs = std::filesystem;
using namespace patcherizer;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool no_seq = false;
    bool no_graph = false;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool with_model_flags = true) {
    cmd->add_option("--config", a.config_path, "config JSON file")->required();
    cmd->add_option("--out", a.out_dir, "artifact directory")->required();
    cmd->add_option("--seed", a.seed, "RNG seed");
    if (with_model_flags) {
        cmd->add_flag("--no-seq-intention", a.no_seq, "drop the sequence-intention streams");
        cmd->add_flag("--no-graph-intention", a.no_graph, "drop the graph-intention term");
    }
}

AblationFlags flags_of(const CommonArgs& a) {
    AblationFlags f;
    f.use_seq_intention = !a.no_seq;
    f.use_graph_intention = !a.no_graph;
    return f;
}

std::string artifact(const CommonArgs& a, const char* name) {
    return (fs::path(a.out_dir) / name).string();
}

void ensure_out_dir(const CommonArgs& a) {
    std::error_code ec;
    fs::create_directories(a.out_dir, ec);
    if (ec) throw FileNotFound("cannot create out directory " + a.out_dir);
}

// The first file section of a record's diff becomes its patch; extra
// sections are reported but not folded in.
std::string first_section(const std::string& diff, const std::string& id) {
    std::vector<std::string> parts = split_multi_file_diff(diff);
    if (parts.empty()) throw MalformedDiff("record " + id + " has no hunks");
    if (parts.size() > 1) {
        log_info("record " + id + ": using first of " + std::to_string(parts.size()) +
                 " file sections");
    }
    return parts.front();
}

struct PreparedCorpus {
    std::vector<PreprocessedPatch> patches;
    std::vector<std::string> ids;
    std::vector<std::string> messages;
    int parse_failures = 0;
};

// Preprocess every record, dropping to sequence-only form when a side fails
// to parse.
PreparedCorpus prepare(const std::vector<GenRecord>& records) {
    PreparedCorpus out;
    for (const GenRecord& r : records) {
        std::string section = first_section(r.diff, r.id);
        try {
            out.patches.push_back(preprocess_patch(section));
        } catch (const ParseError& e) {
            log_info("record " + r.id + ": " + e.what() + "; sequence-only");
            out.patches.push_back(preprocess_sequence_only(section));
            ++out.parse_failures;
        }
        out.ids.push_back(r.id);
        out.messages.push_back(r.msg);
    }
    return out;
}

PreparedCorpus prepare_correctness(const std::vector<CorrectnessRecord>& records) {
    PreparedCorpus out;
    for (const CorrectnessRecord& r : records) {
        std::string section = first_section(r.diff, r.id);
        try {
            out.patches.push_back(preprocess_patch(section));
        } catch (const ParseError& e) {
            log_info("record " + r.id + ": " + e.what() + "; sequence-only");
            out.patches.push_back(preprocess_sequence_only(section));
            ++out.parse_failures;
        }
        out.ids.push_back(r.id);
    }
    return out;
}

std::string require_path(const std::string& p, const char* what) {
    if (p.empty()) throw MissingConfigKey(std::string("data.") + what);
    return p;
}

Vocab load_vocab_artifact(const CommonArgs& a) {
    std::ifstream in(artifact(a, "vocab.json"));
    if (!in) throw FileNotFound(artifact(a, "vocab.json"));
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw SchemaError("vocab.json is not valid JSON");
    return vocab_from_json(j);
}

StaticGraph load_static_artifact(const CommonArgs& a) {
    std::ifstream in(artifact(a, "static_graph.json"));
    if (!in) throw FileNotFound(artifact(a, "static_graph.json"));
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw SchemaError("static_graph.json is not valid JSON");
    return static_graph_from_json(j);
}

Model build_model(const Config& cfg, const CommonArgs& a) {
    Vocab vocab = load_vocab_artifact(a);
    AblationFlags flags = flags_of(a);
    StaticGraph sgraph;
    if (flags.use_graph_intention) sgraph = load_static_artifact(a);
    return make_model(cfg, std::move(vocab), std::move(sgraph), flags, a.seed);
}

std::vector<EncodedPatch> encode_corpus(const Model& m, const PreparedCorpus& pc) {
    std::vector<EncodedPatch> out;
    out.reserve(pc.patches.size());
    for (const PreprocessedPatch& pp : pc.patches) out.push_back(encode_inputs(m, pp));
    return out;
}

int steps_of(const Config& cfg, std::size_t n_items) {
    if (cfg.train.steps > 0) return cfg.train.steps;
    int per_epoch = static_cast<int>((n_items + cfg.train.batch_size - 1) / cfg.train.batch_size);
    return cfg.train.epochs * std::max(per_epoch, 1);
}

std::vector<std::string> lower_words(const std::string& text) {
    std::string low = text;
    std::transform(low.begin(), low.end(), low.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return word_tokens(low);
}

void attach_bug_vectors(std::vector<CorrectnessRecord>& recs, const std::string& path) {
    if (path.empty()) return;
    auto vecs = load_vectors(path);
    for (CorrectnessRecord& r : recs) {
        auto it = vecs.find(r.id);
        if (it != vecs.end()) r.bug_vec = it->second;
    }
}

// ---- commands ----

int cmd_preprocess(const CommonArgs& a) {
    Config cfg = load_config(a.config_path);
    ensure_out_dir(a);
    auto records = load_gen_corpus(require_path(cfg.data.train, "train"));

    nlohmann::json failures = nlohmann::json::array();
    int parsed = 0;
    for (const GenRecord& r : records) {
        try {
            preprocess_patch(first_section(r.diff, r.id));
            ++parsed;
        } catch (const Error& e) {
            failures.push_back({{"id", r.id}, {"error", e.what()}});
        }
    }
    nlohmann::json report;
    report["records"] = records.size();
    report["parsed"] = parsed;
    report["failures"] = failures;
    write_file(artifact(a, "preprocess_report.json"), report.dump(2) + "\n");
    std::cout << report.dump() << "\n";
    return 0;
}

int cmd_build_vocab(const CommonArgs& a) {
    Config cfg = load_config(a.config_path);
    ensure_out_dir(a);
    auto records = load_gen_corpus(require_path(cfg.data.train, "train"));

    std::vector<std::string> texts;
    for (const GenRecord& r : records) {
        std::string section = first_section(r.diff, r.id);
        PreprocessedPatch pp = preprocess_sequence_only(section);
        texts.push_back(changed_text(pp.cc_p));
        texts.push_back(changed_text(pp.cc_m));
        texts.push_back(pp.cbp);
        texts.push_back(pp.cap);
        texts.push_back(r.msg);
    }
    if (!cfg.data.correctness.empty()) {
        for (const CorrectnessRecord& r : load_correctness_corpus(cfg.data.correctness)) {
            texts.push_back(r.bug_report);
        }
    }
    Vocab vocab = train_bpe(texts, cfg.model.vocab_size);
    write_file(artifact(a, "vocab.json"), vocab_to_json(vocab).dump(2) + "\n");
    log_info("vocab of " + std::to_string(vocab.size()) + " tokens");
    return 0;
}

int cmd_build_static_graph(const CommonArgs& a) {
    Config cfg = load_config(a.config_path);
    ensure_out_dir(a);
    auto records = load_gen_corpus(require_path(cfg.data.train, "train"));

    std::vector<AstGraph> graphs;
    for (const GenRecord& r : records) {
        try {
            PreprocessedPatch pp = preprocess_patch(first_section(r.diff, r.id));
            graphs.push_back(pp.g_cbp);
            graphs.push_back(pp.g_cap);
        } catch (const ParseError& e) {
            log_info("record " + r.id + ": " + e.what() + "; skipped for static graph");
        }
    }
    StaticGraph sg = build_static_graph(graphs, cfg.model.n_g);
    write_file(artifact(a, "static_graph.json"), static_graph_to_json(sg).dump(2) + "\n");
    log_info("static graph of " + std::to_string(sg.graph.nodes.size()) + " nodes");
    return 0;
}

int cmd_pretrain(const CommonArgs& a) {
    Config cfg = load_config(a.config_path);
    ensure_out_dir(a);
    auto records = load_gen_corpus(require_path(cfg.data.train, "train"));
    PreparedCorpus pc = prepare(records);

    Model m = build_model(cfg, a);
    std::vector<EncodedPatch> enc = encode_corpus(m, pc);
    int steps = steps_of(cfg, enc.size());
    auto log = pretrain(m, enc, steps, cfg.train.batch_size, cfg.train.mask_rate, cfg.train.lr,
                        a.seed);
    save_checkpoint(m.params, artifact(a, "pretrained.ckpt"));
    write_train_log(artifact(a, "pretrain_log.csv"), log);
    std::cout << "final_loss " << log.back().loss << "\n";
    return 0;
}

int cmd_finetune_desc(const CommonArgs& a) {
    Config cfg = load_config(a.config_path);
    ensure_out_dir(a);
    auto records = load_gen_corpus(require_path(cfg.data.train, "train"));
    PreparedCorpus pc = prepare(records);

    Model m = build_model(cfg, a);
    load_checkpoint(m.params, artifact(a, "pretrained.ckpt"));
    std::vector<EncodedPatch> enc = encode_corpus(m, pc);
    int steps = steps_of(cfg, enc.size());
    auto log = finetune_generation(m, enc, pc.messages, steps, cfg.train.batch_size, cfg.train.lr,
                                   a.seed);
    save_checkpoint(m.params, artifact(a, "desc.ckpt"));
    write_train_log(artifact(a, "desc_log.csv"), log);
    std::cout << "final_loss " << log.back().loss << "\n";
    return 0;
}

int cmd_finetune_correctness(const CommonArgs& a) {
    Config cfg = load_config(a.config_path);
    ensure_out_dir(a);
    auto records = load_correctness_corpus(require_path(cfg.data.correctness, "correctness"));
    attach_bug_vectors(records, cfg.data.bug_vectors);
    PreparedCorpus pc = prepare_correctness(records);

    Model m = build_model(cfg, a);
    Rng head_rng(mix_seed(a.seed, 0x636c73ULL));
    classifier_init(m.tf.d_e, m.tf.d_e, m.params, head_rng);
    load_checkpoint(m.params, artifact(a, "pretrained.ckpt"), false);

    std::vector<EncodedPatch> enc = encode_corpus(m, pc);
    int steps = steps_of(cfg, enc.size());
    auto log = finetune_correctness(m, enc, records, steps, cfg.train.batch_size, cfg.train.lr,
                                    a.seed);
    save_checkpoint(m.params, artifact(a, "correctness.ckpt"));
    write_train_log(artifact(a, "correctness_log.csv"), log);
    std::cout << "final_loss " << log.back().loss << "\n";
    return 0;
}

int cmd_embed(const CommonArgs& a, const std::string& checkpoint) {
    Config cfg = load_config(a.config_path);
    ensure_out_dir(a);
    auto records = load_gen_corpus(require_path(cfg.data.train, "train"));
    PreparedCorpus pc = prepare(records);

    Model m = build_model(cfg, a);
    std::string ckpt = checkpoint.empty() ? artifact(a, "pretrained.ckpt") : checkpoint;
    load_checkpoint(m.params, ckpt);

    std::vector<std::pair<std::string, std::vector<float>>> rows;
    RetrievalIndex index;
    Rng rng(a.seed);
    for (std::size_t i = 0; i < pc.patches.size(); ++i) {
        EncodedPatch ep = encode_inputs(m, pc.patches[i]);
        PatchEmbedding emb = encode_patch(m, ep, false, rng);
        rows.emplace_back(pc.ids[i], emb.pooled.value());
        index.insert(pc.ids[i], emb.pooled.value(), pc.messages[i]);
    }
    write_vectors(artifact(a, "embeddings.jsonl"), rows);
    save_index(index, artifact(a, "index.jsonl"));
    log_info("embedded " + std::to_string(rows.size()) + " patches");
    return 0;
}

int cmd_generate(const CommonArgs& a, const std::string& checkpoint) {
    Config cfg = load_config(a.config_path);
    ensure_out_dir(a);
    auto records = load_gen_corpus(require_path(cfg.data.train, "train"));
    PreparedCorpus pc = prepare(records);

    Model m = build_model(cfg, a);
    std::string ckpt = checkpoint.empty() ? artifact(a, "desc.ckpt") : checkpoint;
    load_checkpoint(m.params, ckpt);

    std::vector<std::pair<std::string, std::string>> rows;
    Rng rng(a.seed);
    for (std::size_t i = 0; i < pc.patches.size(); ++i) {
        EncodedPatch ep = encode_inputs(m, pc.patches[i]);
        PatchEmbedding emb = encode_patch(m, ep, false, rng);
        std::vector<int> ids = decode_tokens(m, emb, cfg.decode.beam, cfg.decode.max_out);
        rows.emplace_back(pc.ids[i], decode(m.vocab, ids));
    }
    write_predictions(artifact(a, "predictions.jsonl"), rows);
    log_info("generated " + std::to_string(rows.size()) + " descriptions");
    return 0;
}

int cmd_classify(const CommonArgs& a) {
    Config cfg = load_config(a.config_path);
    ensure_out_dir(a);
    auto records = load_correctness_corpus(require_path(cfg.data.correctness, "correctness"));
    attach_bug_vectors(records, cfg.data.bug_vectors);
    PreparedCorpus pc = prepare_correctness(records);

    Model m = build_model(cfg, a);
    Rng head_rng(mix_seed(a.seed, 0x636c73ULL));
    classifier_init(m.tf.d_e, m.tf.d_e, m.params, head_rng);
    load_checkpoint(m.params, artifact(a, "correctness.ckpt"));

    std::ofstream out(artifact(a, "classifications.jsonl"));
    if (!out) throw FileNotFound("cannot write " + artifact(a, "classifications.jsonl"));
    Rng rng(a.seed);
    for (std::size_t i = 0; i < pc.patches.size(); ++i) {
        EncodedPatch ep = encode_inputs(m, pc.patches[i]);
        PatchEmbedding emb = encode_patch(m, ep, false, rng);
        Tensor e_bug = bug_report_vector(m, records[i], rng);
        float prob = classify_correctness(emb.pooled, e_bug, m.params).item();
        nlohmann::json j;
        j["id"] = pc.ids[i];
        j["prediction"] = prob;
        j["label"] = records[i].label;
        out << j.dump() << "\n";
    }
    log_info("classified " + std::to_string(pc.patches.size()) + " patches");
    return 0;
}

int cmd_retrieve(const CommonArgs& a, const std::string& checkpoint, const std::string& queries) {
    Config cfg = load_config(a.config_path);
    ensure_out_dir(a);
    RetrievalIndex index = load_index(artifact(a, "index.jsonl"));
    if (index.empty()) throw EmptyIndex(artifact(a, "index.jsonl") + " has no entries");

    std::string query_path = queries.empty() ? require_path(cfg.data.train, "train") : queries;
    auto records = load_gen_corpus(query_path);
    PreparedCorpus pc = prepare(records);

    Model m = build_model(cfg, a);
    std::string ckpt = checkpoint.empty() ? artifact(a, "pretrained.ckpt") : checkpoint;
    load_checkpoint(m.params, ckpt);

    std::vector<std::pair<std::string, std::string>> rows;
    Rng rng(a.seed);
    for (std::size_t i = 0; i < pc.patches.size(); ++i) {
        EncodedPatch ep = encode_inputs(m, pc.patches[i]);
        PatchEmbedding emb = encode_patch(m, ep, false, rng);
        RetrievalHit hit = retrieve(index, emb.pooled.value());
        rows.emplace_back(pc.ids[i], hit.message);
    }
    write_predictions(artifact(a, "retrievals.jsonl"), rows);
    log_info("retrieved " + std::to_string(rows.size()) + " descriptions");
    return 0;
}

int cmd_eval(const CommonArgs& a, const std::string& pred_path, const std::string& cls_path) {
    Config cfg = load_config(a.config_path);
    ensure_out_dir(a);

    nlohmann::json result;
    result["bleu"] = nullptr;
    result["rouge_l"] = nullptr;
    result["meteor"] = nullptr;
    result["plus_recall"] = nullptr;
    result["minus_recall"] = nullptr;
    int n = 0;

    std::string preds = pred_path.empty() ? artifact(a, "predictions.jsonl") : pred_path;
    if (fs::exists(preds)) {
        auto refs = load_gen_corpus(require_path(cfg.data.train, "train"));
        std::map<std::string, std::string> ref_by_id;
        for (const GenRecord& r : refs) ref_by_id[r.id] = r.msg;

        std::vector<double> b, rl, mt;
        for (const nlohmann::json& j : corpus_detail::read_jsonl(preds)) {
            std::string id = corpus_detail::field_str(j, "id", preds);
            std::string pred = corpus_detail::field_str(j, "prediction", preds);
            auto it = ref_by_id.find(id);
            if (it == ref_by_id.end()) throw UnknownId("prediction id " + id + " not in corpus");
            auto cand = lower_words(pred);
            auto ref = lower_words(it->second);
            b.push_back(bleu(cand, ref));
            rl.push_back(rouge_l(cand, ref));
            mt.push_back(meteor(cand, ref));
        }
        if (!b.empty()) {
            result["bleu"] = corpus_mean(b);
            result["rouge_l"] = corpus_mean(rl);
            result["meteor"] = corpus_mean(mt);
            n = static_cast<int>(b.size());
        }
    }

    std::string cls = cls_path.empty() ? artifact(a, "classifications.jsonl") : cls_path;
    if (fs::exists(cls)) {
        std::vector<float> probs;
        std::vector<int> labels;
        for (const nlohmann::json& j : corpus_detail::read_jsonl(cls)) {
            if (!j.contains("prediction") || !j["prediction"].is_number() ||
                !j.contains("label") || !j["label"].is_number_integer()) {
                throw SchemaError(cls + " rows need numeric prediction and integer label");
            }
            probs.push_back(j["prediction"].get<float>());
            labels.push_back(j["label"].get<int>());
        }
        auto [plus, minus] = plus_minus_recall(probs, labels);
        if (plus.has_value()) result["plus_recall"] = *plus;
        if (minus.has_value()) result["minus_recall"] = *minus;
        n = std::max(n, static_cast<int>(probs.size()));
    }

    result["n"] = n;
    write_file(artifact(a, "eval.json"), result.dump(2) + "\n");
    std::cout << result.dump() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"patch representation pipeline"};
    app.require_subcommand(1);

    CommonArgs a;
    std::string checkpoint, queries, pred_path, cls_path;

    CLI::App* c_pre = app.add_subcommand("preprocess", "parse the corpus and report coverage");
    add_common(c_pre, a, false);
    CLI::App* c_vocab = app.add_subcommand("build-vocab", "train the BPE vocabulary");
    add_common(c_vocab, a, false);
    CLI::App* c_static = app.add_subcommand("build-static-graph", "fold training ASTs into the static graph");
    add_common(c_static, a, false);
    CLI::App* c_pretrain = app.add_subcommand("pretrain", "masked-token pre-training");
    add_common(c_pretrain, a);
    CLI::App* c_desc = app.add_subcommand("finetune-desc", "fine-tune description generation");
    add_common(c_desc, a);
    CLI::App* c_corr = app.add_subcommand("finetune-correctness", "fine-tune the correctness classifier");
    add_common(c_corr, a);
    CLI::App* c_embed = app.add_subcommand("embed", "export patch embeddings and the retrieval index");
    add_common(c_embed, a);
    c_embed->add_option("--checkpoint", checkpoint, "checkpoint to embed with");
    CLI::App* c_gen = app.add_subcommand("generate", "decode descriptions for the corpus");
    add_common(c_gen, a);
    c_gen->add_option("--checkpoint", checkpoint, "checkpoint to decode with");
    CLI::App* c_cls = app.add_subcommand("classify", "score patch correctness");
    add_common(c_cls, a);
    CLI::App* c_ret = app.add_subcommand("retrieve", "nearest-neighbor description retrieval");
    add_common(c_ret, a);
    c_ret->add_option("--checkpoint", checkpoint, "checkpoint to embed queries with");
    c_ret->add_option("--queries", queries, "query corpus JSONL");
    CLI::App* c_eval = app.add_subcommand("eval", "score predictions against references");
    add_common(c_eval, a, false);
    c_eval->add_option("--pred", pred_path, "predictions JSONL");
    c_eval->add_option("--classifications", cls_path, "classification outputs JSONL");

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_pre->parsed()) return cmd_preprocess(a);
        if (c_vocab->parsed()) return cmd_build_vocab(a);
        if (c_static->parsed()) return cmd_build_static_graph(a);
        if (c_pretrain->parsed()) return cmd_pretrain(a);
        if (c_desc->parsed()) return cmd_finetune_desc(a);
        if (c_corr->parsed()) return cmd_finetune_correctness(a);
        if (c_embed->parsed()) return cmd_embed(a, checkpoint);
        if (c_gen->parsed()) return cmd_generate(a, checkpoint);
        if (c_cls->parsed()) return cmd_classify(a);
        if (c_ret->parsed()) return cmd_retrieve(a, checkpoint, queries);
        if (c_eval->parsed()) return cmd_eval(a, pred_path, cls_path);
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "Error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
