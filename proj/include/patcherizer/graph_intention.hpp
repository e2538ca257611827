#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "patcherizer/ast.hpp"
#include "patcherizer/bpe.hpp"
#include "patcherizer/tensor.hpp"

#include <json.hpp>

namespace patcherizer {

// A node of b merges into a node of a when they carry the same label at the
// same depth and either share a neighbor label or are both isolated. Pairs
// are scored by how many distinct neighbor labels they share, computed on the
// untouched inputs, and matched greedily from the strongest pair down; a node
// matched with its own mirror always outranks a cross pairing, which keeps
// folding a graph into itself an exact no-op.
inline AstGraph merge_graphs(const AstGraph& a, const AstGraph& b) {
    int na = static_cast<int>(a.nodes.size());
    int nb = static_cast<int>(b.nodes.size());
    if (nb == 0) return a;
    auto adj_a = adjacency(a);
    auto adj_b = adjacency(b);
    auto label_set = [](const AstGraph& g, const std::vector<int>& nbs) {
        std::set<std::string> s;
        for (int v : nbs) s.insert(g.nodes[v].label);
        return s;
    };
    std::vector<std::set<int>> scored;  // scored[s] holds pairs i*nb+j with score s
    for (int i = 0; i < na; ++i) {
        std::set<std::string> li = label_set(a, adj_a[i]);
        for (int j = 0; j < nb; ++j) {
            if (a.nodes[i].label != b.nodes[j].label || a.nodes[i].depth != b.nodes[j].depth)
                continue;
            int score = 0;
            for (const auto& lab : label_set(b, adj_b[j]))
                if (li.count(lab)) ++score;
            if (score == 0 && !(adj_a[i].empty() && adj_b[j].empty())) continue;
            if (static_cast<int>(scored.size()) <= score) scored.resize(score + 1);
            scored[score].insert(i * nb + j);
        }
    }

    std::vector<int> partner_of_b(nb, -1);
    std::vector<bool> a_taken(na, false);
    for (int s = static_cast<int>(scored.size()) - 1; s >= 0; --s) {
        for (int key : scored[s]) {
            int i = key / nb, j = key % nb;
            if (a_taken[i] || partner_of_b[j] >= 0) continue;
            a_taken[i] = true;
            partner_of_b[j] = i;
        }
    }

    AstGraph out = a;
    std::vector<int> slot_of_b(nb, -1);
    for (int j = 0; j < nb; ++j) {
        if (partner_of_b[j] >= 0) {
            slot_of_b[j] = partner_of_b[j];
        } else {
            slot_of_b[j] = static_cast<int>(out.nodes.size());
            out.nodes.push_back(b.nodes[j]);
        }
    }
    for (const auto& [x, y] : b.edges) out.edges.emplace_back(slot_of_b[x], slot_of_b[y]);
    normalize_edges(out.edges);
    return out;
}

// Keep every node whose subtree reaches a leaf labeled with a patch token,
// which is exactly the matching leaves plus all their ancestors.
inline AstGraph prune_graph(const AstGraph& g, const std::set<std::string>& patch_tokens) {
    int n = static_cast<int>(g.nodes.size());
    if (n == 0) throw EmptyAfterPrune("graph has no nodes");
    auto adj = adjacency(g);
    std::vector<char> keep(n, 0), visited(n, 0);

    std::function<bool(int)> walk = [&](int u) -> bool {
        visited[u] = 1;
        bool has_child = false, kept = false;
        for (int v : adj[u]) {
            if (g.nodes[v].depth != g.nodes[u].depth + 1 || visited[v]) continue;
            has_child = true;
            if (walk(v)) kept = true;
        }
        if (!has_child) kept = patch_tokens.count(g.nodes[u].label) > 0;
        keep[u] = kept ? 1 : 0;
        return kept;
    };
    for (int i = 0; i < n; ++i)
        if (g.nodes[i].depth == 0 && !visited[i]) walk(i);

    std::vector<int> remap(n, -1);
    AstGraph out;
    for (int i = 0; i < n; ++i) {
        if (!keep[i]) continue;
        remap[i] = static_cast<int>(out.nodes.size());
        out.nodes.push_back(g.nodes[i]);
    }
    if (out.nodes.empty()) throw EmptyAfterPrune("no leaf label occurs in the patch tokens");
    for (const auto& [x, y] : g.edges)
        if (remap[x] >= 0 && remap[y] >= 0) out.edges.emplace_back(remap[x], remap[y]);
    normalize_edges(out.edges);
    return out;
}

struct StaticGraph {
    AstGraph graph;
    std::map<std::pair<std::string, int>, int> node_index;
    int cap = 2000;
};

inline StaticGraph build_static_graph(const std::vector<AstGraph>& graphs, int cap) {
    if (graphs.empty()) throw EmptyInput("no graphs to fold into a static graph");
    std::map<std::pair<std::string, int>, int> freq;
    for (const auto& g : graphs)
        for (const auto& nd : g.nodes) ++freq[{nd.label, nd.depth}];

    AstGraph acc = graphs[0];
    for (std::size_t i = 1; i < graphs.size(); ++i) acc = merge_graphs(acc, graphs[i]);

    int n = static_cast<int>(acc.nodes.size());
    if (n > cap) {
        std::vector<bool> alive(n, true);
        int live = n;
        while (live > cap) {
            int victim = -1;
            int best_freq = 0;
            for (int i = 0; i < n; ++i) {
                if (!alive[i]) continue;
                int f = freq[{acc.nodes[i].label, acc.nodes[i].depth}];
                if (victim < 0 || f < best_freq || (f == best_freq && i > victim)) {
                    victim = i;
                    best_freq = f;
                }
            }
            alive[victim] = false;
            --live;
        }
        std::vector<int> remap(n, -1);
        AstGraph trimmed;
        for (int i = 0; i < n; ++i) {
            if (!alive[i]) continue;
            remap[i] = static_cast<int>(trimmed.nodes.size());
            trimmed.nodes.push_back(acc.nodes[i]);
        }
        for (const auto& [x, y] : acc.edges)
            if (remap[x] >= 0 && remap[y] >= 0) trimmed.edges.emplace_back(remap[x], remap[y]);
        normalize_edges(trimmed.edges);
        acc = std::move(trimmed);
    }

    StaticGraph sg;
    sg.graph = std::move(acc);
    sg.cap = cap;
    for (std::size_t i = 0; i < sg.graph.nodes.size(); ++i) {
        auto key = std::make_pair(sg.graph.nodes[i].label, sg.graph.nodes[i].depth);
        if (!sg.node_index.count(key)) sg.node_index[key] = static_cast<int>(i);
    }
    return sg;
}

namespace graph_detail {

struct EdgeSet {
    std::set<std::pair<int, int>> edges;
    bool has(int a, int b) const {
        return edges.count({std::min(a, b), std::max(a, b)}) > 0;
    }
};

inline EdgeSet edge_set(const AstGraph& g) {
    EdgeSet s;
    for (const auto& e : g.edges) s.edges.insert(e);
    return s;
}

// Exhaustive branch-and-bound over partial injective mappings; consistent
// with local edges, first maximal assignment in slot order wins.
inline void exact_search(const AstGraph& local, const AstGraph& global, const EdgeSet& ge,
                         const std::vector<std::vector<int>>& local_adj,
                         const std::vector<std::vector<int>>& candidates, int u,
                         std::vector<int>& cur, int matched, std::vector<int>& best,
                         int& best_count) {
    int n = static_cast<int>(local.nodes.size());
    if (matched + (n - u) <= best_count) return;
    if (u == n) {
        if (matched > best_count) {
            best_count = matched;
            best = cur;
        }
        return;
    }
    for (int slot : candidates[u]) {
        bool free_slot = true;
        for (int w = 0; w < u && free_slot; ++w)
            if (cur[w] == slot) free_slot = false;
        if (!free_slot) continue;
        bool consistent = true;
        for (int w : local_adj[u]) {
            if (w < u && cur[w] >= 0 && !ge.has(cur[w], slot)) {
                consistent = false;
                break;
            }
        }
        if (!consistent) continue;
        cur[u] = slot;
        exact_search(local, global, ge, local_adj, candidates, u + 1, cur, matched + 1, best,
                     best_count);
        cur[u] = -1;
    }
    exact_search(local, global, ge, local_adj, candidates, u + 1, cur, matched, best, best_count);
}

}  // namespace graph_detail

// Injective map local node -> global slot (-1 for unmatched), preserving
// labels, depths, and every local edge between mapped nodes. Exact search on
// small graphs, deterministic greedy beyond.
inline std::vector<int> align_mapping(const AstGraph& local, const AstGraph& global) {
    using namespace graph_detail;
    int n = static_cast<int>(local.nodes.size());
    std::vector<int> mapping(n, -1);
    if (n == 0) return mapping;
    EdgeSet ge = edge_set(global);
    auto local_adj = adjacency(local);
    std::vector<std::vector<int>> candidates(n);
    for (int u = 0; u < n; ++u)
        for (std::size_t s = 0; s < global.nodes.size(); ++s)
            if (global.nodes[s].label == local.nodes[u].label &&
                global.nodes[s].depth == local.nodes[u].depth)
                candidates[u].push_back(static_cast<int>(s));

    if (n <= 12) {
        std::vector<int> cur(n, -1);
        int best_count = -1;
        exact_search(local, global, ge, local_adj, candidates, 0, cur, 0, mapping, best_count);
        return mapping;
    }

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int x, int y) {
        std::size_t rx = candidates[x].size(), ry = candidates[y].size();
        if (rx != ry) return rx < ry;
        if (local_adj[x].size() != local_adj[y].size())
            return local_adj[x].size() > local_adj[y].size();
        return x < y;
    });
    std::vector<bool> used(global.nodes.size(), false);
    for (int u : order) {
        for (int slot : candidates[u]) {
            if (used[slot]) continue;
            bool consistent = true;
            for (int w : local_adj[u])
                if (mapping[w] >= 0 && !ge.has(mapping[w], slot)) {
                    consistent = false;
                    break;
                }
            if (!consistent) continue;
            mapping[u] = slot;
            used[slot] = true;
            break;
        }
    }
    return mapping;
}

struct AlignedGraph {
    Tensor h0;
    std::vector<float> adj;
    Tensor node_mask;
    Tensor changed_mask;
    std::vector<std::vector<int>> feature_groups;
    int n_slots = 0;
};

// Rebuild h0 from the current embedding table. Training loops cache aligned
// graphs across optimizer steps; the slot layout is stable but the features
// must follow the updated embeddings.
inline void refresh_features(AlignedGraph& ag, const Tensor& tok_table) {
    ag.h0 = embedding_bag(tok_table, ag.feature_groups);
}

// Place matched locals on their global slots and the rest on padding slots,
// then carry only the local edges through the placement. Features are the
// mean token embedding of each node label.
inline AlignedGraph align_graph(const AstGraph& local, const StaticGraph& global,
                                const Vocab& vocab, const Tensor& tok_table,
                                const std::set<std::string>& changed_tokens) {
    int n_slots = global.cap;
    int n_global = static_cast<int>(global.graph.nodes.size());
    std::vector<int> mapping = align_mapping(local, global.graph);

    int next_pad = n_global;
    std::vector<int> slot_of(local.nodes.size(), -1);
    for (std::size_t u = 0; u < local.nodes.size(); ++u) {
        int s = mapping[u];
        if (s < 0 && next_pad < n_slots) s = next_pad++;
        slot_of[u] = s < n_slots ? s : -1;
    }

    AlignedGraph ag;
    ag.n_slots = n_slots;
    ag.adj.assign(static_cast<std::size_t>(n_slots) * n_slots, 0.0f);
    std::vector<float> mask(n_slots, 0.0f), changed(n_slots, 0.0f);
    std::vector<std::vector<int>> groups(n_slots);
    for (std::size_t u = 0; u < local.nodes.size(); ++u) {
        int s = slot_of[u];
        if (s < 0) continue;
        mask[s] = 1.0f;
        groups[s] = encode_ids(vocab, local.nodes[u].label);
        for (const auto& tok : changed_tokens)
            if (local.nodes[u].label.find(tok) != std::string::npos) changed[s] = 1.0f;
    }
    for (const auto& [x, y] : local.edges) {
        int sx = slot_of[x], sy = slot_of[y];
        if (sx < 0 || sy < 0 || sx == sy) continue;
        ag.adj[static_cast<std::size_t>(sx) * n_slots + sy] = 1.0f;
        ag.adj[static_cast<std::size_t>(sy) * n_slots + sx] = 1.0f;
    }
    ag.h0 = embedding_bag(tok_table, groups);
    ag.feature_groups = std::move(groups);
    ag.node_mask = Tensor::from_data({n_slots}, std::move(mask));
    ag.changed_mask = Tensor::from_data({n_slots}, std::move(changed));
    return ag;
}

// P = (D+I)^(-1/2) (A+I) (D+I)^(-1/2); isolated nodes keep a unit diagonal.
inline std::vector<float> renormalized_laplacian(const std::vector<float>& a, int n) {
    if (static_cast<int>(a.size()) != n * n) {
        throw ShapeMismatch("adjacency of " + std::to_string(a.size()) +
                            " entries is not " + std::to_string(n) + "x" + std::to_string(n));
    }
    for (int i = 0; i < n; ++i) {
        if (a[static_cast<std::size_t>(i) * n + i] != 0.0f)
            throw NonSymmetric("adjacency diagonal must be zero");
        for (int j = i + 1; j < n; ++j)
            if (a[static_cast<std::size_t>(i) * n + j] != a[static_cast<std::size_t>(j) * n + i])
                throw NonSymmetric("adjacency must equal its transpose");
    }
    std::vector<double> inv_sqrt(n);
    for (int i = 0; i < n; ++i) {
        double deg = 0.0;
        for (int j = 0; j < n; ++j) deg += a[static_cast<std::size_t>(i) * n + j];
        inv_sqrt[i] = 1.0 / std::sqrt(deg + 1.0);
    }
    std::vector<float> p(a.size(), 0.0f);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double aug = a[static_cast<std::size_t>(i) * n + j] + (i == j ? 1.0 : 0.0);
            p[static_cast<std::size_t>(i) * n + j] =
                static_cast<float>(aug * inv_sqrt[i] * inv_sqrt[j]);
        }
    return p;
}

enum class PoolMode { All, Changed };

struct GcnConfig {
    int layers = 2;
    float alpha = 0.1f;
    std::vector<float> betas;
    PoolMode pooling = PoolMode::All;

    static GcnConfig defaults(int layers = 2) {
        GcnConfig cfg;
        cfg.layers = layers;
        for (int l = 0; l < layers; ++l) cfg.betas.push_back(0.5f / (l + 1));
        return cfg;
    }

    void validate() const {
        if (layers < 1) throw SchemaError("gcn needs at least one layer");
        if (static_cast<int>(betas.size()) != layers)
            throw SchemaError("gcn needs one beta per layer");
        if (alpha < 0.0f || alpha > 1.0f) throw SchemaError("gcn alpha outside [0,1]");
        for (float b : betas)
            if (b < 0.0f || b > 1.0f) throw SchemaError("gcn beta outside [0,1]");
    }
};

inline void gcn_init(const GcnConfig& cfg, int d_e, ParamMap& p, Rng& rng) {
    cfg.validate();
    for (int l = 0; l < cfg.layers; ++l)
        p["gcn.w" + std::to_string(l)] = xavier_init({d_e, d_e}, rng);
}

// H^(l+1) = relu(((1-alpha) P H^(l) + alpha H^(0)) ((1-beta_l) I + beta_l W^(l)))
inline Tensor gcn_forward(const AlignedGraph& ag, const GcnConfig& cfg, const ParamMap& p) {
    cfg.validate();
    int n = ag.n_slots;
    int d_e = ag.h0.cols();
    Tensor prop = Tensor::from_data({n, n}, renormalized_laplacian(ag.adj, n));
    std::vector<float> eye_v(static_cast<std::size_t>(d_e) * d_e, 0.0f);
    for (int i = 0; i < d_e; ++i) eye_v[static_cast<std::size_t>(i) * d_e + i] = 1.0f;
    Tensor eye = Tensor::from_data({d_e, d_e}, std::move(eye_v));

    Tensor h = ag.h0;
    for (int l = 0; l < cfg.layers; ++l) {
        Tensor mixed = add(scale(matmul(prop, h), 1.0f - cfg.alpha), scale(ag.h0, cfg.alpha));
        Tensor wmix = add(scale(eye, 1.0f - cfg.betas[l]),
                          scale(p.at("gcn.w" + std::to_string(l)), cfg.betas[l]));
        h = scale_rows(relu(matmul(mixed, wmix)), ag.node_mask);
    }
    return h;
}

inline Tensor graph_pool(const Tensor& h, const AlignedGraph& ag, PoolMode mode) {
    if (mode == PoolMode::Changed) {
        std::vector<float> both(ag.n_slots, 0.0f);
        float any = 0.0f;
        for (int i = 0; i < ag.n_slots; ++i) {
            both[i] = ag.node_mask.value()[i] * ag.changed_mask.value()[i];
            any += both[i];
        }
        if (any > 0.0f)
            return mean_pool_masked(h, Tensor::from_data({ag.n_slots}, std::move(both)));
    }
    return mean_pool_masked(h, ag.node_mask);
}

inline void graph_resnet_init(int d_e, ParamMap& p, Rng& rng) {
    p["graph.fc.w"] = xavier_init({d_e, d_e}, rng);
    p["graph.fc.b"] = Tensor::zeros({d_e}, true);
}

// Three residual paths w_cbp, w_cbp + w_cap, w_cap collapse into one relu of
// their sum before the output projection.
inline Tensor graph_cross_resnet(const Tensor& w_cbp, const Tensor& w_cap, const ParamMap& p) {
    Tensor summed = scale(add(w_cbp, w_cap), 2.0f);
    return add(matmul(relu(summed), p.at("graph.fc.w")), p.at("graph.fc.b"));
}

inline Tensor encode_graph_intention(const AlignedGraph& ag_cbp, const AlignedGraph& ag_cap,
                                     const GcnConfig& cfg, const ParamMap& p) {
    Tensor w_cbp = graph_pool(gcn_forward(ag_cbp, cfg, p), ag_cbp, cfg.pooling);
    Tensor w_cap = graph_pool(gcn_forward(ag_cap, cfg, p), ag_cap, cfg.pooling);
    return graph_cross_resnet(w_cbp, w_cap, p);
}

inline nlohmann::json static_graph_to_json(const StaticGraph& sg) {
    nlohmann::json j;
    j["graph"] = graph_to_json(sg.graph);
    j["cap"] = sg.cap;
    nlohmann::json idx = nlohmann::json::array();
    for (const auto& [key, slot] : sg.node_index)
        idx.push_back({key.first, key.second, slot});
    j["index"] = idx;
    return j;
}

inline StaticGraph static_graph_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("graph") || !j.contains("cap") || !j.contains("index"))
        throw SchemaError("static graph needs graph, cap, and index");
    StaticGraph sg;
    sg.graph = graph_from_json(j.at("graph"));
    sg.cap = j.at("cap").get<int>();
    if (static_cast<int>(sg.graph.nodes.size()) > sg.cap)
        throw SchemaError("static graph larger than its cap");
    for (const auto& entry : j.at("index")) {
        if (!entry.is_array() || entry.size() != 3) throw SchemaError("bad index entry");
        int slot = entry.at(2).get<int>();
        if (slot < 0 || slot >= static_cast<int>(sg.graph.nodes.size()))
            throw SchemaError("index slot out of range");
        sg.node_index[{entry.at(0).get<std::string>(), entry.at(1).get<int>()}] = slot;
    }
    return sg;
}

}  // namespace patcherizer
