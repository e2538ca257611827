#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "patcherizer/common.hpp"

namespace patcherizer {

struct AstNode {
    int id = 0;
    std::string label;
    int depth = 0;
    std::vector<int> children;
};

// Ids are preorder positions, so the root is node 0 and parents precede
// children.
struct AstTree {
    std::vector<AstNode> nodes;
};

struct GraphNode {
    std::string label;
    int depth = 0;
};

struct AstGraph {
    std::vector<GraphNode> nodes;
    std::vector<std::pair<int, int>> edges;  // normalized: first < second

    bool operator==(const AstGraph& other) const {
        if (nodes.size() != other.nodes.size() || edges.size() != other.edges.size())
            return false;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            if (nodes[i].label != other.nodes[i].label || nodes[i].depth != other.nodes[i].depth)
                return false;
        }
        return edges == other.edges;
    }
};

inline void normalize_edges(std::vector<std::pair<int, int>>& edges) {
    for (auto& e : edges) {
        if (e.first > e.second) std::swap(e.first, e.second);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    edges.erase(std::remove_if(edges.begin(), edges.end(),
                               [](const auto& e) { return e.first == e.second; }),
                edges.end());
}

inline std::vector<std::vector<int>> adjacency(const AstGraph& g) {
    std::vector<std::vector<int>> adj(g.nodes.size());
    for (const auto& [a, b] : g.edges) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    for (auto& nbrs : adj) std::sort(nbrs.begin(), nbrs.end());
    return adj;
}

namespace ast_detail {

// Parser-side tree before ids are assigned.
struct RawNode {
    std::string label;
    std::vector<RawNode> kids;
};

inline void flatten(const RawNode& n, int depth, AstTree& out) {
    int id = static_cast<int>(out.nodes.size());
    out.nodes.push_back({id, n.label, depth, {}});
    for (const RawNode& k : n.kids) {
        out.nodes[id].children.push_back(static_cast<int>(out.nodes.size()));
        flatten(k, depth + 1, out);
    }
}

inline AstTree to_tree(const RawNode& root) {
    AstTree t;
    flatten(root, 0, t);
    return t;
}

enum class Tok { Ident, IntLit, StringLit, Punct, Keyword, End };

struct Token {
    Tok kind;
    std::string text;
    int line;
    int col;
};

inline bool is_keyword(const std::string& s) {
    return s == "class" || s == "if" || s == "else" || s == "while" || s == "return";
}

inline std::vector<Token> lex(const std::string& src) {
    std::vector<Token> toks;
    int line = 1, col = 1;
    std::size_t i = 0;
    auto advance = [&](char c) {
        if (c == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
        ++i;
    };
    while (i < src.size()) {
        char c = src[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            advance(c);
            continue;
        }
        int tl = line, tc = col;
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::string word;
            while (i < src.size() &&
                   (std::isalnum(static_cast<unsigned char>(src[i])) || src[i] == '_')) {
                word.push_back(src[i]);
                advance(src[i]);
            }
            toks.push_back({is_keyword(word) ? Tok::Keyword : Tok::Ident, word, tl, tc});
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            std::string num;
            while (i < src.size() && std::isdigit(static_cast<unsigned char>(src[i]))) {
                num.push_back(src[i]);
                advance(src[i]);
            }
            toks.push_back({Tok::IntLit, num, tl, tc});
            continue;
        }
        if (c == '"') {
            std::string lit;
            lit.push_back(c);
            advance(c);
            while (i < src.size() && src[i] != '"' && src[i] != '\n') {
                lit.push_back(src[i]);
                advance(src[i]);
            }
            if (i >= src.size() || src[i] != '"') {
                throw ParseError("unterminated string literal", tl, tc);
            }
            lit.push_back('"');
            advance('"');
            toks.push_back({Tok::StringLit, lit, tl, tc});
            continue;
        }
        if (c == '=' || c == '!' || c == '<' || c == '>') {
            std::string op(1, c);
            advance(c);
            if ((op == "=" || op == "!") && i < src.size() && src[i] == '=') {
                op.push_back('=');
                advance('=');
            }
            if (op == "!") throw ParseError("stray '!'", tl, tc);
            toks.push_back({Tok::Punct, op, tl, tc});
            continue;
        }
        if (std::string("+-*/(){};,.").find(c) != std::string::npos) {
            toks.push_back({Tok::Punct, std::string(1, c), tl, tc});
            advance(c);
            continue;
        }
        throw ParseError(std::string("unexpected character '") + c + "'", line, col);
    }
    toks.push_back({Tok::End, "", line, col});
    return toks;
}

class Parser {
public:
    explicit Parser(const std::string& src) : toks_(lex(src)) {}

    RawNode parse_program() {
        RawNode cls = parse_class();
        if (!at(Tok::End)) fail("end of input");
        return cls;
    }

private:
    std::vector<Token> toks_;
    std::size_t pos_ = 0;

    const Token& cur() const { return toks_[pos_]; }
    bool at(Tok k) const { return cur().kind == k; }
    bool at_punct(const std::string& p) const { return at(Tok::Punct) && cur().text == p; }
    bool at_keyword(const std::string& k) const { return at(Tok::Keyword) && cur().text == k; }

    [[noreturn]] void fail(const std::string& expected) const {
        std::string got = at(Tok::End) ? "end of input" : "'" + cur().text + "'";
        throw ParseError("expected " + expected + ", got " + got, cur().line, cur().col);
    }

    Token take() { return toks_[pos_++]; }

    Token expect_punct(const std::string& p) {
        if (!at_punct(p)) fail("'" + p + "'");
        return take();
    }

    Token expect_ident() {
        if (!at(Tok::Ident)) fail("identifier");
        return take();
    }

    RawNode leaf(const std::string& label) { return {label, {}}; }

    RawNode parse_class() {
        if (!at_keyword("class")) fail("'class'");
        take();
        RawNode cls{"ClassDecl", {}};
        cls.kids.push_back(leaf(expect_ident().text));
        expect_punct("{");
        while (!at_punct("}")) {
            if (at(Tok::End)) fail("'}' or class member");
            cls.kids.push_back(parse_member());
        }
        take();
        return cls;
    }

    // Members open with "type name"; '(' after the name makes it a method.
    RawNode parse_member() {
        Token type = expect_ident();
        Token name = expect_ident();
        if (at_punct("(")) return parse_method(type, name);
        RawNode decl{"VarDecl", {leaf(type.text), leaf(name.text)}};
        if (at_punct("=")) {
            take();
            decl.kids.push_back(parse_expr());
        }
        expect_punct(";");
        return decl;
    }

    RawNode parse_method(const Token& type, const Token& name) {
        RawNode m{"MethodDecl", {leaf(type.text), leaf(name.text)}};
        expect_punct("(");
        if (!at_punct(")")) {
            while (true) {
                Token pt = expect_ident();
                Token pn = expect_ident();
                m.kids.push_back({"Param", {leaf(pt.text), leaf(pn.text)}});
                if (!at_punct(",")) break;
                take();
            }
        }
        expect_punct(")");
        m.kids.push_back(parse_block());
        return m;
    }

    RawNode parse_block() {
        expect_punct("{");
        RawNode b{"Block", {}};
        while (!at_punct("}")) {
            if (at(Tok::End)) fail("'}' or statement");
            b.kids.push_back(parse_statement());
        }
        take();
        return b;
    }

    RawNode parse_statement() {
        if (at_keyword("if")) return parse_if();
        if (at_keyword("while")) return parse_while();
        if (at_keyword("return")) return parse_return();
        if (at(Tok::Ident) && toks_[pos_ + 1].kind == Tok::Ident) {
            Token type = take();
            Token name = take();
            RawNode decl{"VarDecl", {leaf(type.text), leaf(name.text)}};
            if (at_punct("=")) {
                take();
                decl.kids.push_back(parse_expr());
            }
            expect_punct(";");
            return decl;
        }
        RawNode e = parse_expr();
        if (at_punct("=")) {
            bool ident_leaf = e.kids.empty() && !e.label.empty() &&
                              (std::isalpha(static_cast<unsigned char>(e.label[0])) ||
                               e.label[0] == '_');
            if (e.label != "FieldAccess" && !ident_leaf) {
                fail("assignable left-hand side before '='");
            }
            take();
            RawNode rhs = parse_expr();
            expect_punct(";");
            return {"Assign", {std::move(e), std::move(rhs)}};
        }
        expect_punct(";");
        return {"ExprStmt", {std::move(e)}};
    }

    RawNode parse_if() {
        take();
        RawNode n{"If", {}};
        expect_punct("(");
        n.kids.push_back(parse_expr());
        expect_punct(")");
        n.kids.push_back(parse_block());
        if (at_keyword("else")) {
            take();
            n.kids.push_back(parse_block());
        }
        return n;
    }

    RawNode parse_while() {
        take();
        RawNode n{"While", {}};
        expect_punct("(");
        n.kids.push_back(parse_expr());
        expect_punct(")");
        n.kids.push_back(parse_block());
        return n;
    }

    RawNode parse_return() {
        take();
        RawNode n{"Return", {}};
        if (!at_punct(";")) n.kids.push_back(parse_expr());
        expect_punct(";");
        return n;
    }

    RawNode parse_expr() { return parse_comparison(); }

    bool at_any_punct(std::initializer_list<const char*> ops) const {
        if (!at(Tok::Punct)) return false;
        for (const char* op : ops)
            if (cur().text == op) return true;
        return false;
    }

    RawNode binary_chain(RawNode lhs, std::initializer_list<const char*> ops,
                         RawNode (Parser::*next)()) {
        while (at_any_punct(ops)) {
            Token op = take();
            RawNode rhs = (this->*next)();
            lhs = {"BinaryOp", {std::move(lhs), leaf(op.text), std::move(rhs)}};
        }
        return lhs;
    }

    RawNode parse_comparison() {
        return binary_chain(parse_additive(), {"==", "!=", "<", ">"}, &Parser::parse_additive);
    }

    RawNode parse_additive() {
        return binary_chain(parse_multiplicative(), {"+", "-"}, &Parser::parse_multiplicative);
    }

    RawNode parse_multiplicative() {
        return binary_chain(parse_postfix(), {"*", "/"}, &Parser::parse_postfix);
    }

    RawNode parse_postfix() {
        RawNode e = parse_primary();
        while (true) {
            if (at_punct(".")) {
                take();
                Token field = expect_ident();
                e = {"FieldAccess", {std::move(e), leaf(field.text)}};
            } else if (at_punct("(")) {
                take();
                RawNode call{"Call", {std::move(e)}};
                if (!at_punct(")")) {
                    while (true) {
                        call.kids.push_back(parse_expr());
                        if (!at_punct(",")) break;
                        take();
                    }
                }
                expect_punct(")");
                e = std::move(call);
            } else {
                return e;
            }
        }
    }

    RawNode parse_primary() {
        if (at(Tok::Ident) || at(Tok::IntLit) || at(Tok::StringLit)) return leaf(take().text);
        if (at_punct("(")) {
            take();
            RawNode e = parse_expr();
            expect_punct(")");
            return e;
        }
        fail("expression");
    }
};

}  // namespace ast_detail

inline AstTree parse_source(const std::string& src) {
    if (normalize_ws(src).empty()) throw EmptyInput("source text is empty");
    ast_detail::Parser p(src);
    return ast_detail::to_tree(p.parse_program());
}

inline AstGraph ast_to_graph(const AstTree& tree) {
    AstGraph g;
    g.nodes.reserve(tree.nodes.size());
    for (const AstNode& n : tree.nodes) g.nodes.push_back({n.label, n.depth});
    for (const AstNode& n : tree.nodes)
        for (int c : n.children) g.edges.emplace_back(n.id, c);
    normalize_edges(g.edges);
    return g;
}

inline nlohmann::json graph_to_json(const AstGraph& g) {
    nlohmann::json nodes = nlohmann::json::array();
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        nodes.push_back({{"id", i}, {"label", g.nodes[i].label}, {"depth", g.nodes[i].depth}});
    }
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& [a, b] : g.edges) edges.push_back({a, b});
    return {{"nodes", nodes}, {"edges", edges}};
}

inline AstGraph graph_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("nodes") || !j.contains("edges") ||
        !j["nodes"].is_array() || !j["edges"].is_array()) {
        throw SchemaError("graph document needs \"nodes\" and \"edges\" arrays");
    }
    AstGraph g;
    g.nodes.resize(j["nodes"].size());
    std::vector<bool> seen(g.nodes.size(), false);
    for (const auto& n : j["nodes"]) {
        if (!n.is_object() || !n.contains("id") || !n.contains("label") || !n.contains("depth") ||
            !n["id"].is_number_integer() || !n["label"].is_string() ||
            !n["depth"].is_number_integer()) {
            throw SchemaError("graph node needs integer id, string label, integer depth");
        }
        int id = n["id"].get<int>();
        if (id < 0 || id >= static_cast<int>(g.nodes.size()) || seen[id]) {
            throw SchemaError("graph node ids must be 0..n-1 without repeats");
        }
        seen[id] = true;
        g.nodes[id] = {n["label"].get<std::string>(), n["depth"].get<int>()};
    }
    for (const auto& e : j["edges"]) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() ||
            !e[1].is_number_integer()) {
            throw SchemaError("graph edge must be a [id, id] pair");
        }
        int a = e[0].get<int>(), b = e[1].get<int>();
        if (a < 0 || b < 0 || a >= static_cast<int>(g.nodes.size()) ||
            b >= static_cast<int>(g.nodes.size())) {
            throw SchemaError("graph edge endpoint out of range");
        }
        g.edges.emplace_back(a, b);
    }
    normalize_edges(g.edges);
    return g;
}

namespace ast_detail {

inline RawNode raw_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("label") || !j["label"].is_string()) {
        throw SchemaError("AST node needs a string \"label\"");
    }
    RawNode n{j["label"].get<std::string>(), {}};
    if (j.contains("children")) {
        if (!j["children"].is_array()) throw SchemaError("\"children\" must be an array");
        for (const auto& c : j["children"]) n.kids.push_back(raw_from_json(c));
    }
    return n;
}

inline nlohmann::json raw_to_json(const AstTree& t, int id) {
    nlohmann::json j{{"label", t.nodes[id].label}, {"children", nlohmann::json::array()}};
    for (int c : t.nodes[id].children) j["children"].push_back(raw_to_json(t, c));
    return j;
}

}  // namespace ast_detail

inline AstGraph ingest_external_ast(const nlohmann::json& doc) {
    return ast_to_graph(ast_detail::to_tree(ast_detail::raw_from_json(doc)));
}

inline nlohmann::json ast_to_json(const AstTree& tree) {
    return ast_detail::raw_to_json(tree, 0);
}

}  // namespace patcherizer
