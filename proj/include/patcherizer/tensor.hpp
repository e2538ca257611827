#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "patcherizer/common.hpp"

namespace patcherizer {

// Dense f32 tensors, rank 1 or 2, row-major. A Tensor is a cheap handle on a
// shared node; ops record backward closures on the result node whenever an
// input wants gradients, and backward() replays them in reverse topological
// order. Broadcasting is limited to scalar-vs-tensor and row-vector-vs-matrix.
struct TensorNode {
    std::vector<int> shape;
    std::vector<float> value;
    std::vector<float> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void()> backward;

    std::size_t numel() const { return value.size(); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0f);
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

    static Tensor zeros(const std::vector<int>& shape, bool requires_grad = false) {
        auto n = std::make_shared<TensorNode>();
        n->shape = shape;
        n->value.assign(count(shape), 0.0f);
        n->requires_grad = requires_grad;
        return Tensor(n);
    }

    static Tensor from_data(const std::vector<int>& shape, std::vector<float> data,
                            bool requires_grad = false) {
        if (data.size() != count(shape)) {
            throw ShapeMismatch("data length " + std::to_string(data.size()) +
                                " does not fill shape " + shape_str(shape));
        }
        auto n = std::make_shared<TensorNode>();
        n->shape = shape;
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        return Tensor(n);
    }

    static Tensor scalar(float v, bool requires_grad = false) {
        return from_data({1}, {v}, requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    const std::vector<float>& value() const { return node_->value; }
    std::vector<float>& mutable_value() { return node_->value; }
    const std::vector<float>& grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    std::shared_ptr<TensorNode> node() const { return node_; }

    int rows() const { return node_->shape[0]; }
    int cols() const { return node_->shape.size() > 1 ? node_->shape[1] : 1; }
    std::size_t numel() const { return node_->numel(); }

    float item() const {
        if (numel() != 1) {
            throw ShapeMismatch("item() needs a single element, shape is " +
                                shape_str(node_->shape));
        }
        return node_->value[0];
    }

    float at(int r, int c) const { return node_->value[static_cast<std::size_t>(r) * cols() + c]; }

    static std::size_t count(const std::vector<int>& shape) {
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        return n;
    }

    static std::string shape_str(const std::vector<int>& shape) {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }

private:
    std::shared_ptr<TensorNode> node_;
};

namespace tensor_detail {

inline Tensor make_result(std::vector<int> shape, std::vector<float> value,
                          std::vector<std::shared_ptr<TensorNode>> parents) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    for (auto& p : parents) {
        if (p->requires_grad) n->requires_grad = true;
    }
    n->parents = std::move(parents);
    return Tensor(n);
}

inline void record(const Tensor& result, std::function<void()> fn) {
    if (result.node()->requires_grad) result.node()->backward = std::move(fn);
}

[[noreturn]] inline void shape_fail(const std::string& op, const Tensor& a, const Tensor& b) {
    throw ShapeMismatch(op + ": " + Tensor::shape_str(a.shape()) + " vs " +
                        Tensor::shape_str(b.shape()));
}

}  // namespace tensor_detail

inline void backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw NonScalarLoss("backward needs a scalar, got " + Tensor::shape_str(loss.shape()));
    }
    std::vector<std::shared_ptr<TensorNode>> order;
    std::set<TensorNode*> seen;
    std::function<void(const std::shared_ptr<TensorNode>&)> visit =
        [&](const std::shared_ptr<TensorNode>& n) {
            if (!n->requires_grad || seen.count(n.get())) return;
            seen.insert(n.get());
            for (const auto& p : n->parents) visit(p);
            order.push_back(n);
        };
    visit(loss.node());
    loss.node()->ensure_grad();
    loss.node()->grad[0] += 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward) (*it)->backward();
    }
}

// ---- arithmetic ----

inline Tensor add(const Tensor& a, const Tensor& b) {
    using namespace tensor_detail;
    TensorNode* an = a.node().get();
    TensorNode* bn = b.node().get();
    if (a.shape() == b.shape()) {
        std::vector<float> out(a.numel());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = an->value[i] + bn->value[i];
        Tensor r = make_result(a.shape(), std::move(out), {a.node(), b.node()});
        TensorNode* rn = r.node().get();
        record(r, [an, bn, rn] {
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < rn->grad.size(); ++i) an->grad[i] += rn->grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < rn->grad.size(); ++i) bn->grad[i] += rn->grad[i];
            }
        });
        return r;
    }
    if (b.numel() == 1) {
        std::vector<float> out(a.numel());
        float s = bn->value[0];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = an->value[i] + s;
        Tensor r = make_result(a.shape(), std::move(out), {a.node(), b.node()});
        TensorNode* rn = r.node().get();
        record(r, [an, bn, rn] {
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < rn->grad.size(); ++i) an->grad[i] += rn->grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (float g : rn->grad) bn->grad[0] += g;
            }
        });
        return r;
    }
    if (a.shape().size() == 2 && b.shape().size() == 1 && b.shape()[0] == a.shape()[1]) {
        int R = a.rows(), C = a.cols();
        std::vector<float> out(a.numel());
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c)
                out[static_cast<std::size_t>(r) * C + c] =
                    an->value[static_cast<std::size_t>(r) * C + c] + bn->value[c];
        Tensor res = make_result(a.shape(), std::move(out), {a.node(), b.node()});
        TensorNode* rn = res.node().get();
        record(res, [an, bn, rn, R, C] {
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < rn->grad.size(); ++i) an->grad[i] += rn->grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int r = 0; r < R; ++r)
                    for (int c = 0; c < C; ++c)
                        bn->grad[c] += rn->grad[static_cast<std::size_t>(r) * C + c];
            }
        });
        return res;
    }
    shape_fail("add", a, b);
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    using namespace tensor_detail;
    TensorNode* an = a.node().get();
    TensorNode* bn = b.node().get();
    if (a.shape() == b.shape()) {
        std::vector<float> out(a.numel());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = an->value[i] * bn->value[i];
        Tensor r = make_result(a.shape(), std::move(out), {a.node(), b.node()});
        TensorNode* rn = r.node().get();
        record(r, [an, bn, rn] {
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < rn->grad.size(); ++i)
                    an->grad[i] += rn->grad[i] * bn->value[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < rn->grad.size(); ++i)
                    bn->grad[i] += rn->grad[i] * an->value[i];
            }
        });
        return r;
    }
    if (b.numel() == 1) {
        std::vector<float> out(a.numel());
        float s = bn->value[0];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = an->value[i] * s;
        Tensor r = make_result(a.shape(), std::move(out), {a.node(), b.node()});
        TensorNode* rn = r.node().get();
        record(r, [an, bn, rn] {
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < rn->grad.size(); ++i)
                    an->grad[i] += rn->grad[i] * bn->value[0];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < rn->grad.size(); ++i)
                    bn->grad[0] += rn->grad[i] * an->value[i];
            }
        });
        return r;
    }
    if (a.shape().size() == 2 && b.shape().size() == 1 && b.shape()[0] == a.shape()[1]) {
        int R = a.rows(), C = a.cols();
        std::vector<float> out(a.numel());
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c)
                out[static_cast<std::size_t>(r) * C + c] =
                    an->value[static_cast<std::size_t>(r) * C + c] * bn->value[c];
        Tensor res = make_result(a.shape(), std::move(out), {a.node(), b.node()});
        TensorNode* rn = res.node().get();
        record(res, [an, bn, rn, R, C] {
            for (int r = 0; r < R; ++r)
                for (int c = 0; c < C; ++c) {
                    std::size_t i = static_cast<std::size_t>(r) * C + c;
                    if (an->requires_grad) {
                        an->ensure_grad();
                        an->grad[i] += rn->grad[i] * bn->value[c];
                    }
                    if (bn->requires_grad) {
                        bn->ensure_grad();
                        bn->grad[c] += rn->grad[i] * an->value[i];
                    }
                }
        });
        return res;
    }
    shape_fail("mul", a, b);
}

inline Tensor scale(const Tensor& a, float s) {
    using namespace tensor_detail;
    TensorNode* an = a.node().get();
    std::vector<float> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = an->value[i] * s;
    Tensor r = make_result(a.shape(), std::move(out), {a.node()});
    TensorNode* rn = r.node().get();
    record(r, [an, rn, s] {
        an->ensure_grad();
        for (std::size_t i = 0; i < rn->grad.size(); ++i) an->grad[i] += rn->grad[i] * s;
    });
    return r;
}

inline Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0f)); }

// Multiplies row r of a [RxC] matrix by s[r]; the usual way padding masks are
// applied to per-position embeddings.
inline Tensor scale_rows(const Tensor& a, const Tensor& s) {
    using namespace tensor_detail;
    if (a.shape().size() != 2 || s.shape().size() != 1 || s.shape()[0] != a.shape()[0]) {
        shape_fail("scale_rows", a, s);
    }
    TensorNode* an = a.node().get();
    TensorNode* sn = s.node().get();
    int R = a.rows(), C = a.cols();
    std::vector<float> out(a.numel());
    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c)
            out[static_cast<std::size_t>(r) * C + c] =
                an->value[static_cast<std::size_t>(r) * C + c] * sn->value[r];
    Tensor res = make_result(a.shape(), std::move(out), {a.node(), s.node()});
    TensorNode* rn = res.node().get();
    record(res, [an, sn, rn, R, C] {
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c) {
                std::size_t i = static_cast<std::size_t>(r) * C + c;
                if (an->requires_grad) {
                    an->ensure_grad();
                    an->grad[i] += rn->grad[i] * sn->value[r];
                }
                if (sn->requires_grad) {
                    sn->ensure_grad();
                    sn->grad[r] += rn->grad[i] * an->value[i];
                }
            }
    });
    return res;
}

inline Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false,
                     bool trans_b = false) {
    using namespace tensor_detail;
    if (a.shape().size() != 2 || b.shape().size() != 2) shape_fail("matmul", a, b);
    int M = trans_a ? a.shape()[1] : a.shape()[0];
    int K = trans_a ? a.shape()[0] : a.shape()[1];
    int Kb = trans_b ? b.shape()[1] : b.shape()[0];
    int N = trans_b ? b.shape()[0] : b.shape()[1];
    if (K != Kb) shape_fail("matmul", a, b);

    TensorNode* an = a.node().get();
    TensorNode* bn = b.node().get();
    int a_cols = a.shape()[1];
    int b_cols = b.shape()[1];
    auto a_at = [an, a_cols, trans_a](int i, int k) -> float {
        return trans_a ? an->value[static_cast<std::size_t>(k) * a_cols + i]
                       : an->value[static_cast<std::size_t>(i) * a_cols + k];
    };
    auto b_at = [bn, b_cols, trans_b](int k, int j) -> float {
        return trans_b ? bn->value[static_cast<std::size_t>(j) * b_cols + k]
                       : bn->value[static_cast<std::size_t>(k) * b_cols + j];
    };

    std::vector<float> out(static_cast<std::size_t>(M) * N, 0.0f);
    for (int i = 0; i < M; ++i)
        for (int k = 0; k < K; ++k) {
            float av = a_at(i, k);
            if (av == 0.0f) continue;
            for (int j = 0; j < N; ++j) out[static_cast<std::size_t>(i) * N + j] += av * b_at(k, j);
        }

    Tensor res = make_result({M, N}, std::move(out), {a.node(), b.node()});
    TensorNode* rn = res.node().get();
    record(res, [an, bn, rn, M, N, K, a_cols, b_cols, trans_a, trans_b, a_at, b_at] {
        if (an->requires_grad) {
            an->ensure_grad();
            for (int i = 0; i < M; ++i)
                for (int k = 0; k < K; ++k) {
                    float g = 0.0f;
                    for (int j = 0; j < N; ++j)
                        g += rn->grad[static_cast<std::size_t>(i) * N + j] * b_at(k, j);
                    std::size_t idx = trans_a ? static_cast<std::size_t>(k) * a_cols + i
                                              : static_cast<std::size_t>(i) * a_cols + k;
                    an->grad[idx] += g;
                }
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int k = 0; k < K; ++k)
                for (int j = 0; j < N; ++j) {
                    float g = 0.0f;
                    for (int i = 0; i < M; ++i)
                        g += rn->grad[static_cast<std::size_t>(i) * N + j] * a_at(i, k);
                    std::size_t idx = trans_b ? static_cast<std::size_t>(j) * b_cols + k
                                              : static_cast<std::size_t>(k) * b_cols + j;
                    bn->grad[idx] += g;
                }
        }
    });
    return res;
}

// ---- nonlinearities ----

inline Tensor relu(const Tensor& a) {
    using namespace tensor_detail;
    TensorNode* an = a.node().get();
    std::vector<float> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = an->value[i] > 0.0f ? an->value[i] : 0.0f;
    Tensor r = make_result(a.shape(), std::move(out), {a.node()});
    TensorNode* rn = r.node().get();
    record(r, [an, rn] {
        an->ensure_grad();
        for (std::size_t i = 0; i < rn->grad.size(); ++i)
            if (an->value[i] > 0.0f) an->grad[i] += rn->grad[i];
    });
    return r;
}

inline Tensor sigmoid(const Tensor& a) {
    using namespace tensor_detail;
    TensorNode* an = a.node().get();
    std::vector<float> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = 1.0f / (1.0f + std::exp(-an->value[i]));
    Tensor r = make_result(a.shape(), std::move(out), {a.node()});
    TensorNode* rn = r.node().get();
    record(r, [an, rn] {
        an->ensure_grad();
        for (std::size_t i = 0; i < rn->grad.size(); ++i)
            an->grad[i] += rn->grad[i] * rn->value[i] * (1.0f - rn->value[i]);
    });
    return r;
}

// Row softmax. An optional 0/1 mask (shape [C] or [RxC]) excludes positions;
// a fully masked row comes out all zero rather than NaN.
inline Tensor softmax_rows(const Tensor& a, const Tensor& mask = Tensor()) {
    using namespace tensor_detail;
    if (a.shape().size() != 2) {
        throw ShapeMismatch("softmax_rows needs a matrix, got " + Tensor::shape_str(a.shape()));
    }
    int R = a.rows(), C = a.cols();
    bool has_mask = mask.defined();
    bool row_mask = false;
    if (has_mask) {
        if (mask.shape().size() == 1 && mask.shape()[0] == C) {
            row_mask = false;
        } else if (mask.shape().size() == 2 && mask.shape() == a.shape()) {
            row_mask = true;
        } else {
            shape_fail("softmax_rows mask", a, mask);
        }
    }
    TensorNode* an = a.node().get();
    const TensorNode* mn = has_mask ? mask.node().get() : nullptr;
    auto keep = [mn, has_mask, row_mask, C](int r, int c) -> bool {
        if (!has_mask) return true;
        float m = row_mask ? mn->value[static_cast<std::size_t>(r) * C + c] : mn->value[c];
        return m != 0.0f;
    };

    std::vector<float> out(a.numel(), 0.0f);
    for (int r = 0; r < R; ++r) {
        float mx = -std::numeric_limits<float>::infinity();
        for (int c = 0; c < C; ++c)
            if (keep(r, c)) mx = std::max(mx, an->value[static_cast<std::size_t>(r) * C + c]);
        if (mx == -std::numeric_limits<float>::infinity()) continue;
        float denom = 0.0f;
        for (int c = 0; c < C; ++c) {
            if (!keep(r, c)) continue;
            float e = std::exp(an->value[static_cast<std::size_t>(r) * C + c] - mx);
            out[static_cast<std::size_t>(r) * C + c] = e;
            denom += e;
        }
        for (int c = 0; c < C; ++c) out[static_cast<std::size_t>(r) * C + c] /= denom;
    }

    std::vector<std::shared_ptr<TensorNode>> parents = {a.node()};
    if (has_mask) parents.push_back(mask.node());
    Tensor res = make_result(a.shape(), std::move(out), std::move(parents));
    TensorNode* rn = res.node().get();
    record(res, [an, rn, R, C] {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int r = 0; r < R; ++r) {
            float dot = 0.0f;
            for (int c = 0; c < C; ++c) {
                std::size_t i = static_cast<std::size_t>(r) * C + c;
                dot += rn->grad[i] * rn->value[i];
            }
            for (int c = 0; c < C; ++c) {
                std::size_t i = static_cast<std::size_t>(r) * C + c;
                an->grad[i] += rn->value[i] * (rn->grad[i] - dot);
            }
        }
    });
    return res;
}

// Row-wise standardization without affine parameters; mean 0, variance 1.
inline Tensor layer_norm_rows(const Tensor& a, float eps = 1e-5f) {
    using namespace tensor_detail;
    if (a.shape().size() != 2) {
        throw ShapeMismatch("layer_norm_rows needs a matrix, got " +
                            Tensor::shape_str(a.shape()));
    }
    int R = a.rows(), C = a.cols();
    TensorNode* an = a.node().get();
    std::vector<float> out(a.numel());
    std::vector<float> inv_sd(R);
    for (int r = 0; r < R; ++r) {
        const float* x = &an->value[static_cast<std::size_t>(r) * C];
        float mean = 0.0f;
        for (int c = 0; c < C; ++c) mean += x[c];
        mean /= C;
        float var = 0.0f;
        for (int c = 0; c < C; ++c) var += (x[c] - mean) * (x[c] - mean);
        var /= C;
        inv_sd[r] = 1.0f / std::sqrt(var + eps);
        for (int c = 0; c < C; ++c)
            out[static_cast<std::size_t>(r) * C + c] = (x[c] - mean) * inv_sd[r];
    }
    Tensor res = make_result(a.shape(), std::move(out), {a.node()});
    TensorNode* rn = res.node().get();
    record(res, [an, rn, R, C, inv_sd] {
        an->ensure_grad();
        for (int r = 0; r < R; ++r) {
            const float* y = &rn->value[static_cast<std::size_t>(r) * C];
            const float* g = &rn->grad[static_cast<std::size_t>(r) * C];
            float g_mean = 0.0f, gy_mean = 0.0f;
            for (int c = 0; c < C; ++c) {
                g_mean += g[c];
                gy_mean += g[c] * y[c];
            }
            g_mean /= C;
            gy_mean /= C;
            for (int c = 0; c < C; ++c)
                an->grad[static_cast<std::size_t>(r) * C + c] +=
                    inv_sd[r] * (g[c] - g_mean - y[c] * gy_mean);
        }
    });
    return res;
}

// ---- gathering and shaping ----

inline Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
    using namespace tensor_detail;
    if (table.shape().size() != 2) {
        throw ShapeMismatch("embedding_lookup needs a [VxC] table, got " +
                            Tensor::shape_str(table.shape()));
    }
    int V = table.rows(), C = table.cols();
    for (int id : ids) {
        if (id < 0 || id >= V) throw UnknownId("embedding id " + std::to_string(id));
    }
    TensorNode* tn = table.node().get();
    int N = static_cast<int>(ids.size());
    std::vector<float> out(static_cast<std::size_t>(N) * C);
    for (int i = 0; i < N; ++i)
        std::copy_n(&tn->value[static_cast<std::size_t>(ids[i]) * C], C,
                    &out[static_cast<std::size_t>(i) * C]);
    Tensor res = make_result({N, C}, std::move(out), {table.node()});
    TensorNode* rn = res.node().get();
    record(res, [tn, rn, ids, C] {
        tn->ensure_grad();
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (int c = 0; c < C; ++c)
                tn->grad[static_cast<std::size_t>(ids[i]) * C + c] += rn->grad[i * C + c];
    });
    return res;
}

// Row i is the mean of the table rows listed in groups[i]; empty groups give
// zero rows.
inline Tensor embedding_bag(const Tensor& table, const std::vector<std::vector<int>>& groups) {
    using namespace tensor_detail;
    if (table.shape().size() != 2) {
        throw ShapeMismatch("embedding_bag needs a [VxC] table, got " +
                            Tensor::shape_str(table.shape()));
    }
    int V = table.rows(), C = table.cols();
    for (const auto& g : groups)
        for (int id : g)
            if (id < 0 || id >= V) throw UnknownId("embedding id " + std::to_string(id));
    TensorNode* tn = table.node().get();
    int N = static_cast<int>(groups.size());
    std::vector<float> out(static_cast<std::size_t>(N) * C, 0.0f);
    for (int i = 0; i < N; ++i) {
        if (groups[i].empty()) continue;
        float inv = 1.0f / static_cast<float>(groups[i].size());
        for (int id : groups[i])
            for (int c = 0; c < C; ++c)
                out[static_cast<std::size_t>(i) * C + c] +=
                    tn->value[static_cast<std::size_t>(id) * C + c] * inv;
    }
    Tensor res = make_result({N, C}, std::move(out), {table.node()});
    TensorNode* rn = res.node().get();
    record(res, [tn, rn, groups, C] {
        tn->ensure_grad();
        for (std::size_t i = 0; i < groups.size(); ++i) {
            if (groups[i].empty()) continue;
            float inv = 1.0f / static_cast<float>(groups[i].size());
            for (int id : groups[i])
                for (int c = 0; c < C; ++c)
                    tn->grad[static_cast<std::size_t>(id) * C + c] += rn->grad[i * C + c] * inv;
        }
    });
    return res;
}

inline Tensor col_slice(const Tensor& a, int c0, int c1) {
    using namespace tensor_detail;
    if (a.shape().size() != 2 || c0 < 0 || c1 > a.cols() || c0 >= c1) {
        throw ShapeMismatch("col_slice [" + std::to_string(c0) + "," + std::to_string(c1) +
                            ") of " + Tensor::shape_str(a.shape()));
    }
    int R = a.rows(), C = a.cols(), W = c1 - c0;
    TensorNode* an = a.node().get();
    std::vector<float> out(static_cast<std::size_t>(R) * W);
    for (int r = 0; r < R; ++r)
        std::copy_n(&an->value[static_cast<std::size_t>(r) * C + c0], W,
                    &out[static_cast<std::size_t>(r) * W]);
    Tensor res = make_result({R, W}, std::move(out), {a.node()});
    TensorNode* rn = res.node().get();
    record(res, [an, rn, R, C, W, c0] {
        an->ensure_grad();
        for (int r = 0; r < R; ++r)
            for (int w = 0; w < W; ++w)
                an->grad[static_cast<std::size_t>(r) * C + c0 + w] +=
                    rn->grad[static_cast<std::size_t>(r) * W + w];
    });
    return res;
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    using namespace tensor_detail;
    if (parts.empty()) throw EmptyInput("concat_cols of nothing");
    int R = parts[0].rows();
    int C = 0;
    for (const Tensor& p : parts) {
        if (p.shape().size() != 2 || p.rows() != R) shape_fail("concat_cols", parts[0], p);
        C += p.cols();
    }
    std::vector<float> out(static_cast<std::size_t>(R) * C);
    std::vector<std::shared_ptr<TensorNode>> parents;
    int off = 0;
    for (const Tensor& p : parts) {
        int W = p.cols();
        for (int r = 0; r < R; ++r)
            std::copy_n(&p.node()->value[static_cast<std::size_t>(r) * W], W,
                        &out[static_cast<std::size_t>(r) * C + off]);
        off += W;
        parents.push_back(p.node());
    }
    Tensor res = make_result({R, C}, std::move(out), std::move(parents));
    TensorNode* rn = res.node().get();
    std::vector<TensorNode*> raw;
    std::vector<int> widths;
    for (const Tensor& p : parts) {
        raw.push_back(p.node().get());
        widths.push_back(p.cols());
    }
    record(res, [rn, raw, widths, R, C] {
        int off2 = 0;
        for (std::size_t k = 0; k < raw.size(); ++k) {
            int W = widths[k];
            if (raw[k]->requires_grad) {
                raw[k]->ensure_grad();
                for (int r = 0; r < R; ++r)
                    for (int w = 0; w < W; ++w)
                        raw[k]->grad[static_cast<std::size_t>(r) * W + w] +=
                            rn->grad[static_cast<std::size_t>(r) * C + off2 + w];
            }
            off2 += W;
        }
    });
    return res;
}

// Masked mean over rows: sum of rows with mask 1 divided by their count.
// All-masked input pools to the zero vector.
inline Tensor mean_pool_masked(const Tensor& a, const Tensor& mask) {
    using namespace tensor_detail;
    if (a.shape().size() != 2 || mask.shape().size() != 1 || mask.shape()[0] != a.shape()[0]) {
        shape_fail("mean_pool_masked", a, mask);
    }
    int R = a.rows(), C = a.cols();
    TensorNode* an = a.node().get();
    TensorNode* mn = mask.node().get();
    float count = 0.0f;
    for (int r = 0; r < R; ++r)
        if (mn->value[r] != 0.0f) count += 1.0f;
    float inv = count > 0.0f ? 1.0f / count : 0.0f;
    std::vector<float> out(C, 0.0f);
    for (int r = 0; r < R; ++r) {
        if (mn->value[r] == 0.0f) continue;
        for (int c = 0; c < C; ++c) out[c] += an->value[static_cast<std::size_t>(r) * C + c] * inv;
    }
    Tensor res = make_result({1, C}, std::move(out), {a.node(), mask.node()});
    TensorNode* rn = res.node().get();
    record(res, [an, mn, rn, R, C, inv] {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (int r = 0; r < R; ++r) {
            if (mn->value[r] == 0.0f) continue;
            for (int c = 0; c < C; ++c)
                an->grad[static_cast<std::size_t>(r) * C + c] += rn->grad[c] * inv;
        }
    });
    return res;
}

inline Tensor reshape(const Tensor& a, const std::vector<int>& shape) {
    using namespace tensor_detail;
    if (Tensor::count(shape) != a.numel()) {
        throw ShapeMismatch("reshape " + Tensor::shape_str(a.shape()) + " to " +
                            Tensor::shape_str(shape));
    }
    TensorNode* an = a.node().get();
    Tensor r = make_result(shape, an->value, {a.node()});
    TensorNode* rn = r.node().get();
    record(r, [an, rn] {
        an->ensure_grad();
        for (std::size_t i = 0; i < rn->grad.size(); ++i) an->grad[i] += rn->grad[i];
    });
    return r;
}

inline Tensor sum(const Tensor& a) {
    using namespace tensor_detail;
    TensorNode* an = a.node().get();
    float s = 0.0f;
    for (float v : an->value) s += v;
    Tensor r = make_result({1}, {s}, {a.node()});
    TensorNode* rn = r.node().get();
    record(r, [an, rn] {
        an->ensure_grad();
        for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += rn->grad[0];
    });
    return r;
}

// Inverted dropout: scales kept entries by 1/(1-rate) during training and is
// the identity otherwise.
inline Tensor dropout(const Tensor& a, float rate, bool train, Rng& rng) {
    using namespace tensor_detail;
    if (!train || rate <= 0.0f) return a;
    TensorNode* an = a.node().get();
    float keep = 1.0f - rate;
    std::vector<float> gate(a.numel());
    for (std::size_t i = 0; i < gate.size(); ++i)
        gate[i] = rng.uniform() < rate ? 0.0f : 1.0f / keep;
    std::vector<float> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = an->value[i] * gate[i];
    Tensor r = make_result(a.shape(), std::move(out), {a.node()});
    TensorNode* rn = r.node().get();
    record(r, [an, rn, gate] {
        an->ensure_grad();
        for (std::size_t i = 0; i < rn->grad.size(); ++i) an->grad[i] += rn->grad[i] * gate[i];
    });
    return r;
}

// Mean cross entropy of row-wise softmax against integer targets; rows whose
// target equals ignore_id contribute nothing.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                            int ignore_id = -1) {
    using namespace tensor_detail;
    if (logits.shape().size() != 2 ||
        static_cast<int>(targets.size()) != logits.rows()) {
        throw ShapeMismatch("cross_entropy logits " + Tensor::shape_str(logits.shape()) +
                            " vs " + std::to_string(targets.size()) + " targets");
    }
    int R = logits.rows(), C = logits.cols();
    for (int t : targets) {
        if (t != ignore_id && (t < 0 || t >= C)) {
            throw UnknownId("target id " + std::to_string(t));
        }
    }
    TensorNode* ln = logits.node().get();
    std::vector<float> prob(logits.numel());
    float total = 0.0f;
    int counted = 0;
    for (int r = 0; r < R; ++r) {
        const float* x = &ln->value[static_cast<std::size_t>(r) * C];
        float mx = *std::max_element(x, x + C);
        float denom = 0.0f;
        for (int c = 0; c < C; ++c) denom += std::exp(x[c] - mx);
        for (int c = 0; c < C; ++c)
            prob[static_cast<std::size_t>(r) * C + c] = std::exp(x[c] - mx) / denom;
        if (targets[r] == ignore_id) continue;
        total += std::log(denom) + mx - x[targets[r]];
        ++counted;
    }
    float inv = counted > 0 ? 1.0f / counted : 0.0f;
    Tensor res = make_result({1}, {total * inv}, {logits.node()});
    TensorNode* rn = res.node().get();
    record(res, [ln, rn, prob, targets, ignore_id, R, C, inv] {
        ln->ensure_grad();
        for (int r = 0; r < R; ++r) {
            if (targets[r] == ignore_id) continue;
            for (int c = 0; c < C; ++c) {
                std::size_t i = static_cast<std::size_t>(r) * C + c;
                float delta = (c == targets[r]) ? 1.0f : 0.0f;
                ln->grad[i] += rn->grad[0] * (prob[i] - delta) * inv;
            }
        }
    });
    return res;
}

// Binary cross entropy of one probability against a 0/1 label, with the
// probability clipped to [1e-7, 1-1e-7] so the logs stay finite.
inline Tensor binary_cross_entropy(const Tensor& pred, float target) {
    using namespace tensor_detail;
    if (pred.numel() != 1) {
        throw ShapeMismatch("binary_cross_entropy needs a scalar prediction, got " +
                            Tensor::shape_str(pred.shape()));
    }
    constexpr float kClip = 1e-7f;
    TensorNode* pn = pred.node().get();
    float p = std::clamp(pn->value[0], kClip, 1.0f - kClip);
    float loss = -(target * std::log(p) + (1.0f - target) * std::log(1.0f - p));
    Tensor r = make_result({1}, {loss}, {pred.node()});
    TensorNode* rn = r.node().get();
    bool clipped = pn->value[0] < kClip || pn->value[0] > 1.0f - kClip;
    record(r, [pn, rn, p, target, clipped] {
        if (clipped) return;
        pn->ensure_grad();
        pn->grad[0] += rn->grad[0] * (-(target / p) + (1.0f - target) / (1.0f - p));
    });
    return r;
}

// ---- parameters, init, optimization ----

using ParamMap = std::map<std::string, Tensor>;

inline Tensor xavier_init(const std::vector<int>& shape, Rng& rng) {
    int fan_in = shape.size() == 2 ? shape[0] : shape[0];
    int fan_out = shape.size() == 2 ? shape[1] : shape[0];
    float bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::vector<float> data(Tensor::count(shape));
    for (float& v : data) v = static_cast<float>(rng.uniform(-bound, bound));
    return Tensor::from_data(shape, std::move(data), true);
}

inline void zero_grads(ParamMap& params) {
    for (auto& [name, t] : params) {
        (void)name;
        t.node()->grad.assign(t.numel(), 0.0f);
    }
}

struct AdamState {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    long step = 0;
    std::map<std::string, std::vector<float>> m;
    std::map<std::string, std::vector<float>> v;
};

inline void adam_step(AdamState& st, ParamMap& params) {
    ++st.step;
    float bc1 = 1.0f - std::pow(st.beta1, static_cast<float>(st.step));
    float bc2 = 1.0f - std::pow(st.beta2, static_cast<float>(st.step));
    for (auto& [name, t] : params) {
        TensorNode* n = t.node().get();
        n->ensure_grad();
        auto& m = st.m[name];
        auto& v = st.v[name];
        if (m.size() != n->value.size()) m.assign(n->value.size(), 0.0f);
        if (v.size() != n->value.size()) v.assign(n->value.size(), 0.0f);
        for (std::size_t i = 0; i < n->value.size(); ++i) {
            float g = n->grad[i];
            m[i] = st.beta1 * m[i] + (1.0f - st.beta1) * g;
            v[i] = st.beta2 * v[i] + (1.0f - st.beta2) * g * g;
            float mhat = m[i] / bc1;
            float vhat = v[i] / bc2;
            n->value[i] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
        }
    }
}

}  // namespace patcherizer
