#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "navgen/autograd.hpp"
#include "navgen/rng.hpp"
#include "navgen/tensor.hpp"

namespace navgen::nn {

using ag::Var;

// Named parameter registry. Construction order is the canonical enumeration
// order for the optimizer and the checkpoint, so it must be deterministic.
class ParamStore {
public:
    Var create(const std::string& name, Tensor init) {
        if (index_.count(name) != 0) {
            throw std::invalid_argument("ParamStore: duplicate parameter " + name);
        }
        Var v = Var::param(std::move(init));
        index_[name] = params_.size();
        params_.emplace_back(name, v);
        return v;
    }

    Var get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) {
            throw std::out_of_range("ParamStore: unknown parameter " + name);
        }
        return params_[it->second].second;
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    const std::vector<std::pair<std::string, Var>>& entries() const { return params_; }

    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& [name, v] : params_) {
            n += v.value().size();
        }
        return n;
    }

    void zero_grad() {
        for (auto& [name, v] : params_) {
            v.zero_grad();
        }
    }

    // Enable/disable gradient flow per parameter; frozen parameters keep a
    // zero gradient through backward.
    void set_trainable(const std::string& name, bool trainable) {
        get(name).node()->requires_grad = trainable;
    }

    void set_trainable_by_prefix(const std::string& prefix, bool trainable) {
        for (auto& [name, v] : params_) {
            if (name.rfind(prefix, 0) == 0) {
                v.node()->requires_grad = trainable;
            }
        }
    }

private:
    std::vector<std::pair<std::string, Var>> params_;
    std::map<std::string, std::size_t> index_;
};

struct Linear {
    Var weight;  // in x out
    Var bias;    // 1 x out

    static Linear create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                         Rng& rng, double init_std) {
        Linear l;
        l.weight = store.create(name + ".w", Tensor::randn(in, out, rng, init_std));
        l.bias = store.create(name + ".b", Tensor(1, out));
        return l;
    }

    Var operator()(const Var& x) const { return ag::add_rowvec(ag::matmul(x, weight), bias); }
};

struct LayerNorm {
    Var gamma;
    Var beta;
    double eps = 1e-5;

    static LayerNorm create(ParamStore& store, const std::string& name, std::size_t dim) {
        LayerNorm ln;
        ln.gamma = store.create(name + ".g", Tensor(1, dim, 1.0));
        ln.beta = store.create(name + ".b", Tensor(1, dim));
        return ln;
    }

    Var operator()(const Var& x) const { return ag::layer_norm(x, gamma, beta, eps); }
};

// Additive attention mask builders. Large negative instead of -inf keeps the
// max-subtract in softmax NaN-free.
inline constexpr double kMaskedOut = -1e30;

inline Tensor causal_mask(std::size_t s) {
    Tensor m(s, s);
    for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t j = i + 1; j < s; ++j) {
            m(i, j) = kMaskedOut;
        }
    }
    return m;
}

struct Attention {
    Linear q, k, v, o;
    std::size_t n_heads = 1;

    static Attention create(ParamStore& store, const std::string& name, std::size_t q_dim,
                            std::size_t kv_dim, std::size_t model_dim, std::size_t n_heads, Rng& rng,
                            double init_std) {
        if (model_dim % n_heads != 0) {
            throw std::invalid_argument("Attention: model_dim must be divisible by n_heads");
        }
        Attention a;
        a.n_heads = n_heads;
        a.q = Linear::create(store, name + ".q", q_dim, model_dim, rng, init_std);
        a.k = Linear::create(store, name + ".k", kv_dim, model_dim, rng, init_std);
        a.v = Linear::create(store, name + ".v", kv_dim, model_dim, rng, init_std);
        a.o = Linear::create(store, name + ".o", model_dim, model_dim, rng, init_std);
        return a;
    }

    // queries (Sq x q_dim) attend over keys/values (Skv x kv_dim).
    Var operator()(const Var& queries, const Var& keys_values, const Tensor* mask = nullptr) const {
        const Var qp = q(queries);
        const Var kp = k(keys_values);
        const Var vp = v(keys_values);
        const std::size_t d_model = qp.cols();
        const std::size_t d_head = d_model / n_heads;
        const double scale = 1.0 / std::sqrt(static_cast<double>(d_head));
        std::vector<Var> heads;
        heads.reserve(n_heads);
        for (std::size_t h = 0; h < n_heads; ++h) {
            const Var qh = ag::slice_cols(qp, h * d_head, (h + 1) * d_head);
            const Var kh = ag::slice_cols(kp, h * d_head, (h + 1) * d_head);
            const Var vh = ag::slice_cols(vp, h * d_head, (h + 1) * d_head);
            const Var scores = ag::scale(ag::matmul_nt(qh, kh), scale);
            const Var probs = ag::softmax_rows(scores, mask);
            heads.push_back(ag::matmul(probs, vh));
        }
        return o(n_heads == 1 ? heads[0] : ag::concat_cols(heads));
    }
};

struct Mlp {
    Linear fc1, fc2;

    static Mlp create(ParamStore& store, const std::string& name, std::size_t dim, std::size_t hidden,
                      Rng& rng, double init_std) {
        Mlp m;
        m.fc1 = Linear::create(store, name + ".fc1", dim, hidden, rng, init_std);
        m.fc2 = Linear::create(store, name + ".fc2", hidden, dim, rng, init_std);
        return m;
    }

    Var operator()(const Var& x) const { return fc2(ag::gelu(fc1(x))); }
};

// Pre-norm residual transformer block (self-attention only).
struct EncoderBlock {
    LayerNorm ln1, ln2;
    Attention attn;
    Mlp mlp;

    static EncoderBlock create(ParamStore& store, const std::string& name, std::size_t dim,
                               std::size_t n_heads, std::size_t mlp_hidden, Rng& rng, double init_std) {
        EncoderBlock b;
        b.ln1 = LayerNorm::create(store, name + ".ln1", dim);
        b.ln2 = LayerNorm::create(store, name + ".ln2", dim);
        b.attn = Attention::create(store, name + ".attn", dim, dim, dim, n_heads, rng, init_std);
        b.mlp = Mlp::create(store, name + ".mlp", dim, mlp_hidden, rng, init_std);
        return b;
    }

    Var operator()(const Var& x, const Tensor* mask = nullptr) const {
        const Var normed = ln1(x);
        const Var h = ag::add(x, attn(normed, normed, mask));
        return ag::add(h, mlp(ln2(h)));
    }
};

}  // namespace navgen::nn
