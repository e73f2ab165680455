#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "navgen/nn.hpp"
#include "navgen/tensor.hpp"

namespace navgen {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// AdamW with decoupled weight decay. Slot order mirrors the ParamStore
// enumeration so optimizer state round-trips through the checkpoint.
class AdamW {
public:
    AdamW(nn::ParamStore& store, AdamWConfig cfg) : store_(&store), cfg_(cfg) {
        for (const auto& [name, v] : store.entries()) {
            m_.emplace_back(v.value().rows(), v.value().cols());
            v_.emplace_back(v.value().rows(), v.value().cols());
        }
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        std::size_t slot = 0;
        for (const auto& [name, entry] : store_->entries()) {
            Tensor& m = m_[slot];
            Tensor& v = v_[slot];
            ++slot;
            nn::Var var = entry;  // cheap handle copy
            if (!var.node()->requires_grad) {
                continue;
            }
            Tensor& theta = var.value_mut();
            const Tensor& g = var.grad();
            if (g.size() != theta.size()) {
                continue;  // no gradient reached this parameter
            }
            for (std::size_t i = 0; i < theta.size(); ++i) {
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                theta[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * theta[i]);
            }
        }
    }

    std::uint64_t step_count() const { return t_; }
    const std::vector<Tensor>& m_state() const { return m_; }
    const std::vector<Tensor>& v_state() const { return v_; }

    void restore(std::vector<Tensor> m, std::vector<Tensor> v, std::uint64_t t) {
        if (m.size() != m_.size() || v.size() != v_.size()) {
            throw DataError("AdamW::restore: slot count mismatch");
        }
        m_ = std::move(m);
        v_ = std::move(v);
        t_ = t;
    }

private:
    nn::ParamStore* store_;
    AdamWConfig cfg_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    std::uint64_t t_ = 0;
};

}  // namespace navgen
