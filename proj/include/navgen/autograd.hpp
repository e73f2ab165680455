#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include "navgen/tensor.hpp"

namespace navgen::ag {

// Reverse-mode tape over Tensor. Every op records a backward closure; all
// training math runs in float64 so analytic gradients can be checked against
// central finite differences.

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    void ensure_grad() {
        if (grad.size() != value.size()) {
            grad = Tensor(value.rows(), value.cols());
        }
    }
};

using NodePtr = std::shared_ptr<Node>;

inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

// RAII guard disabling tape recording (inference paths).
class NoGradGuard {
public:
    NoGradGuard() : prev_(grad_mode()) { grad_mode() = false; }
    ~NoGradGuard() { grad_mode() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

class Var {
public:
    Var() = default;
    explicit Var(NodePtr node) : node_(std::move(node)) {}

    static Var constant(Tensor t) {
        auto n = std::make_shared<Node>();
        n->value = std::move(t);
        return Var(n);
    }

    static Var param(Tensor t) {
        auto n = std::make_shared<Node>();
        n->value = std::move(t);
        n->requires_grad = true;
        return Var(n);
    }

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    Tensor& value_mut() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    Tensor& grad_mut() {
        node_->ensure_grad();
        return node_->grad;
    }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    std::size_t rows() const { return node_->value.rows(); }
    std::size_t cols() const { return node_->value.cols(); }
    NodePtr node() const { return node_; }

    void zero_grad() { node_->grad = Tensor(); }

private:
    NodePtr node_;
};

namespace detail {

inline bool any_requires(const std::vector<Var>& ins) {
    if (!grad_mode()) {
        return false;
    }
    for (const Var& v : ins) {
        if (v.requires_grad()) {
            return true;
        }
    }
    return false;
}

inline Var make(Tensor value, const std::vector<Var>& parents, std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (any_requires(parents)) {
        n->requires_grad = true;
        n->parents.reserve(parents.size());
        for (const Var& p : parents) {
            n->parents.push_back(p.node());
        }
        n->backprop = std::move(backprop);
    }
    return Var(n);
}

inline void accum(const NodePtr& p, const Tensor& g) {
    if (p->requires_grad) {
        p->ensure_grad();
        p->grad.add_(g);
    }
}

}  // namespace detail

inline Var add(const Var& a, const Var& b) {
    Tensor out = a.value();
    out.add_(b.value());
    return detail::make(std::move(out), {a, b}, [](Node& n) {
        detail::accum(n.parents[0], n.grad);
        detail::accum(n.parents[1], n.grad);
    });
}

// X (R x C) + broadcast row v (1 x C)
inline Var add_rowvec(const Var& x, const Var& v) {
    if (v.rows() != 1 || v.cols() != x.cols()) {
        throw std::invalid_argument("add_rowvec: v must be 1 x cols(x)");
    }
    Tensor out = x.value();
    for (std::size_t r = 0; r < out.rows(); ++r) {
        double* o = out.row_ptr(r);
        const double* b = v.value().row_ptr(0);
        for (std::size_t c = 0; c < out.cols(); ++c) {
            o[c] += b[c];
        }
    }
    return detail::make(std::move(out), {x, v}, [](Node& n) {
        detail::accum(n.parents[0], n.grad);
        if (n.parents[1]->requires_grad) {
            n.parents[1]->ensure_grad();
            double* gv = n.parents[1]->grad.row_ptr(0);
            for (std::size_t r = 0; r < n.grad.rows(); ++r) {
                const double* g = n.grad.row_ptr(r);
                for (std::size_t c = 0; c < n.grad.cols(); ++c) {
                    gv[c] += g[c];
                }
            }
        }
    });
}

inline Var scale(const Var& a, double s) {
    Tensor out = a.value();
    out.scale_(s);
    return detail::make(std::move(out), {a}, [s](Node& n) {
        if (n.parents[0]->requires_grad) {
            n.parents[0]->ensure_grad();
            n.parents[0]->grad.axpy_(s, n.grad);
        }
    });
}

inline Var matmul(const Var& a, const Var& b) {
    Tensor out = navgen::matmul(a.value(), b.value());
    return detail::make(std::move(out), {a, b}, [](Node& n) {
        const Tensor& a_val = n.parents[0]->value;
        const Tensor& b_val = n.parents[1]->value;
        if (n.parents[0]->requires_grad) {
            detail::accum(n.parents[0], navgen::matmul_nt(n.grad, b_val));
        }
        if (n.parents[1]->requires_grad) {
            detail::accum(n.parents[1], navgen::matmul_tn(a_val, n.grad));
        }
    });
}

// A * B^T
inline Var matmul_nt(const Var& a, const Var& b) {
    Tensor out = navgen::matmul_nt(a.value(), b.value());
    return detail::make(std::move(out), {a, b}, [](Node& n) {
        const Tensor& a_val = n.parents[0]->value;
        const Tensor& b_val = n.parents[1]->value;
        if (n.parents[0]->requires_grad) {
            detail::accum(n.parents[0], navgen::matmul(n.grad, b_val));
        }
        if (n.parents[1]->requires_grad) {
            detail::accum(n.parents[1], navgen::matmul_tn(n.grad, a_val));
        }
    });
}

// Row-wise layer normalization with affine parameters.
inline Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5) {
    const Tensor& xv = x.value();
    const std::size_t R = xv.rows();
    const std::size_t C = xv.cols();
    if (gamma.cols() != C || beta.cols() != C || gamma.rows() != 1 || beta.rows() != 1) {
        throw std::invalid_argument("layer_norm: affine parameters must be 1 x cols(x)");
    }
    Tensor out(R, C);
    Tensor xhat(R, C);
    std::vector<double> istd(R);
    for (std::size_t r = 0; r < R; ++r) {
        const double* xr = xv.row_ptr(r);
        double mean = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            mean += xr[c];
        }
        mean /= static_cast<double>(C);
        double var = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            const double d = xr[c] - mean;
            var += d * d;
        }
        var /= static_cast<double>(C);
        const double inv = 1.0 / std::sqrt(var + eps);
        istd[r] = inv;
        for (std::size_t c = 0; c < C; ++c) {
            const double h = (xr[c] - mean) * inv;
            xhat(r, c) = h;
            out(r, c) = gamma.value()(0, c) * h + beta.value()(0, c);
        }
    }
    return detail::make(std::move(out), {x, gamma, beta},
                        [xhat = std::move(xhat), istd = std::move(istd)](Node& n) {
        const std::size_t R = n.grad.rows();
        const std::size_t C = n.grad.cols();
        const Tensor& gam = n.parents[1]->value;
        if (n.parents[1]->requires_grad || n.parents[2]->requires_grad) {
            n.parents[1]->ensure_grad();
            n.parents[2]->ensure_grad();
            for (std::size_t r = 0; r < R; ++r) {
                const double* g = n.grad.row_ptr(r);
                for (std::size_t c = 0; c < C; ++c) {
                    if (n.parents[1]->requires_grad) {
                        n.parents[1]->grad(0, c) += g[c] * xhat(r, c);
                    }
                    if (n.parents[2]->requires_grad) {
                        n.parents[2]->grad(0, c) += g[c];
                    }
                }
            }
        }
        if (n.parents[0]->requires_grad) {
            n.parents[0]->ensure_grad();
            for (std::size_t r = 0; r < R; ++r) {
                const double* g = n.grad.row_ptr(r);
                double mean_h = 0.0;
                double mean_hx = 0.0;
                for (std::size_t c = 0; c < C; ++c) {
                    const double h = g[c] * gam(0, c);
                    mean_h += h;
                    mean_hx += h * xhat(r, c);
                }
                mean_h /= static_cast<double>(C);
                mean_hx /= static_cast<double>(C);
                for (std::size_t c = 0; c < C; ++c) {
                    const double h = g[c] * gam(0, c);
                    n.parents[0]->grad(r, c) += istd[r] * (h - mean_h - xhat(r, c) * mean_hx);
                }
            }
        }
    });
}

// Row-wise softmax over (x + additive_mask). Masked-out entries should carry a
// large negative constant in the mask tensor.
inline Var softmax_rows(const Var& x, const Tensor* additive_mask = nullptr) {
    const Tensor& xv = x.value();
    if (additive_mask != nullptr && !additive_mask->same_shape(xv)) {
        throw std::invalid_argument("softmax_rows: mask shape mismatch");
    }
    Tensor out(xv.rows(), xv.cols());
    for (std::size_t r = 0; r < xv.rows(); ++r) {
        double mx = -1e308;
        for (std::size_t c = 0; c < xv.cols(); ++c) {
            const double v = xv(r, c) + (additive_mask != nullptr ? (*additive_mask)(r, c) : 0.0);
            out(r, c) = v;
            mx = std::max(mx, v);
        }
        double sum = 0.0;
        for (std::size_t c = 0; c < xv.cols(); ++c) {
            const double e = std::exp(out(r, c) - mx);
            out(r, c) = e;
            sum += e;
        }
        for (std::size_t c = 0; c < xv.cols(); ++c) {
            out(r, c) /= sum;
        }
    }
    return detail::make(std::move(out), {x}, [](Node& n) {
        if (!n.parents[0]->requires_grad) {
            return;
        }
        n.parents[0]->ensure_grad();
        for (std::size_t r = 0; r < n.value.rows(); ++r) {
            const double* p = n.value.row_ptr(r);
            const double* g = n.grad.row_ptr(r);
            double s = 0.0;
            for (std::size_t c = 0; c < n.value.cols(); ++c) {
                s += g[c] * p[c];
            }
            for (std::size_t c = 0; c < n.value.cols(); ++c) {
                n.parents[0]->grad(r, c) += p[c] * (g[c] - s);
            }
        }
    });
}

inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;

inline Var gelu(const Var& x) {
    const Tensor& xv = x.value();
    Tensor out(xv.rows(), xv.cols());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const double v = xv[i];
        out[i] = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
    }
    return detail::make(std::move(out), {x}, [](Node& n) {
        if (!n.parents[0]->requires_grad) {
            return;
        }
        n.parents[0]->ensure_grad();
        const Tensor& xv = n.parents[0]->value;
        for (std::size_t i = 0; i < xv.size(); ++i) {
            const double v = xv[i];
            const double u = kGeluC * (v + kGeluA * v * v * v);
            const double th = std::tanh(u);
            const double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
            n.parents[0]->grad[i] += n.grad[i] * d;
        }
    });
}

inline Var embedding(const std::vector<int>& ids, const Var& table) {
    const Tensor& tv = table.value();
    Tensor out(ids.size(), tv.cols());
    for (std::size_t s = 0; s < ids.size(); ++s) {
        const auto id = static_cast<std::size_t>(ids[s]);
        if (id >= tv.rows()) {
            throw std::out_of_range("embedding: token id out of range");
        }
        std::copy(tv.row_ptr(id), tv.row_ptr(id) + tv.cols(), out.row_ptr(s));
    }
    return detail::make(std::move(out), {table}, [ids](Node& n) {
        if (!n.parents[0]->requires_grad) {
            return;
        }
        n.parents[0]->ensure_grad();
        for (std::size_t s = 0; s < ids.size(); ++s) {
            const auto id = static_cast<std::size_t>(ids[s]);
            const double* g = n.grad.row_ptr(s);
            double* dst = n.parents[0]->grad.row_ptr(id);
            for (std::size_t c = 0; c < n.grad.cols(); ++c) {
                dst[c] += g[c];
            }
        }
    });
}

inline Var slice_rows(const Var& x, std::size_t r0, std::size_t r1) {
    if (r1 > x.rows() || r0 >= r1) {
        throw std::out_of_range("slice_rows: bad range");
    }
    Tensor out(r1 - r0, x.cols());
    for (std::size_t r = r0; r < r1; ++r) {
        std::copy(x.value().row_ptr(r), x.value().row_ptr(r) + x.cols(), out.row_ptr(r - r0));
    }
    return detail::make(std::move(out), {x}, [r0](Node& n) {
        if (!n.parents[0]->requires_grad) {
            return;
        }
        n.parents[0]->ensure_grad();
        for (std::size_t r = 0; r < n.grad.rows(); ++r) {
            const double* g = n.grad.row_ptr(r);
            double* dst = n.parents[0]->grad.row_ptr(r0 + r);
            for (std::size_t c = 0; c < n.grad.cols(); ++c) {
                dst[c] += g[c];
            }
        }
    });
}

inline Var slice_cols(const Var& x, std::size_t c0, std::size_t c1) {
    if (c1 > x.cols() || c0 >= c1) {
        throw std::out_of_range("slice_cols: bad range");
    }
    Tensor out(x.rows(), c1 - c0);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const double* src = x.value().row_ptr(r);
        double* dst = out.row_ptr(r);
        for (std::size_t c = c0; c < c1; ++c) {
            dst[c - c0] = src[c];
        }
    }
    return detail::make(std::move(out), {x}, [c0](Node& n) {
        if (!n.parents[0]->requires_grad) {
            return;
        }
        n.parents[0]->ensure_grad();
        for (std::size_t r = 0; r < n.grad.rows(); ++r) {
            const double* g = n.grad.row_ptr(r);
            double* dst = n.parents[0]->grad.row_ptr(r);
            for (std::size_t c = 0; c < n.grad.cols(); ++c) {
                dst[c0 + c] += g[c];
            }
        }
    });
}

inline Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw std::invalid_argument("concat_rows: empty input");
    }
    std::size_t rows = 0;
    const std::size_t cols = parts[0].cols();
    for (const Var& p : parts) {
        if (p.cols() != cols) {
            throw std::invalid_argument("concat_rows: column mismatch");
        }
        rows += p.rows();
    }
    Tensor out(rows, cols);
    std::size_t off = 0;
    for (const Var& p : parts) {
        for (std::size_t r = 0; r < p.rows(); ++r) {
            std::copy(p.value().row_ptr(r), p.value().row_ptr(r) + cols, out.row_ptr(off + r));
        }
        off += p.rows();
    }
    return detail::make(std::move(out), parts, [](Node& n) {
        std::size_t off = 0;
        for (auto& parent : n.parents) {
            const std::size_t pr = parent->value.rows();
            if (parent->requires_grad) {
                parent->ensure_grad();
                for (std::size_t r = 0; r < pr; ++r) {
                    const double* g = n.grad.row_ptr(off + r);
                    double* dst = parent->grad.row_ptr(r);
                    for (std::size_t c = 0; c < n.grad.cols(); ++c) {
                        dst[c] += g[c];
                    }
                }
            }
            off += pr;
        }
    });
}

inline Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw std::invalid_argument("concat_cols: empty input");
    }
    const std::size_t rows = parts[0].rows();
    std::size_t cols = 0;
    for (const Var& p : parts) {
        if (p.rows() != rows) {
            throw std::invalid_argument("concat_cols: row mismatch");
        }
        cols += p.cols();
    }
    Tensor out(rows, cols);
    std::size_t off = 0;
    for (const Var& p : parts) {
        for (std::size_t r = 0; r < rows; ++r) {
            const double* src = p.value().row_ptr(r);
            double* dst = out.row_ptr(r) + off;
            std::copy(src, src + p.cols(), dst);
        }
        off += p.cols();
    }
    return detail::make(std::move(out), parts, [](Node& n) {
        std::size_t off = 0;
        for (auto& parent : n.parents) {
            const std::size_t pc = parent->value.cols();
            if (parent->requires_grad) {
                parent->ensure_grad();
                for (std::size_t r = 0; r < n.grad.rows(); ++r) {
                    const double* g = n.grad.row_ptr(r) + off;
                    double* dst = parent->grad.row_ptr(r);
                    for (std::size_t c = 0; c < pc; ++c) {
                        dst[c] += g[c];
                    }
                }
            }
            off += pc;
        }
    });
}

// Stack `times` copies of x along the row dimension.
inline Var tile_rows(const Var& x, std::size_t times) {
    const std::size_t R = x.rows();
    Tensor out(R * times, x.cols());
    for (std::size_t t = 0; t < times; ++t) {
        for (std::size_t r = 0; r < R; ++r) {
            std::copy(x.value().row_ptr(r), x.value().row_ptr(r) + x.cols(), out.row_ptr(t * R + r));
        }
    }
    return detail::make(std::move(out), {x}, [R, times](Node& n) {
        if (!n.parents[0]->requires_grad) {
            return;
        }
        n.parents[0]->ensure_grad();
        for (std::size_t t = 0; t < times; ++t) {
            for (std::size_t r = 0; r < R; ++r) {
                const double* g = n.grad.row_ptr(t * R + r);
                double* dst = n.parents[0]->grad.row_ptr(r);
                for (std::size_t c = 0; c < n.grad.cols(); ++c) {
                    dst[c] += g[c];
                }
            }
        }
    });
}

// out = x with row `idx` replaced by `row` (1 x C).
inline Var row_replace(const Var& x, std::size_t idx, const Var& row) {
    if (idx >= x.rows() || row.rows() != 1 || row.cols() != x.cols()) {
        throw std::invalid_argument("row_replace: bad index or row shape");
    }
    Tensor out = x.value();
    std::copy(row.value().row_ptr(0), row.value().row_ptr(0) + x.cols(), out.row_ptr(idx));
    return detail::make(std::move(out), {x, row}, [idx](Node& n) {
        if (n.parents[0]->requires_grad) {
            n.parents[0]->ensure_grad();
            for (std::size_t r = 0; r < n.grad.rows(); ++r) {
                if (r == idx) {
                    continue;
                }
                const double* g = n.grad.row_ptr(r);
                double* dst = n.parents[0]->grad.row_ptr(r);
                for (std::size_t c = 0; c < n.grad.cols(); ++c) {
                    dst[c] += g[c];
                }
            }
        }
        if (n.parents[1]->requires_grad) {
            n.parents[1]->ensure_grad();
            const double* g = n.grad.row_ptr(idx);
            double* dst = n.parents[1]->grad.row_ptr(0);
            for (std::size_t c = 0; c < n.grad.cols(); ++c) {
                dst[c] += g[c];
            }
        }
    });
}

// out = tanh(gate) * x, gate is a 1x1 parameter. tanh(0) = 0 makes the branch
// an exact no-op at initialization.
inline Var gate_scale(const Var& x, const Var& gate) {
    if (gate.rows() != 1 || gate.cols() != 1) {
        throw std::invalid_argument("gate_scale: gate must be 1x1");
    }
    const double t = std::tanh(gate.value()(0, 0));
    Tensor out = x.value();
    out.scale_(t);
    return detail::make(std::move(out), {x, gate}, [t](Node& n) {
        if (n.parents[0]->requires_grad) {
            n.parents[0]->ensure_grad();
            n.parents[0]->grad.axpy_(t, n.grad);
        }
        if (n.parents[1]->requires_grad) {
            n.parents[1]->ensure_grad();
            double s = 0.0;
            const Tensor& xv = n.parents[0]->value;
            for (std::size_t i = 0; i < xv.size(); ++i) {
                s += n.grad[i] * xv[i];
            }
            n.parents[1]->grad(0, 0) += (1.0 - t * t) * s;
        }
    });
}

// -ln(probs[0, idx]) for a probability row.
inline Var pick_neglog(const Var& probs, std::size_t idx) {
    if (probs.rows() != 1 || idx >= probs.cols()) {
        throw std::out_of_range("pick_neglog: index out of range");
    }
    const double p = probs.value()(0, idx);
    Tensor out(1, 1);
    out(0, 0) = -std::log(p);
    return detail::make(std::move(out), {probs}, [idx, p](Node& n) {
        if (!n.parents[0]->requires_grad) {
            return;
        }
        n.parents[0]->ensure_grad();
        n.parents[0]->grad(0, idx) += -n.grad(0, 0) / p;
    });
}

// Mean next-token cross-entropy over positions whose target is supervised:
// position s contributes -log softmax(logits[s])[ids[s+1]] iff mask[s+1].
// Fused with log-softmax for numerical stability.
inline Var masked_next_token_ce(const Var& logits, const std::vector<int>& ids,
                                const std::vector<bool>& mask) {
    const Tensor& lv = logits.value();
    if (ids.size() != lv.rows() || mask.size() != ids.size()) {
        throw std::invalid_argument("masked_next_token_ce: length mismatch");
    }
    std::vector<std::size_t> positions;  // source positions s with supervised target s+1
    for (std::size_t s = 0; s + 1 < ids.size(); ++s) {
        if (mask[s + 1]) {
            positions.push_back(s);
        }
    }
    if (positions.empty()) {
        throw std::invalid_argument("masked_next_token_ce: empty supervision mask");
    }
    const double inv_n = 1.0 / static_cast<double>(positions.size());
    double total = 0.0;
    for (std::size_t s : positions) {
        const double* row = lv.row_ptr(s);
        double mx = row[0];
        for (std::size_t c = 1; c < lv.cols(); ++c) {
            mx = std::max(mx, row[c]);
        }
        double lse = 0.0;
        for (std::size_t c = 0; c < lv.cols(); ++c) {
            lse += std::exp(row[c] - mx);
        }
        lse = mx + std::log(lse);
        total += lse - row[static_cast<std::size_t>(ids[s + 1])];
    }
    Tensor out(1, 1);
    out(0, 0) = total * inv_n;
    return detail::make(std::move(out), {logits}, [positions, ids, inv_n](Node& n) {
        if (!n.parents[0]->requires_grad) {
            return;
        }
        n.parents[0]->ensure_grad();
        const Tensor& lv = n.parents[0]->value;
        const double g = n.grad(0, 0) * inv_n;
        for (std::size_t s : positions) {
            const double* row = lv.row_ptr(s);
            double mx = row[0];
            for (std::size_t c = 1; c < lv.cols(); ++c) {
                mx = std::max(mx, row[c]);
            }
            double sum = 0.0;
            for (std::size_t c = 0; c < lv.cols(); ++c) {
                sum += std::exp(row[c] - mx);
            }
            double* dst = n.parents[0]->grad.row_ptr(s);
            for (std::size_t c = 0; c < lv.cols(); ++c) {
                dst[c] += g * std::exp(row[c] - mx) / sum;
            }
            dst[static_cast<std::size_t>(ids[s + 1])] -= g;
        }
    });
}

// sum(weights ⊙ x) -> 1x1.
inline Var weighted_sum(const Var& x, Tensor weights) {
    if (!weights.same_shape(x.value())) {
        throw std::invalid_argument("weighted_sum: weight shape mismatch");
    }
    Tensor out(1, 1);
    out(0, 0) = x.value().dot(weights);
    return detail::make(std::move(out), {x}, [w = std::move(weights)](Node& n) {
        if (!n.parents[0]->requires_grad) {
            return;
        }
        n.parents[0]->ensure_grad();
        n.parents[0]->grad.axpy_(n.grad(0, 0), w);
    });
}

// Backpropagate from a scalar loss through the recorded graph.
inline void backward(const Var& loss) {
    if (loss.rows() != 1 || loss.cols() != 1) {
        throw std::invalid_argument("backward: loss must be scalar");
    }
    if (!loss.requires_grad()) {
        return;
    }
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) {
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss.node()->ensure_grad();
    loss.node()->grad(0, 0) += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backprop) {
            (*it)->backprop(**it);
        }
    }
}

}  // namespace navgen::ag
