#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "navgen/autograd.hpp"
#include "navgen/nn.hpp"
#include "navgen/rng.hpp"
#include "navgen/tensor.hpp"
#include "support/fd_check.hpp"

using namespace navgen;
using ag::Var;

namespace {

constexpr double kFdTol = 1e-4;

Tensor random_weights(std::size_t r, std::size_t c, std::uint64_t seed) {
    Rng rng(seed);
    return Tensor::randn(r, c, rng, 1.0);
}

}  // namespace

TEST_CASE("tensor matmul variants agree with naive index loops") {
    Rng rng(3);
    const Tensor a = Tensor::randn(4, 5, rng);
    const Tensor b = Tensor::randn(5, 3, rng);
    const Tensor c = matmul(a, b);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 5; ++k) {
                s += a(i, k) * b(k, j);
            }
            REQUIRE(c(i, j) == Catch::Approx(s).epsilon(1e-12));
        }
    }
    const Tensor bt = Tensor::randn(3, 5, rng);
    const Tensor cnt = matmul_nt(a, bt);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 5; ++k) {
                s += a(i, k) * bt(j, k);
            }
            REQUIRE(cnt(i, j) == Catch::Approx(s).epsilon(1e-12));
        }
    }
    const Tensor at = Tensor::randn(5, 4, rng);
    const Tensor ctn = matmul_tn(at, b);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 5; ++k) {
                s += at(k, i) * b(k, j);
            }
            REQUIRE(ctn(i, j) == Catch::Approx(s).epsilon(1e-12));
        }
    }
}

TEST_CASE("elementwise and matmul ops pass finite-difference checks") {
    Rng rng(11);
    Var a = Var::param(Tensor::randn(3, 4, rng));
    Var b = Var::param(Tensor::randn(3, 4, rng));
    Var w = Var::param(Tensor::randn(4, 5, rng));
    Var row = Var::param(Tensor::randn(1, 5, rng));
    const Tensor lw = random_weights(3, 5, 21);

    auto loss_fn = [&]() {
        Var h = ag::add(a, b);
        h = ag::scale(h, 0.7);
        Var out = ag::matmul(h, w);
        out = ag::add_rowvec(out, row);
        out = ag::gelu(out);
        return ag::weighted_sum(out, lw);
    };
    auto loss_value = [&]() { return loss_fn().value()(0, 0); };

    Var loss = loss_fn();
    ag::backward(loss);
    for (Var p : {a, b, w, row}) {
        const auto rep = fd::check_param(loss_value, p);
        REQUIRE(rep.checked > 0);
        REQUIRE(rep.max_rel_err < kFdTol);
    }
}

TEST_CASE("matmul_nt gradient matches finite differences") {
    Rng rng(13);
    Var a = Var::param(Tensor::randn(3, 6, rng));
    Var b = Var::param(Tensor::randn(4, 6, rng));
    const Tensor lw = random_weights(3, 4, 5);
    auto loss_fn = [&]() { return ag::weighted_sum(ag::matmul_nt(a, b), lw); };
    auto loss_value = [&]() { return loss_fn().value()(0, 0); };
    Var loss = loss_fn();
    ag::backward(loss);
    for (Var p : {a, b}) {
        const auto rep = fd::check_param(loss_value, p);
        REQUIRE(rep.max_rel_err < kFdTol);
    }
}

TEST_CASE("layer_norm normalizes rows and passes finite differences") {
    Rng rng(17);
    Var x = Var::param(Tensor::randn(4, 8, rng, 2.0));
    Var gamma = Var::param(Tensor(1, 8, 1.0));
    Var beta = Var::param(Tensor(1, 8, 0.0));

    const Var out = ag::layer_norm(x, gamma, beta);
    for (std::size_t r = 0; r < 4; ++r) {
        double mean = 0.0;
        double var = 0.0;
        for (std::size_t c = 0; c < 8; ++c) {
            mean += out.value()(r, c);
        }
        mean /= 8.0;
        for (std::size_t c = 0; c < 8; ++c) {
            const double d = out.value()(r, c) - mean;
            var += d * d;
        }
        var /= 8.0;
        REQUIRE(std::abs(mean) < 1e-12);
        REQUIRE(var == Catch::Approx(1.0).margin(1e-3));  // eps shrinks variance slightly
    }

    const Tensor lw = random_weights(4, 8, 9);
    auto loss_fn = [&]() { return ag::weighted_sum(ag::gelu(ag::layer_norm(x, gamma, beta)), lw); };
    auto loss_value = [&]() { return loss_fn().value()(0, 0); };
    Var loss = loss_fn();
    ag::backward(loss);
    for (Var p : {x, gamma, beta}) {
        const auto rep = fd::check_param(loss_value, p);
        REQUIRE(rep.checked > 0);
        REQUIRE(rep.max_rel_err < kFdTol);
    }
}

TEST_CASE("softmax rows sum to one and respect additive masks") {
    Rng rng(19);
    Var x = Var::param(Tensor::randn(5, 5, rng));
    const Tensor mask = nn::causal_mask(5);
    const Var p = ag::softmax_rows(x, &mask);
    for (std::size_t r = 0; r < 5; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 5; ++c) {
            s += p.value()(r, c);
            if (c > r) {
                REQUIRE(p.value()(r, c) == 0.0);
            }
        }
        REQUIRE(s == Catch::Approx(1.0).epsilon(1e-12));
    }

    const Tensor lw = random_weights(5, 5, 31);
    auto loss_fn = [&]() { return ag::weighted_sum(ag::softmax_rows(x, &mask), lw); };
    auto loss_value = [&]() { return loss_fn().value()(0, 0); };
    Var loss = loss_fn();
    ag::backward(loss);
    const auto rep = fd::check_param(loss_value, x);
    REQUIRE(rep.max_rel_err < kFdTol);
}

TEST_CASE("structural ops route gradients to the right slots") {
    Rng rng(23);
    Var x = Var::param(Tensor::randn(4, 6, rng));
    Var y = Var::param(Tensor::randn(2, 6, rng));
    Var r = Var::param(Tensor::randn(1, 6, rng));
    const Tensor lw = random_weights(10, 6, 41);

    auto loss_fn = [&]() {
        Var top = ag::slice_rows(x, 0, 2);
        Var cols = ag::slice_cols(x, 1, 4);             // 4x3
        Var widened = ag::concat_cols({cols, ag::slice_cols(x, 0, 3)});  // 4x6
        Var replaced = ag::row_replace(widened, 2, r);
        Var stacked = ag::concat_rows({top, y, replaced});  // 8x6
        Var tiled = ag::tile_rows(y, 1);
        return ag::weighted_sum(ag::concat_rows({stacked, tiled}), lw);
    };
    auto loss_value = [&]() { return loss_fn().value()(0, 0); };
    Var loss = loss_fn();
    ag::backward(loss);
    for (Var p : {x, y, r}) {
        const auto rep = fd::check_param(loss_value, p, 36);
        REQUIRE(rep.checked > 0);
        REQUIRE(rep.max_rel_err < kFdTol);
    }
}

TEST_CASE("tile_rows repeats blocks in order") {
    Rng rng(27);
    Var q = Var::param(Tensor::randn(2, 3, rng));
    const Var t = ag::tile_rows(q, 3);
    REQUIRE(t.rows() == 6);
    for (std::size_t rep = 0; rep < 3; ++rep) {
        for (std::size_t r = 0; r < 2; ++r) {
            for (std::size_t c = 0; c < 3; ++c) {
                REQUIRE(t.value()(rep * 2 + r, c) == q.value()(r, c));
            }
        }
    }
    const Tensor lw = random_weights(6, 3, 43);
    auto loss_fn = [&]() { return ag::weighted_sum(ag::tile_rows(q, 3), lw); };
    auto loss_value = [&]() { return loss_fn().value()(0, 0); };
    Var loss = loss_fn();
    ag::backward(loss);
    REQUIRE(fd::check_param(loss_value, q).max_rel_err < kFdTol);
}

TEST_CASE("gate_scale is a no-op at zero and differentiable in the gate") {
    Rng rng(29);
    Var x = Var::param(Tensor::randn(3, 4, rng));
    Var gate = Var::param(Tensor(1, 1, 0.0));

    const Var gated = ag::gate_scale(x, gate);
    for (std::size_t i = 0; i < gated.value().size(); ++i) {
        REQUIRE(gated.value()[i] == 0.0);
    }

    gate.value_mut()(0, 0) = 0.37;
    const Tensor lw = random_weights(3, 4, 47);
    auto loss_fn = [&]() { return ag::weighted_sum(ag::gate_scale(x, gate), lw); };
    auto loss_value = [&]() { return loss_fn().value()(0, 0); };
    Var loss = loss_fn();
    ag::backward(loss);
    for (Var p : {x, gate}) {
        const auto rep = fd::check_param(loss_value, p);
        REQUIRE(rep.checked > 0);
        REQUIRE(rep.max_rel_err < kFdTol);
    }
}

TEST_CASE("embedding gathers rows and scatters gradients") {
    Rng rng(31);
    Var table = Var::param(Tensor::randn(7, 5, rng));
    const std::vector<int> ids{2, 2, 5, 0};
    const Var out = ag::embedding(ids, table);
    REQUIRE(out.rows() == 4);
    for (std::size_t c = 0; c < 5; ++c) {
        REQUIRE(out.value()(0, c) == table.value()(2, c));
        REQUIRE(out.value()(1, c) == table.value()(2, c));
    }
    const Tensor lw = random_weights(4, 5, 53);
    auto loss_fn = [&]() { return ag::weighted_sum(ag::embedding(ids, table), lw); };
    auto loss_value = [&]() { return loss_fn().value()(0, 0); };
    Var loss = loss_fn();
    ag::backward(loss);
    REQUIRE(fd::check_param(loss_value, table, 35).max_rel_err < kFdTol);
}

TEST_CASE("masked_next_token_ce matches a per-position hand computation") {
    Rng rng(37);
    const std::size_t S = 6;
    const std::size_t V = 9;
    Var logits = Var::param(Tensor::randn(S, V, rng));
    const std::vector<int> ids{1, 4, 7, 2, 0, 3};
    const std::vector<bool> mask{false, false, true, true, false, true};

    const Var loss = ag::masked_next_token_ce(logits, ids, mask);

    // independent per-position oracle
    double expect = 0.0;
    int n = 0;
    for (std::size_t s = 0; s + 1 < S; ++s) {
        if (!mask[s + 1]) {
            continue;
        }
        double mx = logits.value()(s, 0);
        for (std::size_t c = 1; c < V; ++c) {
            mx = std::max(mx, logits.value()(s, c));
        }
        double lse = 0.0;
        for (std::size_t c = 0; c < V; ++c) {
            lse += std::exp(logits.value()(s, c) - mx);
        }
        expect += mx + std::log(lse) - logits.value()(s, static_cast<std::size_t>(ids[s + 1]));
        ++n;
    }
    expect /= n;
    REQUIRE(loss.value()(0, 0) == Catch::Approx(expect).epsilon(1e-12));

    ag::backward(loss);
    auto loss_value = [&]() { return ag::masked_next_token_ce(logits, ids, mask).value()(0, 0); };
    REQUIRE(fd::check_param(loss_value, logits, 40).max_rel_err < kFdTol);

    // positions whose target is unsupervised receive exactly zero gradient
    for (std::size_t s = 0; s + 1 < S; ++s) {
        if (mask[s + 1]) {
            continue;
        }
        for (std::size_t c = 0; c < V; ++c) {
            REQUIRE(logits.grad()(s, c) == 0.0);
        }
    }
    // last position predicts nothing
    for (std::size_t c = 0; c < V; ++c) {
        REQUIRE(logits.grad()(S - 1, c) == 0.0);
    }
}

TEST_CASE("masked_next_token_ce rejects an empty mask") {
    Rng rng(41);
    Var logits = Var::param(Tensor::randn(3, 4, rng));
    const std::vector<int> ids{0, 1, 2};
    const std::vector<bool> mask{false, false, false};
    REQUIRE_THROWS_AS(ag::masked_next_token_ce(logits, ids, mask), std::invalid_argument);
}

TEST_CASE("uniform logits give ln(vocab) cross entropy") {
    const std::size_t V = 16;
    Var logits = Var::param(Tensor(4, V, 0.123));  // equal logits per row
    const std::vector<int> ids{3, 9, 0, 15};
    const std::vector<bool> mask{false, true, true, true};
    const Var loss = ag::masked_next_token_ce(logits, ids, mask);
    REQUIRE(loss.value()(0, 0) == Catch::Approx(std::log(16.0)).epsilon(1e-12));
}

TEST_CASE("pick_neglog gradient and value") {
    Rng rng(43);
    Var logits = Var::param(Tensor::randn(1, 6, rng));
    auto loss_fn = [&]() { return ag::pick_neglog(ag::softmax_rows(logits), 2); };
    Var loss = loss_fn();
    const double p2 = ag::softmax_rows(logits).value()(0, 2);
    REQUIRE(loss.value()(0, 0) == Catch::Approx(-std::log(p2)).epsilon(1e-12));
    ag::backward(loss);
    auto loss_value = [&]() { return loss_fn().value()(0, 0); };
    REQUIRE(fd::check_param(loss_value, logits).max_rel_err < kFdTol);
}

TEST_CASE("attention helper gradients survive finite differences") {
    Rng rng(47);
    nn::ParamStore store;
    auto self_attn = nn::Attention::create(store, "self", 8, 8, 8, 2, rng, 0.3);
    auto cross_attn = nn::Attention::create(store, "cross", 8, 6, 8, 2, rng, 0.3);
    Var queries = Var::param(Tensor::randn(4, 8, rng));
    Var memory = Var::param(Tensor::randn(3, 6, rng));
    const Tensor lw = random_weights(4, 8, 61);
    const Tensor mask = nn::causal_mask(4);

    auto loss_fn = [&]() { return ag::weighted_sum(self_attn(queries, queries, &mask), lw); };
    auto loss_value = [&]() { return loss_fn().value()(0, 0); };
    Var loss = loss_fn();
    ag::backward(loss);
    REQUIRE(fd::check_param(loss_value, queries, 16).max_rel_err < kFdTol);
    REQUIRE(fd::check_param(loss_value, self_attn.q.weight, 16).max_rel_err < kFdTol);
    REQUIRE(fd::check_param(loss_value, self_attn.o.weight, 16).max_rel_err < kFdTol);

    store.zero_grad();
    auto xloss_fn = [&]() { return ag::weighted_sum(cross_attn(queries, memory), lw); };
    auto xloss_value = [&]() { return xloss_fn().value()(0, 0); };
    Var xloss = xloss_fn();
    ag::backward(xloss);
    REQUIRE(fd::check_param(xloss_value, memory, 16).max_rel_err < kFdTol);
    REQUIRE(fd::check_param(xloss_value, cross_attn.k.weight, 16).max_rel_err < kFdTol);
}

TEST_CASE("NoGradGuard suppresses graph recording") {
    Rng rng(53);
    Var x = Var::param(Tensor::randn(2, 2, rng));
    ag::NoGradGuard guard;
    const Var y = ag::scale(x, 2.0);
    REQUIRE_FALSE(y.requires_grad());
}

TEST_CASE("frozen parameters receive no gradient") {
    Rng rng(59);
    nn::ParamStore store;
    Var w = store.create("w", Tensor::randn(3, 3, rng));
    Var x = Var::param(Tensor::randn(2, 3, rng));
    store.set_trainable("w", false);
    const Tensor lw = random_weights(2, 3, 67);
    Var loss = ag::weighted_sum(ag::matmul(x, w), lw);
    ag::backward(loss);
    REQUIRE(w.grad().size() == 0);  // never touched
    REQUIRE(x.grad().size() == 9 - 3);  // 2x3 = 6 entries
}
