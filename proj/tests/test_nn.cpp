#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "selrob/nn.hpp"

using namespace selrob;
using nn::Mlp;

namespace {

Mlp identity2() {
    Mlp m;
    m.d = 2;
    m.k = 2;
    nn::Layer L;
    L.in = 2;
    L.out = 2;
    L.w = {1, 0, 0, 1};
    L.b = {0, 0};
    m.layers.push_back(L);
    m.validate();
    return m;
}

// Central finite differences of a scalar function, step 1e-4.
Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h = 1e-4) {
    Vec g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        Vec hi = x, lo = x;
        hi[i] += h;
        lo[i] -= h;
        g[i] = (f(hi) - f(lo)) / (2 * h);
    }
    return g;
}

bool close_rel(double a, double b, double rel, double floor = 1e-8) {
    return std::abs(a - b) <= rel * std::max({std::abs(a), std::abs(b), floor});
}

// Random net with all relu pre-activations bounded away from zero at x.
struct SmoothPoint {
    Mlp model;
    Vec x;
};

SmoothPoint smooth_instance(const std::vector<int>& hidden, uint64_t seed) {
    Rng rng(seed);
    for (int attempt = 0; attempt < 200; ++attempt) {
        Mlp m = nn::make_mlp(2, hidden, 2, derive_seed(seed, {static_cast<uint64_t>(attempt)}));
        Vec x = {rng.uniform(-2, 2), rng.uniform(-2, 2)};
        nn::Trace t = nn::forward_trace(m, x);
        bool ok = true;
        for (std::size_t l = 0; l + 1 < m.layers.size(); ++l)
            for (double z : t.pre[l])
                if (std::abs(z) <= 1e-3) ok = false;
        if (ok) return {std::move(m), std::move(x)};
    }
    FAIL("no smooth point found");
    return {};
}

}  // namespace

TEST_CASE("forward: identity layer symmetry and closed-form softmax") {
    Mlp m = identity2();
    auto f = nn::forward(m, {0.0, 0.0});
    CHECK(f.probs[0] == doctest::Approx(0.5));
    CHECK(f.probs[1] == doctest::Approx(0.5));

    auto g = nn::forward(m, {std::log(3.0), 0.0});
    CHECK(g.probs[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(g.probs[1] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(argmax(g.probs) == argmax(g.logits));
}

TEST_CASE("forward: equal logits give the uniform distribution") {
    Mlp m;
    m.d = 1;
    m.k = 3;
    nn::Layer L;
    L.in = 1;
    L.out = 3;
    L.w = {0, 0, 0};
    L.b = {7.5, 7.5, 7.5};
    m.layers.push_back(L);
    m.validate();
    auto f = nn::forward(m, {123.0});
    for (double p : f.probs) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("forward: shape mismatch raises") {
    Mlp m = identity2();
    CHECK_THROWS_AS(nn::forward(m, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS(nn::forward(m, {1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("forward is deterministic") {
    auto inst = smooth_instance({16}, 5);
    auto a = nn::forward(inst.model, inst.x);
    auto b = nn::forward(inst.model, inst.x);
    for (std::size_t i = 0; i < a.probs.size(); ++i) {
        CHECK(a.probs[i] == b.probs[i]);
        CHECK(a.logits[i] == b.logits[i]);
    }
}

TEST_CASE("softmax is a probability vector for extreme logits") {
    Rng rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t k = 2 + rng.below(4);
        Vec logits(k);
        double scale = std::pow(10.0, rng.uniform(0, 4));  // magnitudes up to 1e4
        for (double& v : logits) v = rng.uniform(-1, 1) * scale;
        Vec p = nn::softmax(logits);
        double sum = 0;
        for (double v : p) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);
        CHECK(argmax(p) == argmax(logits));
    }
}

TEST_CASE("grad_input: analytic softmax-CE gradient on a linear model") {
    Mlp m;
    m.d = 2;
    m.k = 2;
    nn::Layer L;
    L.in = 2;
    L.out = 2;
    L.w = {0.7, -0.2, -0.3, 0.9};  // rows w0, w1
    L.b = {0.1, -0.4};
    m.layers.push_back(L);
    m.validate();
    Vec x = {0.3, -1.1};
    Vec p = nn::forward(m, x).probs;
    Vec g = nn::grad_input(m, x, nn::LossSpec::cross_entropy(0));
    // d(-log p0)/dx = (p0-1)*w0 + p1*w1
    for (int j = 0; j < 2; ++j) {
        double expect = (p[0] - 1.0) * L.w[0 * 2 + j] + p[1] * L.w[1 * 2 + j];
        CHECK(g[j] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("grad_input: constant loss gives the zero vector") {
    Mlp m;
    m.d = 2;
    m.k = 2;
    nn::Layer L;
    L.in = 2;
    L.out = 2;
    L.w = {0, 0, 0, 0};
    L.b = {0.3, -0.2};
    m.layers.push_back(L);
    m.validate();
    Vec g = nn::grad_input(m, {1.5, -0.7}, nn::LossSpec::cross_entropy(1));
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 0.0);
}

TEST_CASE("grad_input matches finite differences on a seeded relu net") {
    auto inst = smooth_instance({16}, 11);
    for (int target = 0; target < 2; ++target) {
        Vec g = nn::grad_input(inst.model, inst.x, nn::LossSpec::cross_entropy(target));
        Vec fd = fd_gradient(
            [&](const Vec& z) { return nn::cross_entropy_loss(inst.model, z, target); }, inst.x);
        for (std::size_t j = 0; j < g.size(); ++j) CHECK(close_rel(g[j], fd[j], 1e-3));
    }
}

TEST_CASE("relu subgradient at zero is zero") {
    // First layer maps everything to pre-activation exactly 0.
    Mlp m;
    m.d = 2;
    m.k = 2;
    nn::Layer L0;
    L0.in = 2;
    L0.out = 3;
    L0.w.assign(6, 0.0);
    L0.b.assign(3, 0.0);
    L0.act = nn::Activation::relu;
    nn::Layer L1;
    L1.in = 3;
    L1.out = 2;
    L1.w = {1, 2, 3, 4, 5, 6};
    L1.b = {0.5, -0.5};
    m.layers = {L0, L1};
    m.validate();
    Vec g = nn::grad_input(m, {0.4, -0.9}, nn::LossSpec::cross_entropy(0));
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 0.0);
}

TEST_CASE("grad_params: batch of copies equals the single-point gradient") {
    auto inst = smooth_instance({8}, 21);
    std::vector<nn::Sample> one = {{&inst.x, 1}};
    std::vector<nn::Sample> many(7, nn::Sample{&inst.x, 1});
    auto ga = nn::grad_params(inst.model, one, nn::LossSpec::cross_entropy(0));
    auto gb = nn::grad_params(inst.model, many, nn::LossSpec::cross_entropy(0));
    for (std::size_t l = 0; l < ga.layers.size(); ++l) {
        for (std::size_t i = 0; i < ga.layers[l].w.size(); ++i)
            CHECK(ga.layers[l].w[i] == doctest::Approx(gb.layers[l].w[i]).epsilon(1e-12));
        for (std::size_t i = 0; i < ga.layers[l].b.size(); ++i)
            CHECK(ga.layers[l].b[i] == doctest::Approx(gb.layers[l].b[i]).epsilon(1e-12));
    }
}

TEST_CASE("grad_params: symmetric data with zero bias gives zero bias gradient") {
    Mlp m = identity2();
    Vec a = {0.8, -0.3};
    Vec b = {-0.3, 0.8};  // swapped coordinates with swapped label
    std::vector<nn::Sample> batch = {{&a, 0}, {&b, 1}};
    auto g = nn::grad_params(m, batch, nn::LossSpec::cross_entropy(0));
    CHECK(g.layers[0].b[0] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(g.layers[0].b[1] == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("grad_params matches finite differences on a seeded net") {
    auto inst = smooth_instance({8}, 31);
    Rng rng(7);
    std::vector<Vec> xs;
    std::vector<nn::Sample> batch;
    for (int i = 0; i < 4; ++i) xs.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1)});
    for (int i = 0; i < 4; ++i) batch.push_back({&xs[i], i % 2});
    auto g = nn::grad_params(inst.model, batch, nn::LossSpec::cross_entropy(0));

    auto batch_loss = [&](const Mlp& model) {
        double s = 0;
        for (const auto& smp : batch) s += nn::cross_entropy_loss(model, *smp.x, smp.y);
        return s / static_cast<double>(batch.size());
    };
    const double h = 1e-4;
    for (std::size_t l = 0; l < inst.model.layers.size(); ++l) {
        for (std::size_t i = 0; i < inst.model.layers[l].w.size(); ++i) {
            Mlp hi = inst.model, lo = inst.model;
            hi.layers[l].w[i] += h;
            lo.layers[l].w[i] -= h;
            double fd = (batch_loss(hi) - batch_loss(lo)) / (2 * h);
            CHECK(close_rel(g.layers[l].w[i], fd, 1e-3));
        }
        for (std::size_t i = 0; i < inst.model.layers[l].b.size(); ++i) {
            Mlp hi = inst.model, lo = inst.model;
            hi.layers[l].b[i] += h;
            lo.layers[l].b[i] -= h;
            double fd = (batch_loss(hi) - batch_loss(lo)) / (2 * h);
            CHECK(close_rel(g.layers[l].b[i], fd, 1e-3));
        }
    }
}

TEST_CASE("grad_params rejects an empty batch") {
    Mlp m = identity2();
    std::vector<nn::Sample> batch;
    CHECK_THROWS_AS(nn::grad_params(m, batch, nn::LossSpec::cross_entropy(0)), std::invalid_argument);
}

TEST_CASE("sgd_step: momentum 0 is a plain gradient step") {
    Mlp m = identity2();
    auto g = nn::zeros_like(m);
    g.layers[0].w = {1, 2, 3, 4};
    g.layers[0].b = {5, 6};
    auto st = nn::make_sgd_state(m);
    nn::sgd_step(m, g, 0.1, 0.0, st);
    CHECK(m.layers[0].w[0] == doctest::Approx(1.0 - 0.1 * 1));
    CHECK(m.layers[0].w[3] == doctest::Approx(1.0 - 0.1 * 4));
    CHECK(m.layers[0].b[1] == doctest::Approx(-0.6));
}

TEST_CASE("sgd_step: zero gradient and velocity leave the model unchanged") {
    Mlp m = identity2();
    Mlp before = m;
    auto st = nn::make_sgd_state(m);
    nn::sgd_step(m, nn::zeros_like(m), 0.5, 0.9, st);
    for (std::size_t i = 0; i < m.layers[0].w.size(); ++i)
        CHECK(m.layers[0].w[i] == before.layers[0].w[i]);
}

TEST_CASE("sgd_step: two momentum steps with constant gradient") {
    Mlp m = identity2();
    auto g = nn::zeros_like(m);
    g.layers[0].w[0] = 2.0;
    auto st = nn::make_sgd_state(m);
    nn::sgd_step(m, g, 0.1, 0.9, st);
    nn::sgd_step(m, g, 0.1, 0.9, st);
    // v1 = g, v2 = 1.9 g: total displacement lr*g*(1 + 1.9)
    CHECK(m.layers[0].w[0] == doctest::Approx(1.0 - 0.1 * 2.0 * 2.9).epsilon(1e-12));
}

TEST_CASE("sgd_step validates arguments") {
    Mlp m = identity2();
    auto st = nn::make_sgd_state(m);
    CHECK_THROWS_AS(nn::sgd_step(m, nn::zeros_like(m), 0.0, 0.0, st), std::invalid_argument);
    CHECK_THROWS_AS(nn::sgd_step(m, nn::zeros_like(m), 0.1, 1.0, st), std::invalid_argument);
}

TEST_CASE("model json round trip is value-exact") {
    Mlp m = nn::make_mlp(3, {5, 4}, 2, 77);
    m.layers[0].w[0] = 0.1;  // decimal that is not exactly representable
    m.layers[0].w[1] = 1e-300;
    m.layers[0].b[0] = -1.0 / 3.0;
    Mlp back = nn::mlp_from_json(nn::mlp_to_json(m));
    REQUIRE(back.layers.size() == m.layers.size());
    CHECK(back.d == m.d);
    CHECK(back.k == m.k);
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        CHECK(back.layers[l].act == m.layers[l].act);
        for (std::size_t i = 0; i < m.layers[l].w.size(); ++i)
            CHECK(back.layers[l].w[i] == m.layers[l].w[i]);
        for (std::size_t i = 0; i < m.layers[l].b.size(); ++i)
            CHECK(back.layers[l].b[i] == m.layers[l].b[i]);
    }
}

TEST_CASE("model json rejects malformed input") {
    CHECK_THROWS_AS(nn::mlp_from_json("{"), FormatError);
    CHECK_THROWS_AS(nn::mlp_from_json("{\"d\":2,\"k\":2,\"layers\":[]}"), std::invalid_argument);
    CHECK_THROWS_AS(
        nn::mlp_from_json(
            "{\"d\":1,\"k\":2,\"layers\":[{\"w\":[1,1],\"b\":[0,0],\"act\":\"gelu\"}]}"),
        FormatError);
}

TEST_CASE("mlp validation catches broken invariants") {
    Mlp m = identity2();
    m.layers[0].w[2] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(m.validate(), std::invalid_argument);
    Mlp chain = nn::make_mlp(2, {4}, 2, 1);
    chain.layers[1].in = 3;
    CHECK_THROWS_AS(chain.validate(), std::invalid_argument);
}
