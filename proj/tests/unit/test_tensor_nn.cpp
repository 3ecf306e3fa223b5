// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <set>

#include "doctest.h"
#include "support.hpp"
#include "wmgm/autodiff.hpp"
#include "wmgm/error.hpp"
#include "wmgm/network.hpp"
#include "wmgm/optim.hpp"
#include "wmgm/rng.hpp"

using namespace wmgm;
using namespace wmgm::nn;
using wmgm::testing::gradient_check;
using wmgm::testing::project;
using wmgm::testing::random_tensor;

TEST_SUITE("tensor") {
    TEST_CASE("construction and shape checks") {
        Tensor t({2, 3}, 1.5);
        CHECK(t.size() == 6);
        CHECK(t.at(1, 2) == 1.5);
        CHECK_THROWS_AS(Tensor({2, 0}), Error);
        CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), Error);
        CHECK_THROWS_AS(t.reshaped({4}), Error);
        CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
    }

    TEST_CASE("finite contract") {
        Tensor t({2}, 0.0);
        CHECK(t.all_finite());
        t[1] = std::nan("");
        CHECK_FALSE(t.all_finite());
        CHECK_THROWS_AS(t.require_finite("x"), Error);
    }

    TEST_CASE("stack, concat and slice round trip") {
        RngStream rng(1, "t");
        const Tensor a = random_tensor({2, 1, 3, 3}, rng), b = random_tensor({2, 2, 3, 3}, rng);
        const std::vector<Tensor> parts{a, b};
        const Tensor c = concat_axis1(parts);
        CHECK(c.shape() == Shape{2, 3, 3, 3});
        CHECK(slice_axis1(c, 0, 1) == a);
        CHECK(slice_axis1(c, 1, 2) == b);
        const std::vector<Tensor> items{a, b.reshaped({2, 1, 6, 3}).reshaped({2, 1, 3, 6}).reshaped({2, 2, 3, 3})};
        CHECK(unstack_item(stack(std::span<const Tensor>(items.data(), 1)), 0) == a);
    }
}

TEST_SUITE("rng") {
    TEST_CASE("identical seed and label reproduce draws") {
        RngStream a(42, "x"), b(42, "x");
        for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    }

    TEST_CASE("distinct labels and seeds differ") {
        RngStream a(42, "x"), b(42, "y"), c(43, "x");
        CHECK(a.next_u64() != b.next_u64());
        RngStream a2(42, "x");
        CHECK(a2.next_u64() != c.next_u64());
        CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
    }

    TEST_CASE("uniform stays in the open interval and normals have unit moments") {
        RngStream r(7, "m");
        double s = 0, s2 = 0;
        const int n = 200000;
        for (int i = 0; i < n; ++i) {
            const double u = r.uniform();
            CHECK_UNARY(u > 0.0 && u < 1.0);
            const double z = r.normal();
            s += z;
            s2 += z * z;
        }
        CHECK(std::abs(s / n) < 0.01);
        CHECK(std::abs(s2 / n - 1.0) < 0.02);
    }

    TEST_CASE("below covers its range") {
        RngStream r(3, "b");
        std::set<std::size_t> seen;
        for (int i = 0; i < 1000; ++i) {
            const auto v = r.below(7);
            CHECK(v < 7);
            seen.insert(v);
        }
        CHECK(seen.size() == 7);
    }
}

TEST_SUITE("autodiff") {
    TEST_CASE("elementwise and reduction gradients") {
        RngStream rng(11, "ad");
        const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng, 0.5, 1.5);
        const std::vector<std::pair<const char*, wmgm::testing::ScalarGraph>> cases = {
            {"add", [](Tape& t, const std::vector<Var>& v) { return project(t, add(t, v[0], v[1])); }},
            {"sub", [](Tape& t, const std::vector<Var>& v) { return project(t, sub(t, v[0], v[1])); }},
            {"mul", [](Tape& t, const std::vector<Var>& v) { return project(t, mul(t, v[0], v[1])); }},
            {"div", [](Tape& t, const std::vector<Var>& v) { return project(t, div(t, v[0], v[1])); }},
            {"square", [](Tape& t, const std::vector<Var>& v) { return project(t, square(t, v[0])); }},
            {"neg", [](Tape& t, const std::vector<Var>& v) { return project(t, neg(t, v[1])); }},
            {"scale", [](Tape& t, const std::vector<Var>& v) { return project(t, scale(t, v[0], -2.5)); }},
            {"add_scalar", [](Tape& t, const std::vector<Var>& v) { return project(t, add_scalar(t, v[0], 3.0)); }},
            {"sum", [](Tape& t, const std::vector<Var>& v) { return sum(t, mul(t, v[0], v[0])); }},
            {"mean", [](Tape& t, const std::vector<Var>& v) { return mean(t, mul(t, v[0], v[1])); }},
            {"relu", [](Tape& t, const std::vector<Var>& v) { return project(t, relu(t, v[0])); }},
            {"leaky_relu", [](Tape& t, const std::vector<Var>& v) { return project(t, leaky_relu(t, v[0])); }},
            {"sigmoid", [](Tape& t, const std::vector<Var>& v) { return project(t, sigmoid(t, v[0])); }},
            {"reshape", [](Tape& t, const std::vector<Var>& v) { return project(t, reshape(t, v[0], {4, 3})); }},
        };
        for (const auto& [name, f] : cases) {
            CAPTURE(name);
            CHECK(gradient_check(f, {a, b}) <= 1e-4);
        }
    }

    TEST_CASE("layer primitive gradients") {
        RngStream rng(12, "layers");
        const Tensor x = random_tensor({2, 3, 4, 4}, rng);
        const Tensor w3 = random_tensor({2, 3, 3, 3}, rng);
        const Tensor w1 = random_tensor({2, 3, 1, 1}, rng);
        const Tensor bias = random_tensor({2}, rng);
        const Tensor g = random_tensor({2, 1, 4, 4}, rng);
        const Tensor xd = random_tensor({5, 3}, rng), wd = random_tensor({4, 3}, rng), bd = random_tensor({4}, rng);
        const std::vector<double> window{0.25, 0.5, 0.25};

        CHECK(gradient_check([](Tape& t, const std::vector<Var>& v) { return project(t, dense(t, v[0], v[1], v[2])); },
                             {xd, wd, bd}) <= 1e-4);
        CHECK(gradient_check([](Tape& t, const std::vector<Var>& v) { return project(t, conv2d(t, v[0], v[1], v[2])); },
                             {x, w3, bias}) <= 1e-4);
        CHECK(gradient_check([](Tape& t, const std::vector<Var>& v) { return project(t, conv2d(t, v[0], v[1], v[2])); },
                             {x, w1, bias}) <= 1e-4);
        CHECK(gradient_check([](Tape& t, const std::vector<Var>& v) { return project(t, avgpool2(t, v[0])); }, {x}) <=
              1e-4);
        CHECK(gradient_check([](Tape& t, const std::vector<Var>& v) { return project(t, upsample2(t, v[0])); }, {x}) <=
              1e-4);
        CHECK(gradient_check([](Tape& t, const std::vector<Var>& v) { return project(t, global_avgpool(t, v[0])); },
                             {x}) <= 1e-4);
        CHECK(gradient_check(
                  [](Tape& t, const std::vector<Var>& v) {
                      const std::vector<Var> parts{v[0], v[1]};
                      return project(t, concat(t, parts));
                  },
                  {x, g}) <= 1e-4);
        CHECK(gradient_check(
                  [](Tape& t, const std::vector<Var>& v) { return project(t, mul_channel_broadcast(t, v[0], v[1])); },
                  {x, g}) <= 1e-4);
        CHECK(gradient_check(
                  [&](Tape& t, const std::vector<Var>& v) { return project(t, local_mean(t, v[0], window)); }, {x}) <=
              1e-4);
    }

    TEST_CASE("a variable used twice accumulates gradient") {
        Tape t;
        const Var x = t.variable(Tensor::from({3.0}));
        t.backward(sum(t, add(t, x, x)));
        CHECK(t.grad(x)[0] == doctest::Approx(2.0));
    }

    TEST_CASE("constants carry no gradient") {
        Tape t;
        const Var c = t.constant(Tensor::from({1.0, 2.0}));
        const Var y = square(t, c);
        CHECK_FALSE(t.requires_grad(y));
    }

    TEST_CASE("local_mean of a constant is that constant, including borders") {
        Tape t;
        const std::vector<double> w{0.1, 0.2, 0.4, 0.2, 0.1};
        const Var y = local_mean(t, t.constant(Tensor({1, 1, 3, 6}, 2.5)), w);
        for (double v : t.value(y).data()) CHECK(v == doctest::Approx(2.5).epsilon(1e-14));
    }

    TEST_CASE("op shape mismatch fails") {
        Tape t;
        CHECK_THROWS_AS(add(t, t.constant(Tensor({2}, 1.0)), t.constant(Tensor({3}, 1.0))), Error);
        CHECK_THROWS_AS(conv2d(t, t.constant(Tensor({1, 2, 4, 4})), t.constant(Tensor({1, 3, 3, 3})),
                               t.constant(Tensor({1}))),
                        Error);
    }
}

namespace {

NetworkSpec dense_identity_spec(std::size_t d) {
    NetworkSpec s;
    const auto in = s.add_input("x", d, 2);
    s.output = s.add_layer(LayerKind::dense, "fc", {in}, d, d);
    return s;
}

NetworkSpec single_layer(LayerKind kind, std::size_t channels) {
    NetworkSpec s;
    const auto in = s.add_input("x", channels, 4);
    s.output = s.add_layer(kind, "layer", {in}, channels, channels);
    return s;
}

}  // namespace

TEST_SUITE("network") {
    TEST_CASE("dense with identity weights and zero bias is the identity") {
        ParameterSet p;
        Tensor w({3, 3}, 0.0);
        for (std::size_t i = 0; i < 3; ++i) w.at(i, i) = 1.0;
        p["fc.weight"] = w;
        p["fc.bias"] = Tensor({3});
        Network net(dense_identity_spec(3), p);
        const Tensor x({2, 3}, std::vector<double>{1, -2, 3, 0.5, 0, -1});
        CHECK(net.evaluate({x}) == x);
    }

    TEST_CASE("relu layer on [-1, 0, 2]") {
        Tape t;
        CHECK(t.value(relu(t, t.constant(Tensor::from({-1, 0, 2})))) == Tensor::from({0, 0, 2}));
    }

    TEST_CASE("avgpool2 of a constant image") {
        Network net(single_layer(LayerKind::avgpool2, 1), ParameterSet{});
        const Tensor y = net.evaluate({Tensor({1, 1, 4, 4}, 0.7)});
        CHECK(y.shape() == Shape{1, 1, 2, 2});
        for (double v : y.data()) CHECK(v == doctest::Approx(0.7));
    }

    TEST_CASE("backward of half squared norm gives (Wx) x^T") {
        Network net(dense_identity_spec(2), 5);
        net.parameters()["fc.bias"] = Tensor({2});
        const Tensor x({1, 2}, std::vector<double>{0.3, -1.2});
        const Tensor y = net.forward({x});
        const Gradients g = net.backward(y);  // d(0.5 |y|^2)/dy = y
        const Tensor& W = net.parameters().at("fc.weight");
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 2; ++j) {
                const double wx = W.at(i, 0) * x[0] + W.at(i, 1) * x[1];
                CHECK(g.parameters.at("fc.weight").at(i, j) == doctest::Approx(wx * x[j]));
            }
    }

    TEST_CASE("unused parameters get zero gradient") {
        NetworkSpec s;
        const auto in = s.add_input("x", 2, 2);
        s.add_layer(LayerKind::dense, "unused", {in}, 2, 3);
        s.output = s.add_layer(LayerKind::dense, "used", {in}, 2, 1);
        Network net(s, 1);
        net.forward({Tensor({4, 2}, 1.0)});
        const Gradients g = net.backward(Tensor({4, 1}, 1.0));
        CHECK(g.parameters.at("unused.weight").max_abs() == 0.0);
        CHECK(g.parameters.at("unused.bias").max_abs() == 0.0);
        CHECK(g.parameters.at("used.bias").max_abs() > 0.0);
    }

    TEST_CASE("backward without forward fails") {
        Network net(dense_identity_spec(2), 1);
        CHECK_THROWS_AS(net.backward(Tensor({1, 2})), Error);
    }

    TEST_CASE("initialization is deterministic per seed") {
        const Network a(dense_identity_spec(4), 9), b(dense_identity_spec(4), 9), c(dense_identity_spec(4), 10);
        CHECK(a.parameters() == b.parameters());
        CHECK(a.parameters() != c.parameters());
        CHECK(a.parameter_count() == 20);
        const double bound = std::sqrt(1.0 / 4.0);
        for (const auto& [n, p] : a.parameters()) CHECK(p.max_abs() <= bound);
    }

    TEST_CASE("shape mismatch names the node") {
        Network net(dense_identity_spec(3), 1);
        try {
            net.evaluate({Tensor({2, 4})});
            FAIL("expected failure");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("'x'") != std::string::npos);
        }
        NetworkSpec s;
        const auto in = s.add_input("x", 2, 4);
        s.output = s.add_layer(LayerKind::conv3x3, "conv_a", {in}, 3, 4);
        try {
            Network(s, 1).evaluate({Tensor({1, 2, 4, 4})});
            FAIL("expected failure");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("conv_a") != std::string::npos);
        }
    }

    TEST_CASE("invalid graphs are rejected") {
        NetworkSpec s;
        const auto in = s.add_input("x", 2, 2);
        s.add_layer(LayerKind::dense, "a", {in}, 2, 2);
        s.add_layer(LayerKind::dense, "a", {in}, 2, 2);
        CHECK_THROWS_AS(validate(s), Error);
        NetworkSpec cyc;
        cyc.add_input("x", 2, 2);
        cyc.add_layer(LayerKind::relu, "r", {1});
        CHECK_THROWS_AS(validate(cyc), Error);
    }

    TEST_CASE("every layer kind passes a parameter and input gradient check") {
        RngStream rng(21, "layer-kinds");
        struct Case {
            std::string name;
            NetworkSpec spec;
            std::vector<Tensor> inputs;
        };
        std::vector<Case> cases;
        cases.push_back({"dense", mlp_spec({3}, {}, 2), {random_tensor({4, 3}, rng)}});
        cases.push_back({"mlp", mlp_spec({3, 2}, {5}, 2), {random_tensor({4, 3}, rng), random_tensor({4, 2}, rng)}});
        for (auto kind : {LayerKind::conv3x3, LayerKind::avgpool2, LayerKind::upsample2, LayerKind::relu,
                          LayerKind::leaky_relu}) {
            NetworkSpec s;
            const auto in = s.add_input("x", 2, 4);
            auto h = s.add_layer(LayerKind::conv3x3, "pre", {in}, 2, 2);
            h = s.add_layer(kind, "layer", {h}, 2, 2);
            s.add_layer(LayerKind::global_avgpool, "gap", {h});
            s.output = s.add_layer(LayerKind::dense, "head", {s.nodes.size() - 1}, 2, 1);
            cases.push_back({std::string(kind_name(kind)), s, {random_tensor({2, 2, 4, 4}, rng)}});
        }
        cases.push_back({"encoder-decoder", encoder_decoder_spec({{1, 1}, 3, 4, 2, true}),
                         {random_tensor({2, 1, 4, 4}, rng), random_tensor({2, 1, 4, 4}, rng)}});
        cases.push_back({"critic", critic_spec({3, 4, 2}), {random_tensor({2, 3, 4, 4}, rng)}});
        for (auto& c : cases) {
            CAPTURE(c.name);
            Network net(c.spec, 3);
            const double err = wmgm::testing::parameter_gradient_check(net, [&](const BoundNetwork& b, Tape& t) {
                std::vector<Var> vs;
                for (const auto& x : c.inputs) vs.push_back(t.constant(x));
                return project(t, b.forward(vs));
            });
            CHECK(err <= 1e-4);
            const double err_in = gradient_check(
                [&](Tape& t, const std::vector<Var>& v) { return project(t, net.bind(t, false).forward(v)); },
                c.inputs);
            CHECK(err_in <= 1e-4);
        }
    }

    TEST_CASE("forward shapes agree with static inference") {
        RngStream rng(5, "shapes");
        for (int trial = 0; trial < 12; ++trial) {
            const std::size_t depth = 1 + rng.below(2), width = 2 + rng.below(3), c = 1 + rng.below(3);
            const std::size_t side = (std::size_t{1} << depth) * (1 + rng.below(3)), n = 1 + rng.below(3);
            const NetworkSpec s = encoder_decoder_spec({{c, 1}, 3 * c, width, depth, trial % 2 == 0});
            const std::vector<Shape> in{{n, c, side, side}, {n, 1, side, side}};
            const auto shapes = infer_shapes(s, in);
            const Network net(s, static_cast<std::uint64_t>(trial));
            const Tensor y = net.evaluate({random_tensor(in[0], rng), random_tensor(in[1], rng)});
            CHECK(y.shape() == shapes[s.output]);
            CHECK(y.shape() == Shape{n, 3 * c, side, side});
        }
    }

    TEST_CASE("forward and backward are bit-reproducible") {
        const NetworkSpec s = encoder_decoder_spec({{1, 1}, 3, 4, 2, true});
        RngStream rng(8, "det");
        const Tensor a = random_tensor({2, 1, 8, 8}, rng), b = random_tensor({2, 1, 8, 8}, rng);
        Network n1(s, 4), n2(s, 4);
        const Tensor y1 = n1.forward({a, b}), y2 = n2.forward({a, b});
        CHECK(y1 == y2);
        CHECK(n1.backward(y1).parameters == n2.backward(y2).parameters);
    }

    TEST_CASE("generator-style network accepts several spatial sizes") {
        const Network net(encoder_decoder_spec({{1, 1}, 3, 4, 2, true}), 1);
        for (std::size_t side : {4, 8, 16}) {
            const Tensor y = net.evaluate({Tensor({1, 1, side, side}, 0.1), Tensor({1, 1, side, side}, 0.2)});
            CHECK(y.shape() == Shape{1, 3, side, side});
        }
    }
}

TEST_SUITE("optim") {
    TEST_CASE("zero gradients leave parameters unchanged") {
        ParameterSet p{{"w", Tensor::from({1.0, -2.0})}};
        const ParameterSet before = p;
        Adam opt({.lr = 1e-3});
        for (int i = 0; i < 3; ++i) opt.step(p, {{"w", Tensor({2})}});
        CHECK(p == before);
        CHECK(opt.steps() == 3);
    }

    TEST_CASE("first step moves by the learning rate") {
        ParameterSet p{{"w", Tensor::from({0.5})}};
        Adam opt({.lr = 1e-4});
        opt.step(p, {{"w", Tensor::from({1.0})}});
        // m_hat = 1, v_hat = 1, update = lr * 1 / (1 + eps)
        CHECK(p.at("w")[0] == doctest::Approx(0.5 - 1e-4 / (1.0 + 1e-8)).epsilon(1e-14));
    }

    TEST_CASE("decoupled decay shrinks by lr * decay") {
        ParameterSet p{{"w", Tensor::from({2.0})}};
        Adam opt({.lr = 0.1, .weight_decay = 0.1});
        opt.step(p, {{"w", Tensor({1})}});
        CHECK(p.at("w")[0] == doctest::Approx(2.0 * 0.99).epsilon(1e-14));
    }

    TEST_CASE("non-finite gradients are rejected without side effects") {
        ParameterSet p{{"w", Tensor::from({2.0})}};
        Adam opt;
        CHECK_THROWS_AS(opt.step(p, {{"w", Tensor::from({std::nan("")})}}), Error);
        CHECK(p.at("w")[0] == 2.0);
        CHECK(opt.steps() == 0);
        CHECK_THROWS_AS(opt.step(p, {}), Error);
    }

    TEST_CASE("moments track parameter shapes") {
        ParameterSet p{{"a", Tensor({2, 3})}, {"b", Tensor({4})}};
        Adam opt;
        opt.step(p, {{"a", Tensor({2, 3}, 1.0)}, {"b", Tensor({4}, -1.0)}});
        for (const auto& [n, t] : p) {
            CHECK(opt.first_moment().at(n).shape() == t.shape());
            CHECK(opt.second_moment().at(n).shape() == t.shape());
        }
    }

    TEST_CASE("clipping bounds and idempotence") {
        ParameterSet p{{"w", Tensor::from({5.0, -0.005, -3.0})}};
        clip_parameters(p, 0.01);
        CHECK(p.at("w") == Tensor::from({0.01, -0.005, -0.01}));
        const ParameterSet once = p;
        clip_parameters(p, 0.01);
        CHECK(p == once);
    }
}
