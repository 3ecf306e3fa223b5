// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "wmgm/autodiff.hpp"
#include "wmgm/network.hpp"
#include "wmgm/rng.hpp"
#include "wmgm/tensor.hpp"

namespace wmgm::testing {

inline Tensor random_tensor(const Shape& shape, RngStream& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(shape);
    for (double& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

/// max_i |a_i - b_i| / max(max_i |b_i|, floor)
inline double relative_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-8) {
    double num = 0.0, den = floor;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        num = std::max(num, std::abs(analytic[i] - numeric[i]));
        den = std::max(den, std::abs(numeric[i]));
    }
    return num / den;
}

using ScalarGraph = std::function<nn::Var(nn::Tape&, const std::vector<nn::Var>&)>;

inline double eval_graph(const ScalarGraph& f, const std::vector<Tensor>& inputs) {
    nn::Tape t;
    std::vector<nn::Var> v;
    for (const auto& x : inputs) v.push_back(t.constant(x));
    return t.value(f(t, v))[0];
}

/// Worst relative error between tape gradients and central differences over all inputs.
inline double gradient_check(const ScalarGraph& f, const std::vector<Tensor>& inputs, double step = 1e-5) {
    nn::Tape t;
    std::vector<nn::Var> v;
    for (const auto& x : inputs) v.push_back(t.variable(x));
    t.backward(f(t, v));
    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Tensor analytic = t.grad(v[k]);
        Tensor numeric(inputs[k].shape());
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            auto plus = inputs, minus = inputs;
            plus[k][i] += step;
            minus[k][i] -= step;
            numeric[i] = (eval_graph(f, plus) - eval_graph(f, minus)) / (2.0 * step);
        }
        worst = std::max(worst, relative_error(analytic, numeric));
    }
    return worst;
}

/// Reduces a tensor-valued graph node to a scalar through fixed random weights.
inline nn::Var project(nn::Tape& t, nn::Var out, std::uint64_t seed = 99) {
    RngStream rng(seed, "projection");
    const Tensor w = random_tensor(t.value(out).shape(), rng);
    return nn::sum(t, nn::mul_const(t, out, w));
}

/// Parameter-gradient check of a network loss `loss(bound, tape)`.
inline double parameter_gradient_check(nn::Network& net,
                                       const std::function<nn::Var(const nn::BoundNetwork&, nn::Tape&)>& loss,
                                       double step = 1e-5) {
    nn::Tape t;
    const nn::BoundNetwork b = net.bind(t);
    t.backward(loss(b, t));
    const nn::ParameterSet grads = b.gradients();
    auto value = [&]() {
        nn::Tape tt;
        const nn::BoundNetwork bb = net.bind(tt);
        return tt.value(loss(bb, tt))[0];
    };
    double worst = 0.0;
    for (auto& [name, p] : net.parameters()) {
        Tensor numeric(p.shape());
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double orig = p[i];
            p[i] = orig + step;
            const double up = value();
            p[i] = orig - step;
            const double down = value();
            p[i] = orig;
            numeric[i] = (up - down) / (2.0 * step);
        }
        worst = std::max(worst, relative_error(grads.at(name), numeric));
    }
    return worst;
}

}  // namespace wmgm::testing
