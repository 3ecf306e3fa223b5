// SPDX-License-Identifier: Apache-2.0
#include "wmgm/optim.hpp"

#include <algorithm>
#include <cmath>

#include "wmgm/error.hpp"

namespace wmgm::nn {

Adam::Adam(AdamConfig cfg) : cfg_(cfg) {
    require(cfg_.lr > 0 && std::isfinite(cfg_.lr), "learning rate must be positive, got ", cfg_.lr);
    require(cfg_.beta1 >= 0 && cfg_.beta1 < 1 && cfg_.beta2 >= 0 && cfg_.beta2 < 1, "betas must lie in [0, 1)");
    require(cfg_.eps > 0, "eps must be positive");
    require(cfg_.weight_decay >= 0, "weight decay must be non-negative");
}

void Adam::step(ParameterSet& params, const ParameterSet& grads) {
    for (const auto& [name, p] : params) {
        auto it = grads.find(name);
        require(it != grads.end(), "optimizer: missing gradient for '", name, "'");
        require(it->second.shape() == p.shape(), "optimizer: gradient for '", name, "' has shape ",
                to_string(it->second.shape()), ", expected ", to_string(p.shape()));
        require(it->second.all_finite(), "optimizer: non-finite gradient for '", name, "'");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, p] : params) {
        const Tensor& g = grads.at(name);
        auto [mi, m_new] = m_.try_emplace(name, p.shape());
        auto [vi, v_new] = v_.try_emplace(name, p.shape());
        auto m = mi->second.data();
        auto v = vi->second.data();
        auto pv = p.data();
        for (std::size_t i = 0; i < pv.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            pv[i] -= cfg_.lr * cfg_.weight_decay * pv[i];
            pv[i] -= cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
        }
    }
}

void clip_parameters(ParameterSet& params, double c) {
    require(c > 0, "clip bound must be positive, got ", c);
    for (auto& [name, p] : params)
        for (double& v : p.data()) v = std::clamp(v, -c, c);
}

}  // namespace wmgm::nn
