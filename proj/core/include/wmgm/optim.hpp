// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

#include "wmgm/network.hpp"

namespace wmgm::nn {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Decoupled weight decay (AdamW) applied as p -= lr * weight_decay * p.
    double weight_decay = 0.0;
};

/// Adam / AdamW over a ParameterSet. Moments are created on the first step
/// and keyed by parameter name.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {});

    /// Fails without touching `params` if any gradient is missing, misshapen or non-finite.
    void step(ParameterSet& params, const ParameterSet& grads);

    const AdamConfig& config() const noexcept { return cfg_; }
    std::size_t steps() const noexcept { return t_; }
    const ParameterSet& first_moment() const noexcept { return m_; }
    const ParameterSet& second_moment() const noexcept { return v_; }

private:
    AdamConfig cfg_;
    std::size_t t_ = 0;
    ParameterSet m_;
    ParameterSet v_;
};

/// Clamp every parameter into [-c, c].
void clip_parameters(ParameterSet& params, double c);

}  // namespace wmgm::nn
