// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "wmgm/autodiff.hpp"
#include "wmgm/network.hpp"
#include "wmgm/optim.hpp"
#include "wmgm/wavelet.hpp"

namespace wmgm::msal {

struct MsalWeights {
    double l2 = 10.0;
    double ssim = 1.0;
    double adversarial = 0.01;
    double clip = 0.01;
    std::size_t n_critic = 5;

    void validate() const;
};

struct SsimConfig {
    std::size_t window = 11;
    double sigma = 1.5;
    double data_range = 2.0;
    double k1 = 0.01;
    double k2 = 0.03;

    /// Normalized 1D Gaussian window; its outer product is the 2D window.
    std::vector<double> kernel() const;
    double c1() const { return (k1 * data_range) * (k1 * data_range); }
    double c2() const { return (k2 * data_range) * (k2 * data_range); }
};

/// Mean SSIM over every position, channel and batch item of two equally
/// shaped maps (last two axes spatial). Near borders the window is truncated
/// and renormalized.
nn::Var ssim(nn::Tape& tape, nn::Var a, nn::Var b, const SsimConfig& cfg = {});
double ssim(const Tensor& a, const Tensor& b, const SsimConfig& cfg = {});

struct NetConfig {
    std::size_t channels = 1;
    std::size_t gen_width = 16;
    std::size_t gen_depth = 2;
    std::size_t critic_width = 16;
    std::size_t critic_depth = 2;
};

/// Encoder-decoder taking [x_L (C channels), z (1 channel)] to 3C detail channels.
nn::NetworkSpec generator_spec(const NetConfig& cfg);
/// Critic on the joined detail triple [N, 3C, h, w].
nn::NetworkSpec critic_spec(const NetConfig& cfg);

/// G(x_L, z) split into (lh, hl, hh). z must be [N, 1, h, w] matching x_L [N, C, h, w].
wavelet::SubbandTriple generator_forward(const nn::Network& gen, const Tensor& x_low, const Tensor& z);
/// Joined [N, 3C, h, w] output on a tape.
nn::Var generator_forward(const nn::BoundNetwork& gen, nn::Tape& tape, const Tensor& x_low, const Tensor& z);

struct GeneratorLoss {
    double loss = 0.0;
    double mse = 0.0;
    double ssim = 0.0;
    double critic = 0.0;
    nn::ParameterSet gradients;
};

/// l2 * mean (G - x_H)^2 + ssim_w * (1 - SSIM(G, x_H)) - adversarial * mean D(G),
/// with gradients for the generator parameters.
GeneratorLoss generator_loss_grad(const nn::Network& gen, const nn::Network& disc, const Tensor& x_low,
                                  const wavelet::SubbandTriple& x_high, const Tensor& z, const MsalWeights& w,
                                  const SsimConfig& cfg = {});
double generator_loss(const nn::Network& gen, const nn::Network& disc, const Tensor& x_low,
                      const wavelet::SubbandTriple& x_high, const Tensor& z, const MsalWeights& w,
                      const SsimConfig& cfg = {});

struct CriticLoss {
    double loss = 0.0;
    nn::ParameterSet gradients;
};

/// mean D(fake) - mean D(real), with gradients for the critic parameters.
CriticLoss discriminator_loss_grad(const nn::Network& disc, const wavelet::SubbandTriple& fake,
                                   const wavelet::SubbandTriple& real);
double discriminator_loss(const nn::Network& disc, const wavelet::SubbandTriple& fake,
                          const wavelet::SubbandTriple& real);

void clip_weights(nn::Network& disc, double c);

enum class Mode { ms, ss };

/// Generator/critic pairs for scales 1..levels. In ms mode one pair serves
/// every scale; in ss mode each scale owns its pair.
class MsalModel {
public:
    MsalModel(Mode mode, std::size_t levels, NetConfig cfg, std::uint64_t seed);
    MsalModel(Mode mode, std::size_t levels, NetConfig cfg, std::vector<nn::Network> generators,
              std::vector<nn::Network> critics);

    Mode mode() const noexcept { return mode_; }
    std::size_t levels() const noexcept { return levels_; }
    const NetConfig& config() const noexcept { return cfg_; }

    /// Index of the network pair serving scale k.
    std::size_t slot(std::size_t k) const;
    std::size_t slots() const noexcept { return generators_.size(); }

    nn::Network& generator(std::size_t k) { return generators_[slot(k)]; }
    const nn::Network& generator(std::size_t k) const { return generators_[slot(k)]; }
    nn::Network& critic(std::size_t k) { return critics_[slot(k)]; }
    const nn::Network& critic(std::size_t k) const { return critics_[slot(k)]; }

    std::vector<nn::Network>& generators() noexcept { return generators_; }
    const std::vector<nn::Network>& generators() const noexcept { return generators_; }
    std::vector<nn::Network>& critics() noexcept { return critics_; }
    const std::vector<nn::Network>& critics() const noexcept { return critics_; }

    std::size_t generator_parameter_count() const;
    std::size_t critic_parameter_count() const;

private:
    Mode mode_;
    std::size_t levels_;
    NetConfig cfg_;
    std::vector<nn::Network> generators_;
    std::vector<nn::Network> critics_;
};

struct MsalTrainConfig {
    std::size_t epochs = 30;
    std::size_t batch = 128;
    double lr_g = 1e-4;
    double lr_d = 1e-5;
    double weight_decay = 0.01;
    MsalWeights weights;
    SsimConfig ssim;
    std::uint64_t seed = 0;
};

struct MsalLogRow {
    std::size_t epoch;
    double loss_g;
    double loss_d;
    double ssim_val;
};

struct MsalTrainResult {
    /// Row 0 evaluates the untrained model; row e > 0 averages the training
    /// losses of epoch e and evaluates SSIM after it.
    std::vector<MsalLogRow> log;
    std::vector<nn::Adam> generator_optimizers;
    std::vector<nn::Adam> critic_optimizers;
};

/// Training pairs at every scale of a set of pyramids: lows[k-1] = LL at
/// scale k and highs[k-1] = detail triple at scale k, batched over images.
struct ScaleSets {
    std::vector<Tensor> lows;
    std::vector<wavelet::SubbandTriple> highs;
};
ScaleSets scale_sets(const std::vector<wavelet::WaveletPyramid>& pyramids);

/// Mean SSIM and generator/critic losses over the whole set with fixed noise.
MsalLogRow evaluate(const MsalModel& model, const ScaleSets& sets, const MsalTrainConfig& cfg);

/// Alternates n_critic clipped critic steps and one generator step per
/// minibatch, summing the per-scale losses; conditions on ground-truth LL bands.
MsalTrainResult train_msal(MsalModel& model, const std::vector<wavelet::WaveletPyramid>& pyramids,
                           const MsalTrainConfig& cfg);

}  // namespace wmgm::msal
