// SPDX-License-Identifier: Apache-2.0
#include "wmgm/msal.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "wmgm/error.hpp"
#include "wmgm/rng.hpp"

namespace wmgm::msal {

void MsalWeights::validate() const {
    require(std::isfinite(l2) && l2 >= 0 && std::isfinite(ssim) && ssim >= 0 && std::isfinite(adversarial) &&
                adversarial >= 0,
            "loss weights must be finite and non-negative");
    require(std::isfinite(clip) && clip > 0, "clip bound must be positive, got ", clip);
    require(n_critic >= 1, "need at least one critic step");
}

std::vector<double> SsimConfig::kernel() const {
    require(window % 2 == 1, "ssim window must be odd, got ", window);
    require(sigma > 0 && data_range > 0, "ssim sigma and data range must be positive");
    std::vector<double> w(window);
    const double c = static_cast<double>(window / 2);
    for (std::size_t i = 0; i < window; ++i) {
        const double x = static_cast<double>(i) - c;
        w[i] = std::exp(-x * x / (2.0 * sigma * sigma));
    }
    const double s = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& v : w) v /= s;
    return w;
}

nn::Var ssim(nn::Tape& t, nn::Var a, nn::Var b, const SsimConfig& cfg) {
    using namespace nn;
    require(t.value(a).shape() == t.value(b).shape(), "ssim shapes differ: ", to_string(t.value(a).shape()), " vs ",
            to_string(t.value(b).shape()));
    const auto k = cfg.kernel();
    const Var mu_a = local_mean(t, a, k);
    const Var mu_b = local_mean(t, b, k);
    const Var aa = local_mean(t, square(t, a), k);
    const Var bb = local_mean(t, square(t, b), k);
    const Var ab = local_mean(t, mul(t, a, b), k);
    const Var mu_aa = square(t, mu_a);
    const Var mu_bb = square(t, mu_b);
    const Var mu_ab = mul(t, mu_a, mu_b);
    const Var var_a = sub(t, aa, mu_aa);
    const Var var_b = sub(t, bb, mu_bb);
    const Var cov = sub(t, ab, mu_ab);
    const Var num = mul(t, add_scalar(t, scale(t, mu_ab, 2.0), cfg.c1()), add_scalar(t, scale(t, cov, 2.0), cfg.c2()));
    const Var den =
        mul(t, add_scalar(t, add(t, mu_aa, mu_bb), cfg.c1()), add_scalar(t, add(t, var_a, var_b), cfg.c2()));
    return mean(t, div(t, num, den));
}

double ssim(const Tensor& a, const Tensor& b, const SsimConfig& cfg) {
    nn::Tape t;
    return t.value(ssim(t, t.constant(a), t.constant(b), cfg))[0];
}

nn::NetworkSpec generator_spec(const NetConfig& cfg) {
    nn::EncoderDecoderConfig ed;
    ed.input_channels = {cfg.channels, 1};
    ed.out_channels = 3 * cfg.channels;
    ed.width = cfg.gen_width;
    ed.depth = cfg.gen_depth;
    return nn::encoder_decoder_spec(ed);
}

nn::NetworkSpec critic_spec(const NetConfig& cfg) {
    return nn::critic_spec({3 * cfg.channels, cfg.critic_width, cfg.critic_depth});
}

namespace {

void check_inputs(const Tensor& x_low, const Tensor& z) {
    require(x_low.rank() == 4, "low band must be [N, C, h, w], got ", to_string(x_low.shape()));
    require(z.rank() == 4 && z.dim(0) == x_low.dim(0) && z.dim(1) == 1 && z.dim(2) == x_low.dim(2) &&
                z.dim(3) == x_low.dim(3),
            "noise must be [", x_low.dim(0), ", 1, ", x_low.dim(2), ", ", x_low.dim(3), "], got ",
            to_string(z.shape()));
}

}  // namespace

nn::Var generator_forward(const nn::BoundNetwork& gen, nn::Tape& tape, const Tensor& x_low, const Tensor& z) {
    check_inputs(x_low, z);
    return gen.forward({tape.constant(x_low), tape.constant(z)});
}

wavelet::SubbandTriple generator_forward(const nn::Network& gen, const Tensor& x_low, const Tensor& z) {
    check_inputs(x_low, z);
    return wavelet::split_triple(gen.evaluate({x_low, z}));
}

GeneratorLoss generator_loss_grad(const nn::Network& gen, const nn::Network& disc, const Tensor& x_low,
                                  const wavelet::SubbandTriple& x_high, const Tensor& z, const MsalWeights& w,
                                  const SsimConfig& cfg) {
    using namespace nn;
    w.validate();
    Tape t;
    const BoundNetwork g = gen.bind(t);
    const BoundNetwork d = disc.bind(t, false);
    const Var fake = generator_forward(g, t, x_low, z);
    const Tensor real_t = wavelet::join_triple(x_high);
    require(t.value(fake).shape() == real_t.shape(), "generator output ", to_string(t.value(fake).shape()),
            " does not match detail bands ", to_string(real_t.shape()));
    const Var real = t.constant(real_t);
    const Var mse = mean(t, square(t, sub(t, fake, real)));
    const Var sim = ssim(t, fake, real, cfg);
    const Var critic = mean(t, d.forward({fake}));
    Var loss = scale(t, mse, w.l2);
    loss = add(t, loss, scale(t, add_scalar(t, neg(t, sim), 1.0), w.ssim));
    loss = sub(t, loss, scale(t, critic, w.adversarial));
    GeneratorLoss out;
    out.loss = t.value(loss)[0];
    out.mse = t.value(mse)[0];
    out.ssim = t.value(sim)[0];
    out.critic = t.value(critic)[0];
    require(std::isfinite(out.loss), "generator loss is not finite");
    t.backward(loss);
    out.gradients = g.gradients();
    return out;
}

double generator_loss(const nn::Network& gen, const nn::Network& disc, const Tensor& x_low,
                      const wavelet::SubbandTriple& x_high, const Tensor& z, const MsalWeights& w,
                      const SsimConfig& cfg) {
    return generator_loss_grad(gen, disc, x_low, x_high, z, w, cfg).loss;
}

CriticLoss discriminator_loss_grad(const nn::Network& disc, const wavelet::SubbandTriple& fake,
                                   const wavelet::SubbandTriple& real) {
    using namespace nn;
    const Tensor f = wavelet::join_triple(fake);
    const Tensor r = wavelet::join_triple(real);
    require(f.shape() == r.shape(), "fake ", to_string(f.shape()), " and real ", to_string(r.shape()),
            " bands differ");
    Tape t;
    const BoundNetwork d = disc.bind(t);
    const Var loss = sub(t, mean(t, d.forward({t.constant(f)})), mean(t, d.forward({t.constant(r)})));
    CriticLoss out;
    out.loss = t.value(loss)[0];
    require(std::isfinite(out.loss), "critic loss is not finite");
    t.backward(loss);
    out.gradients = d.gradients();
    return out;
}

double discriminator_loss(const nn::Network& disc, const wavelet::SubbandTriple& fake,
                          const wavelet::SubbandTriple& real) {
    const Tensor f = wavelet::join_triple(fake);
    const Tensor r = wavelet::join_triple(real);
    require(f.shape() == r.shape(), "fake ", to_string(f.shape()), " and real ", to_string(r.shape()),
            " bands differ");
    const double loss = disc.evaluate({f}).sum() / static_cast<double>(f.dim(0)) -
                        disc.evaluate({r}).sum() / static_cast<double>(r.dim(0));
    require(std::isfinite(loss), "critic loss is not finite");
    return loss;
}

void clip_weights(nn::Network& disc, double c) { nn::clip_parameters(disc.parameters(), c); }

// ---------------------------------------------------------------------------
// MsalModel

MsalModel::MsalModel(Mode mode, std::size_t levels, NetConfig cfg, std::uint64_t seed)
    : mode_(mode), levels_(levels), cfg_(cfg) {
    require(levels >= 1, "msal needs at least one scale");
    const std::size_t n = mode == Mode::ms ? 1 : levels;
    for (std::size_t s = 0; s < n; ++s) {
        const std::string tag = std::to_string(s + 1);
        generators_.emplace_back(generator_spec(cfg), derive_seed(seed, "msal/generator/" + tag));
        critics_.emplace_back(critic_spec(cfg), derive_seed(seed, "msal/critic/" + tag));
    }
}

MsalModel::MsalModel(Mode mode, std::size_t levels, NetConfig cfg, std::vector<nn::Network> generators,
                     std::vector<nn::Network> critics)
    : mode_(mode), levels_(levels), cfg_(cfg), generators_(std::move(generators)), critics_(std::move(critics)) {
    require(levels >= 1, "msal needs at least one scale");
    const std::size_t n = mode == Mode::ms ? 1 : levels;
    require(generators_.size() == n && critics_.size() == n, "expected ", n, " generator/critic pairs, got ",
            generators_.size(), "/", critics_.size());
}

std::size_t MsalModel::slot(std::size_t k) const {
    require(k >= 1 && k <= levels_, "scale ", k, " outside 1..", levels_);
    return mode_ == Mode::ms ? 0 : k - 1;
}

std::size_t MsalModel::generator_parameter_count() const {
    std::size_t n = 0;
    for (const auto& g : generators_) n += g.parameter_count();
    return n;
}

std::size_t MsalModel::critic_parameter_count() const {
    std::size_t n = 0;
    for (const auto& c : critics_) n += c.parameter_count();
    return n;
}

// ---------------------------------------------------------------------------
// Training

ScaleSets scale_sets(const std::vector<wavelet::WaveletPyramid>& pyramids) {
    require(!pyramids.empty(), "no pyramids to train on");
    const std::size_t S = pyramids.front().levels();
    ScaleSets sets;
    std::vector<std::vector<Tensor>> lows(S), lh(S), hl(S), hh(S);
    for (const auto& p : pyramids) {
        require(p.levels() == S, "pyramids have differing levels");
        const auto low = wavelet::low_bands(p);
        for (std::size_t k = 1; k <= S; ++k) {
            lows[k - 1].push_back(low[k]);
            lh[k - 1].push_back(p.high(k).lh);
            hl[k - 1].push_back(p.high(k).hl);
            hh[k - 1].push_back(p.high(k).hh);
        }
    }
    for (std::size_t k = 0; k < S; ++k) {
        sets.lows.push_back(stack(lows[k]));
        sets.highs.push_back({stack(lh[k]), stack(hl[k]), stack(hh[k])});
    }
    require(sets.lows.front().rank() == 4, "pyramids must come from [C, H, W] images");
    return sets;
}

namespace {

Tensor take(const Tensor& data, std::span<const std::size_t> idx) {
    const std::size_t item = data.size() / data.dim(0);
    Shape s = data.shape();
    s[0] = idx.size();
    Tensor out(s);
    for (std::size_t b = 0; b < idx.size(); ++b)
        std::copy_n(data.data().begin() + static_cast<std::ptrdiff_t>(idx[b] * item), item,
                    out.data().begin() + static_cast<std::ptrdiff_t>(b * item));
    return out;
}

wavelet::SubbandTriple take(const wavelet::SubbandTriple& t, std::span<const std::size_t> idx) {
    return {take(t.lh, idx), take(t.hl, idx), take(t.hh, idx)};
}

Tensor noise_like(const Tensor& low, RngStream& rng) {
    return rng.normal({low.dim(0), 1, low.dim(2), low.dim(3)});
}

void accumulate(nn::ParameterSet& into, const nn::ParameterSet& g) {
    if (into.empty()) {
        into = g;
        return;
    }
    for (auto& [name, t] : into) t += g.at(name);
}

}  // namespace

MsalLogRow evaluate(const MsalModel& model, const ScaleSets& sets, const MsalTrainConfig& cfg) {
    const std::size_t S = model.levels();
    require(sets.lows.size() == S, "training sets have ", sets.lows.size(), " scales, model has ", S);
    RngStream rng(cfg.seed, "msal/eval");
    MsalLogRow row{0, 0.0, 0.0, 0.0};
    for (std::size_t k = 1; k <= S; ++k) {
        const Tensor z = noise_like(sets.lows[k - 1], rng);
        const auto fake = generator_forward(model.generator(k), sets.lows[k - 1], z);
        const auto g = generator_loss_grad(model.generator(k), model.critic(k), sets.lows[k - 1], sets.highs[k - 1],
                                           z, cfg.weights, cfg.ssim);
        row.loss_g += g.loss;
        row.ssim_val += g.ssim / static_cast<double>(S);
        row.loss_d += discriminator_loss(model.critic(k), fake, sets.highs[k - 1]);
    }
    return row;
}

MsalTrainResult train_msal(MsalModel& model, const std::vector<wavelet::WaveletPyramid>& pyramids,
                           const MsalTrainConfig& cfg) {
    cfg.weights.validate();
    require(cfg.batch > 0, "batch size must be positive");
    const ScaleSets sets = scale_sets(pyramids);
    const std::size_t S = model.levels();
    require(sets.lows.size() == S, "pyramids have ", sets.lows.size(), " levels, model has ", S);
    require(sets.lows.front().dim(1) == model.config().channels, "pyramids have ", sets.lows.front().dim(1),
            " channels, model expects ", model.config().channels);
    const std::size_t M = sets.lows.front().dim(0);

    std::vector<nn::Adam> opt_g, opt_d;
    for (std::size_t s = 0; s < model.slots(); ++s) {
        opt_g.emplace_back(nn::AdamConfig{.lr = cfg.lr_g, .weight_decay = cfg.weight_decay});
        opt_d.emplace_back(nn::AdamConfig{.lr = cfg.lr_d, .weight_decay = cfg.weight_decay});
    }
    RngStream root(cfg.seed, "msal/train");
    RngStream order = root.derive("order");
    RngStream noise = root.derive("noise");

    MsalTrainResult result;
    result.log.push_back(evaluate(model, sets, cfg));
    std::vector<std::size_t> perm(M);
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        for (std::size_t i = M; i > 1; --i) std::swap(perm[i - 1], perm[order.below(i)]);
        double sum_g = 0.0, sum_d = 0.0;
        std::size_t steps_g = 0, steps_d = 0;
        try {
            for (std::size_t start = 0; start < M; start += cfg.batch) {
                const std::span<const std::size_t> idx(perm.data() + start, std::min(cfg.batch, M - start));
                std::vector<Tensor> lows, zs;
                std::vector<wavelet::SubbandTriple> reals, fakes;
                for (std::size_t k = 1; k <= S; ++k) {
                    lows.push_back(take(sets.lows[k - 1], idx));
                    reals.push_back(take(sets.highs[k - 1], idx));
                    zs.push_back(noise_like(lows.back(), noise));
                    fakes.push_back(generator_forward(model.generator(k), lows.back(), zs.back()));
                }
                for (std::size_t c = 0; c < cfg.weights.n_critic; ++c) {
                    std::vector<nn::ParameterSet> grads(model.slots());
                    double loss = 0.0;
                    for (std::size_t k = 1; k <= S; ++k) {
                        auto r = discriminator_loss_grad(model.critic(k), fakes[k - 1], reals[k - 1]);
                        loss += r.loss;
                        accumulate(grads[model.slot(k)], r.gradients);
                    }
                    for (std::size_t s = 0; s < model.slots(); ++s) {
                        opt_d[s].step(model.critics()[s].parameters(), grads[s]);
                        clip_weights(model.critics()[s], cfg.weights.clip);
                    }
                    sum_d += loss;
                    ++steps_d;
                }
                std::vector<nn::ParameterSet> grads(model.slots());
                double loss = 0.0;
                for (std::size_t k = 1; k <= S; ++k) {
                    auto r = generator_loss_grad(model.generator(k), model.critic(k), lows[k - 1], reals[k - 1],
                                                 zs[k - 1], cfg.weights, cfg.ssim);
                    loss += r.loss;
                    accumulate(grads[model.slot(k)], r.gradients);
                }
                for (std::size_t s = 0; s < model.slots(); ++s) opt_g[s].step(model.generators()[s].parameters(), grads[s]);
                sum_g += loss;
                ++steps_g;
            }
        } catch (const Error& e) {
            fail("msal training epoch ", epoch, " step ", steps_g + 1, ": ", e.what());
        }
        MsalLogRow row = evaluate(model, sets, cfg);
        row.epoch = epoch;
        row.loss_g = sum_g / static_cast<double>(steps_g);
        row.loss_d = sum_d / static_cast<double>(steps_d);
        result.log.push_back(row);
    }
    result.generator_optimizers = std::move(opt_g);
    result.critic_optimizers = std::move(opt_d);
    return result;
}

}  // namespace wmgm::msal
