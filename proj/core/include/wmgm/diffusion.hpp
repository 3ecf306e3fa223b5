// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "wmgm/gaussian.hpp"
#include "wmgm/network.hpp"
#include "wmgm/optim.hpp"
#include "wmgm/rng.hpp"
#include "wmgm/tensor.hpp"

namespace wmgm::diffusion {

/// Uniform grid t_n = n * dt on [0, T]. N = 0 is the degenerate empty schedule.
class Schedule {
public:
    Schedule(double horizon, std::size_t steps);

    double horizon() const noexcept { return T_; }
    std::size_t steps() const noexcept { return N_; }
    double dt() const noexcept { return dt_; }
    double time(std::size_t n) const;

private:
    double T_;
    std::size_t N_;
    double dt_;
};

/// e^{-2t}.
double alpha_bar(double t);

/// sqrt(abar) x0 + sqrt(1 - abar) eps with eps ~ N(0, I).
Tensor forward_sample(const Tensor& x0, double t, RngStream& rng);

/// Score callback: x is a batch [B, ...] evaluated at a single time.
using ScoreFn = std::function<Tensor(const Tensor& x, double t)>;

struct ChainOptions {
    bool keep_trajectory = false;
    /// Skip the noise on the final step (returns the chain mean for that step).
    bool noiseless_last_step = false;
};

struct Trajectory {
    Tensor final;
    /// states[j] is the state after j steps (states[0] = init); empty unless kept.
    std::vector<Tensor> states;
    std::size_t score_evaluations = 0;
};

/// x <- x + dt (x + 2 s(x, t_n)) + sqrt(2 dt) z for n = N, ..., 1.
Trajectory reverse_chain(const ScoreFn& score, const Schedule& schedule, RngStream& rng, const Tensor& init,
                         const ChainOptions& options = {});

/// Orthogonal map acting on the rows of a [B, d] batch.
class OrthogonalTransform {
public:
    virtual ~OrthogonalTransform() = default;
    virtual std::size_t dim() const = 0;
    virtual Tensor forward(const Tensor& rows) const = 0;
    virtual Tensor adjoint(const Tensor& rows) const = 0;
};

class IdentityTransform final : public OrthogonalTransform {
public:
    explicit IdentityTransform(std::size_t dim) : dim_(dim) {}
    std::size_t dim() const override { return dim_; }
    Tensor forward(const Tensor& rows) const override { return rows; }
    Tensor adjoint(const Tensor& rows) const override { return rows; }

private:
    std::size_t dim_;
};

/// Flattened multi-level Haar pyramid of an item of shape `item_shape`.
class HaarTransform final : public OrthogonalTransform {
public:
    HaarTransform(Shape item_shape, std::size_t levels);
    std::size_t dim() const override { return numel(shape_); }
    Tensor forward(const Tensor& rows) const override;
    Tensor adjoint(const Tensor& rows) const override;

private:
    Shape shape_;
    std::size_t levels_;
};

/// Explicit matrix; orthogonality is checked at construction (1e-10).
class MatrixTransform final : public OrthogonalTransform {
public:
    explicit MatrixTransform(gaussian::Matrix a);
    std::size_t dim() const override { return static_cast<std::size_t>(a_.rows()); }
    Tensor forward(const Tensor& rows) const override;
    Tensor adjoint(const Tensor& rows) const override;

private:
    gaussian::Matrix a_;
};

/// Same recursion in transformed coordinates. Noise is drawn in the original
/// coordinates from `rng` and mapped through `transform`, so with identical
/// streams the two chains are coupled path by path.
Trajectory wavelet_reverse_chain(const ScoreFn& score_wavelet, const Schedule& schedule, RngStream& rng,
                                 const Tensor& init, const OrthogonalTransform& transform,
                                 const ChainOptions& options = {});

/// Exact score of the OU marginals of a Gaussian, for [B, d] batches.
ScoreFn gaussian_score(const gaussian::GaussianSpec& p0);

/// Runs the spatial chain with the exact score and the transformed chain with
/// r(y) = A s(A^T y), sharing noise; returns max over steps of |A^T y_n - x_n|_inf.
double duality_check(const gaussian::GaussianSpec& p0, const Schedule& schedule, std::uint64_t seed,
                     const OrthogonalTransform& transform, std::size_t batch = 4);
/// Uses the Haar pyramid of a square single-channel image with d = side^2 pixels.
double duality_check(const gaussian::GaussianSpec& p0, const Schedule& schedule, std::uint64_t seed,
                     std::size_t levels = 1);

// ---------------------------------------------------------------------------
// Denoising score matching

struct DsmBatch {
    Tensor x0;
    Tensor xt;
    Tensor noise;
    Tensor target;
    std::vector<double> times;
    std::vector<double> weights;
};

/// Draws t uniformly from {t_1, ..., t_N} per item and noises x0 [B, ...].
DsmBatch dsm_batch(const Tensor& x0, const Schedule& schedule, RngStream& rng);

/// Score callback with a time per batch item.
using BatchScoreFn = std::function<Tensor(const Tensor& x, std::span<const double> times)>;

/// mean_b weight_b |s(xt_b, t_b) - target_b|^2, weight = 1 - abar.
double dsm_loss(const BatchScoreFn& score, const DsmBatch& batch);

struct ScoreNetConfig {
    enum class Arch { mlp, unet };
    Arch arch = Arch::unet;
    std::size_t width = 16;
    std::size_t depth = 2;
};

/// Score network with noise-prediction output: s(x, t) = net(x, t) / sqrt(1 - abar_t).
/// Time enters as two features (t / T, e^{-t}): extra columns for vector
/// items, constant extra channels for [C, H, W] items.
class ScoreModel {
public:
    ScoreModel(Shape item_shape, Schedule schedule, ScoreNetConfig cfg, std::uint64_t seed);
    ScoreModel(Shape item_shape, Schedule schedule, nn::Network net);

    static nn::NetworkSpec make_spec(const Shape& item_shape, const ScoreNetConfig& cfg);

    const Shape& item_shape() const noexcept { return item_shape_; }
    const Schedule& schedule() const noexcept { return schedule_; }
    nn::Network& network() noexcept { return net_; }
    const nn::Network& network() const noexcept { return net_; }

    Tensor time_features(std::span<const double> times, const Tensor& like) const;
    /// Score on the tape for x [B, ...] with per-item times.
    nn::Var score(const nn::BoundNetwork& bound, nn::Tape& tape, nn::Var x, std::span<const double> times) const;
    Tensor score(const Tensor& x, std::span<const double> times) const;
    Tensor score(const Tensor& x, double t) const;
    ScoreFn as_score_fn() const;

private:
    Shape item_shape_;
    Schedule schedule_;
    nn::Network net_;
};

struct DsmResult {
    double loss = 0.0;
    nn::ParameterSet gradients;
};

DsmResult dsm_loss(const ScoreModel& model, const DsmBatch& batch);
DsmResult dsm_loss(const ScoreModel& model, const Tensor& x0, RngStream& rng);

struct ScoreTrainConfig {
    std::size_t iterations = 2000;
    std::size_t batch = 64;
    double lr = 1e-4;
    std::uint64_t seed = 0;
    bool log_wall_time = false;
};

struct TrainLogRow {
    std::size_t iteration;
    double loss;
    double wall_ms;
};

struct ScoreTrainResult {
    std::vector<TrainLogRow> log;
    nn::Adam optimizer;
};

/// Adam on the DSM loss with minibatches drawn with replacement from data [M, ...].
ScoreTrainResult train_score(ScoreModel& model, const Tensor& data, const ScoreTrainConfig& cfg);

// ---------------------------------------------------------------------------
// Band signal-to-noise

struct BandSnr {
    static constexpr double infinite = std::numeric_limits<double>::infinity();
    std::vector<double> times;
    /// snr[b][i] for band b in (ll, lh, hl, hh) at times[i]; infinite at t = 0.
    std::array<std::vector<double>, 4> snr;
    /// Time at which the band's SNR reaches 1.
    std::array<double, 4> crossing{};
};

/// Ratio of expected signal energy abar |b|^2 to noise energy (1 - abar) n_b per level-1 band.
BandSnr band_snr(const Tensor& image, std::span<const double> times);

}  // namespace wmgm::diffusion
