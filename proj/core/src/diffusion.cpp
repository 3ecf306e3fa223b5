// SPDX-License-Identifier: Apache-2.0
#include "wmgm/diffusion.hpp"

#include <chrono>
#include <cmath>
#include <map>

#include "wmgm/error.hpp"
#include "wmgm/wavelet.hpp"

namespace wmgm::diffusion {

using gaussian::Matrix;
using gaussian::Vector;

Schedule::Schedule(double horizon, std::size_t steps) : T_(horizon), N_(steps) {
    require(std::isfinite(horizon) && horizon >= 0, "horizon must be finite and non-negative, got ", horizon);
    require(steps == 0 || horizon > 0, "a non-empty schedule needs a positive horizon");
    dt_ = steps == 0 ? 0.0 : horizon / static_cast<double>(steps);
}

double Schedule::time(std::size_t n) const {
    require(n <= N_, "grid index ", n, " outside 0..", N_);
    return n == N_ ? T_ : static_cast<double>(n) * dt_;
}

double alpha_bar(double t) { return std::exp(-2.0 * t); }

Tensor forward_sample(const Tensor& x0, double t, RngStream& rng) {
    require(t >= 0 && std::isfinite(t), "forward time must be non-negative, got ", t);
    if (t == 0.0) return x0;
    const double ab = alpha_bar(t);
    Tensor out = rng.normal(x0.shape());
    out *= std::sqrt(1.0 - ab);
    const double a = std::sqrt(ab);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += a * x0[i];
    return out;
}

namespace {

void euler_step(Tensor& x, const Tensor& s, const Tensor* noise, double dt) {
    const double sd = std::sqrt(2.0 * dt);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] += dt * (x[i] + 2.0 * s[i]);
        if (noise) x[i] += sd * (*noise)[i];
    }
}

template <class NoiseMap>
Trajectory run_chain(const ScoreFn& score, const Schedule& schedule, RngStream& rng, const Tensor& init,
                     const ChainOptions& options, NoiseMap&& map_noise) {
    init.require_finite("chain initial state");
    Trajectory tr;
    tr.final = init;
    if (options.keep_trajectory) tr.states.push_back(init);
    const double dt = schedule.dt();
    for (std::size_t n = schedule.steps(); n >= 1; --n) {
        const double t = schedule.time(n);
        const Tensor s = score(tr.final, t);
        ++tr.score_evaluations;
        require(s.shape() == tr.final.shape(), "score returned shape ", to_string(s.shape()), " for state ",
                to_string(tr.final.shape()));
        const bool noisy = !(options.noiseless_last_step && n == 1);
        if (noisy) {
            const Tensor z = map_noise(rng.normal(tr.final.shape()));
            euler_step(tr.final, s, &z, dt);
        } else {
            euler_step(tr.final, s, nullptr, dt);
        }
        require(tr.final.all_finite(), "chain state became non-finite at step ", n);
        if (options.keep_trajectory) tr.states.push_back(tr.final);
    }
    return tr;
}

}  // namespace

Trajectory reverse_chain(const ScoreFn& score, const Schedule& schedule, RngStream& rng, const Tensor& init,
                         const ChainOptions& options) {
    return run_chain(score, schedule, rng, init, options, [](Tensor z) { return z; });
}

Trajectory wavelet_reverse_chain(const ScoreFn& score_wavelet, const Schedule& schedule, RngStream& rng,
                                 const Tensor& init, const OrthogonalTransform& transform,
                                 const ChainOptions& options) {
    return run_chain(score_wavelet, schedule, rng, init, options,
                     [&](const Tensor& z) { return transform.forward(z); });
}

// ---------------------------------------------------------------------------
// Transforms

namespace {

std::size_t row_count(const Tensor& rows, std::size_t d) {
    require(rows.rank() == 2 && rows.dim(1) == d, "transform expects [B, ", d, "], got ", to_string(rows.shape()));
    return rows.dim(0);
}

}  // namespace

HaarTransform::HaarTransform(Shape item_shape, std::size_t levels) : shape_(std::move(item_shape)), levels_(levels) {
    require(shape_.size() >= 2, "haar transform needs an item with two spatial axes");
    const std::size_t m = std::size_t{1} << levels_;
    require(levels_ >= 1 && shape_[shape_.size() - 2] % m == 0 && shape_.back() % m == 0, "item shape ",
            to_string(shape_), " not divisible by 2^", levels_);
}

Tensor HaarTransform::forward(const Tensor& rows) const {
    const std::size_t d = dim(), B = row_count(rows, d);
    Tensor out(rows.shape());
    for (std::size_t b = 0; b < B; ++b) {
        const auto c = wavelet::analysis(rows.data().subspan(b * d, d), shape_, levels_);
        std::copy(c.begin(), c.end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * d));
    }
    return out;
}

Tensor HaarTransform::adjoint(const Tensor& rows) const {
    const std::size_t d = dim(), B = row_count(rows, d);
    Tensor out(rows.shape());
    for (std::size_t b = 0; b < B; ++b) {
        const auto c = wavelet::synthesis(rows.data().subspan(b * d, d), shape_, levels_);
        std::copy(c.begin(), c.end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * d));
    }
    return out;
}

MatrixTransform::MatrixTransform(Matrix a) : a_(std::move(a)) {
    require(a_.rows() == a_.cols() && a_.rows() > 0, "transform matrix must be square");
    const double dev = (a_ * a_.transpose() - Matrix::Identity(a_.rows(), a_.cols())).cwiseAbs().maxCoeff();
    require(dev <= 1e-10, "transform matrix is not orthogonal (deviation ", dev, ")");
}

namespace {

Tensor apply_rows(const Matrix& m, const Tensor& rows) {
    const auto d = m.rows();
    const std::size_t B = row_count(rows, static_cast<std::size_t>(d));
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> X(
        rows.data().data(), static_cast<Eigen::Index>(B), d);
    Tensor out(rows.shape());
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Y(
        out.data().data(), static_cast<Eigen::Index>(B), d);
    Y.noalias() = X * m.transpose();
    return out;
}

}  // namespace

Tensor MatrixTransform::forward(const Tensor& rows) const { return apply_rows(a_, rows); }
Tensor MatrixTransform::adjoint(const Tensor& rows) const { return apply_rows(a_.transpose(), rows); }

// ---------------------------------------------------------------------------
// Gaussian score and duality

ScoreFn gaussian_score(const gaussian::GaussianSpec& p0) {
    auto cache = std::make_shared<std::map<double, Matrix>>();
    return [p0, cache](const Tensor& x, double t) {
        const auto d = static_cast<Eigen::Index>(p0.dim());
        require(x.rank() == 2 && x.dim(1) == p0.dim(), "gaussian score expects [B, ", p0.dim(), "], got ",
                to_string(x.shape()));
        auto it = cache->find(t);
        if (it == cache->end()) {
            const double ab = alpha_bar(t);
            const Vector inv = (ab * p0.eigenvalues().array() + (1.0 - ab)).inverse().matrix();
            Matrix prec = p0.eigenvectors() * inv.asDiagonal() * p0.eigenvectors().transpose();
            it = cache->emplace(t, std::move(prec)).first;
        }
        const Matrix& prec = it->second;
        const Vector centre = std::exp(-t) * p0.mean();
        const auto B = static_cast<Eigen::Index>(x.dim(0));
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> X(x.data().data(),
                                                                                                    B, d);
        Tensor out(x.shape());
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Y(out.data().data(), B, d);
        Y.noalias() = -((X.rowwise() - centre.transpose()) * prec);
        return out;
    };
}

double duality_check(const gaussian::GaussianSpec& p0, const Schedule& schedule, std::uint64_t seed,
                     const OrthogonalTransform& transform, std::size_t batch) {
    require(transform.dim() == p0.dim(), "transform dimension ", transform.dim(), " differs from ", p0.dim());
    const ScoreFn s = gaussian_score(p0);
    const ScoreFn r = [&](const Tensor& y, double t) { return transform.forward(s(transform.adjoint(y), t)); };
    RngStream init_rng(seed, "duality/init");
    const Tensor x_init = init_rng.normal({batch, p0.dim()});
    ChainOptions opt;
    opt.keep_trajectory = true;
    RngStream noise_a(seed, "duality/noise");
    RngStream noise_b(seed, "duality/noise");
    const Trajectory spatial = reverse_chain(s, schedule, noise_a, x_init, opt);
    const Trajectory coeff = wavelet_reverse_chain(r, schedule, noise_b, transform.forward(x_init), transform, opt);
    double dev = 0.0;
    for (std::size_t n = 0; n < spatial.states.size(); ++n)
        dev = std::max(dev, max_abs_diff(transform.adjoint(coeff.states[n]), spatial.states[n]));
    return dev;
}

double duality_check(const gaussian::GaussianSpec& p0, const Schedule& schedule, std::uint64_t seed,
                     std::size_t levels) {
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(p0.dim()))));
    require(side * side == p0.dim(), "dimension ", p0.dim(), " is not a square image");
    const HaarTransform haar({1, side, side}, levels);
    return duality_check(p0, schedule, seed, haar);
}

// ---------------------------------------------------------------------------
// DSM

DsmBatch dsm_batch(const Tensor& x0, const Schedule& schedule, RngStream& rng) {
    require(schedule.steps() >= 1, "score matching needs a schedule with at least one step");
    require(x0.rank() >= 2, "score matching expects a batch [B, ...], got ", to_string(x0.shape()));
    x0.require_finite("score matching data");
    const std::size_t B = x0.dim(0), item = x0.size() / B;
    DsmBatch b;
    b.x0 = x0;
    b.times.resize(B);
    b.weights.resize(B);
    for (std::size_t i = 0; i < B; ++i) {
        b.times[i] = schedule.time(1 + rng.below(schedule.steps()));
        b.weights[i] = 1.0 - alpha_bar(b.times[i]);
    }
    b.noise = rng.normal(x0.shape());
    b.xt = Tensor(x0.shape());
    b.target = Tensor(x0.shape());
    for (std::size_t i = 0; i < B; ++i) {
        const double ab = alpha_bar(b.times[i]);
        const double a = std::sqrt(ab), sd = std::sqrt(1.0 - ab);
        for (std::size_t j = i * item; j < (i + 1) * item; ++j) {
            b.xt[j] = a * x0[j] + sd * b.noise[j];
            b.target[j] = -(b.xt[j] - a * x0[j]) / (1.0 - ab);
        }
    }
    return b;
}

double dsm_loss(const BatchScoreFn& score, const DsmBatch& batch) {
    const Tensor s = score(batch.xt, batch.times);
    require(s.shape() == batch.xt.shape(), "score returned shape ", to_string(s.shape()), ", expected ",
            to_string(batch.xt.shape()));
    const std::size_t B = batch.times.size(), item = s.size() / B;
    double total = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        double e = 0.0;
        for (std::size_t j = i * item; j < (i + 1) * item; ++j) {
            const double r = s[j] - batch.target[j];
            e += r * r;
        }
        total += batch.weights[i] * e;
    }
    const double loss = total / static_cast<double>(B);
    require(std::isfinite(loss), "score matching loss is not finite");
    return loss;
}

// ---------------------------------------------------------------------------
// ScoreModel

nn::NetworkSpec ScoreModel::make_spec(const Shape& item_shape, const ScoreNetConfig& cfg) {
    if (item_shape.size() == 1) {
        std::vector<std::size_t> hidden(cfg.depth, cfg.width);
        return nn::mlp_spec({item_shape[0], 2}, hidden, item_shape[0]);
    }
    require(item_shape.size() == 3, "score items must be vectors or [C, H, W], got ", to_string(item_shape));
    if (cfg.arch == ScoreNetConfig::Arch::mlp) fail("mlp score network needs vector items");
    nn::EncoderDecoderConfig ed;
    ed.input_channels = {item_shape[0], 2};
    ed.out_channels = item_shape[0];
    ed.width = cfg.width;
    ed.depth = cfg.depth;
    return nn::encoder_decoder_spec(ed);
}

ScoreModel::ScoreModel(Shape item_shape, Schedule schedule, ScoreNetConfig cfg, std::uint64_t seed)
    : item_shape_(std::move(item_shape)), schedule_(schedule), net_(make_spec(item_shape_, cfg), seed) {}

ScoreModel::ScoreModel(Shape item_shape, Schedule schedule, nn::Network net)
    : item_shape_(std::move(item_shape)), schedule_(schedule), net_(std::move(net)) {}

Tensor ScoreModel::time_features(std::span<const double> times, const Tensor& like) const {
    require(like.rank() == item_shape_.size() + 1, "score model expects [B, ", to_string(item_shape_), "], got ",
            to_string(like.shape()));
    for (std::size_t a = 0; a < item_shape_.size(); ++a)
        require(like.dim(a + 1) == item_shape_[a], "score model expects items of shape ", to_string(item_shape_),
                ", got ", to_string(like.shape()));
    const std::size_t B = like.dim(0);
    require(times.size() == B, "got ", times.size(), " times for a batch of ", B);
    const double T = schedule_.horizon() > 0 ? schedule_.horizon() : 1.0;
    if (item_shape_.size() == 1) {
        Tensor f({B, 2});
        for (std::size_t b = 0; b < B; ++b) {
            f.at(b, 0) = times[b] / T;
            f.at(b, 1) = std::exp(-times[b]);
        }
        return f;
    }
    const std::size_t H = item_shape_[1], W = item_shape_[2];
    Tensor f({B, 2, H, W});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < H * W; ++i) {
            f[(b * 2) * H * W + i] = times[b] / T;
            f[(b * 2 + 1) * H * W + i] = std::exp(-times[b]);
        }
    return f;
}

namespace {

Tensor inverse_sigma(std::span<const double> times, const Shape& shape) {
    Tensor c(shape);
    const std::size_t B = shape[0], item = c.size() / B;
    for (std::size_t b = 0; b < B; ++b) {
        require(times[b] > 0, "score queried at t = 0");
        const double v = 1.0 / std::sqrt(1.0 - alpha_bar(times[b]));
        std::fill(c.data().begin() + static_cast<std::ptrdiff_t>(b * item),
                  c.data().begin() + static_cast<std::ptrdiff_t>((b + 1) * item), v);
    }
    return c;
}

}  // namespace

nn::Var ScoreModel::score(const nn::BoundNetwork& bound, nn::Tape& tape, nn::Var x,
                          std::span<const double> times) const {
    const Shape shape = tape.value(x).shape();
    const nn::Var f = tape.constant(time_features(times, tape.value(x)));
    const nn::Var out = bound.forward({x, f});
    return nn::mul_const(tape, out, inverse_sigma(times, shape));
}

Tensor ScoreModel::score(const Tensor& x, std::span<const double> times) const {
    const Tensor out = net_.evaluate({x, time_features(times, x)});
    const Tensor c = inverse_sigma(times, x.shape());
    Tensor s(x.shape());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = out[i] * c[i];
    return s;
}

Tensor ScoreModel::score(const Tensor& x, double t) const {
    require(x.rank() >= 1, "score needs a batch");
    const std::vector<double> times(x.dim(0), t);
    return score(x, times);
}

ScoreFn ScoreModel::as_score_fn() const {
    return [this](const Tensor& x, double t) { return score(x, t); };
}

DsmResult dsm_loss(const ScoreModel& model, const DsmBatch& batch) {
    nn::Tape tape;
    const nn::BoundNetwork bound = model.network().bind(tape);
    const nn::Var x = tape.constant(batch.xt);
    const nn::Var s = model.score(bound, tape, x, batch.times);
    const nn::Var r = nn::sub(tape, s, tape.constant(batch.target));
    Tensor w(batch.xt.shape());
    const std::size_t B = batch.times.size(), item = w.size() / B;
    for (std::size_t b = 0; b < B; ++b)
        std::fill(w.data().begin() + static_cast<std::ptrdiff_t>(b * item),
                  w.data().begin() + static_cast<std::ptrdiff_t>((b + 1) * item),
                  batch.weights[b] / static_cast<double>(B));
    const nn::Var loss = nn::sum(tape, nn::mul_const(tape, nn::square(tape, r), w));
    DsmResult out;
    out.loss = tape.value(loss)[0];
    require(std::isfinite(out.loss), "score matching loss is not finite");
    tape.backward(loss);
    out.gradients = bound.gradients();
    return out;
}

DsmResult dsm_loss(const ScoreModel& model, const Tensor& x0, RngStream& rng) {
    return dsm_loss(model, dsm_batch(x0, model.schedule(), rng));
}

namespace {

Tensor gather_rows(const Tensor& data, std::span<const std::size_t> idx) {
    const std::size_t item = data.size() / data.dim(0);
    Shape s = data.shape();
    s[0] = idx.size();
    Tensor out(s);
    for (std::size_t b = 0; b < idx.size(); ++b)
        std::copy_n(data.data().begin() + static_cast<std::ptrdiff_t>(idx[b] * item), item,
                    out.data().begin() + static_cast<std::ptrdiff_t>(b * item));
    return out;
}

}  // namespace

ScoreTrainResult train_score(ScoreModel& model, const Tensor& data, const ScoreTrainConfig& cfg) {
    require(data.rank() == model.item_shape().size() + 1 && data.dim(0) > 0, "training data must be [M, ",
            to_string(model.item_shape()), "] with M > 0, got ", to_string(data.shape()));
    require(cfg.batch > 0, "batch size must be positive");
    ScoreTrainResult result{{}, nn::Adam({.lr = cfg.lr})};
    RngStream root(cfg.seed, "score-train");
    RngStream pick = root.derive("batch");
    RngStream noise = root.derive("noise");
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::size_t> idx(cfg.batch);
    for (std::size_t it = 1; it <= cfg.iterations; ++it) {
        for (auto& i : idx) i = pick.below(data.dim(0));
        const Tensor x0 = gather_rows(data, idx);
        DsmResult r;
        try {
            r = dsm_loss(model, x0, noise);
            result.optimizer.step(model.network().parameters(), r.gradients);
        } catch (const Error& e) {
            fail("score training iteration ", it, ": ", e.what());
        }
        double ms = 0.0;
        if (cfg.log_wall_time)
            ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        result.log.push_back({it, r.loss, ms});
    }
    return result;
}

// ---------------------------------------------------------------------------
// Band SNR

BandSnr band_snr(const Tensor& image, std::span<const double> times) {
    image.require_finite("band snr image");
    const wavelet::Subbands b = wavelet::dwt2(image);
    const std::array<const Tensor*, 4> bands{&b.ll, &b.detail.lh, &b.detail.hl, &b.detail.hh};
    BandSnr out;
    out.times.assign(times.begin(), times.end());
    for (std::size_t k = 0; k < 4; ++k) {
        const double energy = bands[k]->squared_norm();
        const double n = static_cast<double>(bands[k]->size());
        for (double t : times) {
            require(t >= 0 && std::isfinite(t), "snr time must be non-negative, got ", t);
            const double ab = alpha_bar(t);
            out.snr[k].push_back(t == 0 ? BandSnr::infinite : ab * energy / ((1.0 - ab) * n));
        }
        out.crossing[k] = 0.5 * std::log1p(energy / n);
    }
    return out;
}

}  // namespace wmgm::diffusion
