// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one line per criterion, nonzero exit if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"
#include "wmgm/corpus.hpp"
#include "wmgm/diffusion.hpp"
#include "wmgm/experiments.hpp"
#include "wmgm/gaussian.hpp"
#include "wmgm/io.hpp"
#include "wmgm/metrics.hpp"
#include "wmgm/msal.hpp"
#include "wmgm/pipeline.hpp"
#include "wmgm/wavelet.hpp"

using namespace wmgm;
namespace fs = std::filesystem;
using gaussian::GaussianSpec;
using gaussian::Matrix;
using gaussian::Vector;
using wmgm::testing::random_tensor;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("wmgm_acceptance_" + name);
    fs::remove_all(p);
    return p;
}

// ---------------------------------------------------------------------------

Outcome wavelet_exactness() {
    RngStream rng(101, "c1");
    double round_trip = 0.0, energy = 0.0;
    for (int i = 0; i < 200; ++i) {
        const Tensor x = rng.normal({1, 64, 64});
        double ex = 0.0;
        for (double v : x.data()) ex += v * v;
        for (std::size_t s = 1; s <= 3; ++s) {
            const wavelet::WaveletPyramid p = wavelet::decompose(x, s);
            const Tensor back = wavelet::reconstruct(p);
            for (std::size_t j = 0; j < x.size(); ++j) round_trip = std::max(round_trip, std::abs(back[j] - x[j]));
            double ec = 0.0;
            for (double c : wavelet::flatten(p)) ec += c * c;
            energy = std::max(energy, std::abs(ec - ex) / ex);
        }
    }
    return {round_trip <= 1e-10 && energy <= 1e-9,
            fmt("max round-trip %.2e (<= 1e-10), max relative energy gap %.2e (<= 1e-9)", round_trip, energy)};
}

Outcome duality() {
    RngStream rng(102, "c2");
    double worst = 0.0;
    int combos = 0;
    const double kappas[] = {2.0, 8.0, 32.0, 4.0, 16.0};
    for (int i = 0; i < 20; ++i) {
        const bool big = i % 2 == 1;
        const std::size_t side = big ? 8 : 4;
        const GaussianSpec p0 = gaussian::power_law_covariance({side * side, 1.0, 0.0}, kappas[i % 5]);
        const double T = 1.0 + static_cast<double>(i % 4) * 1.5;
        const std::size_t N = std::size_t{8} << (i % 3);
        const std::size_t levels = 1 + static_cast<std::size_t>(i) % (big ? 3 : 2);
        worst = std::max(worst, diffusion::duality_check(p0, diffusion::Schedule(T, N), rng.next_u64(), levels));
        ++combos;
    }
    return {worst <= 1e-8, fmt("max deviation %.2e over %d combinations (<= 1e-8)", worst, combos)};
}

Outcome theorem1_trends() {
    experiments::Theorem1Config cfg;
    cfg.dim = 16;
    cfg.eta = 1.0;
    cfg.kappas = {2.0, 8.0, 32.0};
    cfg.horizon = 6.0;
    cfg.steps = experiments::dyadic_grid(4, 4096);
    const experiments::Theorem1Sweep sw = experiments::theorem1_sweep(cfg);
    bool monotone = true;
    const std::size_t per = cfg.steps.size();
    for (std::size_t k = 0; k < cfg.kappas.size(); ++k)
        for (std::size_t j = 1; j < per; ++j)
            monotone = monotone && sw.rows[k * per + j].exact_kl < sw.rows[k * per + j - 1].exact_kl;
    const auto& ns = sw.n_star;
    const bool reached = std::all_of(ns.begin(), ns.end(), [](std::size_t n) { return n > 0; });
    const bool ordered = reached && std::is_sorted(ns.begin(), ns.end()) && ns.back() >= 2 * ns.front();

    const GaussianSpec p = gaussian::power_law_covariance({16, 1.0, 0.0}, 8.0);
    std::vector<double> by_T, by_dt;
    for (double T : {1.0, 2.0, 4.0, 8.0}) by_T.push_back(gaussian::theorem1_bound(p, T, 0.01).psi_T);
    for (double dt : {0.1, 0.01, 0.001, 0.0001}) by_dt.push_back(gaussian::theorem1_bound(p, 6.0, dt).psi_dt);
    auto vanishing = [](const std::vector<double>& v) {
        for (std::size_t i = 1; i < v.size(); ++i)
            if (!(v[i] < v[i - 1])) return false;
        return v.back() <= 1e-3 * v.front();
    };
    const bool terms = vanishing(by_T) && vanishing(by_dt);
    return {monotone && ordered && terms,
            fmt("KL decreasing in N: %s; N* = %zu, %zu, %zu for kappa 2, 8, 32; psi_T %.1e -> %.1e; "
                "psi_dt %.1e -> %.1e",
                monotone ? "yes" : "no", ns[0], ns[1], ns[2], by_T.front(), by_T.back(), by_dt.front(),
                by_dt.back())};
}

Outcome score_learning() {
    const double angle = std::numbers::pi / 6.0;
    Matrix rot(2, 2);
    rot << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    Vector spread(2);
    spread << 1.6, 0.4;
    const Matrix cov = rot * spread.asDiagonal() * rot.transpose();
    const GaussianSpec p0 = GaussianSpec::centered(cov);
    const Matrix chol = cov.llt().matrixL();

    RngStream rng(104, "c4");
    const std::size_t M = 8192;
    Tensor data({M, 2});
    for (std::size_t i = 0; i < M; ++i) {
        const double a = rng.normal(), b = rng.normal();
        data[2 * i] = chol(0, 0) * a;
        data[2 * i + 1] = chol(1, 0) * a + chol(1, 1) * b;
    }
    const diffusion::Schedule schedule(1.0, 16);
    diffusion::ScoreModel model({2}, schedule, {.arch = diffusion::ScoreNetConfig::Arch::mlp, .width = 64, .depth = 2},
                                4);
    diffusion::train_score(model, data, {.iterations = 2000, .batch = 64, .lr = 1e-4, .seed = 4});

    Tensor grid({100, 2});
    for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t j = 0; j < 10; ++j) {
            grid[2 * (10 * i + j)] = -1.5 + i / 3.0;
            grid[2 * (10 * i + j) + 1] = -1.5 + j / 3.0;
        }
    double mean_err = 0.0;
    for (std::size_t n = 2; n <= 16; n += 2) {
        const double t = n * schedule.dt();
        const Tensor learned = model.score(grid, t);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < 100; ++i) {
            Vector x(2);
            x << grid[2 * i], grid[2 * i + 1];
            const Vector exact = gaussian::analytic_score(p0, t, x);
            for (int c = 0; c < 2; ++c) {
                num += std::pow(learned[2 * i + c] - exact(c), 2);
                den += exact(c) * exact(c);
            }
        }
        mean_err += std::sqrt(num / den) / 8.0;
    }

    diffusion::ScoreModel small({2}, schedule, {.arch = diffusion::ScoreNetConfig::Arch::mlp, .width = 6, .depth = 2},
                                5);
    const diffusion::DsmBatch batch = diffusion::dsm_batch(random_tensor({6, 2}, rng), schedule, rng);
    const diffusion::DsmResult r = diffusion::dsm_loss(small, batch);
    double worst = 0.0;
    for (auto& [name, p] : small.network().parameters()) {
        Tensor numeric(p.shape());
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double keep = p[i], h = 1e-5;
            p[i] = keep + h;
            const double up = diffusion::dsm_loss(small, batch).loss;
            p[i] = keep - h;
            const double down = diffusion::dsm_loss(small, batch).loss;
            p[i] = keep;
            numeric[i] = (up - down) / (2 * h);
        }
        worst = std::max(worst, wmgm::testing::relative_error(r.gradients.at(name), numeric));
    }
    return {mean_err <= 0.2 && worst <= 1e-4,
            fmt("mean relative L2 error %.3f (<= 0.2) after 2000 iterations; DSM gradient check %.1e (<= 1e-4)",
                mean_err, worst)};
}

Outcome sampling_closure() {
    const GaussianSpec p0 = gaussian::power_law_covariance({8, 1.0, 0.0}, 4.0);
    const diffusion::Schedule schedule(6.0, 512);
    const std::size_t runs = 10000;
    RngStream rng(105, "c5");
    const Tensor init = rng.normal({runs, 8});
    const Tensor out = diffusion::reverse_chain(diffusion::gaussian_score(p0), schedule, rng, init).final;
    const metrics::FeatureStats st = metrics::feature_stats(metrics::as_rows(out));
    const Matrix emp = st.covariance * (static_cast<double>(runs) / (runs - 1));
    const Matrix& sigma = p0.covariance();
    const Matrix law = gaussian::exact_chain_law(p0, schedule.horizon(), schedule.steps()).covariance;
    const double rel = (emp - sigma).norm() / sigma.norm();
    double expected_sq = 0.0;
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) expected_sq += (law(i, i) * law(j, j) + law(i, j) * law(i, j)) / runs;
    const double gap = (emp - law).norm(), allowed = 3.0 * std::sqrt(expected_sq);
    return {rel <= 0.05 && gap <= allowed,
            fmt("Frobenius-relative error to Sigma %.4f (<= 0.05); distance to propagated law %.4f (<= 3 SE = %.4f)",
                rel, gap, allowed)};
}

corpus::Corpus toy_corpus() {
    corpus::SynthConfig sc;
    sc.size = 32;
    return corpus::synth_corpus(500, sc, 106);
}

Outcome whitening() {
    const auto rows = experiments::whitening_kl(toy_corpus(), 2);
    bool dec = true;
    for (std::size_t k = 1; k < rows.size(); ++k) dec = dec && rows[k].kl < rows[k - 1].kl;
    return {dec && rows.size() == 3,
            fmt("KL to N(0, I): %.1f (scale 0), %.1f (scale 1), %.1f (scale 2)", rows[0].kl, rows[1].kl, rows[2].kl)};
}

Outcome sparsity() {
    const double thres[] = {0.05};
    const auto rows = experiments::band_sparsity(toy_corpus(), 2, thres);
    bool pass = true;
    std::string detail;
    for (const char* band : {"lh", "hl", "hh", "all"}) {
        double prev = 0.0;
        detail += std::string(detail.empty() ? "" : "; ") + band;
        for (const auto& r : rows) {
            if (r.band != band) continue;
            pass = pass && r.value >= 0.5 && r.value >= prev;
            prev = r.value;
            detail += fmt(" %.3f", r.value);
        }
    }
    return {pass, "sparsity at 0.05 by scale: " + detail};
}

Outcome band_snr_ordering() {
    const Tensor image = io::to_tensor(io::read_pnm(fs::path(WMGM_TEST_DATA_DIR) / "scene64.pgm"));
    std::vector<double> times(2001);
    for (std::size_t i = 0; i < times.size(); ++i) times[i] = 2.0 * i / (times.size() - 1);
    const auto c = diffusion::band_snr(image, times).crossing;
    const bool pass = c[3] <= std::min(c[1], c[2]) && std::max(c[1], c[2]) <= c[0];
    return {pass, fmt("SNR = 1 crossing times: HH %.4f, LH %.4f, HL %.4f, LL %.4f", c[3], c[1], c[2], c[0])};
}

Outcome msal_training() {
    corpus::SynthConfig sc;
    sc.size = 16;
    const corpus::Corpus c = corpus::synth_corpus(256, sc, 109);
    const pipeline::Factorized f = pipeline::factorize(c, 2);
    msal::MsalModel model(msal::Mode::ms, 2, {}, 9);
    msal::MsalTrainConfig cfg;
    cfg.seed = 9;
    const msal::MsalTrainResult r = msal::train_msal(model, f.pyramids, cfg);
    bool finite = true;
    for (const auto& row : r.log) finite = finite && std::isfinite(row.loss_g) && std::isfinite(row.loss_d);
    const std::size_t E = r.log.size() - 1;
    double smoothed = 0.0;
    for (std::size_t e = E - 4; e <= E; ++e) smoothed += r.log[e].loss_g / 5.0;
    const double first = r.log[1].loss_g;
    const double ssim0 = r.log[0].ssim_val, ssim1 = r.log[E].ssim_val;
    const msal::MsalModel ss(msal::Mode::ss, 2, {}, 9);
    const std::size_t pm = model.generator_parameter_count(), ps = ss.generator_parameter_count();
    const bool pass = E == 30 && finite && smoothed < first && ssim1 > ssim0 && 2 * pm == ps;
    return {pass, fmt("%zu epochs, losses finite: %s; generator loss epoch 1 %.4f -> last-5 mean %.4f; "
                      "mean SSIM %.4f -> %.4f; generator parameters MS %zu, SS %zu",
                      E, finite ? "yes" : "no", first, smoothed, ssim0, ssim1, pm, ps)};
}

Outcome end_to_end() {
    auto make_cfg = [](std::size_t levels) {
        config::RunConfig cfg = config::RunConfig::parse(
            "image_size=16\nseed=10\nscore.width=8\nscore.depth=1\nmsal.gen_width=8\nmsal.gen_depth=1\n"
            "msal.critic_width=8\nmsal.critic_depth=1\n");
        cfg.set("levels", std::to_string(levels));
        cfg.set("outdir", scratch("e2e").string());
        return cfg;
    };
    const pipeline::WmgmBundle b2 = pipeline::make_bundle(make_cfg(2));

    corpus::SynthConfig sc;
    sc.size = 16;
    const corpus::Corpus held = corpus::synth_corpus(1, sc, 1010);
    const pipeline::Factorized f = pipeline::factorize(held, 2);
    pipeline::Components oracle;
    oracle.coarse = [&](std::size_t, RngStream&) { return f.coarse; };
    oracle.detail = [&](std::size_t k, const Tensor&, const Tensor&) {
        const auto& t = f.pyramids[0].high(k);
        const Shape s{1, 1, t.lh.dim(1), t.lh.dim(2)};
        return wavelet::SubbandTriple{t.lh.reshaped(s), t.hl.reshaped(s), t.hh.reshaped(s)};
    };
    const Tensor back = pipeline::sample(b2, 1, 0, oracle).images;
    double closure = 0.0;
    for (std::size_t j = 0; j < back.size(); ++j) closure = std::max(closure, std::abs(back[j] - held.images[0][j]));

    auto bytes_of = [&](std::uint64_t seed, const std::string& name) {
        const fs::path dir = scratch(name);
        pipeline::export_images(pipeline::sample(b2, 4, seed).images, dir, {"acceptance", "", seed, {}});
        std::string all;
        for (int i = 0; i < 4; ++i) {
            std::ifstream in(dir / fmt("sample_%05d.pgm", i), std::ios::binary);
            all.append(std::istreambuf_iterator<char>(in), {});
        }
        return all;
    };
    const std::string a = bytes_of(7, "e2e_a"), a2 = bytes_of(7, "e2e_b");
    const bool repro = !a.empty() && a == a2;

    std::vector<std::size_t> counts;
    for (std::size_t levels : {1, 2}) counts.push_back(pipeline::sample(pipeline::make_bundle(make_cfg(levels)), 2, 3).score_evaluations);
    const bool count_ok = std::all_of(counts.begin(), counts.end(), [](std::size_t n) { return n == 16; });
    return {closure <= 1e-9 && repro && count_ok,
            fmt("oracle closure error %.1e (<= 1e-9); seeded samples byte-identical: %s; score evaluations "
                "%zu (S = 1), %zu (S = 2)",
                closure, repro ? "yes" : "no", counts[0], counts[1])};
}

Outcome metric_identities() {
    RngStream rng(111, "c11");
    const std::size_t d = 8;
    Vector mu(d);
    for (std::size_t i = 0; i < d; ++i) mu(i) = rng.normal();
    const Matrix I = Matrix::Identity(d, d);
    const double fd = metrics::frechet_distance(Vector::Zero(d), I, mu, I);
    const double fd_err = std::abs(fd - mu.squaredNorm());
    const Tensor x = rng.normal({1, 32, 32});
    const double ssim_err = std::abs(msal::ssim(x, x) - 1.0);
    Matrix a = Matrix::Random(d, d);
    const GaussianSpec g(mu, a * a.transpose() + 0.1 * I);
    const double kl = std::abs(gaussian::kl_gaussian(g, g));
    return {fd_err <= 1e-8 && ssim_err <= 1e-9 && kl <= 1e-10,
            fmt("|FD - |mu|^2| %.1e (<= 1e-8); |ssim(x,x) - 1| %.1e (<= 1e-9); KL(a,a) %.1e (<= 1e-10)", fd_err,
                ssim_err, kl)};
}

struct Criterion {
    const char* name;
    double limit_s;
    std::function<Outcome()> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {"wavelet exactness", 5, wavelet_exactness},
        {"spatial/wavelet chain duality", 10, duality},
        {"step-count trends for power-law Gaussians", 30, theorem1_trends},
        {"score learning vs analytic score", 300, score_learning},
        {"Gaussian sampling closure", 120, sampling_closure},
        {"whitening across scales", 60, whitening},
        {"high-band sparsity across scales", 60, sparsity},
        {"band SNR ordering", 10, band_snr_ordering},
        {"adversarial detail training", 600, msal_training},
        {"end-to-end sampling", 60, end_to_end},
        {"metric identities", 5, metric_identities},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto& c = criteria[i];
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = secs < c.limit_s;
        const bool pass = o.pass && in_time;
        failures += !pass;
        std::printf("[%s] %2zu %s: %s; %.2f s (< %.0f s)\n", pass ? "PASS" : "FAIL", i + 1, c.name, o.detail.c_str(),
                    secs, c.limit_s);
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
