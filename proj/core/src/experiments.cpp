// SPDX-License-Identifier: Apache-2.0
#include "wmgm/experiments.hpp"

#include <cmath>

#include "wmgm/error.hpp"
#include "wmgm/metrics.hpp"
#include "wmgm/wavelet.hpp"

namespace wmgm::experiments {

std::vector<KlRow> whitening_kl(const corpus::Corpus& corpus, std::size_t levels, std::size_t kl_size) {
    require(corpus.size() >= 2, "whitening statistics need at least two images");
    const Tensor batch = corpus.batch();
    const std::size_t side = batch.dim(3);
    require(kl_size >= 1 && side % kl_size == 0, "kl size ", kl_size, " does not divide image size ", side);
    require(kl_size % (std::size_t{1} << levels) == 0, "kl size ", kl_size, " is not divisible by 2^", levels);
    Tensor low = corpus::average_pool(batch, side / kl_size);
    std::vector<KlRow> rows;
    for (std::size_t k = 0; k <= levels; ++k) {
        if (k > 0) low = wavelet::dwt2(low).ll;
        const metrics::SampleStats s = metrics::sample_stats(low);
        rows.push_back({k, static_cast<std::size_t>(s.mean.size()), metrics::kl_to_standard_gaussian(s), s.ridge_path()});
    }
    return rows;
}

std::vector<SparsityRow> band_sparsity(const corpus::Corpus& corpus, std::size_t levels,
                                       std::span<const double> thresholds) {
    const wavelet::WaveletPyramid p = wavelet::decompose(corpus.batch(), levels);
    std::vector<SparsityRow> rows;
    for (std::size_t k = 1; k <= levels; ++k) {
        const double unit = 1.0 / std::pow(2.0, static_cast<double>(k));
        const wavelet::SubbandTriple& h = p.high(k);
        const Tensor all = wavelet::join_triple(h) * unit;
        const std::vector<std::pair<std::string, Tensor>> bands{
            {"lh", h.lh * unit}, {"hl", h.hl * unit}, {"hh", h.hh * unit}, {"all", all}};
        for (double t : thresholds)
            for (const auto& [name, band] : bands) rows.push_back({k, name, t, metrics::sparsity(band, t)});
    }
    return rows;
}

std::vector<std::size_t> dyadic_grid(std::size_t lo, std::size_t hi) {
    require(lo >= 1 && lo <= hi, "invalid step range ", lo, "..", hi);
    std::vector<std::size_t> g;
    for (std::size_t n = lo; n <= hi; n *= 2) g.push_back(n);
    return g;
}

Theorem1Sweep theorem1_sweep(const Theorem1Config& cfg) {
    require(cfg.dim >= 2, "dimension must be at least 2");
    require(cfg.horizon > 0, "horizon must be positive");
    require(cfg.eps > 0 && cfg.kl_tol > 0, "tolerances must be positive");
    const std::vector<std::size_t> steps = cfg.steps.empty() ? dyadic_grid(4, 4096) : cfg.steps;
    const gaussian::SpectrumSpec spec{cfg.dim, cfg.eta, cfg.lambda};
    Theorem1Sweep out;
    for (double kappa : cfg.kappas) {
        require(kappa >= 1, "condition numbers must be >= 1, got ", kappa);
        const gaussian::GaussianSpec g = gaussian::power_law_covariance(spec, kappa);
        std::size_t n_star = 0;
        for (std::size_t n : steps) {
            const double dt = cfg.horizon / static_cast<double>(n);
            const double kl = gaussian::exact_chain_kl(g, cfg.horizon, n);
            const gaussian::BoundReport b = gaussian::theorem1_bound(g, cfg.horizon, dt, cfg.eps);
            out.rows.push_back({kappa, cfg.horizon, n, dt, kl, b.psi_T, b.psi_dt, b.n_bound});
            if (n_star == 0 && kl / static_cast<double>(cfg.dim) <= cfg.kl_tol) n_star = n;
        }
        out.n_star.push_back(n_star);
    }
    return out;
}

FrechetReport frechet_images(const Tensor& real, const Tensor& fake, Features features, std::size_t q) {
    metrics::Matrix r = metrics::as_rows(real), f = metrics::as_rows(fake);
    require(r.cols() == f.cols(), "real and fake items differ in size: ", r.cols(), " vs ", f.cols());
    if (features == Features::pca) {
        const metrics::Matrix basis = metrics::pca_basis(r, q);
        r = r * basis;
        f = f * basis;
    }
    const metrics::FeatureStats a = metrics::feature_stats(r), b = metrics::feature_stats(f);
    return {metrics::frechet_distance(a.mean, a.covariance, b.mean, b.covariance), static_cast<std::size_t>(r.rows()),
            static_cast<std::size_t>(f.rows()), static_cast<std::size_t>(r.cols())};
}

}  // namespace wmgm::experiments
