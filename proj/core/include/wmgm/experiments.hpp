// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "wmgm/corpus.hpp"
#include "wmgm/diffusion.hpp"
#include "wmgm/gaussian.hpp"

namespace wmgm::experiments {

struct KlRow {
    std::size_t scale = 0;
    std::size_t dim = 0;
    double kl = 0.0;
    bool ridge = false;
};

/// KL to N(0, I) of normalized approximation-band statistics. Images are
/// average-pooled to kl_size first; scale 0 is the pooled image, scale k its
/// LL band at depth k.
std::vector<KlRow> whitening_kl(const corpus::Corpus& corpus, std::size_t levels, std::size_t kl_size = 16);

struct SparsityRow {
    std::size_t scale = 0;
    std::string band;  // lh, hl, hh or all
    double thres = 0.0;
    double value = 0.0;
};

/// Sparsity of the detail bands of every image at scales 1..levels. Bands at
/// scale k are divided by 2^k so that thresholds are in pixel units.
std::vector<SparsityRow> band_sparsity(const corpus::Corpus& corpus, std::size_t levels,
                                       std::span<const double> thresholds);

struct Theorem1Config {
    std::size_t dim = 16;
    double eta = 1.0;
    double lambda = 0.0;  // 0 selects 2*pi/dim
    std::vector<double> kappas{2.0, 8.0, 32.0};
    double horizon = 6.0;
    std::vector<std::size_t> steps;  // empty: 4, 8, ..., 4096
    double eps = 0.1;
    /// N* is the smallest step count with exact_kl / dim <= kl_tol.
    double kl_tol = 0.01;
};

struct Theorem1Row {
    double kappa;
    double horizon;
    std::size_t steps;
    double dt;
    double exact_kl;
    double psi_T;
    double psi_dt;
    double n_bound;
};

struct Theorem1Sweep {
    std::vector<Theorem1Row> rows;
    /// Per kappa, in input order; 0 when no grid point reaches the tolerance.
    std::vector<std::size_t> n_star;
};

std::vector<std::size_t> dyadic_grid(std::size_t lo, std::size_t hi);
Theorem1Sweep theorem1_sweep(const Theorem1Config& cfg);

enum class Features { pixels, pca };

struct FrechetReport {
    double distance = 0.0;
    std::size_t real_count = 0;
    std::size_t fake_count = 0;
    std::size_t dim = 0;
};

/// Frechet distance between Gaussian fits of two image batches [M, ...],
/// on raw pixels or on the top-q principal directions of the real batch.
FrechetReport frechet_images(const Tensor& real, const Tensor& fake, Features features, std::size_t q = 32);

}  // namespace wmgm::experiments
