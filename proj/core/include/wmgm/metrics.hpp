// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "wmgm/gaussian.hpp"
#include "wmgm/tensor.hpp"

namespace wmgm::metrics {

using gaussian::Matrix;
using gaussian::Vector;

struct SampleStats {
    std::size_t count = 0;
    Vector mean;
    Matrix covariance;
    /// mean minus its scalar average.
    Vector norm_mean;
    /// Correlation matrix diag(cov)^{-1/2} cov diag(cov)^{-1/2}; rows of
    /// zero-variance coordinates are zero.
    Matrix norm_covariance;
    /// Coordinates with zero sample variance.
    std::vector<std::size_t> degenerate;

    bool ridge_path() const noexcept { return !degenerate.empty(); }
};

/// Statistics of samples [M, ...] flattened per item; M >= 2.
SampleStats sample_stats(const Tensor& samples);

/// 1/2 (tr S^-1 - d + m^T S^-1 m + ln det S) with S = norm_covariance + ridge I, m = norm_mean.
double kl_to_standard_gaussian(const SampleStats& stats, double ridge = 1e-6);

/// Fraction of coefficients with |c| <= thres.
double sparsity(const Tensor& band, double thres);

/// |mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1^{1/2} S2 S1^{1/2})^{1/2}).
double frechet_distance(const Vector& mu1, const Matrix& s1, const Vector& mu2, const Matrix& s2);

/// Square root of a symmetric PSD matrix via eigendecomposition, eigenvalues clamped at 0.
Matrix psd_sqrt(const Matrix& m);

struct FeatureStats {
    Vector mean;
    Matrix covariance;
};

/// Mean and (biased) covariance of feature rows.
FeatureStats feature_stats(const Matrix& rows);
/// Items of a batch [M, ...] as rows of a matrix.
Matrix as_rows(const Tensor& samples);
/// Top-q principal directions (columns) of the rows of `reference`.
Matrix pca_basis(const Matrix& reference, std::size_t q);

/// Radially averaged |DFT|^2 / (H W) of a square image (last two axes;
/// leading axes are averaged), binned by rounded integer radius 0..floor(L/sqrt2).
std::vector<double> radial_spectrum(const Tensor& image);

/// Least-squares slope of log(curve[r]) against log(r) for r in [r_lo, r_hi].
double loglog_slope(const std::vector<double>& curve, std::size_t r_lo, std::size_t r_hi);

}  // namespace wmgm::metrics
