// SPDX-License-Identifier: Apache-2.0
#include "wmgm/metrics.hpp"

#include <cmath>
#include <complex>
#include <limits>
#include <unsupported/Eigen/FFT>

#include "wmgm/error.hpp"

namespace wmgm::metrics {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Matrix as_rows(const Tensor& samples) {
    require(samples.rank() >= 2, "samples must be a batch [M, ...], got ", to_string(samples.shape()));
    const auto M = static_cast<Eigen::Index>(samples.dim(0));
    const auto d = static_cast<Eigen::Index>(samples.size() / samples.dim(0));
    return Eigen::Map<const RowMatrix>(samples.data().data(), M, d);
}

SampleStats sample_stats(const Tensor& samples) {
    samples.require_finite("sample statistics input");
    const Matrix X = as_rows(samples);
    require(X.rows() >= 2, "sample statistics need at least two samples, got ", X.rows());
    SampleStats s;
    s.count = static_cast<std::size_t>(X.rows());
    const double m = static_cast<double>(X.rows());
    s.mean = X.colwise().sum().transpose() / m;
    s.covariance = (X.transpose() * X) / m - s.mean * s.mean.transpose();
    s.covariance = (0.5 * (s.covariance + s.covariance.transpose())).eval();
    s.norm_mean = s.mean.array() - s.mean.mean();
    const auto d = s.covariance.rows();
    Vector inv_sd(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        const double v = s.covariance(i, i);
        const double scale = std::max(1.0, s.mean.cwiseAbs()[i] * s.mean.cwiseAbs()[i]);
        if (v <= 1e-14 * scale) {
            s.degenerate.push_back(static_cast<std::size_t>(i));
            inv_sd[i] = 0.0;
        } else {
            inv_sd[i] = 1.0 / std::sqrt(v);
        }
    }
    s.norm_covariance = inv_sd.asDiagonal() * s.covariance * inv_sd.asDiagonal();
    for (Eigen::Index i = 0; i < d; ++i)
        if (inv_sd[i] != 0.0) s.norm_covariance(i, i) = 1.0;
    return s;
}

double kl_to_standard_gaussian(const SampleStats& stats, double ridge) {
    require(ridge >= 0, "ridge must be non-negative");
    const auto d = stats.norm_covariance.rows();
    const Matrix S = stats.norm_covariance + ridge * Matrix::Identity(d, d);
    Eigen::LLT<Matrix> llt(S);
    require(llt.info() == Eigen::Success, "normalized covariance is singular after ridge");
    const Matrix inv = llt.solve(Matrix::Identity(d, d));
    const Matrix L = llt.matrixL();
    const double logdet = 2.0 * L.diagonal().array().log().sum();
    const double kl = 0.5 * (inv.trace() - static_cast<double>(d) + stats.norm_mean.dot(inv * stats.norm_mean) + logdet);
    require(std::isfinite(kl), "KL is not finite");
    return kl;
}

double sparsity(const Tensor& band, double thres) {
    require(thres >= 0, "sparsity threshold must be non-negative, got ", thres);
    require(!band.empty(), "sparsity of an empty band");
    std::size_t n = 0;
    for (double v : band.data())
        if (std::abs(v) <= thres) ++n;
    return static_cast<double>(n) / static_cast<double>(band.size());
}

namespace {

// Eigenvalues at rounding level relative to the largest are treated as exact zeros.
Vector clamped_roots(const Vector& values) {
    const double top = values.size() ? std::max(values.maxCoeff(), 0.0) : 0.0;
    const double floor = static_cast<double>(values.size()) * std::numeric_limits<double>::epsilon() * top;
    return values.unaryExpr([floor](double v) { return v <= floor ? 0.0 : std::sqrt(v); });
}

}  // namespace

Matrix psd_sqrt(const Matrix& m) {
    require(m.rows() == m.cols(), "matrix square root needs a square matrix");
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
    require(es.info() == Eigen::Success, "eigendecomposition failed");
    const Vector r = clamped_roots(es.eigenvalues());
    return es.eigenvectors() * r.asDiagonal() * es.eigenvectors().transpose();
}

double frechet_distance(const Vector& mu1, const Matrix& s1, const Vector& mu2, const Matrix& s2) {
    const auto d = mu1.size();
    require(mu2.size() == d && s1.rows() == d && s1.cols() == d && s2.rows() == d && s2.cols() == d,
            "frechet distance dimension mismatch");
    const Matrix r1 = psd_sqrt(s1);
    const Matrix mid = r1 * s2 * r1;
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (mid + mid.transpose()), Eigen::EigenvaluesOnly);
    require(es.info() == Eigen::Success, "eigendecomposition failed");
    const double cross = clamped_roots(es.eigenvalues()).sum();
    const double fd = (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * cross;
    return std::max(fd, 0.0);
}

FeatureStats feature_stats(const Matrix& rows) {
    require(rows.rows() >= 2, "feature statistics need at least two rows");
    FeatureStats f;
    const double m = static_cast<double>(rows.rows());
    f.mean = rows.colwise().sum().transpose() / m;
    const Matrix c = rows.rowwise() - f.mean.transpose();
    f.covariance = (c.transpose() * c) / m;
    return f;
}

Matrix pca_basis(const Matrix& reference, std::size_t q) {
    const FeatureStats f = feature_stats(reference);
    const auto d = f.covariance.rows();
    require(q >= 1 && static_cast<Eigen::Index>(q) <= d, "pca dimension ", q, " outside 1..", d);
    Eigen::SelfAdjointEigenSolver<Matrix> es(f.covariance);
    require(es.info() == Eigen::Success, "eigendecomposition failed");
    return es.eigenvectors().rightCols(static_cast<Eigen::Index>(q)).rowwise().reverse();
}

std::vector<double> radial_spectrum(const Tensor& image) {
    require(image.rank() >= 2, "spectrum needs a 2D image");
    const std::size_t H = image.dim(image.rank() - 2), W = image.dim(image.rank() - 1);
    require(H == W, "spectrum needs a square image, got ", H, "x", W);
    const std::size_t L = H, planes = image.size() / (L * L);
    const auto bins = static_cast<std::size_t>(std::floor(static_cast<double>(L) / std::sqrt(2.0))) + 1;
    std::vector<double> power(bins, 0.0);
    std::vector<std::size_t> count(bins, 0);
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> buf(L), out(L);
    std::vector<std::complex<double>> grid(L * L);
    auto freq = [L](std::size_t k) { return static_cast<double>(std::min(k, L - k)); };
    for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t i = 0; i < L; ++i) {
            for (std::size_t j = 0; j < L; ++j) buf[j] = image[p * L * L + i * L + j];
            fft.fwd(out, buf);
            for (std::size_t j = 0; j < L; ++j) grid[i * L + j] = out[j];
        }
        for (std::size_t j = 0; j < L; ++j) {
            for (std::size_t i = 0; i < L; ++i) buf[i] = grid[i * L + j];
            fft.fwd(out, buf);
            for (std::size_t i = 0; i < L; ++i) grid[i * L + j] = out[i];
        }
        for (std::size_t i = 0; i < L; ++i)
            for (std::size_t j = 0; j < L; ++j) {
                const auto r = static_cast<std::size_t>(std::lround(std::hypot(freq(i), freq(j))));
                if (r >= bins) continue;
                power[r] += std::norm(grid[i * L + j]) / static_cast<double>(L * L);
                ++count[r];
            }
    }
    for (std::size_t r = 0; r < bins; ++r)
        if (count[r]) power[r] /= static_cast<double>(count[r]);
    return power;
}

double loglog_slope(const std::vector<double>& curve, std::size_t r_lo, std::size_t r_hi) {
    require(r_lo >= 1 && r_lo < r_hi && r_hi < curve.size(), "slope range ", r_lo, "..", r_hi, " invalid for ",
            curve.size(), " bins");
    double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
    for (std::size_t r = r_lo; r <= r_hi; ++r) {
        require(curve[r] > 0, "spectrum bin ", r, " is not positive");
        const double x = std::log(static_cast<double>(r)), y = std::log(curve[r]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        n += 1;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace wmgm::metrics
