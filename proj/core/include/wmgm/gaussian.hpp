// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <memory>

namespace wmgm {
class RngStream;
}

namespace wmgm::gaussian {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Gaussian with an immutable cached eigendecomposition of its covariance.
class GaussianSpec {
public:
    /// Covariance must be symmetric within 1e-12 (relative to its largest
    /// entry) with eigenvalues >= -1e-12; small negative eigenvalues are clamped to 0.
    GaussianSpec(Vector mean, Matrix covariance);

    static GaussianSpec centered(Matrix covariance);
    static GaussianSpec standard(std::size_t dim);

    std::size_t dim() const noexcept { return static_cast<std::size_t>(mean_.size()); }
    const Vector& mean() const noexcept { return mean_; }
    const Matrix& covariance() const noexcept { return cov_; }
    /// Ascending eigenvalues and matching orthonormal eigenvectors (columns).
    const Vector& eigenvalues() const noexcept { return eig_->values; }
    const Matrix& eigenvectors() const noexcept { return eig_->vectors; }

    bool singular() const;
    Matrix inverse() const;
    double log_det() const;
    /// L with L L^T = covariance.
    Matrix factor() const;
    Vector sample(RngStream& rng) const;

private:
    struct Eigen_ {
        Vector values;
        Matrix vectors;
    };
    Vector mean_;
    Matrix cov_;
    std::shared_ptr<const Eigen_> eig_;
};

struct SpectrumSpec {
    std::size_t side = 16;
    double eta = 1.0;
    double scale = 0.0;  // lambda; 0 selects 2*pi/side

    double resolved_scale() const;
};

/// Angular frequency of DFT index k on a length-L grid: 2*pi*min(k, L-k)/L.
double frequency(std::size_t k, std::size_t side);

/// S(omega_k) = 1 / (lambda^eta + |omega_k|^eta) for k = 0..L-1.
Vector power_spectrum(const SpectrumSpec& spec);

/// Orthonormal real Fourier basis as rows: constant, cos/sin pairs, alternating (even L).
/// Row r carries frequency index fourier_index(r, L).
Matrix real_fourier_basis(std::size_t side);
std::size_t fourier_index(std::size_t row, std::size_t side);

/// Circulant covariance U^T diag(S) U scaled to trace d.
GaussianSpec power_law_covariance(const SpectrumSpec& spec);
/// As above with the spectrum raised to the power ln(kappa)/ln(kappa_base), so
/// the condition number becomes exactly `kappa` while the ordering of the
/// spectrum is preserved.
GaussianSpec power_law_covariance(const SpectrumSpec& spec, double kappa);

double condition_number(const GaussianSpec& g);
double condition_number(const Matrix& covariance);

/// OU marginal at time t: mean e^{-t} mu, covariance e^{-2t} Sigma + (1 - e^{-2t}) I.
GaussianSpec ou_marginal(const GaussianSpec& p0, double t);

/// Exact score of the OU marginal at time t.
Vector analytic_score(const GaussianSpec& p0, double t, const Vector& x);
/// Log-density of a Gaussian (fails on a singular covariance).
double log_density(const GaussianSpec& g, const Vector& x);

/// KL(a || b); +inf when a is singular.
double kl_gaussian(const GaussianSpec& a, const GaussianSpec& b);

struct BoundReport {
    double psi_T = 0.0;
    double psi_dt = 0.0;
    double kappa = 1.0;
    double n_bound = 1.0;
};

/// f(t) = t - log(1 + t).
double bound_f(double t);

/// Explicit terms of the Gaussian step bound, evaluated per eigenvalue s of Sigma:
///   psi_T  = f(e^{-4T} |sum (s - 1) s|)
///   psi_dt = f(dt |sum 1/s - s log(s) / (2(s - 1)) + (1 - 1/s)/3|)
/// with log(s)/(s - 1) -> 1 at s = 1. n_bound = min_steps_bound(eps, kappa).
BoundReport theorem1_bound(const GaussianSpec& sigma, double T, double dt, double eps = 0.1);

/// eps^-2 kappa^3.
double min_steps_bound(double eps, double kappa);

struct ChainLaw {
    Vector mean;
    Matrix covariance;
};

/// Law of the discretized reverse chain started from N(0, I) when driven by
/// the exact score: step n = 0..N-1 uses the score at diffusion time
/// T - n*dt, giving x' = M x + c + sqrt(2 dt) z with M = (1 + dt) I - 2 dt Sigma_tau^{-1}.
ChainLaw exact_chain_law(const GaussianSpec& p0, double T, std::size_t N);
/// KL(p0 || chain law).
double exact_chain_kl(const GaussianSpec& p0, double T, std::size_t N);

}  // namespace wmgm::gaussian
