// SPDX-License-Identifier: Apache-2.0
#include "wmgm/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "wmgm/error.hpp"
#include "wmgm/rng.hpp"

namespace wmgm::gaussian {

namespace {

bool all_finite(const Matrix& m) { return m.allFinite(); }

double singular_floor(const Vector& ev) {
    const double top = ev.size() ? std::max(1.0, ev.maxCoeff()) : 1.0;
    return 1e-14 * top;
}

}  // namespace

GaussianSpec::GaussianSpec(Vector mean, Matrix covariance) : mean_(std::move(mean)), cov_(std::move(covariance)) {
    const auto d = mean_.size();
    require(d > 0, "gaussian needs positive dimension");
    require(cov_.rows() == d && cov_.cols() == d, "covariance is ", cov_.rows(), "x", cov_.cols(), ", expected ", d,
            "x", d);
    require(mean_.allFinite() && all_finite(cov_), "gaussian parameters must be finite");
    const double scale = std::max(1.0, cov_.cwiseAbs().maxCoeff());
    const double asym = (cov_ - cov_.transpose()).cwiseAbs().maxCoeff();
    require(asym <= 1e-12 * scale, "covariance is not symmetric (max deviation ", asym, ")");
    cov_ = (0.5 * (cov_ + cov_.transpose())).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov_);
    require(es.info() == Eigen::Success, "covariance eigendecomposition failed");
    auto e = std::make_shared<Eigen_>();
    e->values = es.eigenvalues();
    e->vectors = es.eigenvectors();
    for (Eigen::Index i = 0; i < d; ++i) {
        require(e->values[i] >= -1e-12 * scale, "covariance has negative eigenvalue ", e->values[i]);
        e->values[i] = std::max(e->values[i], 0.0);
    }
    eig_ = std::move(e);
}

GaussianSpec GaussianSpec::centered(Matrix covariance) {
    Vector mu = Vector::Zero(covariance.rows());
    return GaussianSpec(std::move(mu), std::move(covariance));
}

GaussianSpec GaussianSpec::standard(std::size_t dim) {
    const auto d = static_cast<Eigen::Index>(dim);
    return GaussianSpec(Vector::Zero(d), Matrix::Identity(d, d));
}

bool GaussianSpec::singular() const { return eigenvalues().minCoeff() <= singular_floor(eigenvalues()); }

Matrix GaussianSpec::inverse() const {
    require(!singular(), "covariance is singular (smallest eigenvalue ", eigenvalues().minCoeff(), ")");
    return eigenvectors() * eigenvalues().cwiseInverse().asDiagonal() * eigenvectors().transpose();
}

double GaussianSpec::log_det() const {
    if (singular()) return -std::numeric_limits<double>::infinity();
    return eigenvalues().array().log().sum();
}

Matrix GaussianSpec::factor() const { return eigenvectors() * eigenvalues().cwiseSqrt().asDiagonal(); }

Vector GaussianSpec::sample(RngStream& rng) const {
    Vector z(mean_.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    return mean_ + factor() * z;
}

double SpectrumSpec::resolved_scale() const {
    return scale > 0 ? scale : 2.0 * std::numbers::pi / static_cast<double>(side);
}

double frequency(std::size_t k, std::size_t side) {
    return 2.0 * std::numbers::pi * static_cast<double>(std::min(k, side - k)) / static_cast<double>(side);
}

Vector power_spectrum(const SpectrumSpec& spec) {
    require(spec.side >= 2, "spectrum side must be at least 2, got ", spec.side);
    require(spec.eta > 0 && std::isfinite(spec.eta), "spectral exponent must be positive");
    const double lam = spec.resolved_scale();
    require(lam > 0 && std::isfinite(lam), "spectral scale must be positive");
    Vector s(static_cast<Eigen::Index>(spec.side));
    for (std::size_t k = 0; k < spec.side; ++k)
        s[static_cast<Eigen::Index>(k)] = 1.0 / (std::pow(lam, spec.eta) + std::pow(frequency(k, spec.side), spec.eta));
    return s;
}

std::size_t fourier_index(std::size_t row, std::size_t side) {
    // rows: 0 -> k=0; 2j-1 -> cos k=j; 2j -> sin k=j; last row of even L -> k=L/2
    require(row < side, "basis row ", row, " outside side ", side);
    if (row == 0) return 0;
    return (row + 1) / 2;
}

Matrix real_fourier_basis(std::size_t side) {
    const auto L = static_cast<Eigen::Index>(side);
    Matrix U(L, L);
    const double n = static_cast<double>(side);
    for (Eigen::Index r = 0; r < L; ++r) {
        const auto k = static_cast<double>(fourier_index(static_cast<std::size_t>(r), side));
        for (Eigen::Index m = 0; m < L; ++m) {
            const double phase = 2.0 * std::numbers::pi * k * static_cast<double>(m) / n;
            if (r == 0)
                U(r, m) = 1.0 / std::sqrt(n);
            else if (side % 2 == 0 && r == L - 1)
                U(r, m) = (m % 2 == 0 ? 1.0 : -1.0) / std::sqrt(n);
            else if (r % 2 == 1)
                U(r, m) = std::sqrt(2.0 / n) * std::cos(phase);
            else
                U(r, m) = std::sqrt(2.0 / n) * std::sin(phase);
        }
    }
    return U;
}

namespace {

GaussianSpec circulant_from(const Vector& spectrum_by_row, std::size_t side) {
    const Matrix U = real_fourier_basis(side);
    Vector s = spectrum_by_row * (static_cast<double>(side) / spectrum_by_row.sum());
    Matrix cov = U.transpose() * s.asDiagonal() * U;
    cov = (0.5 * (cov + cov.transpose())).eval();
    return GaussianSpec::centered(std::move(cov));
}

Vector spectrum_by_row(const SpectrumSpec& spec) {
    const Vector s = power_spectrum(spec);
    Vector out(s.size());
    for (Eigen::Index r = 0; r < s.size(); ++r)
        out[r] = s[static_cast<Eigen::Index>(fourier_index(static_cast<std::size_t>(r), spec.side))];
    return out;
}

}  // namespace

GaussianSpec power_law_covariance(const SpectrumSpec& spec) { return circulant_from(spectrum_by_row(spec), spec.side); }

GaussianSpec power_law_covariance(const SpectrumSpec& spec, double kappa) {
    require(kappa >= 1 && std::isfinite(kappa), "target condition number must be >= 1, got ", kappa);
    const Vector s = spectrum_by_row(spec);
    const double base = s.maxCoeff() / s.minCoeff();
    if (kappa == 1.0) return circulant_from(Vector::Ones(s.size()), spec.side);
    require(base > 1.0 + 1e-12, "base spectrum is flat; cannot scale to condition number ", kappa);
    const double gamma = std::log(kappa) / std::log(base);
    return circulant_from(s.array().pow(gamma).matrix(), spec.side);
}

double condition_number(const GaussianSpec& g) {
    require(!g.singular(), "condition number of a singular covariance");
    return g.eigenvalues().maxCoeff() / g.eigenvalues().minCoeff();
}

double condition_number(const Matrix& covariance) { return condition_number(GaussianSpec::centered(covariance)); }

GaussianSpec ou_marginal(const GaussianSpec& p0, double t) {
    require(t >= 0 && std::isfinite(t), "time must be finite and non-negative, got ", t);
    const double abar = std::exp(-2.0 * t);
    const auto d = static_cast<Eigen::Index>(p0.dim());
    return GaussianSpec(std::exp(-t) * p0.mean(),
                        abar * p0.covariance() + (1.0 - abar) * Matrix::Identity(d, d));
}

Vector analytic_score(const GaussianSpec& p0, double t, const Vector& x) {
    require(static_cast<std::size_t>(x.size()) == p0.dim(), "score point has dimension ", x.size(), ", expected ",
            p0.dim());
    const GaussianSpec pt = ou_marginal(p0, t);
    return -(pt.inverse() * (x - pt.mean()));
}

double log_density(const GaussianSpec& g, const Vector& x) {
    const Vector r = x - g.mean();
    const double q = r.dot(g.inverse() * r);
    return -0.5 * (q + g.log_det() + static_cast<double>(g.dim()) * std::log(2.0 * std::numbers::pi));
}

double kl_gaussian(const GaussianSpec& a, const GaussianSpec& b) {
    require(a.dim() == b.dim(), "KL between dimensions ", a.dim(), " and ", b.dim());
    const Matrix bi = b.inverse();
    if (a.singular()) return std::numeric_limits<double>::infinity();
    const Vector dm = b.mean() - a.mean();
    const double tr = (bi * a.covariance()).trace();
    const double kl =
        0.5 * (tr - static_cast<double>(a.dim()) + dm.dot(bi * dm) + b.log_det() - a.log_det());
    return std::max(kl, 0.0);
}

double bound_f(double t) {
    require(t > -1, "bound function needs t > -1");
    return t - std::log1p(t);
}

namespace {

double log_ratio(double s) {
    // log(s) / (s - 1), continuous at s = 1
    const double u = s - 1.0;
    if (std::abs(u) < 1e-6) return 1.0 - u / 2.0 + u * u / 3.0;
    return std::log(s) / u;
}

}  // namespace

BoundReport theorem1_bound(const GaussianSpec& sigma, double T, double dt, double eps) {
    require(T > 0 && std::isfinite(T), "horizon must be positive");
    require(dt > 0 && std::isfinite(dt), "step must be positive");
    const Vector& ev = sigma.eigenvalues();
    require(ev.minCoeff() > 0, "bound needs positive eigenvalues, smallest is ", ev.minCoeff());
    double tr_T = 0.0, tr_dt = 0.0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        const double s = ev[i];
        tr_T += (s - 1.0) * s;
        tr_dt += 1.0 / s - 0.5 * s * log_ratio(s) + (1.0 - 1.0 / s) / 3.0;
    }
    BoundReport r;
    r.psi_T = bound_f(std::exp(-4.0 * T) * std::abs(tr_T));
    r.psi_dt = bound_f(dt * std::abs(tr_dt));
    r.kappa = ev.maxCoeff() / ev.minCoeff();
    r.n_bound = min_steps_bound(eps, r.kappa);
    return r;
}

double min_steps_bound(double eps, double kappa) {
    require(eps > 0, "eps must be positive, got ", eps);
    require(kappa >= 1, "condition number must be >= 1, got ", kappa);
    return kappa * kappa * kappa / (eps * eps);
}

ChainLaw exact_chain_law(const GaussianSpec& p0, double T, std::size_t N) {
    require(N >= 1, "chain needs at least one step");
    require(T > 0 && std::isfinite(T), "horizon must be positive");
    const auto d = static_cast<Eigen::Index>(p0.dim());
    const double dt = T / static_cast<double>(N);
    const Matrix I = Matrix::Identity(d, d);
    const Matrix& U = p0.eigenvectors();
    const Vector& s = p0.eigenvalues();
    ChainLaw law{Vector::Zero(d), I};
    for (std::size_t n = 0; n < N; ++n) {
        const double tau = T - static_cast<double>(n) * dt;
        const double abar = std::exp(-2.0 * tau);
        const Vector inv = (abar * s.array() + (1.0 - abar)).inverse().matrix();
        const Matrix prec = U * inv.asDiagonal() * U.transpose();
        const Matrix M = (1.0 + dt) * I - 2.0 * dt * prec;
        law.mean = M * law.mean + 2.0 * dt * std::exp(-tau) * (prec * p0.mean());
        law.covariance = M * law.covariance * M.transpose() + 2.0 * dt * I;
        law.covariance = (0.5 * (law.covariance + law.covariance.transpose())).eval();
        require(law.covariance.allFinite() && law.mean.allFinite(), "chain law diverged at step ", n);
    }
    return law;
}

double exact_chain_kl(const GaussianSpec& p0, double T, std::size_t N) {
    ChainLaw law = exact_chain_law(p0, T, N);
    return kl_gaussian(p0, GaussianSpec(std::move(law.mean), std::move(law.covariance)));
}

}  // namespace wmgm::gaussian
