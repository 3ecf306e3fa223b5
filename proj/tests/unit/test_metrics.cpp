// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "support.hpp"
#include "wmgm/error.hpp"
#include "wmgm/metrics.hpp"
#include "wmgm/rng.hpp"

using namespace wmgm;
using namespace wmgm::metrics;
using wmgm::testing::random_tensor;

namespace {

Matrix random_psd(std::size_t d, RngStream& rng, std::size_t rank) {
    Matrix b(d, rank);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < rank; ++j) b(i, j) = rng.normal();
    return b * b.transpose() / static_cast<double>(rank);
}

Vector random_vec(std::size_t d, RngStream& rng) {
    Vector v(d);
    for (std::size_t i = 0; i < d; ++i) v(i) = rng.normal();
    return v;
}

// Trace of (S1 S2)^{1/2} from the eigenvalues of the (non-symmetric) product.
double frechet_by_product_eigenvalues(const Vector& m1, const Matrix& s1, const Vector& m2, const Matrix& s2) {
    Eigen::EigenSolver<Matrix> es(s1 * s2);
    const Vector ev = es.eigenvalues().real();
    const double floor = 1e-12 * ev.cwiseAbs().maxCoeff();
    double tr = 0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) tr += ev(i) > floor ? std::sqrt(ev(i)) : 0.0;
    return (m1 - m2).squaredNorm() + s1.trace() + s2.trace() - 2 * tr;
}

Tensor permuted(const Tensor& x, RngStream& rng) {
    const std::size_t m = x.dim(0), item = x.size() / m;
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = m - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < item; ++j) out[i * item + j] = x[order[i] * item + j];
    return out;
}

}  // namespace

TEST_SUITE("metrics") {
    TEST_CASE("identical samples take the ridge path") {
        const SampleStats s = sample_stats(Tensor({5, 1, 2, 2}, 0.4));
        CHECK(s.ridge_path());
        CHECK(s.degenerate.size() == 4);
        CHECK(s.covariance.norm() == 0.0);
        CHECK(std::isfinite(kl_to_standard_gaussian(s)));
        CHECK_THROWS_AS(sample_stats(Tensor({1, 3})), Error);
    }

    TEST_CASE("normalized statistics") {
        RngStream rng(1, "stats");
        Tensor x = random_tensor({50, 6}, rng);
        for (std::size_t i = 0; i < 50; ++i) x.at(i, 2) = 3.0 * x.at(i, 0) + 5.0;
        const SampleStats s = sample_stats(x);
        CHECK_FALSE(s.ridge_path());
        CHECK((s.covariance - s.covariance.transpose()).cwiseAbs().maxCoeff() == 0.0);
        for (int i = 0; i < 6; ++i) CHECK(std::abs(s.norm_covariance(i, i) - 1.0) <= 1e-9);
        CHECK(s.norm_covariance(0, 2) == doctest::Approx(1.0));
        CHECK(std::abs(s.norm_mean.sum()) <= 1e-12);
    }

    TEST_CASE("standard normal draws whiten and KL shrinks with more samples") {
        RngStream rng(2, "kl");
        const Tensor big = rng.normal({100000, 16});
        const SampleStats s = sample_stats(big);
        CHECK((s.norm_covariance - Matrix::Identity(16, 16)).cwiseAbs().maxCoeff() <= 0.05);
        const Tensor small = rng.normal({1000, 16});
        const double kl_small = kl_to_standard_gaussian(sample_stats(small));
        const double kl_big = kl_to_standard_gaussian(s);
        CHECK(kl_big < kl_small);
        CHECK(kl_big >= -1e-8);
        CHECK(kl_big < 0.01);
    }

    TEST_CASE("KL of exact standard statistics is zero") {
        SampleStats s;
        s.count = 10;
        s.norm_mean = Vector::Zero(4);
        s.norm_covariance = Matrix::Identity(4, 4);
        CHECK(std::abs(kl_to_standard_gaussian(s, 0.0)) <= 1e-14);
    }

    TEST_CASE("sparsity examples") {
        CHECK(sparsity(Tensor({4, 4}), 0.0) == 1.0);
        Tensor half({2, 4}, 0.0);
        for (std::size_t i = 0; i < 4; ++i) half[i] = (i % 2 ? -1.0 : 2.0);
        CHECK(sparsity(half, 0.0) == 0.5);
        RngStream rng(3, "sp");
        const Tensor band = random_tensor({16, 16}, rng);
        double prev = 0;
        for (double t = 0; t <= 1.0; t += 0.05) {
            const double s = sparsity(band, t);
            CHECK(s >= prev);
            prev = s;
        }
        CHECK(sparsity(Tensor::from({-0.01, 0.01, 0.5}), 0.02) == doctest::Approx(2.0 / 3));
    }

    TEST_CASE("Frechet distance") {
        RngStream rng(4, "fd");
        const Matrix I = Matrix::Identity(5, 5);
        const Vector mu = random_vec(5, rng);
        CHECK(std::abs(frechet_distance(mu, I, mu, I)) <= 1e-8);
        CHECK(frechet_distance(Vector::Zero(5), I, mu, I) == doctest::Approx(mu.squaredNorm()));
        for (int trial = 0; trial < 10; ++trial) {
            const Matrix a = random_psd(5, rng, 3 + trial % 4), b = random_psd(5, rng, 5);
            const Vector m1 = random_vec(5, rng), m2 = random_vec(5, rng);
            const double fd = frechet_distance(m1, a, m2, b);
            CHECK(std::abs(fd - frechet_by_product_eigenvalues(m1, a, m2, b)) <= 1e-8);
            CHECK(std::abs(fd - frechet_distance(m2, b, m1, a)) <= 1e-10);
            CHECK(fd >= -1e-10);
            CHECK(std::abs(frechet_distance(m1, a, m1, a)) <= 1e-8);
        }
    }

    TEST_CASE("PSD square root") {
        RngStream rng(5, "sqrt");
        const Matrix a = random_psd(4, rng, 4);
        const Matrix r = psd_sqrt(a);
        CHECK((r * r - a).cwiseAbs().maxCoeff() <= 1e-10);
    }

    TEST_CASE("radial spectrum of constant and white images") {
        const auto c = radial_spectrum(Tensor({16, 16}, 0.5));
        REQUIRE(c.size() == 12);
        CHECK(c[0] > 0);
        for (std::size_t r = 1; r < c.size(); ++r) CHECK(std::abs(c[r]) <= 1e-20);
        RngStream rng(6, "white");
        const auto w = radial_spectrum(rng.normal({100, 1, 16, 16}));
        for (std::size_t r = 1; r <= 8; ++r) CHECK(std::abs(w[r] - 1.0) <= 0.15);
    }

    TEST_CASE("radial spectrum slope of a power-law field is negative") {
        RngStream rng(7, "pl");
        const std::size_t L = 32;
        Tensor img({L, L});
        for (std::size_t k = 0; k < 40; ++k) {
            const double fx = rng.uniform(-0.5, 0.5), fy = rng.uniform(-0.5, 0.5);
            const double amp = 1.0 / (0.05 + std::hypot(fx, fy)), ph = rng.uniform(0, 6.283);
            for (std::size_t i = 0; i < L; ++i)
                for (std::size_t j = 0; j < L; ++j) img.at(i, j) += amp * std::cos(6.283 * (fx * i + fy * j) + ph);
        }
        CHECK(loglog_slope(radial_spectrum(img), 2, L / 4) < 0);
        std::vector<double> pw(20);
        for (std::size_t r = 1; r < 20; ++r) pw[r] = 3.0 * std::pow(static_cast<double>(r), -2.0);
        CHECK(loglog_slope(pw, 2, 10) == doctest::Approx(-2.0));
    }

    TEST_CASE("metrics are invariant to sample order") {
        RngStream rng(8, "perm");
        const Tensor x = random_tensor({40, 1, 4, 4}, rng);
        const Tensor y = permuted(x, rng);
        const SampleStats a = sample_stats(x), b = sample_stats(y);
        CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() <= 1e-14);
        CHECK((a.covariance - b.covariance).cwiseAbs().maxCoeff() <= 1e-14);
        CHECK(std::abs(kl_to_standard_gaussian(a) - kl_to_standard_gaussian(b)) <= 1e-9);
        CHECK(sparsity(x, 0.3) == sparsity(y, 0.3));
        const FeatureStats fa = feature_stats(as_rows(x)), fb = feature_stats(as_rows(y));
        const Tensor z = random_tensor({40, 1, 4, 4}, rng);
        const FeatureStats fz = feature_stats(as_rows(z));
        CHECK(std::abs(frechet_distance(fa.mean, fa.covariance, fz.mean, fz.covariance) -
                       frechet_distance(fb.mean, fb.covariance, fz.mean, fz.covariance)) <= 1e-9);
        const auto sa = radial_spectrum(x), sb = radial_spectrum(y);
        for (std::size_t r = 0; r < sa.size(); ++r) CHECK(std::abs(sa[r] - sb[r]) <= 1e-12);
    }

    TEST_CASE("PCA basis is orthonormal and ordered") {
        RngStream rng(9, "pca");
        Matrix rows(200, 4);
        for (int i = 0; i < 200; ++i)
            for (int j = 0; j < 4; ++j) rows(i, j) = rng.normal() * (j + 1);
        const Matrix P = pca_basis(rows, 2);
        CHECK(P.cols() == 2);
        CHECK((P.transpose() * P - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(std::abs(P(3, 0)) > 0.9);
    }
}
