// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "wmgm/tensor.hpp"

namespace wmgm::wavelet {

/// Orthonormal Haar analysis filters: lowpass [1, 1]/sqrt2, highpass [1, -1]/sqrt2.
std::pair<Tensor, Tensor> haar_filters();

struct SubbandTriple {
    Tensor lh;
    Tensor hl;
    Tensor hh;

    double energy() const;
};

struct Subbands {
    Tensor ll;
    SubbandTriple detail;
};

/// One-level 2D Haar transform of the last two axes; leading axes (batch,
/// channel) are transformed independently. Rows are filtered first, then
/// columns. For a 2x2 block [[a, b], [c, d]]:
///   ll = (a+b+c+d)/2   lh = (a+b-c-d)/2   hl = (a-b+c-d)/2   hh = (a-b-c+d)/2
Subbands dwt2(const Tensor& image);

/// Exact inverse of dwt2.
Tensor idwt2(const Tensor& ll, const Tensor& lh, const Tensor& hl, const Tensor& hh);
inline Tensor idwt2(const Tensor& ll, const SubbandTriple& d) { return idwt2(ll, d.lh, d.hl, d.hh); }

/// Multi-level decomposition. highs[k - 1] holds the detail triple at scale k
/// (k = 1 finest, k = levels coarsest); ll is the coarsest approximation.
struct WaveletPyramid {
    Tensor ll;
    std::vector<SubbandTriple> highs;

    std::size_t levels() const noexcept { return highs.size(); }
    const SubbandTriple& high(std::size_t k) const;
    double energy() const;
};

WaveletPyramid decompose(const Tensor& image, std::size_t levels);
Tensor reconstruct(const WaveletPyramid& pyramid);

/// Approximation band at every scale: result[k] = LL at scale k, result[0] = the image.
std::vector<Tensor> low_bands(const WaveletPyramid& pyramid);

/// Coefficients in the order ll, then for k = levels..1: lh, hl, hh.
std::vector<double> flatten(const WaveletPyramid& pyramid);
WaveletPyramid unflatten(std::span<const double> coeffs, const Shape& image_shape, std::size_t levels);

/// Flattened operator A and its transpose on vectors of numel(image_shape) entries.
std::vector<double> analysis(std::span<const double> x, const Shape& image_shape, std::size_t levels);
std::vector<double> synthesis(std::span<const double> coeffs, const Shape& image_shape, std::size_t levels);

/// Stack a triple along axis 1: [N, C, h, w] x3 -> [N, 3C, h, w] (order lh, hl, hh).
Tensor join_triple(const SubbandTriple& t);
/// Inverse of join_triple.
SubbandTriple split_triple(const Tensor& joined);

}  // namespace wmgm::wavelet
