// SPDX-License-Identifier: Apache-2.0
#include "wmgm/wavelet.hpp"

#include <array>
#include <cmath>

#include "wmgm/error.hpp"

namespace wmgm::wavelet {

std::pair<Tensor, Tensor> haar_filters() {
    const double r = 1.0 / std::sqrt(2.0);
    return {Tensor({2}, {r, r}), Tensor({2}, {r, -r})};
}

double SubbandTriple::energy() const { return lh.squared_norm() + hl.squared_norm() + hh.squared_norm(); }

const SubbandTriple& WaveletPyramid::high(std::size_t k) const {
    require(k >= 1 && k <= highs.size(), "scale ", k, " outside 1..", highs.size());
    return highs[k - 1];
}

double WaveletPyramid::energy() const {
    double e = ll.squared_norm();
    for (const auto& h : highs) e += h.energy();
    return e;
}

Subbands dwt2(const Tensor& image) {
    require(image.rank() >= 2, "dwt2 needs at least two axes, got ", to_string(image.shape()));
    const std::size_t H = image.dim(image.rank() - 2), W = image.dim(image.rank() - 1);
    require(H % 2 == 0 && W % 2 == 0, "dwt2 needs even spatial sides, got ", H, "x", W);
    const std::size_t h = H / 2, w = W / 2, slices = image.size() / (H * W);
    Shape s = image.shape();
    s[s.size() - 2] = h;
    s[s.size() - 1] = w;
    Subbands out{Tensor(s), {Tensor(s), Tensor(s), Tensor(s)}};
    for (std::size_t p = 0; p < slices; ++p)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                const std::size_t src = p * H * W + 2 * i * W + 2 * j;
                const double a = image[src], b = image[src + 1], c = image[src + W], d = image[src + W + 1];
                const std::size_t dst = p * h * w + i * w + j;
                out.ll[dst] = 0.5 * (a + b + c + d);
                out.detail.lh[dst] = 0.5 * (a + b - c - d);
                out.detail.hl[dst] = 0.5 * (a - b + c - d);
                out.detail.hh[dst] = 0.5 * (a - b - c + d);
            }
    return out;
}

Tensor idwt2(const Tensor& ll, const Tensor& lh, const Tensor& hl, const Tensor& hh) {
    require(ll.rank() >= 2, "idwt2 needs at least two axes, got ", to_string(ll.shape()));
    require(lh.shape() == ll.shape() && hl.shape() == ll.shape() && hh.shape() == ll.shape(),
            "idwt2 subband shapes differ: ", to_string(ll.shape()), " ", to_string(lh.shape()), " ",
            to_string(hl.shape()), " ", to_string(hh.shape()));
    const std::size_t h = ll.dim(ll.rank() - 2), w = ll.dim(ll.rank() - 1), slices = ll.size() / (h * w);
    const std::size_t H = 2 * h, W = 2 * w;
    Shape s = ll.shape();
    s[s.size() - 2] = H;
    s[s.size() - 1] = W;
    Tensor out(s);
    for (std::size_t p = 0; p < slices; ++p)
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                const std::size_t src = p * h * w + i * w + j;
                const double q = ll[src], r = lh[src], u = hl[src], v = hh[src];
                const std::size_t dst = p * H * W + 2 * i * W + 2 * j;
                out[dst] = 0.5 * (q + r + u + v);
                out[dst + 1] = 0.5 * (q + r - u - v);
                out[dst + W] = 0.5 * (q - r + u - v);
                out[dst + W + 1] = 0.5 * (q - r - u + v);
            }
    return out;
}

WaveletPyramid decompose(const Tensor& image, std::size_t levels) {
    require(levels >= 1, "decompose needs at least one level");
    require(image.rank() >= 2, "decompose needs at least two axes, got ", to_string(image.shape()));
    const std::size_t H = image.dim(image.rank() - 2), W = image.dim(image.rank() - 1);
    const std::size_t m = std::size_t{1} << levels;
    require(H % m == 0 && W % m == 0, "spatial size ", H, "x", W, " is not divisible by 2^", levels);
    WaveletPyramid p;
    Tensor cur = image;
    for (std::size_t k = 1; k <= levels; ++k) {
        Subbands b = dwt2(cur);
        p.highs.push_back(std::move(b.detail));
        cur = std::move(b.ll);
    }
    p.ll = std::move(cur);
    return p;
}

Tensor reconstruct(const WaveletPyramid& pyramid) {
    require(pyramid.levels() >= 1, "pyramid has no levels");
    Tensor cur = pyramid.ll;
    for (std::size_t k = pyramid.levels(); k >= 1; --k) cur = idwt2(cur, pyramid.highs[k - 1]);
    return cur;
}

std::vector<Tensor> low_bands(const WaveletPyramid& pyramid) {
    std::vector<Tensor> out(pyramid.levels() + 1);
    out[pyramid.levels()] = pyramid.ll;
    for (std::size_t k = pyramid.levels(); k >= 1; --k) out[k - 1] = idwt2(out[k], pyramid.highs[k - 1]);
    return out;
}

std::vector<double> flatten(const WaveletPyramid& pyramid) {
    std::vector<double> out(pyramid.ll.values());
    for (std::size_t k = pyramid.levels(); k >= 1; --k) {
        const auto& t = pyramid.highs[k - 1];
        for (const Tensor* b : {&t.lh, &t.hl, &t.hh}) out.insert(out.end(), b->values().begin(), b->values().end());
    }
    return out;
}

WaveletPyramid unflatten(std::span<const double> coeffs, const Shape& image_shape, std::size_t levels) {
    require(coeffs.size() == numel(image_shape), "unflatten: ", coeffs.size(), " coefficients for image shape ",
            to_string(image_shape));
    require(image_shape.size() >= 2, "unflatten needs at least two axes");
    const std::size_t m = std::size_t{1} << levels;
    const std::size_t H = image_shape[image_shape.size() - 2], W = image_shape.back();
    require(levels >= 1 && H % m == 0 && W % m == 0, "spatial size ", H, "x", W, " is not divisible by 2^", levels);
    auto band_shape = [&](std::size_t k) {
        Shape s = image_shape;
        s[s.size() - 2] = H >> k;
        s[s.size() - 1] = W >> k;
        return s;
    };
    std::size_t pos = 0;
    auto take = [&](const Shape& s) {
        const std::size_t n = numel(s);
        Tensor t(s, std::vector<double>(coeffs.begin() + static_cast<std::ptrdiff_t>(pos),
                                        coeffs.begin() + static_cast<std::ptrdiff_t>(pos + n)));
        pos += n;
        return t;
    };
    WaveletPyramid p;
    p.ll = take(band_shape(levels));
    p.highs.resize(levels);
    for (std::size_t k = levels; k >= 1; --k) {
        const Shape s = band_shape(k);
        p.highs[k - 1].lh = take(s);
        p.highs[k - 1].hl = take(s);
        p.highs[k - 1].hh = take(s);
    }
    return p;
}

std::vector<double> analysis(std::span<const double> x, const Shape& image_shape, std::size_t levels) {
    require(x.size() == numel(image_shape), "analysis: ", x.size(), " values for image shape ", to_string(image_shape));
    return flatten(decompose(Tensor(image_shape, std::vector<double>(x.begin(), x.end())), levels));
}

std::vector<double> synthesis(std::span<const double> coeffs, const Shape& image_shape, std::size_t levels) {
    return reconstruct(unflatten(coeffs, image_shape, levels)).values();
}

Tensor join_triple(const SubbandTriple& t) {
    require(t.lh.rank() == 4, "join_triple expects rank-4 bands, got ", to_string(t.lh.shape()));
    const std::array<Tensor, 3> parts{t.lh, t.hl, t.hh};
    return concat_axis1(parts);
}

SubbandTriple split_triple(const Tensor& joined) {
    require(joined.rank() == 4 && joined.dim(1) % 3 == 0, "split_triple expects [N, 3C, h, w], got ",
            to_string(joined.shape()));
    const std::size_t c = joined.dim(1) / 3;
    return {slice_axis1(joined, 0, c), slice_axis1(joined, c, c), slice_axis1(joined, 2 * c, c)};
}

}  // namespace wmgm::wavelet
