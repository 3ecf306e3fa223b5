// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wmgm/rng.hpp"
#include "wmgm/tensor.hpp"

namespace wmgm::corpus {

struct Corpus {
    /// Items of shape [C, H, W] in [-1, 1].
    std::vector<Tensor> images;
    std::vector<std::string> names;

    std::size_t size() const noexcept { return images.size(); }
    /// [M, C, H, W]; all items must share a shape.
    Tensor batch() const;
};

/// Average-pools the last two axes by an integer factor.
Tensor average_pool(const Tensor& image, std::size_t factor);

/// Every .pgm/.ppm file of `dir` in lexicographic order, mapped to [-1, 1] and
/// pooled down to image_size x image_size.
Corpus ingest(const std::filesystem::path& dir, std::size_t image_size);

struct SynthConfig {
    std::size_t size = 32;
    /// Amplitude of the 1/f background field.
    double background = 0.1;
    std::size_t min_discs = 0;
    std::size_t max_discs = 2;
    double min_radius = 3.0;
    double max_radius = 10.0;
    double disc_level = 0.8;
    double disc_texture = 0.1;
    double sensor_noise = 0.03;
};

/// Zero-mean, unit-std periodic Gaussian field with amplitude spectrum 1/|f|.
Tensor pink_field(std::size_t size, RngStream& rng);

/// Single-channel [1, L, L] image: 1/f background, textured flat discs,
/// sensor noise, clipped to [-1, 1] and quantized to the 8-bit grid.
Tensor synth_image(const SynthConfig& cfg, RngStream& rng);

/// `count` images drawn from per-image streams derived from `seed`.
Corpus synth_corpus(std::size_t count, const SynthConfig& cfg, std::uint64_t seed);

/// Writes images as img_00000.pgm/ppm ... into `dir`.
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);

}  // namespace wmgm::corpus
