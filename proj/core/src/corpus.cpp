// SPDX-License-Identifier: Apache-2.0
#include "wmgm/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <unsupported/Eigen/FFT>

#include "wmgm/error.hpp"
#include "wmgm/io.hpp"

namespace wmgm::corpus {

namespace fs = std::filesystem;

Tensor Corpus::batch() const {
    require(!images.empty(), "corpus is empty");
    return stack(images);
}

Tensor average_pool(const Tensor& image, std::size_t factor) {
    require(factor >= 1, "pool factor must be positive");
    if (factor == 1) return image;
    require(image.rank() >= 2, "pooling needs two spatial axes");
    const std::size_t H = image.dim(image.rank() - 2), W = image.dim(image.rank() - 1);
    require(H % factor == 0 && W % factor == 0, "size ", H, "x", W, " not divisible by pool factor ", factor);
    const std::size_t h = H / factor, w = W / factor, planes = image.size() / (H * W);
    Shape s = image.shape();
    s[s.size() - 2] = h;
    s[s.size() - 1] = w;
    Tensor out(s);
    const double inv = 1.0 / static_cast<double>(factor * factor);
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j) out[p * h * w + (i / factor) * w + j / factor] += image[p * H * W + i * W + j];
    out *= inv;
    return out;
}

namespace {

bool is_power_of_two(std::size_t n) { return n && (n & (n - 1)) == 0; }

}  // namespace

Corpus ingest(const fs::path& dir, std::size_t image_size) {
    require(is_power_of_two(image_size), "image_size ", image_size, " is not a power of two");
    require(fs::is_directory(dir), "corpus directory ", dir.string(), " does not exist");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".pgm" || ext == ".ppm") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
        return a.filename().string() < b.filename().string();
    });
    require(!files.empty(), "no .pgm or .ppm files in ", dir.string());
    Corpus c;
    for (const auto& f : files) {
        const io::Image8 img = io::read_pnm(f);
        require(img.width == img.height, f.string(), ": image is ", img.width, "x", img.height, ", expected square");
        require(img.width % image_size == 0 && is_power_of_two(img.width / image_size), f.string(), ": side ",
                img.width, " cannot be pooled to ", image_size, " by a power of two");
        Tensor t = average_pool(io::to_tensor(img), img.width / image_size);
        if (!c.images.empty())
            require(t.dim(0) == c.images.front().dim(0), f.string(), ": has ", t.dim(0), " channels, corpus has ",
                    c.images.front().dim(0));
        c.images.push_back(std::move(t));
        c.names.push_back(f.filename().string());
    }
    return c;
}

Tensor pink_field(std::size_t size, RngStream& rng) {
    require(size >= 2, "field size must be at least 2");
    const std::size_t L = size;
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> grid(L * L), buf(L), out(L);
    auto signed_freq = [L](std::size_t k) {
        return (k <= (L - 1) / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(L)) /
               static_cast<double>(L);
    };
    for (std::size_t i = 0; i < L; ++i)
        for (std::size_t j = 0; j < L; ++j) {
            const double re = rng.normal(), im = rng.normal();
            const double f = std::hypot(signed_freq(i), signed_freq(j));
            const double amp = (i == 0 && j == 0) ? 0.0 : 1.0 / f;
            grid[i * L + j] = amp * std::complex<double>(re, im);
        }
    for (std::size_t i = 0; i < L; ++i) {
        std::copy_n(grid.begin() + static_cast<std::ptrdiff_t>(i * L), L, buf.begin());
        fft.inv(out, buf);
        std::copy_n(out.begin(), L, grid.begin() + static_cast<std::ptrdiff_t>(i * L));
    }
    for (std::size_t j = 0; j < L; ++j) {
        for (std::size_t i = 0; i < L; ++i) buf[i] = grid[i * L + j];
        fft.inv(out, buf);
        for (std::size_t i = 0; i < L; ++i) grid[i * L + j] = out[i];
    }
    Tensor t({L, L});
    double mean = 0.0;
    for (std::size_t i = 0; i < L * L; ++i) mean += (t[i] = grid[i].real());
    mean /= static_cast<double>(L * L);
    double var = 0.0;
    for (std::size_t i = 0; i < L * L; ++i) var += (t[i] - mean) * (t[i] - mean);
    const double sd = std::sqrt(var / static_cast<double>(L * L));
    require(sd > 0, "degenerate field");
    for (std::size_t i = 0; i < L * L; ++i) t[i] = (t[i] - mean) / sd;
    return t;
}

Tensor synth_image(const SynthConfig& cfg, RngStream& rng) {
    require(cfg.size >= 2 && cfg.min_discs <= cfg.max_discs && cfg.min_radius <= cfg.max_radius,
            "invalid synthetic corpus settings");
    const std::size_t L = cfg.size;
    Tensor x = pink_field(L, rng);
    x *= cfg.background;
    const std::size_t discs = cfg.min_discs + rng.below(cfg.max_discs - cfg.min_discs + 1);
    for (std::size_t d = 0; d < discs; ++d) {
        const double cx = rng.uniform(0.0, static_cast<double>(L));
        const double cy = rng.uniform(0.0, static_cast<double>(L));
        const double r = rng.uniform(cfg.min_radius, cfg.max_radius);
        const double level = rng.uniform(-cfg.disc_level, cfg.disc_level);
        const Tensor tex = pink_field(L, rng);
        for (std::size_t i = 0; i < L; ++i)
            for (std::size_t j = 0; j < L; ++j) {
                const double dy = static_cast<double>(i) - cy, dx = static_cast<double>(j) - cx;
                if (dx * dx + dy * dy < r * r) x[i * L + j] = level + cfg.disc_texture * tex[i * L + j];
            }
    }
    Tensor img({1, L, L});
    for (std::size_t i = 0; i < L * L; ++i) {
        const double v = std::clamp(x[i] + cfg.sensor_noise * rng.normal(), -1.0, 1.0);
        img[i] = std::round((v + 1.0) * 127.5) / 127.5 - 1.0;
    }
    return img;
}

Corpus synth_corpus(std::size_t count, const SynthConfig& cfg, std::uint64_t seed) {
    Corpus c;
    const RngStream root(seed, "synth");
    for (std::size_t n = 0; n < count; ++n) {
        char name[32];
        std::snprintf(name, sizeof name, "img_%05zu.pgm", n);
        RngStream rng = root.derive(name);
        c.images.push_back(synth_image(cfg, rng));
        c.names.emplace_back(name);
    }
    return c;
}

void write_corpus(const fs::path& dir, const Corpus& corpus) {
    fs::create_directories(dir);
    for (std::size_t n = 0; n < corpus.size(); ++n) {
        const io::Image8 img = io::to_image(corpus.images[n]);
        char name[32];
        std::snprintf(name, sizeof name, "img_%05zu.%s", n, img.channels == 1 ? "pgm" : "ppm");
        io::write_pnm(dir / name, img);
    }
}

}  // namespace wmgm::corpus
