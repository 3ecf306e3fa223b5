// SPDX-License-Identifier: Apache-2.0
#include "wmgm/rng.hpp"

#include <cmath>
#include <numbers>

namespace wmgm {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t mix64(std::uint64_t x) noexcept {
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t hash_label(std::string_view label) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : label) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) noexcept {
    return mix64(seed ^ mix64(hash_label(label) + kGolden));
}

RngStream::RngStream(std::uint64_t seed, std::string_view label)
    : RngStream(seed, hash_label(label), mix64(seed ^ mix64(hash_label(label)))) {}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t key)
    : seed_(seed), stream_id_(stream_id), key_(key) {}

RngStream RngStream::derive(std::string_view label) const {
    const std::uint64_t id = hash_label(label);
    return RngStream(seed_, id, mix64(key_ ^ mix64(id + kGolden)));
}

std::uint64_t RngStream::next_u64() noexcept { return mix64(key_ + (counter_++) * kGolden); }

double RngStream::uniform() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() noexcept {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t RngStream::below(std::size_t n) noexcept {
    // Multiply-shift; bias is below 2^-32 for the sizes used here.
    return static_cast<std::size_t>((__extension__ static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

Tensor RngStream::normal(const Shape& shape) {
    Tensor t(shape);
    for (double& v : t.data()) v = normal();
    return t;
}

}  // namespace wmgm
