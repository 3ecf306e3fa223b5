// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>

#include "wmgm/tensor.hpp"

namespace wmgm {

/// SplitMix64 finalizer; the mixing function behind every stream.
std::uint64_t mix64(std::uint64_t x) noexcept;
/// FNV-1a 64-bit hash of a stream label.
std::uint64_t hash_label(std::string_view label) noexcept;

/// Seed for an independent consumer identified by `label`.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) noexcept;

/// Counter-based random stream.
///
/// A stream is identified by (master seed, label). Draw `i` is a pure function
/// mix64(key + i * golden) of the stream key and the counter, so identical
/// (seed, label, counter) triples always reproduce the same values regardless
/// of which thread or in which order streams are consumed.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::string_view label);

    /// Independent child stream keyed by this stream's key and `label`.
    RngStream derive(std::string_view label) const;

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }
    std::uint64_t counter() const noexcept { return counter_; }

    std::uint64_t next_u64() noexcept;
    /// Uniform on the open interval (0, 1).
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    /// Standard normal via Box-Muller on two consecutive draws.
    double normal() noexcept;
    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n) noexcept;

    Tensor normal(const Shape& shape);

private:
    RngStream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t key);

    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace wmgm
