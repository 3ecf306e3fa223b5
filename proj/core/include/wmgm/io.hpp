// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "wmgm/network.hpp"
#include "wmgm/optim.hpp"
#include "wmgm/tensor.hpp"
#include "wmgm/wavelet.hpp"

namespace wmgm::io {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Tensor container
//
//   "WMT1"
//   u32 entry count
//   per entry: u32 name length, name bytes (UTF-8), u32 rank, rank x u64 extents,
//              numel x f64 values
//
// All integers and floats little-endian.

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

std::string encode_container(const NamedTensors& entries);
NamedTensors decode_container(const std::string& bytes);
void write_container(const fs::path& path, const NamedTensors& entries);
NamedTensors read_container(const fs::path& path);

/// Byte size implied by a container's header walk; equals the encoded size.
std::size_t container_size(const NamedTensors& entries);

/// Entries "<prefix><name>" for every parameter.
void append_parameters(NamedTensors& out, const std::string& prefix, const nn::ParameterSet& params);
/// Parameters stored under `prefix`, with the prefix stripped.
nn::ParameterSet extract_parameters(const NamedTensors& entries, const std::string& prefix);
/// Moments as "<prefix>m.<name>", "<prefix>v.<name>" plus a "<prefix>step" scalar.
void append_optimizer(NamedTensors& out, const std::string& prefix, const nn::Adam& opt);

/// "ll", then "k<k>.lh", "k<k>.hl", "k<k>.hh" for k = levels..1.
NamedTensors pyramid_entries(const wavelet::WaveletPyramid& p);
wavelet::WaveletPyramid pyramid_from_entries(const NamedTensors& entries);

const Tensor& find_entry(const NamedTensors& entries, const std::string& name);

// ---------------------------------------------------------------------------
// Images

/// 8-bit image, row-major, interleaved channels (1 = PGM, 3 = PPM).
struct Image8 {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 1;
    std::vector<std::uint8_t> pixels;
};

/// Binary P5 / P6 with maxval 255.
Image8 read_pnm(const fs::path& path);
void write_pnm(const fs::path& path, const Image8& image);
Image8 decode_pnm(const std::string& bytes, const std::string& name = "<memory>");
std::string encode_pnm(const Image8& image);

/// [C, H, W] in [-1, 1]: v / 127.5 - 1.
Tensor to_tensor(const Image8& image);

struct ClampReport {
    std::size_t clamped = 0;
    std::size_t total = 0;
    double fraction() const { return total ? static_cast<double>(clamped) / static_cast<double>(total) : 0.0; }
};

/// Inverse range map round((x + 1) * 127.5), clamped to [0, 255]; C must be 1 or 3.
Image8 to_image(const Tensor& chw, ClampReport* report = nullptr);

// ---------------------------------------------------------------------------
// Text outputs

/// Shortest round-trip decimal form ("inf" / "-inf" / "nan" for non-finite).
std::string format_number(double v);

class CsvWriter {
public:
    CsvWriter(const fs::path& path, const std::vector<std::string>& header);
    void row(const std::vector<std::string>& cells);
    void row(const std::vector<double>& cells);
    /// Flushes and fails if any write went wrong.
    void close();

private:
    fs::path path_;
    std::size_t columns_;
    std::ofstream out_;
};

struct Manifest {
    std::string command;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::string>> fields;
};

std::string library_version();
/// JSON object with command, config_hash, seed, version and the extra fields (as strings).
void write_manifest(const fs::path& path, const Manifest& manifest);

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

}  // namespace wmgm::io
