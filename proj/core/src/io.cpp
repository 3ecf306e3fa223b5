// SPDX-License-Identifier: Apache-2.0
#include "wmgm/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <sstream>

#include "json.hpp"

#include "wmgm/error.hpp"

#ifndef WMGM_VERSION
#define WMGM_VERSION "0.0.0"
#endif

namespace wmgm::io {

namespace {

template <class T>
void put(std::string& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.append(bytes.data(), bytes.size());
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : b_(bytes) {}

    template <class T>
    T get(const char* what) {
        require(pos_ + sizeof(T) <= b_.size(), "container truncated while reading ", what, " at byte ", pos_);
        std::array<char, sizeof(T)> bytes;
        std::memcpy(bytes.data(), b_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
        pos_ += sizeof(T);
        return std::bit_cast<T>(bytes);
    }

    std::string str(std::size_t n, const char* what) {
        require(pos_ + n <= b_.size(), "container truncated while reading ", what, " at byte ", pos_);
        std::string s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == b_.size(); }
    std::size_t pos() const { return pos_; }

private:
    const std::string& b_;
    std::size_t pos_ = 0;
};

constexpr std::string_view kMagic = "WMT1";

}  // namespace

std::string encode_container(const NamedTensors& entries) {
    std::string out(kMagic);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& [name, t] : entries) {
        require(!name.empty(), "container entry names must be non-empty");
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (auto e : t.shape()) put<std::uint64_t>(out, e);
        for (double v : t.data()) put<double>(out, v);
    }
    return out;
}

std::size_t container_size(const NamedTensors& entries) {
    std::size_t n = kMagic.size() + 4;
    for (const auto& [name, t] : entries) n += 4 + name.size() + 4 + 8 * t.rank() + 8 * t.size();
    return n;
}

NamedTensors decode_container(const std::string& bytes) {
    require(bytes.size() >= 8 && bytes.compare(0, 4, kMagic) == 0, "not a WMT1 tensor container");
    Reader r(bytes);
    r.str(4, "magic");
    const auto count = r.get<std::uint32_t>("entry count");
    NamedTensors out;
    for (std::uint32_t e = 0; e < count; ++e) {
        const auto len = r.get<std::uint32_t>("name length");
        std::string name = r.str(len, "name");
        const auto rank = r.get<std::uint32_t>("rank");
        require(rank <= 16, "entry '", name, "' has implausible rank ", rank);
        Shape shape(rank);
        std::size_t n = 1;
        for (auto& d : shape) {
            d = static_cast<std::size_t>(r.get<std::uint64_t>("extent"));
            require(d > 0, "entry '", name, "' has a zero extent");
            require(n <= bytes.size() / d, "entry '", name, "' is larger than the file");
            n *= d;
        }
        require(r.pos() + 8 * n <= bytes.size(), "container truncated in values of '", name, "'");
        std::vector<double> v(n);
        for (auto& x : v) x = r.get<double>("value");
        out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(v)));
    }
    require(r.done(), "container has ", bytes.size() - r.pos(), " trailing bytes");
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    require(f.good(), "cannot open ", path.string(), " for writing");
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    f.close();
    require(f.good(), "failed writing ", path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), "cannot open ", path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_container(const fs::path& path, const NamedTensors& entries) {
    write_text(path, encode_container(entries));
}

NamedTensors read_container(const fs::path& path) {
    try {
        return decode_container(read_text(path));
    } catch (const Error& e) {
        fail(path.string(), ": ", e.what());
    }
}

void append_parameters(NamedTensors& out, const std::string& prefix, const nn::ParameterSet& params) {
    for (const auto& [name, t] : params) out.emplace_back(prefix + name, t);
}

nn::ParameterSet extract_parameters(const NamedTensors& entries, const std::string& prefix) {
    nn::ParameterSet out;
    for (const auto& [name, t] : entries)
        if (name.size() > prefix.size() && name.compare(0, prefix.size(), prefix) == 0)
            out.emplace(name.substr(prefix.size()), t);
    return out;
}

void append_optimizer(NamedTensors& out, const std::string& prefix, const nn::Adam& opt) {
    out.emplace_back(prefix + "step", Tensor::scalar(static_cast<double>(opt.steps())));
    append_parameters(out, prefix + "m.", opt.first_moment());
    append_parameters(out, prefix + "v.", opt.second_moment());
}

NamedTensors pyramid_entries(const wavelet::WaveletPyramid& p) {
    NamedTensors out{{"ll", p.ll}};
    for (std::size_t k = p.levels(); k >= 1; --k) {
        const std::string tag = "k" + std::to_string(k) + ".";
        out.emplace_back(tag + "lh", p.high(k).lh);
        out.emplace_back(tag + "hl", p.high(k).hl);
        out.emplace_back(tag + "hh", p.high(k).hh);
    }
    return out;
}

const Tensor& find_entry(const NamedTensors& entries, const std::string& name) {
    for (const auto& [n, t] : entries)
        if (n == name) return t;
    fail("container has no entry '", name, "'");
}

wavelet::WaveletPyramid pyramid_from_entries(const NamedTensors& entries) {
    require(!entries.empty() && (entries.size() - 1) % 3 == 0, "container does not hold a pyramid");
    wavelet::WaveletPyramid p;
    p.ll = find_entry(entries, "ll");
    const std::size_t levels = (entries.size() - 1) / 3;
    p.highs.resize(levels);
    for (std::size_t k = 1; k <= levels; ++k) {
        const std::string tag = "k" + std::to_string(k) + ".";
        p.highs[k - 1] = {find_entry(entries, tag + "lh"), find_entry(entries, tag + "hl"),
                          find_entry(entries, tag + "hh")};
    }
    return p;
}

// ---------------------------------------------------------------------------
// PNM

namespace {

std::size_t read_header_int(const std::string& b, std::size_t& pos, const std::string& name, const char* what) {
    for (;;) {
        while (pos < b.size() && std::isspace(static_cast<unsigned char>(b[pos]))) ++pos;
        if (pos < b.size() && b[pos] == '#') {
            while (pos < b.size() && b[pos] != '\n') ++pos;
            continue;
        }
        break;
    }
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(b.data() + pos, b.data() + b.size(), v);
    require(ec == std::errc() && ptr != b.data() + pos, name, ": malformed header (", what, ")");
    pos = static_cast<std::size_t>(ptr - b.data());
    return v;
}

}  // namespace

Image8 decode_pnm(const std::string& b, const std::string& name) {
    require(b.size() >= 2 && b[0] == 'P' && (b[1] == '5' || b[1] == '6'), name,
            ": malformed header (expected binary P5 or P6)");
    Image8 img;
    img.channels = b[1] == '5' ? 1 : 3;
    std::size_t pos = 2;
    img.width = read_header_int(b, pos, name, "width");
    img.height = read_header_int(b, pos, name, "height");
    const std::size_t maxval = read_header_int(b, pos, name, "maxval");
    require(img.width > 0 && img.height > 0, name, ": malformed header (zero size)");
    require(maxval == 255, name, ": unsupported maxval ", maxval, " (expected 255)");
    require(pos < b.size() && std::isspace(static_cast<unsigned char>(b[pos])), name,
            ": malformed header (missing separator)");
    ++pos;
    const std::size_t n = img.width * img.height * img.channels;
    require(b.size() - pos == n, name, ": expected ", n, " pixel bytes, found ", b.size() - pos);
    img.pixels.assign(b.begin() + static_cast<std::ptrdiff_t>(pos), b.end());
    return img;
}

std::string encode_pnm(const Image8& img) {
    require(img.channels == 1 || img.channels == 3, "images must have 1 or 3 channels");
    require(img.pixels.size() == img.width * img.height * img.channels, "pixel buffer size mismatch");
    std::string out = (img.channels == 1 ? "P5\n" : "P6\n") + std::to_string(img.width) + " " +
                      std::to_string(img.height) + "\n255\n";
    out.append(img.pixels.begin(), img.pixels.end());
    return out;
}

Image8 read_pnm(const fs::path& path) {
    std::string bytes;
    try {
        bytes = read_text(path);
    } catch (const Error&) {
        fail(path.string(), ": cannot read file");
    }
    return decode_pnm(bytes, path.string());
}

void write_pnm(const fs::path& path, const Image8& image) { write_text(path, encode_pnm(image)); }

Tensor to_tensor(const Image8& img) {
    Tensor t({img.channels, img.height, img.width});
    for (std::size_t c = 0; c < img.channels; ++c)
        for (std::size_t i = 0; i < img.height; ++i)
            for (std::size_t j = 0; j < img.width; ++j)
                t.at(c, i, j) = img.pixels[(i * img.width + j) * img.channels + c] / 127.5 - 1.0;
    return t;
}

Image8 to_image(const Tensor& chw, ClampReport* report) {
    require(chw.rank() == 3 && (chw.dim(0) == 1 || chw.dim(0) == 3), "image export expects [1|3, H, W], got ",
            to_string(chw.shape()));
    chw.require_finite("image export");
    Image8 img;
    img.channels = chw.dim(0);
    img.height = chw.dim(1);
    img.width = chw.dim(2);
    img.pixels.resize(chw.size());
    ClampReport r;
    r.total = chw.size();
    for (std::size_t c = 0; c < img.channels; ++c)
        for (std::size_t i = 0; i < img.height; ++i)
            for (std::size_t j = 0; j < img.width; ++j) {
                double v = std::round((chw.at(c, i, j) + 1.0) * 127.5);
                if (v < 0 || v > 255) ++r.clamped;
                v = std::clamp(v, 0.0, 255.0);
                img.pixels[(i * img.width + j) * img.channels + c] = static_cast<std::uint8_t>(v);
            }
    if (report) *report = r;
    return img;
}

// ---------------------------------------------------------------------------
// Text

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::array<char, 64> buf;
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    require(ec == std::errc(), "number formatting failed");
    return std::string(buf.data(), ptr);
}

CsvWriter::CsvWriter(const fs::path& path, const std::vector<std::string>& header)
    : path_(path), columns_(header.size()) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | std::ios::trunc);
    require(out_.good(), "cannot open ", path.string(), " for writing");
    row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    require(cells.size() == columns_, "csv row has ", cells.size(), " cells, header has ", columns_);
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out_ << ',';
        out_ << cells[i];
    }
    out_ << '\n';
}

void CsvWriter::row(const std::vector<double>& cells) {
    std::vector<std::string> s;
    s.reserve(cells.size());
    for (double v : cells) s.push_back(format_number(v));
    row(s);
}

void CsvWriter::close() {
    out_.close();
    require(!out_.fail(), "failed writing ", path_.string());
}

std::string library_version() { return WMGM_VERSION; }

void write_manifest(const fs::path& path, const Manifest& m) {
    nlohmann::ordered_json j;
    j["command"] = m.command;
    j["config_hash"] = m.config_hash;
    j["seed"] = m.seed;
    j["version"] = library_version();
    for (const auto& [k, v] : m.fields) j[k] = v;
    write_text(path, j.dump(2) + "\n");
}

}  // namespace wmgm::io
