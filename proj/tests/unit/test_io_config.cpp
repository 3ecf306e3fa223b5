// SPDX-License-Identifier: Apache-2.0
#include <cstring>
#include <filesystem>

#include "doctest.h"
#include "support.hpp"
#include "wmgm/config.hpp"
#include "wmgm/corpus.hpp"
#include "wmgm/error.hpp"
#include "wmgm/io.hpp"
#include "wmgm/rng.hpp"

using namespace wmgm;
namespace fs = std::filesystem;
using wmgm::testing::random_tensor;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("wmgm_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

io::Image8 flat_image(std::size_t w, std::size_t h, std::size_t c, std::uint8_t v) {
    return {w, h, c, std::vector<std::uint8_t>(w * h * c, v)};
}

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_SUITE("container") {
    TEST_CASE("byte-exact round trip and size") {
        RngStream rng(1, "ct");
        const io::NamedTensors entries{{"a", random_tensor({2, 3}, rng)},
                                       {"ünïcode.name", Tensor::scalar(-0.0)},
                                       {"big", random_tensor({2, 1, 4, 4}, rng, -1e300, 1e300)}};
        const std::string bytes = io::encode_container(entries);
        CHECK(bytes.size() == io::container_size(entries));
        CHECK(bytes.substr(0, 4) == "WMT1");
        const io::NamedTensors back = io::decode_container(bytes);
        REQUIRE(back.size() == 3);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(back[i].first == entries[i].first);
            CHECK(back[i].second.shape() == entries[i].second.shape());
            CHECK(std::memcmp(back[i].second.data().data(), entries[i].second.data().data(),
                              8 * entries[i].second.size()) == 0);
        }
        CHECK(io::encode_container(back) == bytes);
        std::uint32_t count = 0;
        std::memcpy(&count, bytes.data() + 4, 4);
        CHECK(count == 3);
    }

    TEST_CASE("file round trip and corruption") {
        const fs::path dir = scratch("container");
        const io::NamedTensors entries{{"x", Tensor::from({1, 2, 3})}};
        io::write_container(dir / "x.wmt", entries);
        CHECK(io::read_container(dir / "x.wmt")[0].second == entries[0].second);
        std::string bytes = io::encode_container(entries);
        CHECK_THROWS_AS(io::decode_container(bytes.substr(0, bytes.size() - 1)), Error);
        CHECK_THROWS_AS(io::decode_container(bytes + "x"), Error);
        bytes[0] = 'X';
        CHECK_THROWS_AS(io::decode_container(bytes), Error);
        CHECK_THROWS_AS(io::read_container(dir / "missing.wmt"), Error);
    }

    TEST_CASE("parameters and pyramids") {
        RngStream rng(2, "params");
        nn::ParameterSet p{{"fc.weight", random_tensor({2, 2}, rng)}, {"fc.bias", random_tensor({2}, rng)}};
        io::NamedTensors out;
        io::append_parameters(out, "generator1.", p);
        io::append_parameters(out, "critic1.", {{"w", Tensor({1})}});
        CHECK(io::extract_parameters(out, "generator1.") == p);
        CHECK(io::extract_parameters(out, "critic1.").size() == 1);
        const wavelet::WaveletPyramid pyr = wavelet::decompose(random_tensor({1, 8, 8}, rng), 2);
        const io::NamedTensors pe = io::pyramid_entries(pyr);
        CHECK(pe[0].first == "ll");
        CHECK(pe[1].first == "k2.lh");
        CHECK(pe.back().first == "k1.hh");
        const wavelet::WaveletPyramid back = io::pyramid_from_entries(pe);
        CHECK(wavelet::reconstruct(back) == wavelet::reconstruct(pyr));
        CHECK_THROWS_AS(io::find_entry(pe, "k3.lh"), Error);
    }

    TEST_CASE("optimizer state") {
        nn::ParameterSet p{{"w", Tensor::from({1.0, 2.0})}};
        nn::Adam opt;
        opt.step(p, {{"w", Tensor::from({0.5, -0.5})}});
        io::NamedTensors out;
        io::append_optimizer(out, "adam.", opt);
        CHECK(io::find_entry(out, "adam.m.w") == opt.first_moment().at("w"));
        CHECK(io::find_entry(out, "adam.step")[0] == 1.0);
    }
}

TEST_SUITE("images") {
    TEST_CASE("PNM encode and decode") {
        io::Image8 img{3, 2, 3, {}};
        for (int i = 0; i < 18; ++i) img.pixels.push_back(static_cast<std::uint8_t>(i * 14));
        const std::string bytes = io::encode_pnm(img);
        CHECK(bytes.substr(0, 2) == "P6");
        const io::Image8 back = io::decode_pnm(bytes);
        CHECK(back.width == 3);
        CHECK(back.height == 2);
        CHECK(back.channels == 3);
        CHECK(back.pixels == img.pixels);
        const io::Image8 gray = io::decode_pnm("P5\n# comment\n2 2\n255\n\x01\x02\x03\x04");
        CHECK(gray.pixels == std::vector<std::uint8_t>{1, 2, 3, 4});
    }

    TEST_CASE("malformed headers name the file") {
        CHECK(error_of([] { io::decode_pnm("P2\n2 2\n255\n", "bad.pgm"); }).find("bad.pgm") != std::string::npos);
        CHECK(error_of([] { io::decode_pnm("P5\n2 2\n65535\n", "deep.pgm"); }).find("deep.pgm") != std::string::npos);
        CHECK(error_of([] { io::decode_pnm("P5\n2 2\n255\n\x01", "short.pgm"); }).find("short.pgm") !=
              std::string::npos);
    }

    TEST_CASE("range map") {
        CHECK(io::to_tensor(flat_image(4, 4, 1, 255)).max_abs() == 1.0);
        const Tensor white = io::to_tensor(flat_image(4, 4, 1, 255)), black = io::to_tensor(flat_image(4, 4, 1, 0));
        for (double v : white.data()) CHECK(v == 1.0);
        for (double v : black.data()) CHECK(v == -1.0);
        io::Image8 ramp{256, 1, 1, {}};
        for (int i = 0; i < 256; ++i) ramp.pixels.push_back(static_cast<std::uint8_t>(i));
        CHECK(io::to_image(io::to_tensor(ramp)).pixels == ramp.pixels);
        io::ClampReport rep;
        const Tensor t({1, 1, 4}, std::vector<double>{-2.0, 0.0, 1.5, 0.999});
        const io::Image8 out = io::to_image(t, &rep);
        CHECK(rep.clamped == 2);
        CHECK(rep.total == 4);
        CHECK(out.pixels[0] == 0);
        CHECK(out.pixels[2] == 255);
    }
}

TEST_SUITE("corpus") {
    TEST_CASE("ingest maps ranges and pools") {
        const fs::path dir = scratch("ingest");
        io::write_pnm(dir / "b_white.pgm", flat_image(8, 8, 1, 255));
        io::write_pnm(dir / "a_black.pgm", flat_image(8, 8, 1, 0));
        io::write_text(dir / "notes.txt", "ignored");
        const corpus::Corpus c = corpus::ingest(dir, 8);
        REQUIRE(c.size() == 2);
        CHECK(c.names[0] == "a_black.pgm");
        for (double v : c.images[0].data()) CHECK(v == -1.0);
        for (double v : c.images[1].data()) CHECK(v == 1.0);
        CHECK(c.batch().shape() == Shape{2, 1, 8, 8});
    }

    TEST_CASE("pooling a 64x64 image to 32x32") {
        const fs::path dir = scratch("pool");
        io::Image8 img{64, 64, 1, {}};
        RngStream rng(3, "pool");
        for (int i = 0; i < 64 * 64; ++i) img.pixels.push_back(static_cast<std::uint8_t>(rng.below(256)));
        io::write_pnm(dir / "x.pgm", img);
        const Tensor t = corpus::ingest(dir, 32).images[0];
        CHECK(t.shape() == Shape{1, 32, 32});
        for (std::size_t i = 0; i < 32; ++i)
            for (std::size_t j = 0; j < 32; ++j) {
                const double m = (img.pixels[(2 * i) * 64 + 2 * j] + img.pixels[(2 * i) * 64 + 2 * j + 1] +
                                  img.pixels[(2 * i + 1) * 64 + 2 * j] + img.pixels[(2 * i + 1) * 64 + 2 * j + 1]) /
                                 4.0;
                CHECK(t.at(0, i, j) == doctest::Approx(m / 127.5 - 1.0).epsilon(1e-14));
            }
    }

    TEST_CASE("ingest failures name the file") {
        const fs::path dir = scratch("ingest_bad");
        io::write_pnm(dir / "a.pgm", flat_image(8, 8, 1, 3));
        io::write_pnm(dir / "b.pgm", flat_image(8, 4, 1, 3));
        CHECK(error_of([&] { corpus::ingest(dir, 8); }).find("b.pgm") != std::string::npos);
        const fs::path dir2 = scratch("ingest_size");
        io::write_pnm(dir2 / "c.pgm", flat_image(12, 12, 1, 3));
        CHECK(error_of([&] { corpus::ingest(dir2, 8); }).find("c.pgm") != std::string::npos);
        CHECK_THROWS_AS(corpus::ingest(dir2, 6), Error);
        CHECK_THROWS_AS(corpus::ingest(scratch("empty"), 8), Error);
    }

    TEST_CASE("synthetic corpus is deterministic and quantized") {
        const corpus::Corpus a = corpus::synth_corpus(4, {}, 7), b = corpus::synth_corpus(4, {}, 7),
                             c = corpus::synth_corpus(4, {}, 8);
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(a.images[i] == b.images[i]);
            CHECK(a.images[i] != c.images[i]);
            CHECK(a.images[i].shape() == Shape{1, 32, 32});
            for (double v : a.images[i].data()) {
                const double q = (v + 1.0) * 127.5;
                CHECK(std::abs(q - std::round(q)) <= 1e-9);
            }
        }
        const fs::path dir = scratch("synth");
        corpus::write_corpus(dir, a);
        const corpus::Corpus back = corpus::ingest(dir, 32);
        for (std::size_t i = 0; i < 4; ++i) CHECK(back.images[i] == a.images[i]);
    }
}

TEST_SUITE("config") {
    TEST_CASE("defaults, parsing and canonical form") {
        const config::RunConfig d;
        CHECK(d.count("levels") == 2);
        CHECK(d.count("diffusion.N") == 16);
        CHECK(d.text("msal.mode") == "MS");
        const config::RunConfig c = config::RunConfig::parse("# comment\nlevels = 1\n\nseed=9  # trailing\n");
        CHECK(c.count("levels") == 1);
        CHECK(c.integer("seed") == 9);
        CHECK(c.canonical().find("levels=1\n") != std::string::npos);
        CHECK(c.hash().size() == 16);
        CHECK(c.hash() != d.hash());
        CHECK(config::RunConfig::parse("seed=9\nlevels=1").hash() == c.hash());
        CHECK(config::fnv_hex("") == "cbf29ce484222325");
        CHECK(config::fnv_hex("a") == "af63dc4c8601ec8c");
    }

    TEST_CASE("errors carry the origin and line") {
        CHECK(error_of([] { config::RunConfig::parse("levels=2\nbogus=1\n", "run.cfg"); }).find("run.cfg:2") !=
              std::string::npos);
        CHECK(error_of([] { config::RunConfig::parse("seed=1\nseed=2\n", "run.cfg"); }).find("run.cfg:2") !=
              std::string::npos);
        CHECK_THROWS_AS(config::RunConfig::parse("levels=two"), Error);
        CHECK_THROWS_AS(config::RunConfig::parse("msal.mode=XX"), Error);
        CHECK_THROWS_AS(config::RunConfig::parse("log_wall_time=maybe"), Error);
        CHECK_THROWS_AS(config::RunConfig::parse("no equals sign"), Error);
        config::RunConfig c;
        CHECK_THROWS_AS(c.apply("diffusion.T=-1"), Error);
        c.apply("diffusion.T=2.5");
        CHECK(c.real("diffusion.T") == 2.5);
    }

    TEST_CASE("every schema key has a valid default") {
        const config::RunConfig d;
        for (const auto& k : config::schema()) CHECK_NOTHROW(d.raw(k.key));
        CHECK(config::RunConfig::parse(d.canonical()).canonical() == d.canonical());
        CHECK(config::RunConfig::parse("score.lr=0.0001").hash() == d.hash());
    }
}

TEST_SUITE("text") {
    TEST_CASE("numbers round trip") {
        for (double v : {0.1, 1.0 / 3, -2.5e-300, 12345.0}) CHECK(std::stod(io::format_number(v)) == v);
        CHECK(io::format_number(std::numeric_limits<double>::infinity()) == "inf");
        CHECK(io::format_number(std::nan("")) == "nan");
    }

    TEST_CASE("csv and manifest") {
        const fs::path dir = scratch("csv");
        {
            io::CsvWriter w(dir / "a.csv", {"x", "y"});
            w.row(std::vector<double>{1.5, 2});
            CHECK_THROWS_AS(w.row(std::vector<double>{1}), Error);
            w.close();
        }
        CHECK(io::read_text(dir / "a.csv") == "x,y\n1.5,2\n");
        io::write_manifest(dir / "m.json", {"stats --levels 2", "abcd", 7, {{"count", "3"}}});
        const std::string m = io::read_text(dir / "m.json");
        CHECK(m.find("\"config_hash\"") != std::string::npos);
        CHECK(m.find("\"seed\": 7") != std::string::npos);
        CHECK(m.find(io::library_version()) != std::string::npos);
    }
}
