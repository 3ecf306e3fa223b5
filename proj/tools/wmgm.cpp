// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wmgm/config.hpp"
#include "wmgm/corpus.hpp"
#include "wmgm/diffusion.hpp"
#include "wmgm/error.hpp"
#include "wmgm/experiments.hpp"
#include "wmgm/io.hpp"
#include "wmgm/metrics.hpp"
#include "wmgm/pipeline.hpp"
#include "wmgm/wavelet.hpp"

namespace fs = std::filesystem;
using namespace wmgm;

namespace {

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
    return out;
}

/// Hash of a subcommand's resolved options, sorted by name.
std::string options_hash(const CLI::App& cmd) {
    std::map<std::string, std::string> kv;
    for (const CLI::Option* opt : cmd.get_options()) {
        const std::string name = opt->get_name();
        if (name == "--help" || name == "-h") continue;
        kv[name] = opt->count() ? join(opt->results(), ",") : opt->get_default_str();
    }
    std::string text;
    for (const auto& [k, v] : kv) text += k + "=" + v + "\n";
    return config::fnv_hex(text);
}

fs::path manifest_for(const fs::path& output) { return fs::path(output.string() + ".manifest.json"); }

Tensor read_image(const fs::path& path) { return io::to_tensor(io::read_pnm(path)); }

struct Context {
    std::string command_line;
    const CLI::App* cmd = nullptr;
    io::Manifest manifest(std::uint64_t seed = 0) const { return {command_line, options_hash(*cmd), seed, {}}; }
};

// ---------------------------------------------------------------------------

struct DwtArgs {
    std::string input, out;
    std::size_t levels = 1;
};

void run_dwt(const Context& ctx, const DwtArgs& a) {
    const Tensor img = read_image(a.input);
    const wavelet::WaveletPyramid p = wavelet::decompose(img, a.levels);
    io::write_container(a.out, io::pyramid_entries(p));
    io::Manifest m = ctx.manifest();
    m.fields = {{"levels", std::to_string(a.levels)},
                {"image_shape", to_string(img.shape())},
                {"subband_order", "ll, then k = levels..1: lh, hl, hh"}};
    io::write_manifest(manifest_for(a.out), m);
}

struct IdwtArgs {
    std::string in, out;
};

void run_idwt(const Context& ctx, const IdwtArgs& a) {
    const wavelet::WaveletPyramid p = io::pyramid_from_entries(io::read_container(a.in));
    io::ClampReport rep;
    io::write_pnm(a.out, io::to_image(wavelet::reconstruct(p), &rep));
    io::Manifest m = ctx.manifest();
    m.fields = {{"levels", std::to_string(p.levels())}, {"clamped_fraction", io::format_number(rep.fraction())}};
    io::write_manifest(manifest_for(a.out), m);
}

struct StatsArgs {
    std::string corpus, out;
    std::size_t synth_count = 500, image_size = 32, levels = 2, kl_size = 16;
    std::uint64_t seed = 0;
    std::vector<std::string> metrics{"kl", "sparsity", "spectrum"};
    std::vector<double> thres{0.01, 0.05};
};

void run_stats(const Context& ctx, const StatsArgs& a) {
    corpus::Corpus c;
    std::string corpus_id;
    if (!a.corpus.empty()) {
        c = corpus::ingest(a.corpus, a.image_size);
        corpus_id = fs::path(a.corpus).filename().string();
        if (corpus_id.empty()) corpus_id = fs::path(a.corpus).parent_path().filename().string();
    } else {
        corpus::SynthConfig sc;
        sc.size = a.image_size;
        c = corpus::synth_corpus(a.synth_count, sc, a.seed);
        corpus_id = "synth";
    }
    for (const auto& m : a.metrics)
        require(m == "kl" || m == "sparsity" || m == "spectrum", "unknown metric '", m, "'");
    auto wants = [&](const char* m) { return std::find(a.metrics.begin(), a.metrics.end(), m) != a.metrics.end(); };
    const std::string n = std::to_string(c.size());
    io::CsvWriter csv(a.out, {"corpus", "metric", "scale", "band", "threshold", "count", "value"});
    if (wants("kl"))
        for (const auto& r : experiments::whitening_kl(c, a.levels, a.kl_size))
            csv.row({corpus_id, "kl", std::to_string(r.scale), "ll", "", n, io::format_number(r.kl)});
    if (wants("sparsity"))
        for (const auto& r : experiments::band_sparsity(c, a.levels, a.thres))
            csv.row({corpus_id, "sparsity", std::to_string(r.scale), r.band, io::format_number(r.thres), n,
                     io::format_number(r.value)});
    if (wants("spectrum")) {
        const auto curve = metrics::radial_spectrum(c.batch());
        for (std::size_t r = 0; r < curve.size(); ++r)
            csv.row({corpus_id, "spectrum", "0", "r" + std::to_string(r), "", n, io::format_number(curve[r])});
        const std::size_t hi = std::max<std::size_t>(3, a.image_size / 4);
        csv.row({corpus_id, "spectrum_slope", "0", "r2-r" + std::to_string(hi), "", n,
                 io::format_number(metrics::loglog_slope(curve, 2, hi))});
    }
    csv.close();
    io::Manifest m = ctx.manifest(a.seed);
    m.fields = {{"corpus", corpus_id}, {"images", n}};
    io::write_manifest(manifest_for(a.out), m);
}

struct Theorem1Args {
    std::string out;
    experiments::Theorem1Config cfg;
};

void run_theorem1(const Context& ctx, const Theorem1Args& a) {
    const experiments::Theorem1Sweep sw = experiments::theorem1_sweep(a.cfg);
    io::CsvWriter csv(a.out, {"kappa", "T", "N", "dt", "exact_kl", "psi_T", "psi_dt", "n_bound", "n_star"});
    const std::size_t per = sw.rows.size() / std::max<std::size_t>(1, a.cfg.kappas.size());
    for (std::size_t i = 0; i < sw.rows.size(); ++i) {
        const auto& r = sw.rows[i];
        const std::size_t ns = sw.n_star[i / per];
        csv.row({io::format_number(r.kappa), io::format_number(r.horizon), std::to_string(r.steps),
                 io::format_number(r.dt), io::format_number(r.exact_kl), io::format_number(r.psi_T),
                 io::format_number(r.psi_dt), io::format_number(r.n_bound), ns ? std::to_string(ns) : "none"});
    }
    csv.close();
    io::Manifest m = ctx.manifest();
    m.fields = {{"dim", std::to_string(a.cfg.dim)}, {"kl_tol", io::format_number(a.cfg.kl_tol)}};
    io::write_manifest(manifest_for(a.out), m);
}

struct BandSnrArgs {
    std::string input, out;
    double tmax = 2.0;
    std::size_t points = 41;
};

void run_bandsnr(const Context& ctx, const BandSnrArgs& a) {
    require(a.points >= 2 && a.tmax > 0, "need tmax > 0 and at least two points");
    std::vector<double> times(a.points);
    for (std::size_t i = 0; i < a.points; ++i) times[i] = a.tmax * static_cast<double>(i) / static_cast<double>(a.points - 1);
    const diffusion::BandSnr r = diffusion::band_snr(read_image(a.input), times);
    io::CsvWriter csv(a.out, {"t", "snr_ll", "snr_lh", "snr_hl", "snr_hh"});
    for (std::size_t i = 0; i < times.size(); ++i)
        csv.row(std::vector<double>{times[i], r.snr[0][i], r.snr[1][i], r.snr[2][i], r.snr[3][i]});
    csv.close();
    io::Manifest m = ctx.manifest();
    const char* names[] = {"crossing_ll", "crossing_lh", "crossing_hl", "crossing_hh"};
    for (int b = 0; b < 4; ++b) m.fields.emplace_back(names[b], io::format_number(r.crossing[b]));
    io::write_manifest(manifest_for(a.out), m);
}

struct ConfigArgs {
    std::string config;
    std::vector<std::string> set;
};

config::RunConfig load_config(const ConfigArgs& a) {
    config::RunConfig cfg = a.config.empty() ? config::RunConfig{} : config::RunConfig::load(a.config);
    for (const auto& s : a.set) cfg.apply(s);
    return cfg;
}

void run_train(const Context& ctx, const ConfigArgs& a) {
    const config::RunConfig cfg = load_config(a);
    pipeline::train(cfg, ctx.command_line);
}

struct SampleArgs {
    ConfigArgs cfg;
    std::size_t count = 16, steps = 0;
    std::uint64_t seed = 0;
    std::string outdir;
};

void run_sample(const Context& ctx, const SampleArgs& a) {
    const config::RunConfig cfg = load_config(a.cfg);
    pipeline::WmgmBundle b = pipeline::load_bundle(cfg.text("outdir"));
    if (a.steps) b.schedule = diffusion::Schedule(b.schedule.horizon(), a.steps);
    const pipeline::SampleResult r = pipeline::sample(b, a.count, a.seed);
    const fs::path dir = a.outdir.empty() ? fs::path(cfg.text("outdir")) / "samples" : fs::path(a.outdir);
    io::Manifest m{ctx.command_line, b.config.hash(), a.seed, {}};
    m.fields = {{"steps", std::to_string(b.schedule.steps())},
                {"score_evaluations", std::to_string(r.score_evaluations)},
                {"generator_evaluations", std::to_string(r.generator_evaluations)}};
    pipeline::export_images(r.images, dir, m);
}

struct EvalArgs {
    std::string real, fake, out, feature = "pixels";
    std::size_t image_size = 16, q = 32;
};

void run_eval(const Context& ctx, const EvalArgs& a) {
    const corpus::Corpus real = corpus::ingest(a.real, a.image_size), fake = corpus::ingest(a.fake, a.image_size);
    const auto features = a.feature == "pca" ? experiments::Features::pca : experiments::Features::pixels;
    const experiments::FrechetReport r = experiments::frechet_images(real.batch(), fake.batch(), features, a.q);
    io::CsvWriter csv(a.out, {"metric", "feature", "dim", "real_count", "fake_count", "value"});
    csv.row({"frechet_pixel", a.feature, std::to_string(r.dim), std::to_string(r.real_count),
             std::to_string(r.fake_count), io::format_number(r.distance)});
    csv.close();
    io::write_manifest(manifest_for(a.out), ctx.manifest());
}

struct SynthArgs {
    std::size_t count = 64, size = 32;
    std::uint64_t seed = 0;
    std::string outdir;
};

void run_synth(const Context& ctx, const SynthArgs& a) {
    corpus::SynthConfig sc;
    sc.size = a.size;
    corpus::write_corpus(a.outdir, corpus::synth_corpus(a.count, sc, a.seed));
    io::Manifest m = ctx.manifest(a.seed);
    m.fields = {{"count", std::to_string(a.count)}, {"size", std::to_string(a.size)}};
    io::write_manifest(fs::path(a.outdir) / "manifest.json", m);
}

void add_config_options(CLI::App* cmd, ConfigArgs& a) {
    cmd->add_option("--config", a.config, "Run configuration file (key=value)");
    cmd->add_option("--set", a.set, "Override a configuration key (key=value), repeatable");
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Wavelet multi-scale generative modelling toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", io::library_version());

    std::vector<std::string> args(argv, argv + argc);
    Context ctx;
    ctx.command_line = join(args, " ");
    std::function<void()> action;

    DwtArgs dwt;
    auto* c_dwt = app.add_subcommand("dwt", "Haar pyramid of an image into a tensor container");
    c_dwt->add_option("--input", dwt.input, "PGM/PPM image")->required()->check(CLI::ExistingFile);
    c_dwt->add_option("--levels", dwt.levels, "Decomposition depth")->capture_default_str();
    c_dwt->add_option("--out", dwt.out, "Output container")->required();
    c_dwt->callback([&] { action = [&] { run_dwt(ctx, dwt); }; });

    IdwtArgs idwt;
    auto* c_idwt = app.add_subcommand("idwt", "Reconstruct an image from a pyramid container");
    c_idwt->add_option("--in", idwt.in, "Pyramid container")->required()->check(CLI::ExistingFile);
    c_idwt->add_option("--out", idwt.out, "Output PGM/PPM")->required();
    c_idwt->callback([&] { action = [&] { run_idwt(ctx, idwt); }; });

    StatsArgs stats;
    auto* c_stats = app.add_subcommand("stats", "Whitening KL, band sparsity and radial spectra of a corpus");
    c_stats->add_option("--corpus", stats.corpus, "Directory of PGM/PPM images (synthetic corpus if omitted)");
    c_stats->add_option("--synth-count", stats.synth_count, "Synthetic corpus size")->capture_default_str();
    c_stats->add_option("--image-size", stats.image_size, "Working image size")->capture_default_str();
    c_stats->add_option("--levels", stats.levels, "Wavelet depth")->capture_default_str();
    c_stats->add_option("--metrics", stats.metrics, "kl,sparsity,spectrum")->delimiter(',')->capture_default_str();
    c_stats->add_option("--thres", stats.thres, "Sparsity thresholds (pixel units)")->delimiter(',')->capture_default_str();
    c_stats->add_option("--kl-size", stats.kl_size, "Pooled side length for KL statistics")->capture_default_str();
    c_stats->add_option("--seed", stats.seed, "Seed of the synthetic corpus")->capture_default_str();
    c_stats->add_option("--out", stats.out, "Output CSV")->required();
    c_stats->callback([&] { action = [&] { run_stats(ctx, stats); }; });

    Theorem1Args th;
    std::vector<std::size_t> th_steps;
    auto* c_th = app.add_subcommand("theorem1", "Exact chain KL and bound terms for power-law Gaussians");
    c_th->add_option("--dim", th.cfg.dim, "Dimension")->capture_default_str();
    c_th->add_option("--eta", th.cfg.eta, "Spectral decay exponent")->capture_default_str();
    c_th->add_option("--lambda", th.cfg.lambda, "Spectral scale (0 = 2*pi/dim)")->capture_default_str();
    c_th->add_option("--kappa-list", th.cfg.kappas, "Condition numbers")->delimiter(',')->capture_default_str();
    c_th->add_option("--T", th.cfg.horizon, "Diffusion horizon")->capture_default_str();
    c_th->add_option("--steps", th_steps, "Step counts (default 4,8,...,4096)")->delimiter(',');
    c_th->add_option("--eps", th.cfg.eps, "Accuracy in the step bound")->capture_default_str();
    c_th->add_option("--kl-tol", th.cfg.kl_tol, "Per-dimension KL defining N*")->capture_default_str();
    c_th->add_option("--out", th.out, "Output CSV")->required();
    c_th->callback([&] {
        th.cfg.steps = th_steps;
        action = [&] { run_theorem1(ctx, th); };
    });

    BandSnrArgs snr;
    auto* c_snr = app.add_subcommand("bandsnr", "Per-subband signal-to-noise along the forward process");
    c_snr->add_option("--input", snr.input, "PGM/PPM image")->required()->check(CLI::ExistingFile);
    c_snr->add_option("--tmax", snr.tmax, "Largest diffusion time")->capture_default_str();
    c_snr->add_option("--points", snr.points, "Number of grid times")->capture_default_str();
    c_snr->add_option("--out", snr.out, "Output CSV")->required();
    c_snr->callback([&] { action = [&] { run_bandsnr(ctx, snr); }; });

    ConfigArgs train;
    auto* c_train = app.add_subcommand("train", "Train the score model and the adversarial detail generators");
    add_config_options(c_train, train);
    c_train->callback([&] { action = [&] { run_train(ctx, train); }; });

    SampleArgs smp;
    auto* c_smp = app.add_subcommand("sample", "Sample images from a trained run");
    add_config_options(c_smp, smp.cfg);
    c_smp->add_option("--count", smp.count, "Number of images")->capture_default_str();
    c_smp->add_option("--steps", smp.steps, "Reverse-chain steps (default: trained schedule)");
    c_smp->add_option("--seed", smp.seed, "Sampling seed")->capture_default_str();
    c_smp->add_option("--outdir", smp.outdir, "Output directory (default <outdir>/samples)");
    c_smp->callback([&] { action = [&] { run_sample(ctx, smp); }; });

    EvalArgs ev;
    auto* c_ev = app.add_subcommand("eval", "Frechet distance between two image directories");
    c_ev->add_option("--real", ev.real, "Reference images")->required()->check(CLI::ExistingDirectory);
    c_ev->add_option("--fake", ev.fake, "Generated images")->required()->check(CLI::ExistingDirectory);
    c_ev->add_option("--feature", ev.feature, "pixels or pca")
        ->check(CLI::IsMember({"pixels", "pca"}))
        ->capture_default_str();
    c_ev->add_option("--q", ev.q, "PCA dimension")->capture_default_str();
    c_ev->add_option("--image-size", ev.image_size, "Working image size")->capture_default_str();
    c_ev->add_option("--out", ev.out, "Output CSV")->required();
    c_ev->callback([&] { action = [&] { run_eval(ctx, ev); }; });

    SynthArgs syn;
    auto* c_syn = app.add_subcommand("synth", "Write a synthetic toy corpus");
    c_syn->add_option("--count", syn.count, "Number of images")->capture_default_str();
    c_syn->add_option("--size", syn.size, "Side length")->capture_default_str();
    c_syn->add_option("--seed", syn.seed, "Seed")->capture_default_str();
    c_syn->add_option("--outdir", syn.outdir, "Output directory")->required();
    c_syn->callback([&] { action = [&] { run_synth(ctx, syn); }; });

    std::string name = "wmgm";
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        for (const auto* sub : app.get_subcommands()) name = sub->get_name();
        std::cerr << "error: " << name << ": " << one_line(e.what()) << "\n";
        return 2;
    }
    ctx.cmd = app.get_subcommands().front();
    name = ctx.cmd->get_name();
    try {
        action();
    } catch (const std::exception& e) {
        std::cerr << "error: " << name << ": " << one_line(e.what()) << "\n";
        return 1;
    }
    return 0;
}
