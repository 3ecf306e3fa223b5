// SPDX-License-Identifier: Apache-2.0
#include "wmgm/pipeline.hpp"

#include <cstdio>
#include <sstream>

#include "wmgm/error.hpp"

namespace wmgm::pipeline {

namespace fs = std::filesystem;

Factorized factorize(const corpus::Corpus& corpus, std::size_t levels) {
    require(corpus.size() > 0, "corpus is empty");
    require(levels >= 1, "factorization needs at least one level");
    const Shape& ref = corpus.images.front().shape();
    const std::size_t m = std::size_t{1} << levels;
    std::vector<std::string> bad;
    for (std::size_t n = 0; n < corpus.size(); ++n) {
        const Shape& s = corpus.images[n].shape();
        const bool ok = s.size() == 3 && s == ref && s[1] % m == 0 && s[2] % m == 0;
        if (!ok) bad.push_back(n < corpus.names.size() ? corpus.names[n] : "#" + std::to_string(n));
    }
    if (!bad.empty()) {
        std::ostringstream os;
        for (std::size_t i = 0; i < bad.size(); ++i) os << (i ? ", " : "") << bad[i];
        fail("images not of shape ", to_string(ref), " divisible by 2^", levels, ": ", os.str());
    }
    Factorized f;
    f.levels = levels;
    std::vector<Tensor> coarse;
    for (const auto& img : corpus.images) {
        f.pyramids.push_back(wavelet::decompose(img, levels));
        coarse.push_back(f.pyramids.back().ll);
    }
    f.coarse = stack(coarse);
    return f;
}

msal::NetConfig msal_net_config(const config::RunConfig& cfg) {
    msal::NetConfig n;
    n.channels = cfg.count("channels");
    n.gen_width = cfg.count("msal.gen_width");
    n.gen_depth = cfg.count("msal.gen_depth");
    n.critic_width = cfg.count("msal.critic_width");
    n.critic_depth = cfg.count("msal.critic_depth");
    return n;
}

diffusion::ScoreNetConfig score_net_config(const config::RunConfig& cfg) {
    diffusion::ScoreNetConfig s;
    s.arch = cfg.text("score.arch") == "mlp" ? diffusion::ScoreNetConfig::Arch::mlp
                                             : diffusion::ScoreNetConfig::Arch::unet;
    s.width = cfg.count("score.width");
    s.depth = cfg.count("score.depth");
    return s;
}

msal::MsalTrainConfig msal_train_config(const config::RunConfig& cfg) {
    msal::MsalTrainConfig t;
    t.epochs = cfg.count("msal.epochs");
    t.batch = cfg.count("msal.batch");
    t.lr_g = cfg.real("msal.lr_g");
    t.lr_d = cfg.real("msal.lr_d");
    t.weight_decay = cfg.real("msal.weight_decay");
    t.weights.l2 = cfg.real("msal.l2");
    t.weights.ssim = cfg.real("msal.ssim");
    t.weights.adversarial = cfg.real("msal.adversarial");
    t.weights.clip = cfg.real("msal.clip");
    t.weights.n_critic = cfg.count("msal.n_critic");
    t.seed = derive_seed(static_cast<std::uint64_t>(cfg.integer("seed")), "train/msal");
    return t;
}

diffusion::ScoreTrainConfig score_train_config(const config::RunConfig& cfg) {
    diffusion::ScoreTrainConfig t;
    t.iterations = cfg.count("score.iterations");
    t.batch = cfg.count("score.batch");
    t.lr = cfg.real("score.lr");
    t.seed = derive_seed(static_cast<std::uint64_t>(cfg.integer("seed")), "train/score");
    t.log_wall_time = cfg.boolean("log_wall_time");
    return t;
}

namespace {

void check_depth(const char* what, std::size_t side, std::size_t depth) {
    require(side % (std::size_t{1} << depth) == 0, what, " depth ", depth, " is too deep for ", side, "x", side,
            " bands");
}

Shape coarse_shape(const config::RunConfig& cfg) {
    const std::size_t size = cfg.count("image_size"), S = cfg.count("levels"), C = cfg.count("channels");
    require(size >= 2 && (size & (size - 1)) == 0, "image_size must be a power of two, got ", size);
    require(S >= 1 && (size >> S) >= 1 && (size >> S) << S == size, "levels ", S, " too many for image_size ", size);
    require(C == 1 || C == 3, "channels must be 1 or 3, got ", C);
    return {C, size >> S, size >> S};
}

}  // namespace

WmgmBundle make_bundle(const config::RunConfig& cfg) {
    const Shape item = coarse_shape(cfg);
    const std::size_t S = cfg.count("levels");
    const std::uint64_t seed = static_cast<std::uint64_t>(cfg.integer("seed"));
    diffusion::Schedule schedule(cfg.real("diffusion.T"), cfg.count("diffusion.N"));
    const auto snet = score_net_config(cfg);
    Shape score_item = item;
    if (snet.arch == diffusion::ScoreNetConfig::Arch::mlp)
        score_item = {numel(item)};
    else
        check_depth("score network", item[1], snet.depth);
    const auto mnet = msal_net_config(cfg);
    check_depth("generator", item[1], mnet.gen_depth);
    check_depth("critic", item[1], mnet.critic_depth);
    const msal::Mode mode = cfg.text("msal.mode") == "SS" ? msal::Mode::ss : msal::Mode::ms;
    return WmgmBundle{cfg, S, schedule,
                      diffusion::ScoreModel(score_item, schedule, snet, derive_seed(seed, "init/score")),
                      msal::MsalModel(mode, S, mnet, derive_seed(seed, "init/msal"))};
}

corpus::Corpus load_corpus(const config::RunConfig& cfg) {
    const std::string& dir = cfg.text("corpus");
    const std::size_t size = cfg.count("image_size");
    if (!dir.empty()) return corpus::ingest(dir, size);
    require(cfg.count("channels") == 1, "the synthetic corpus is single-channel");
    corpus::SynthConfig sc;
    sc.size = size;
    return corpus::synth_corpus(cfg.count("corpus.count"), sc,
                                derive_seed(static_cast<std::uint64_t>(cfg.integer("seed")), "corpus"));
}

namespace {

Tensor score_view(const WmgmBundle& b, const Tensor& coarse) {
    if (b.score.item_shape().size() == 1) return coarse.reshaped({coarse.dim(0), b.score.item_shape()[0]});
    return coarse;
}

}  // namespace

TrainOutputs train_bundle(WmgmBundle& bundle, const Factorized& data) {
    require(data.levels == bundle.levels, "data has ", data.levels, " levels, bundle has ", bundle.levels);
    TrainOutputs out;
    const Tensor coarse = score_view(bundle, data.coarse);
    out.score_log = diffusion::train_score(bundle.score, coarse, score_train_config(bundle.config)).log;
    out.msal_log = msal::train_msal(bundle.msal, data.pyramids, msal_train_config(bundle.config)).log;
    return out;
}

void save_bundle(const WmgmBundle& bundle, const fs::path& dir) {
    fs::create_directories(dir);
    io::write_text(dir / "config.txt", bundle.config.canonical());
    io::NamedTensors score;
    io::append_parameters(score, "", bundle.score.network().parameters());
    io::write_container(dir / "score.wmt", score);
    io::NamedTensors m;
    for (std::size_t s = 0; s < bundle.msal.slots(); ++s) {
        const std::string tag = std::to_string(s + 1);
        io::append_parameters(m, "generator" + tag + ".", bundle.msal.generators()[s].parameters());
        io::append_parameters(m, "critic" + tag + ".", bundle.msal.critics()[s].parameters());
    }
    io::write_container(dir / "msal.wmt", m);
}

WmgmBundle load_bundle(const fs::path& dir) {
    require(fs::exists(dir / "config.txt"), "no trained bundle in ", dir.string(), " (missing config.txt)");
    WmgmBundle b = make_bundle(config::RunConfig::load(dir / "config.txt"));
    const auto score = io::read_container(dir / "score.wmt");
    b.score.network() = nn::Network(b.score.network().spec(), io::extract_parameters(score, ""));
    const auto m = io::read_container(dir / "msal.wmt");
    for (std::size_t s = 0; s < b.msal.slots(); ++s) {
        const std::string tag = std::to_string(s + 1);
        auto& g = b.msal.generators()[s];
        auto& c = b.msal.critics()[s];
        g = nn::Network(g.spec(), io::extract_parameters(m, "generator" + tag + "."));
        c = nn::Network(c.spec(), io::extract_parameters(m, "critic" + tag + "."));
    }
    return b;
}

WmgmBundle train(const config::RunConfig& cfg, const std::string& command_line) {
    WmgmBundle bundle = make_bundle(cfg);
    const corpus::Corpus data = load_corpus(cfg);
    const Factorized f = factorize(data, bundle.levels);
    const TrainOutputs logs = train_bundle(bundle, f);
    const fs::path dir = cfg.text("outdir");
    save_bundle(bundle, dir);
    {
        io::CsvWriter csv(dir / "score_loss.csv", {"iteration", "loss", "wall_ms"});
        for (const auto& r : logs.score_log)
            csv.row({std::to_string(r.iteration), io::format_number(r.loss), io::format_number(r.wall_ms)});
        csv.close();
    }
    {
        io::CsvWriter csv(dir / "msal_loss.csv", {"epoch", "loss_g", "loss_d", "ssim_val"});
        for (const auto& r : logs.msal_log)
            csv.row({std::to_string(r.epoch), io::format_number(r.loss_g), io::format_number(r.loss_d),
                     io::format_number(r.ssim_val)});
        csv.close();
    }
    io::Manifest man{command_line, cfg.hash(), static_cast<std::uint64_t>(cfg.integer("seed")), {}};
    man.fields = {{"corpus_images", std::to_string(data.size())},
                  {"training_order", "score,msal"},
                  {"score_parameters", std::to_string(bundle.score.network().parameter_count())},
                  {"generator_parameters", std::to_string(bundle.msal.generator_parameter_count())}};
    io::write_manifest(dir / "manifest.json", man);
    return bundle;
}

SampleResult sample(const WmgmBundle& bundle, std::size_t count, std::uint64_t seed, const Components& overrides) {
    require(count >= 1, "sample count must be positive");
    const Shape item = coarse_shape(bundle.config);
    const RngStream root(seed, "sample");
    SampleResult r;
    Tensor low;
    if (overrides.coarse) {
        RngStream rng = root.derive("coarse");
        low = overrides.coarse(count, rng);
    } else {
        RngStream init = root.derive("init");
        RngStream chain = root.derive("chain");
        Shape s{count};
        s.insert(s.end(), item.begin(), item.end());
        Tensor x = init.normal(s);
        const bool flat = bundle.score.item_shape().size() == 1;
        if (flat) x = x.reshaped({count, numel(item)});
        diffusion::ChainOptions opt;
        opt.noiseless_last_step = true;
        const auto tr = diffusion::reverse_chain(bundle.score.as_score_fn(), bundle.schedule, chain, x, opt);
        r.score_evaluations = tr.score_evaluations;
        low = flat ? tr.final.reshaped(s) : tr.final;
    }
    require(low.rank() == 4 && low.dim(0) == count && low.dim(1) == item[0] && low.dim(2) == item[1] &&
                low.dim(3) == item[2],
            "coarse stage produced ", to_string(low.shape()));
    require(low.all_finite(), "coarse stage produced non-finite values");
    for (std::size_t k = bundle.levels; k >= 1; --k) {
        RngStream zr = root.derive("z/" + std::to_string(k));
        const Tensor z = zr.normal({count, 1, low.dim(2), low.dim(3)});
        wavelet::SubbandTriple high = overrides.detail ? overrides.detail(k, low, z)
                                                       : msal::generator_forward(bundle.msal.generator(k), low, z);
        ++r.generator_evaluations;
        for (const Tensor* t : {&high.lh, &high.hl, &high.hh})
            require(t->all_finite(), "detail stage at scale ", k, " produced non-finite values");
        low = wavelet::idwt2(low, high);
        require(low.all_finite(), "reconstruction at scale ", k, " produced non-finite values");
    }
    r.images = std::move(low);
    return r;
}

io::ClampReport export_images(const Tensor& images, const fs::path& dir, const io::Manifest& manifest) {
    require(images.rank() == 4, "export expects [count, C, H, W]");
    fs::create_directories(dir);
    io::ClampReport total;
    for (std::size_t n = 0; n < images.dim(0); ++n) {
        io::ClampReport r;
        const io::Image8 img = io::to_image(unstack_item(images, n), &r);
        total.clamped += r.clamped;
        total.total += r.total;
        char name[32];
        std::snprintf(name, sizeof name, "sample_%05zu.%s", n, img.channels == 1 ? "pgm" : "ppm");
        io::write_pnm(dir / name, img);
    }
    io::Manifest m = manifest;
    m.fields.emplace_back("count", std::to_string(images.dim(0)));
    m.fields.emplace_back("clamped_fraction", io::format_number(total.fraction()));
    io::write_manifest(dir / "manifest.json", m);
    return total;
}

}  // namespace wmgm::pipeline
