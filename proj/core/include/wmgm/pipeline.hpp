// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wmgm/config.hpp"
#include "wmgm/corpus.hpp"
#include "wmgm/diffusion.hpp"
#include "wmgm/io.hpp"
#include "wmgm/msal.hpp"
#include "wmgm/wavelet.hpp"

namespace wmgm::pipeline {

struct Factorized {
    std::size_t levels = 0;
    std::vector<wavelet::WaveletPyramid> pyramids;
    /// Coarsest approximation bands [M, C, h, w] for the score model.
    Tensor coarse;

    /// (LL, detail triple) conditioning pairs across all scales.
    std::size_t pair_count() const noexcept { return pyramids.size() * levels; }
};

/// Pyramids of every corpus item; fails listing every file whose size differs
/// from the first item or is not divisible by 2^levels.
Factorized factorize(const corpus::Corpus& corpus, std::size_t levels);

/// Trained (or freshly initialized) components plus the configuration that built them.
struct WmgmBundle {
    config::RunConfig config;
    std::size_t levels;
    diffusion::Schedule schedule;
    diffusion::ScoreModel score;
    msal::MsalModel msal;
};

/// Network settings derived from a run configuration.
msal::NetConfig msal_net_config(const config::RunConfig& cfg);
diffusion::ScoreNetConfig score_net_config(const config::RunConfig& cfg);
msal::MsalTrainConfig msal_train_config(const config::RunConfig& cfg);
diffusion::ScoreTrainConfig score_train_config(const config::RunConfig& cfg);

/// Fresh components for the configured image size; fails if a network is too deep for its band size.
WmgmBundle make_bundle(const config::RunConfig& cfg);

/// The configured corpus: ingested from `corpus` or synthesized.
corpus::Corpus load_corpus(const config::RunConfig& cfg);

struct TrainOutputs {
    std::vector<diffusion::TrainLogRow> score_log;
    std::vector<msal::MsalLogRow> msal_log;
};

/// Score model first, then adversarial training, on the factorized corpus.
TrainOutputs train_bundle(WmgmBundle& bundle, const Factorized& data);

/// train_bundle on the configured corpus; writes checkpoints, both loss CSVs,
/// the config snapshot and a manifest into `outdir`.
WmgmBundle train(const config::RunConfig& cfg, const std::string& command_line = "train");

void save_bundle(const WmgmBundle& bundle, const std::filesystem::path& dir);
WmgmBundle load_bundle(const std::filesystem::path& dir);

struct Components {
    /// Produces the coarsest approximation for `count` samples. Default: the
    /// reverse chain with the score model from N(0, I).
    std::function<Tensor(std::size_t count, RngStream& rng)> coarse;
    /// Detail bands at scale k from the approximation and noise. Default: generator k.
    std::function<wavelet::SubbandTriple(std::size_t k, const Tensor& low, const Tensor& z)> detail;
};

struct SampleResult {
    /// [count, C, H, W].
    Tensor images;
    std::size_t score_evaluations = 0;
    std::size_t generator_evaluations = 0;
};

/// Coarse sampling followed by detail synthesis and inverse transforms, k = S..1.
SampleResult sample(const WmgmBundle& bundle, std::size_t count, std::uint64_t seed,
                    const Components& overrides = {});

/// Writes sample_00000.pgm/ppm ... and a manifest; returns the clamping report.
io::ClampReport export_images(const Tensor& images, const std::filesystem::path& dir, const io::Manifest& manifest);

}  // namespace wmgm::pipeline
