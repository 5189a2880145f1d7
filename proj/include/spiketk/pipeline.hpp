#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spiketk/hsfe.hpp"
#include "spiketk/snn_runtime.hpp"
#include "spiketk/spike_camera.hpp"
#include "spiketk/spike_stream.hpp"
#include "spiketk/star_net.hpp"
#include "spiketk/weights.hpp"

namespace spiketk {

/// Every parameter of an end-to-end run. Seeds have no wall-clock fallback.
struct PipelineConfig {
    std::filesystem::path out_dir;
    std::vector<std::string> stages{"synth", "encode", "featurize", "snn", "fewshot"};

    std::uint64_t data_seed = 0;
    std::uint64_t encode_seed = 0;
    std::uint64_t weight_seed = 0;
    std::vector<std::uint64_t> fewshot_seeds{1, 2, 3, 4, 5};

    // Synthetic data
    std::size_t classes = 4;
    std::size_t clips_per_class = 24;
    std::size_t test_per_class = 12;
    std::size_t frames = 64;
    std::size_t resolution = 64;

    // Encoding
    double theta = 5.0;
    double noise = 0.0;
    std::size_t upsample = 4;
    std::size_t target_len = 250;

    // Feature extraction
    std::size_t r_win = 30;
    std::size_t step = 45;
    std::size_t n_blocks = 5;
    std::size_t channel_step = 20;
    std::size_t m = 3;
    std::size_t c_out = 16;
    std::size_t embed_dim = 64;
    std::size_t timesteps = 2;

    // Few-shot head
    std::vector<std::size_t> shots{2, 4, 6, 8};
    double lr = 0.05;
    std::size_t epochs = 200;
    std::vector<std::size_t> topk{1};

    void validate() const;
    bool wants(const std::string& stage) const;

    HsfeConfig hsfe() const;
    MiniMapResNetConfig star() const;
    FsveConfig fsve() const;
};

PipelineConfig pipeline_config_from_json(const std::string& text);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
std::string pipeline_config_to_json(const PipelineConfig& cfg);

/// Reads a frame directory or raw video, upsamples, encodes and, when the
/// result is longer than target_len (0 disables), subsamples to it.
SpikeStream encode_input(const std::filesystem::path& video, const EncoderConfig& enc, std::size_t upsample,
                         std::size_t target_len, std::uint64_t seed);

/// HSFE followed by STAR-Net; weights must hold both parts.
std::vector<double> featurize_stream(const SpikeStream& stream, const HsfeConfig& hsfe,
                                     const MiniMapResNetConfig& star, const WeightSet& weights);

WeightSet init_pipeline_weights(const PipelineConfig& cfg);

struct PipelineResult {
    std::filesystem::path metrics;
    std::filesystem::path embeddings;
    std::filesystem::path ledger;
    /// mean Top-1 per entry of cfg.shots
    std::vector<double> mean_top1;
};

/// Runs the requested stages in dependency order under cfg.out_dir:
/// dataset/, spikes/, weights/, embeddings.json, ledger.json, metrics.json.
PipelineResult run_pipeline(const PipelineConfig& cfg);

}  // namespace spiketk
