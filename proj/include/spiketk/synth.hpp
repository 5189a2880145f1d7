#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spiketk/align.hpp"
#include "spiketk/video.hpp"

namespace spiketk {

/// Motion archetypes rendered as moving bright blobs.
enum class Motion {
    clap,   // two blobs converge and part
    wave,   // one blob oscillates horizontally
    punch,  // one blob thrusts out and returns
    throw_, // one blob follows a parabolic arc
};

const char* motion_name(Motion m);
Motion motion_from_name(const std::string& name);
/// Prompt text for a class, e.g. "a person waving".
std::string motion_prompt(Motion m);

struct SyntheticDatasetSpec {
    std::vector<Motion> classes{Motion::clap, Motion::wave, Motion::punch, Motion::throw_};
    std::size_t clips_per_class = 12;
    std::size_t frames = 64;
    std::size_t height = 64;
    std::size_t width = 64;
    std::uint64_t seed = 0;

    void validate() const;
};

/// One clip of class `m`; `clip_index` and `seed` select the random jitter.
IntensityVideo render_clip(Motion m, std::size_t clip_index, const SyntheticDatasetSpec& spec);

struct SyntheticClip {
    std::string id;     // e.g. "wave_003"
    std::string label;  // class name
    std::filesystem::path frames_dir;
};

struct SyntheticDataset {
    std::vector<ClassPrompt> prompts;
    std::vector<SyntheticClip> clips;
};

/// Writes `<id>/frame_*.pgm` per clip, `prompts.txt` and `dataset.json`.
SyntheticDataset synth_dataset(const SyntheticDatasetSpec& spec, const std::filesystem::path& out_dir);
SyntheticDataset read_dataset(const std::filesystem::path& dir);

/// Intensity-weighted centroid (x, y) of pixels brighter than `floor`.
std::pair<double, double> bright_centroid(const IntensityVideo& video, std::size_t frame, double floor = 0.3);

}  // namespace spiketk
