#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "spiketk/spike_stream.hpp"
#include "spiketk/video.hpp"

namespace spiketk {

struct TfiConfig {
    std::size_t delta_t_max = 32;  // search half-window, time steps
    double theta = 5.0;
    double default_value = 0.0;    // emitted when no interval is found

    void validate() const;
};

/// Inter-spike interval bracketing time t at one pixel: the latest spike at
/// or before t and the earliest spike strictly after t, each within
/// delta_t_max of t. Empty when either side is missing.
std::optional<std::size_t> tfi_interval(const SpikeStream& stream, std::size_t t, std::size_t y,
                                        std::size_t x, std::size_t delta_t_max);

/// Intensity for a given interval: min(1, θ / ISI).
double tfi_intensity(std::size_t isi, double theta);

/// H×W grayscale estimate of frame t, row-major.
std::vector<double> tfi_reconstruct(const SpikeStream& stream, std::size_t t, const TfiConfig& cfg);

/// tfi_reconstruct at t = 0, stride, 2·stride, ...
IntensityVideo tfi_video(const SpikeStream& stream, std::size_t stride, const TfiConfig& cfg);

}  // namespace spiketk
