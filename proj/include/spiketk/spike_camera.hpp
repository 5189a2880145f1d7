#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "spiketk/spike_stream.hpp"
#include "spiketk/video.hpp"

namespace spiketk {

/// Continuous integrate-and-fire pixel.
struct PixelModel {
    double alpha = 1.0;  // charge per (intensity · second)
    double theta = 5.0;  // firing threshold
    double tick = 1e-3;  // polling interval, seconds

    void validate() const;
};

struct PixelSimulation {
    std::vector<std::uint8_t> spikes;   // S(n) for polls n = 1..N
    std::vector<double> crossing_times; // interpolated instants where charge reached kθ
    double min_residual = 0.0;
    double max_residual = 0.0;
};

/// Called after every integration step with (time, residual charge).
using ChargeObserver = std::function<void(double, double)>;

/// Integrates α·I(t) with step dt (midpoint rule, steps split at poll
/// instants). Each crossing of θ subtracts θ and raises the pixel flag; the
/// flag is read out and cleared at every poll n·tick. Several crossings
/// between two polls still produce a single spike.
PixelSimulation simulate_pixel(const std::function<double(double)>& intensity, const PixelModel& model,
                               double duration, double dt, const ChargeObserver& observer = {});

struct EncoderConfig {
    double theta = 5.0;
    double noise_amplitude = 0.0;

    void validate() const;
};

/// Charge is accumulated in fixed point with this many units per intensity
/// unit, so decimal intensities sum exactly (0.6 × 25 frames is exactly 15).
inline constexpr std::int64_t kChargeUnitsPerIntensity = 1'000'000'000;

/// Discrete encoder: V ← V + I per frame, emit and subtract θ when V ≥ θ.
/// With noise_amplitude a > 0, uniform(−a, a) noise is added per frame and
/// pixel and the result clamped to [0,1] before accumulation.
SpikeStream encode_video(const IntensityVideo& video, const EncoderConfig& cfg, std::uint64_t seed);

/// ITU-R 601 luma of an RGB image.
std::vector<double> to_grayscale(const Image& rgb);

/// Inserts factor−1 linearly blended frames between consecutive frames.
IntensityVideo upsample_temporal(const IntensityVideo& video, std::size_t factor);

}  // namespace spiketk
