#include "spiketk/spike_camera.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "spiketk/error.hpp"

namespace spiketk {

void PixelModel::validate() const {
    require(alpha > 0.0, "alpha must be positive");
    require(theta > 0.0, "theta must be positive");
    require(tick > 0.0, "tick must be positive");
}

PixelSimulation simulate_pixel(const std::function<double(double)>& intensity, const PixelModel& model,
                               double duration, double dt, const ChargeObserver& observer) {
    model.validate();
    require(duration > 0.0, "duration must be positive");
    require(dt > 0.0, "dt must be positive");
    require(dt <= model.tick, "dt must not exceed the polling interval");

    const auto polls = static_cast<std::size_t>(std::floor(duration / model.tick + 1e-9));
    const double snap = 1e-9 * dt;

    PixelSimulation sim;
    sim.spikes.reserve(polls);
    sim.min_residual = 0.0;
    sim.max_residual = 0.0;

    double charge = 0.0;
    bool flag = false;
    double t = 0.0;
    std::size_t step = 0;
    std::size_t poll = 1;
    while (poll <= polls) {
        const double step_end = static_cast<double>(step + 1) * dt;
        const double poll_time = static_cast<double>(poll) * model.tick;
        const bool at_step = step_end <= poll_time + snap;
        const bool at_poll = poll_time <= step_end + snap;
        const double end = at_poll ? poll_time : step_end;

        const double width = end - t;
        if (width > 0.0) {
            const double level = intensity(t + 0.5 * width);
            require(level >= 0.0, "intensity must be non-negative (got " + std::to_string(level) + ")");
            const double added = model.alpha * level * width;
            const double before = charge;
            charge += added;
            for (int j = 1; charge >= model.theta; ++j) {
                const double frac = (static_cast<double>(j) * model.theta - before) / added;
                sim.crossing_times.push_back(t + frac * width);
                charge -= model.theta;
                flag = true;
            }
            ensure(charge >= 0.0 && charge < model.theta, "pixel charge left [0, theta)");
            sim.min_residual = std::min(sim.min_residual, charge);
            sim.max_residual = std::max(sim.max_residual, charge);
            if (observer) observer(end, charge);
        }
        t = end;
        if (at_step) ++step;
        if (at_poll) {
            sim.spikes.push_back(flag ? 1 : 0);
            flag = false;
            ++poll;
        }
    }
    return sim;
}

void EncoderConfig::validate() const {
    require(theta > 0.0, "encoder theta must be positive");
    require(noise_amplitude >= 0.0, "noise amplitude must be non-negative");
}

SpikeStream encode_video(const IntensityVideo& video, const EncoderConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    require(video.frame_count() >= 1, "video has no frames");
    video.validate();

    const auto to_units = [](double v) {
        return static_cast<std::int64_t>(std::llround(v * static_cast<double>(kChargeUnitsPerIntensity)));
    };
    const std::int64_t theta = to_units(cfg.theta);
    require(theta > 0, "encoder theta below charge resolution");

    const std::size_t n = video.frame_size();
    std::vector<std::int64_t> potential(n, 0);
    SpikeStream out(video.frame_count(), video.height(), video.width());

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> noise(-cfg.noise_amplitude, cfg.noise_amplitude);
    const bool noisy = cfg.noise_amplitude > 0.0;

    for (std::size_t f = 0; f < video.frame_count(); ++f) {
        const auto frame = video.frame(f);
        for (std::size_t i = 0; i < n; ++i) {
            double level = frame[i];
            if (noisy) level = std::clamp(level + noise(rng), 0.0, 1.0);
            potential[i] += to_units(level);
            if (potential[i] >= theta) {
                out.set(f * n + i, true);
                potential[i] -= theta;
            }
        }
    }
    return out;
}

std::vector<double> to_grayscale(const Image& rgb) {
    require(rgb.channels == 3, "grayscale conversion needs 3 channels, got " + std::to_string(rgb.channels));
    const std::size_t n = rgb.height * rgb.width;
    require(rgb.data.size() == n * 3, "image data size does not match its shape");
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double r = rgb.data[3 * i];
        const double g = rgb.data[3 * i + 1];
        const double b = rgb.data[3 * i + 2];
        require(r >= 0.0 && r <= 1.0 && g >= 0.0 && g <= 1.0 && b >= 0.0 && b <= 1.0,
                "RGB values must lie in [0,1]");
        out[i] = std::clamp(0.299 * r + 0.587 * g + 0.114 * b, 0.0, 1.0);
    }
    return out;
}

IntensityVideo upsample_temporal(const IntensityVideo& video, std::size_t factor) {
    require(factor >= 1, "upsample factor must be >= 1");
    require(video.frame_count() >= 1, "video has no frames");
    if (factor == 1) return video;

    const std::size_t frames = (video.frame_count() - 1) * factor + 1;
    IntensityVideo out(frames, video.height(), video.width());
    for (std::size_t k = 0; k + 1 < video.frame_count(); ++k) {
        const auto a = video.frame(k);
        const auto b = video.frame(k + 1);
        auto first = out.frame(k * factor);
        std::copy(a.begin(), a.end(), first.begin());
        for (std::size_t j = 1; j < factor; ++j) {
            const double w = static_cast<double>(j) / static_cast<double>(factor);
            auto dst = out.frame(k * factor + j);
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::clamp((1.0 - w) * a[i] + w * b[i], 0.0, 1.0);
        }
    }
    const auto last = video.frame(video.frame_count() - 1);
    auto dst = out.frame(frames - 1);
    std::copy(last.begin(), last.end(), dst.begin());
    return out;
}

}  // namespace spiketk
