#include "spiketk/reconstructor.hpp"

#include <algorithm>
#include <string>

#include "spiketk/error.hpp"

namespace spiketk {

void TfiConfig::validate() const {
    require(delta_t_max >= 1, "delta_t_max must be >= 1");
    require(theta > 0.0, "TFI theta must be positive");
    require(default_value >= 0.0 && default_value <= 1.0, "default_value must lie in [0,1]");
}

std::optional<std::size_t> tfi_interval(const SpikeStream& stream, std::size_t t, std::size_t y,
                                        std::size_t x, std::size_t delta_t_max) {
    const std::size_t plane = stream.frame_size();
    const std::size_t offset = y * stream.width() + x;

    std::optional<std::size_t> before;
    const std::size_t lo = t >= delta_t_max ? t - delta_t_max : 0;
    for (std::size_t s = t + 1; s-- > lo;) {
        if (stream.get(s * plane + offset)) {
            before = s;
            break;
        }
    }
    if (!before) return std::nullopt;

    const std::size_t hi = std::min(stream.t_len() - 1, t + delta_t_max);
    for (std::size_t s = t + 1; s <= hi; ++s) {
        if (stream.get(s * plane + offset)) return s - *before;
    }
    return std::nullopt;
}

double tfi_intensity(std::size_t isi, double theta) {
    return std::min(1.0, theta / static_cast<double>(isi));
}

std::vector<double> tfi_reconstruct(const SpikeStream& stream, std::size_t t, const TfiConfig& cfg) {
    cfg.validate();
    require(t < stream.t_len(), "time step " + std::to_string(t) + " out of range [0, " +
                                    std::to_string(stream.t_len()) + ")");
    std::vector<double> out(stream.frame_size(), cfg.default_value);
    for (std::size_t y = 0; y < stream.height(); ++y) {
        for (std::size_t x = 0; x < stream.width(); ++x) {
            if (const auto isi = tfi_interval(stream, t, y, x, cfg.delta_t_max)) {
                out[y * stream.width() + x] = tfi_intensity(*isi, cfg.theta);
            }
        }
    }
    return out;
}

IntensityVideo tfi_video(const SpikeStream& stream, std::size_t stride, const TfiConfig& cfg) {
    require(stride >= 1, "stride must be >= 1");
    IntensityVideo video(0, stream.height(), stream.width());
    for (std::size_t t = 0; t < stream.t_len(); t += stride) {
        video.append_frame(tfi_reconstruct(stream, t, cfg));
    }
    return video;
}

}  // namespace spiketk
