#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace spiketk {

/// Interleaved multi-channel image with values in [0,1].
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 1;
    std::vector<double> data;
};

/// Sequence of H×W grayscale frames with values in [0,1].
class IntensityVideo {
public:
    IntensityVideo() = default;
    IntensityVideo(std::size_t frames, std::size_t height, std::size_t width, double fill = 0.0);

    std::size_t frame_count() const { return frames_; }
    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t frame_size() const { return height_ * width_; }

    double& at(std::size_t n, std::size_t y, std::size_t x) { return data_[(n * height_ + y) * width_ + x]; }
    double at(std::size_t n, std::size_t y, std::size_t x) const {
        return data_[(n * height_ + y) * width_ + x];
    }
    std::span<double> frame(std::size_t n) { return {data_.data() + n * frame_size(), frame_size()}; }
    std::span<const double> frame(std::size_t n) const {
        return {data_.data() + n * frame_size(), frame_size()};
    }
    std::span<const double> values() const { return data_; }

    void append_frame(std::span<const double> frame);

    /// Throws PreconditionError when any value is outside [0,1] or non-finite.
    void validate() const;

    friend bool operator==(const IntensityVideo&, const IntensityVideo&) = default;

private:
    std::size_t frames_ = 0;
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> data_;
};

}  // namespace spiketk
