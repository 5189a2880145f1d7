#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "spiketk/provenance.hpp"

namespace spiketk {

/// Binary spatiotemporal tensor S(t, y, x) in {0,1}.
///
/// Storage is the on-disk layout: one continuous MSB-first bitstream in
/// (t, y, x) order with x fastest, zero-padded to a whole byte at the end.
/// Padding bits are always zero.
class SpikeStream {
public:
    SpikeStream(std::size_t t_len, std::size_t height, std::size_t width);

    /// Builds a stream from one byte per element; every value must be 0 or 1.
    static SpikeStream from_values(std::size_t t_len, std::size_t height, std::size_t width,
                                   std::span<const std::uint8_t> values);
    /// Adopts an already packed bitstream; padding bits are cleared.
    static SpikeStream from_packed(std::size_t t_len, std::size_t height, std::size_t width,
                                   std::vector<std::uint8_t> bytes);

    std::size_t t_len() const { return t_len_; }
    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t frame_size() const { return height_ * width_; }
    std::size_t element_count() const { return t_len_ * height_ * width_; }

    bool get(std::size_t index) const {
        return (bits_[index >> 3] >> (7 - (index & 7))) & 1U;
    }
    void set(std::size_t index, bool value) {
        const auto mask = static_cast<std::uint8_t>(1U << (7 - (index & 7)));
        if (value) {
            bits_[index >> 3] |= mask;
        } else {
            bits_[index >> 3] &= static_cast<std::uint8_t>(~mask);
        }
    }
    bool at(std::size_t t, std::size_t y, std::size_t x) const {
        return get((t * height_ + y) * width_ + x);
    }
    void set(std::size_t t, std::size_t y, std::size_t x, bool value) {
        set((t * height_ + y) * width_ + x, value);
    }

    /// Unpacked 0/1 bytes for frame t, row-major.
    std::vector<std::uint8_t> frame(std::size_t t) const;
    /// Copies frame `src_t` of `src` into frame `t` of this stream.
    void copy_frame_from(const SpikeStream& src, std::size_t src_t, std::size_t t);

    std::size_t count_ones() const;
    std::span<const std::uint8_t> packed() const { return bits_; }

    friend bool operator==(const SpikeStream&, const SpikeStream&) = default;

private:
    std::size_t t_len_;
    std::size_t height_;
    std::size_t width_;
    std::vector<std::uint8_t> bits_;
};

/// Sidecar description of a headerless `.dat` file.
struct StreamMeta {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t t_len = 0;
    double threshold_theta = 5.0;
    std::optional<double> tick_seconds;

    void validate() const;
    static StreamMeta of(const SpikeStream& stream, double theta = 5.0);
};

struct ClipWindowSpec {
    std::size_t window_len = 800;
    std::size_t stride = 200;
};

/// ceil(t·h·w / 8)
std::size_t packed_size(std::size_t t_len, std::size_t height, std::size_t width);

std::vector<std::uint8_t> pack_spikes(const SpikeStream& stream);
SpikeStream unpack_spikes(std::span<const std::uint8_t> bytes, const StreamMeta& meta);

void write_dat(const SpikeStream& stream, const StreamMeta& meta, const std::filesystem::path& path);
SpikeStream read_dat(const std::filesystem::path& path, const StreamMeta& meta);

/// `<stem>.meta.json` next to a `.dat` file.
std::filesystem::path sidecar_path(const std::filesystem::path& dat_path);
void write_meta(const StreamMeta& meta, const std::filesystem::path& path,
                const Provenance* provenance = nullptr);
StreamMeta read_meta(const std::filesystem::path& path);

/// Clip k covers [k·stride, k·stride + window_len).
std::vector<SpikeStream> slice_clips(const SpikeStream& stream, const ClipWindowSpec& spec);

/// Frame indices floor(i·T/target_len) for i in [0, target_len).
std::vector<std::size_t> subsample_indices(std::size_t t_len, std::size_t target_len);
SpikeStream subsample_temporal(const SpikeStream& stream, std::size_t target_len);

/// Frames [begin, begin + len) as a new stream.
SpikeStream time_slice(const SpikeStream& stream, std::size_t begin, std::size_t len);

}  // namespace spiketk
