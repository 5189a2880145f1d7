#pragma once

#include <filesystem>
#include <span>

#include "spiketk/video.hpp"

namespace spiketk {

/// Binary PGM (P5) or PPM (P6), 8- or 16-bit. Values scaled to [0,1].
Image read_pnm(const std::filesystem::path& path);

/// 8-bit P5 with value round(255·v); v is clamped to [0,1].
void write_pgm(const std::filesystem::path& path, std::span<const double> values, std::size_t height,
               std::size_t width);

/// Loads a video from either a directory of numbered .pgm/.ppm frames
/// (ordered by the digits in their names, RGB converted to luma) or a raw
/// little-endian float32 planar file described by its `.meta.json` sidecar.
IntensityVideo read_video(const std::filesystem::path& path);

/// Writes frames as `frame_00000.pgm`, ... into `dir` (created if missing).
void write_video_frames(const IntensityVideo& video, const std::filesystem::path& dir);

/// Raw float32 planar body plus `.meta.json` sidecar with height/width/t_len.
void write_raw_video(const IntensityVideo& video, const std::filesystem::path& path);

}  // namespace spiketk
