#include "spiketk/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>
#include <string>

#include "json_util.hpp"
#include "spiketk/error.hpp"
#include "spiketk/spike_camera.hpp"
#include "spiketk/spike_stream.hpp"

namespace spiketk {

IntensityVideo::IntensityVideo(std::size_t frames, std::size_t height, std::size_t width, double fill)
    : frames_(frames), height_(height), width_(width), data_(frames * height * width, fill) {
    require(height >= 1 && width >= 1, "video dimensions must be positive");
}

void IntensityVideo::append_frame(std::span<const double> frame) {
    require(frame.size() == frame_size() && frame_size() > 0, "frame size does not match video");
    data_.insert(data_.end(), frame.begin(), frame.end());
    ++frames_;
}

void IntensityVideo::validate() const {
    for (double v : data_) {
        require(std::isfinite(v) && v >= 0.0 && v <= 1.0, "intensity values must lie in [0,1]");
    }
}

namespace {

std::string next_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
            if (!tok.empty()) break;
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    return tok;
}

std::size_t parse_header_number(std::istream& in, const std::filesystem::path& path) {
    const std::string tok = next_token(in);
    if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char ch) { return std::isdigit(ch); })) {
        throw PreconditionError("malformed PNM header in " + path.string());
    }
    return static_cast<std::size_t>(std::stoull(tok));
}

bool is_frame_file(const std::filesystem::path& p) {
    const auto ext = p.extension().string();
    return ext == ".pgm" || ext == ".ppm";
}

// Numeric key from the digits of a filename; falls back to lexical order.
std::pair<long long, std::string> frame_key(const std::filesystem::path& p) {
    const std::string stem = p.stem().string();
    std::string digits;
    for (char c : stem) {
        if (std::isdigit(static_cast<unsigned char>(c))) digits.push_back(c);
    }
    return {digits.empty() ? -1 : std::stoll(digits), stem};
}

}  // namespace

Image read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const std::string magic = next_token(in);
    std::size_t channels = 0;
    if (magic == "P5") {
        channels = 1;
    } else if (magic == "P6") {
        channels = 3;
    } else {
        throw PreconditionError(path.string() + ": only binary PGM (P5) and PPM (P6) are supported");
    }
    Image img;
    img.width = parse_header_number(in, path);
    img.height = parse_header_number(in, path);
    const std::size_t maxval = parse_header_number(in, path);
    require(img.width > 0 && img.height > 0 && maxval > 0 && maxval <= 65535,
            path.string() + ": bad PNM dimensions or maxval");
    img.channels = channels;

    const std::size_t samples = img.width * img.height * channels;
    const std::size_t bytes_per = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(samples * bytes_per);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw IoError(path.string() + " is truncated");

    img.data.resize(samples);
    const double scale = 1.0 / static_cast<double>(maxval);
    for (std::size_t i = 0; i < samples; ++i) {
        const unsigned v = bytes_per == 2 ? (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1] : raw[i];
        img.data[i] = std::min(1.0, static_cast<double>(v) * scale);
    }
    return img;
}

void write_pgm(const std::filesystem::path& path, std::span<const double> values, std::size_t height,
               std::size_t width) {
    require(values.size() == height * width, "pixel count does not match image shape");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "P5\n" << width << ' ' << height << "\n255\n";
    std::vector<unsigned char> raw(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        raw[i] = static_cast<unsigned char>(std::lround(255.0 * std::clamp(values[i], 0.0, 1.0)));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

IntensityVideo read_video(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    if (fs::is_directory(path)) {
        std::vector<fs::path> frames;
        for (const auto& entry : fs::directory_iterator(path)) {
            if (entry.is_regular_file() && is_frame_file(entry.path())) frames.push_back(entry.path());
        }
        require(!frames.empty(), "no .pgm/.ppm frames in " + path.string());
        std::sort(frames.begin(), frames.end(),
                  [](const fs::path& a, const fs::path& b) { return frame_key(a) < frame_key(b); });
        IntensityVideo video;
        for (const auto& f : frames) {
            Image img = read_pnm(f);
            std::vector<double> gray = img.channels == 3 ? to_grayscale(img) : std::move(img.data);
            if (video.frame_count() == 0 && video.height() == 0) {
                video = IntensityVideo(0, img.height, img.width);
            }
            require(img.height == video.height() && img.width == video.width(),
                    "frame " + f.string() + " has a different size than earlier frames");
            video.append_frame(gray);
        }
        return video;
    }

    if (!fs::exists(path)) throw IoError("no such video input: " + path.string());
    const auto meta_path = sidecar_path(path);
    if (!fs::exists(meta_path)) {
        throw PreconditionError("raw video " + path.string() + " needs a sidecar " + meta_path.string());
    }
    const StreamMeta meta = read_meta(meta_path);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::size_t count = meta.t_len * meta.height * meta.width;
    if (raw.size() < count * 4) throw IoError(path.string() + " is truncated");
    require(raw.size() == count * 4, path.string() + " is larger than its sidecar implies");

    IntensityVideo video(meta.t_len, meta.height, meta.width);
    for (std::size_t n = 0; n < meta.t_len; ++n) {
        auto dst = video.frame(n);
        for (std::size_t i = 0; i < dst.size(); ++i) {
            const std::size_t off = 4 * (n * dst.size() + i);
            std::uint32_t bits = static_cast<std::uint32_t>(raw[off]) | (static_cast<std::uint32_t>(raw[off + 1]) << 8) |
                                 (static_cast<std::uint32_t>(raw[off + 2]) << 16) |
                                 (static_cast<std::uint32_t>(raw[off + 3]) << 24);
            dst[i] = static_cast<double>(std::bit_cast<float>(bits));
        }
    }
    video.validate();
    return video;
}

void write_video_frames(const IntensityVideo& video, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    for (std::size_t n = 0; n < video.frame_count(); ++n) {
        std::ostringstream name;
        name << "frame_" << std::setw(5) << std::setfill('0') << n << ".pgm";
        write_pgm(dir / name.str(), video.frame(n), video.height(), video.width());
    }
}

void write_raw_video(const IntensityVideo& video, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (double v : video.values()) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        const unsigned char b[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                                    static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
        out.write(reinterpret_cast<const char*>(b), 4);
    }
    if (!out) throw IoError("write failed for " + path.string());
    write_meta(StreamMeta{video.height(), video.width(), video.frame_count(), 5.0, std::nullopt},
               sidecar_path(path));
}

}  // namespace spiketk
