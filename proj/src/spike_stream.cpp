#include "spiketk/spike_stream.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <string>

#include "json_util.hpp"
#include "spiketk/error.hpp"
#include "spiketk/hash.hpp"

namespace spiketk {

namespace {

void check_dims(std::size_t t_len, std::size_t height, std::size_t width) {
    require(t_len >= 1 && height >= 1 && width >= 1,
            "spike stream dimensions must be positive (t_len=" + std::to_string(t_len) +
                ", height=" + std::to_string(height) + ", width=" + std::to_string(width) + ")");
}

}  // namespace

std::size_t packed_size(std::size_t t_len, std::size_t height, std::size_t width) {
    return (t_len * height * width + 7) / 8;
}

SpikeStream::SpikeStream(std::size_t t_len, std::size_t height, std::size_t width)
    : t_len_(t_len), height_(height), width_(width) {
    check_dims(t_len, height, width);
    bits_.assign(packed_size(t_len, height, width), 0);
}

SpikeStream SpikeStream::from_values(std::size_t t_len, std::size_t height, std::size_t width,
                                     std::span<const std::uint8_t> values) {
    SpikeStream s(t_len, height, width);
    require(values.size() == s.element_count(), "value count does not match stream dimensions");
    for (std::size_t i = 0; i < values.size(); ++i) {
        require(values[i] <= 1, "spike values must be 0 or 1");
        if (values[i]) s.set(i, true);
    }
    return s;
}

SpikeStream SpikeStream::from_packed(std::size_t t_len, std::size_t height, std::size_t width,
                                     std::vector<std::uint8_t> bytes) {
    SpikeStream s(t_len, height, width);
    require(bytes.size() == s.bits_.size(),
            "packed length mismatch: got " + std::to_string(bytes.size()) + " bytes, expected " +
                std::to_string(s.bits_.size()));
    const std::size_t tail = s.element_count() % 8;
    if (tail != 0) bytes.back() &= static_cast<std::uint8_t>(0xFFU << (8 - tail));
    s.bits_ = std::move(bytes);
    return s;
}

std::vector<std::uint8_t> SpikeStream::frame(std::size_t t) const {
    require(t < t_len_, "frame index out of range");
    std::vector<std::uint8_t> out(frame_size());
    const std::size_t base = t * frame_size();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = get(base + i) ? 1 : 0;
    return out;
}

void SpikeStream::copy_frame_from(const SpikeStream& src, std::size_t src_t, std::size_t t) {
    require(src.height_ == height_ && src.width_ == width_, "frame shape mismatch");
    require(src_t < src.t_len_ && t < t_len_, "frame index out of range");
    const std::size_t n = frame_size();
    const std::size_t from = src_t * n;
    const std::size_t to = t * n;
    for (std::size_t i = 0; i < n; ++i) set(to + i, src.get(from + i));
}

std::size_t SpikeStream::count_ones() const {
    std::size_t n = 0;
    for (std::uint8_t b : bits_) n += static_cast<std::size_t>(std::popcount(b));
    return n;
}

void StreamMeta::validate() const {
    check_dims(t_len, height, width);
    require(threshold_theta > 0.0, "threshold_theta must be positive");
    if (tick_seconds) require(*tick_seconds > 0.0, "tick_seconds must be positive");
}

StreamMeta StreamMeta::of(const SpikeStream& stream, double theta) {
    return StreamMeta{stream.height(), stream.width(), stream.t_len(), theta, std::nullopt};
}

std::vector<std::uint8_t> pack_spikes(const SpikeStream& stream) {
    auto bytes = stream.packed();
    return {bytes.begin(), bytes.end()};
}

SpikeStream unpack_spikes(std::span<const std::uint8_t> bytes, const StreamMeta& meta) {
    meta.validate();
    return SpikeStream::from_packed(meta.t_len, meta.height, meta.width,
                                    std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
}

void write_dat(const SpikeStream& stream, const StreamMeta& meta, const std::filesystem::path& path) {
    meta.validate();
    require(meta.t_len == stream.t_len() && meta.height == stream.height() &&
                meta.width == stream.width(),
            "stream dimensions disagree with meta");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    const auto bytes = stream.packed();
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

SpikeStream read_dat(const std::filesystem::path& path, const StreamMeta& meta) {
    meta.validate();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::size_t expected = packed_size(meta.t_len, meta.height, meta.width);
    if (bytes.size() < expected) {
        throw IoError(path.string() + " is truncated: " + std::to_string(bytes.size()) + " of " +
                      std::to_string(expected) + " bytes");
    }
    require(bytes.size() == expected, path.string() + " has " + std::to_string(bytes.size()) +
                                          " bytes, meta implies " + std::to_string(expected));
    return SpikeStream::from_packed(meta.t_len, meta.height, meta.width, std::move(bytes));
}

std::filesystem::path sidecar_path(const std::filesystem::path& dat_path) {
    auto p = dat_path;
    p.replace_extension(".meta.json");
    return p;
}

void write_meta(const StreamMeta& meta, const std::filesystem::path& path, const Provenance* provenance) {
    meta.validate();
    detail::json j = {{"height", meta.height},
                      {"width", meta.width},
                      {"t_len", meta.t_len},
                      {"threshold_theta", meta.threshold_theta}};
    if (meta.tick_seconds) j["tick_seconds"] = *meta.tick_seconds;
    if (provenance) j["provenance"] = detail::provenance_json(*provenance);
    detail::write_json_file(j, path);
}

StreamMeta read_meta(const std::filesystem::path& path) {
    const auto j = detail::read_json_file(path);
    const std::string where = path.string();
    StreamMeta m;
    const auto dim = [&](const char* name) {
        const auto v = detail::field<long long>(j, name, where);
        require(v > 0, where + ": '" + name + "' must be a positive integer");
        return static_cast<std::size_t>(v);
    };
    m.height = dim("height");
    m.width = dim("width");
    m.t_len = dim("t_len");
    m.threshold_theta = detail::field<double>(j, "threshold_theta", where);
    if (j.contains("tick_seconds") && !j["tick_seconds"].is_null()) {
        m.tick_seconds = detail::field<double>(j, "tick_seconds", where);
    }
    m.validate();
    return m;
}

std::vector<SpikeStream> slice_clips(const SpikeStream& stream, const ClipWindowSpec& spec) {
    require(spec.window_len >= 1 && spec.stride >= 1, "window_len and stride must be >= 1");
    require(stream.t_len() >= spec.window_len,
            "stream too short for clip window: t_len=" + std::to_string(stream.t_len()) +
                " < window_len=" + std::to_string(spec.window_len));
    const std::size_t count = (stream.t_len() - spec.window_len) / spec.stride + 1;
    std::vector<SpikeStream> clips;
    clips.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        clips.push_back(time_slice(stream, k * spec.stride, spec.window_len));
    }
    return clips;
}

std::vector<std::size_t> subsample_indices(std::size_t t_len, std::size_t target_len) {
    require(target_len >= 1, "target_len must be >= 1");
    require(target_len <= t_len, "target_len " + std::to_string(target_len) +
                                     " exceeds stream length " + std::to_string(t_len));
    std::vector<std::size_t> idx(target_len);
    for (std::size_t i = 0; i < target_len; ++i) idx[i] = i * t_len / target_len;
    return idx;
}

SpikeStream subsample_temporal(const SpikeStream& stream, std::size_t target_len) {
    const auto idx = subsample_indices(stream.t_len(), target_len);
    SpikeStream out(target_len, stream.height(), stream.width());
    for (std::size_t i = 0; i < idx.size(); ++i) out.copy_frame_from(stream, idx[i], i);
    return out;
}

SpikeStream time_slice(const SpikeStream& stream, std::size_t begin, std::size_t len) {
    require(len >= 1 && begin + len <= stream.t_len(), "time slice out of range");
    SpikeStream out(len, stream.height(), stream.width());
    for (std::size_t t = 0; t < len; ++t) out.copy_frame_from(stream, begin + t, t);
    return out;
}

void Provenance::add_input(const std::filesystem::path& path) {
    inputs.emplace_back(path.string(), file_fingerprint(path));
}

std::string file_fingerprint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    static constexpr char kHex[] = "0123456789abcdef";
    std::uint64_t h = fnv1a64(std::span<const std::uint8_t>(bytes));
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = kHex[h & 0xF];
        h >>= 4;
    }
    return out;
}

}  // namespace spiketk
