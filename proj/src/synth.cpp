#include "spiketk/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "json_util.hpp"
#include "spiketk/error.hpp"
#include "spiketk/image_io.hpp"

namespace spiketk {

namespace {

using detail::json;

constexpr double kBackground = 0.05;
constexpr double kPeak = 0.9;

struct Blob {
    double x;
    double y;
    double sigma;
};

void splat(IntensityVideo& v, std::size_t n, const Blob& b) {
    for (std::size_t y = 0; y < v.height(); ++y) {
        for (std::size_t x = 0; x < v.width(); ++x) {
            const double dx = static_cast<double>(x) - b.x;
            const double dy = static_cast<double>(y) - b.y;
            const double g = kPeak * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
            double& p = v.at(n, y, x);
            p = std::min(1.0, std::max(p, g));
        }
    }
}

}  // namespace

const char* motion_name(Motion m) {
    switch (m) {
        case Motion::clap: return "clap";
        case Motion::wave: return "wave";
        case Motion::punch: return "punch";
        case Motion::throw_: return "throw";
    }
    return "?";
}

Motion motion_from_name(const std::string& name) {
    for (Motion m : {Motion::clap, Motion::wave, Motion::punch, Motion::throw_}) {
        if (name == motion_name(m)) return m;
    }
    throw PreconditionError("unknown motion class '" + name + "' (expected clap, wave, punch or throw)");
}

std::string motion_prompt(Motion m) {
    switch (m) {
        case Motion::clap: return "a person clapping";
        case Motion::wave: return "a person waving";
        case Motion::punch: return "a person punching";
        case Motion::throw_: return "a person throwing";
    }
    return {};
}

void SyntheticDatasetSpec::validate() const {
    require(classes.size() >= 2, "synthetic dataset needs at least two classes");
    for (std::size_t i = 0; i < classes.size(); ++i) {
        for (std::size_t j = i + 1; j < classes.size(); ++j) require(classes[i] != classes[j], "duplicate class");
    }
    require(clips_per_class >= 1, "synthetic dataset needs at least one clip per class");
    require(frames >= 2, "synthetic clips need at least two frames");
    require(height >= 64 && width >= 64, "synthetic resolution must be at least 64x64");
}

IntensityVideo render_clip(Motion m, std::size_t clip_index, const SyntheticDatasetSpec& spec) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(clip_index)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto jitter = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };

    const double w = static_cast<double>(spec.width);
    const double h = static_cast<double>(spec.height);
    const double cx = w * jitter(0.42, 0.58);
    const double cy = h * jitter(0.42, 0.58);
    const double sigma = std::min(w, h) * jitter(0.05, 0.07);
    const double phase = jitter(0.0, 2.0 * std::numbers::pi);
    const double pi = std::numbers::pi;

    IntensityVideo v(spec.frames, spec.height, spec.width, kBackground);
    const double last = static_cast<double>(spec.frames - 1);
    const double cycles = jitter(2.0, 3.0);
    for (std::size_t n = 0; n < spec.frames; ++n) {
        const double s = static_cast<double>(n) / last;  // 0..1 over the clip
        switch (m) {
            case Motion::clap: {
                const double gap = w * (0.08 + 0.25 * std::fabs(std::cos(pi * cycles * s + phase)));
                splat(v, n, {cx - gap, cy, sigma});
                splat(v, n, {cx + gap, cy, sigma});
                break;
            }
            case Motion::wave: {
                splat(v, n, {cx + 0.28 * w * std::sin(2.0 * pi * cycles * s + phase), h * 0.28, sigma});
                break;
            }
            case Motion::punch: {
                // Fast extension followed by a slower return.
                const double p = std::fmod(cycles * s + phase / (2.0 * pi), 1.0);
                const double reach = p < 0.25 ? p / 0.25 : (1.0 - p) / 0.75;
                splat(v, n, {w * 0.25 + 0.5 * w * reach, cy, sigma * 1.3});
                break;
            }
            case Motion::throw_: {
                const double x = w * (0.12 + 0.76 * s);
                const double y = h * (0.85 - 0.7 * 4.0 * s * (1.0 - s));
                splat(v, n, {x, y, sigma});
                break;
            }
        }
    }
    v.validate();
    return v;
}

SyntheticDataset synth_dataset(const SyntheticDatasetSpec& spec, const std::filesystem::path& out_dir) {
    spec.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    SyntheticDataset ds;
    json clips = json::array();
    for (Motion m : spec.classes) {
        ds.prompts.push_back({motion_name(m), motion_prompt(m)});
        for (std::size_t i = 0; i < spec.clips_per_class; ++i) {
            char id[64];
            std::snprintf(id, sizeof id, "%s_%03zu", motion_name(m), i);
            const auto dir = out_dir / id;
            write_video_frames(render_clip(m, i, spec), dir);
            ds.clips.push_back({id, motion_name(m), dir});
            clips.push_back({{"id", id}, {"label", motion_name(m)}, {"frames", id}});
        }
    }
    write_prompts(ds.prompts, out_dir / "prompts.txt");

    json classes = json::array();
    for (Motion m : spec.classes) classes.push_back(motion_name(m));
    Provenance prov;
    prov.seed = spec.seed;
    prov.command = "synth";
    detail::write_json_file({{"classes", classes},
                             {"clips_per_class", spec.clips_per_class},
                             {"frames", spec.frames},
                             {"height", spec.height},
                             {"width", spec.width},
                             {"seed", spec.seed},
                             {"clips", clips},
                             {"provenance", detail::provenance_json(prov)}},
                            out_dir / "dataset.json");
    return ds;
}

SyntheticDataset read_dataset(const std::filesystem::path& dir) {
    const json doc = detail::read_json_file(dir / "dataset.json");
    SyntheticDataset ds;
    ds.prompts = read_prompts(dir / "prompts.txt");
    const std::string where = (dir / "dataset.json").string();
    require(doc.contains("clips") && doc["clips"].is_array(), where + ": missing clip list");
    for (const auto& c : doc["clips"]) {
        ds.clips.push_back({detail::field<std::string>(c, "id", where), detail::field<std::string>(c, "label", where),
                            dir / detail::field<std::string>(c, "frames", where)});
    }
    return ds;
}

std::pair<double, double> bright_centroid(const IntensityVideo& video, std::size_t frame, double floor) {
    double sx = 0.0, sy = 0.0, sw = 0.0;
    for (std::size_t y = 0; y < video.height(); ++y) {
        for (std::size_t x = 0; x < video.width(); ++x) {
            const double v = video.at(frame, y, x);
            if (v <= floor) continue;
            sx += v * static_cast<double>(x);
            sy += v * static_cast<double>(y);
            sw += v;
        }
    }
    require(sw > 0.0, "frame has no pixel above the brightness floor");
    return {sx / sw, sy / sw};
}

}  // namespace spiketk
