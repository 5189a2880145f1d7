#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "spiketk/error.hpp"
#include "spiketk/pipeline.hpp"
#include "spiketk/synth.hpp"

using namespace spiketk;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("spiketk_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

PipelineConfig tiny_config(const fs::path& out) {
    PipelineConfig cfg;
    cfg.out_dir = out;
    cfg.classes = 2;
    cfg.clips_per_class = 3;
    cfg.test_per_class = 1;
    cfg.frames = 40;
    cfg.resolution = 64;
    cfg.upsample = 2;
    cfg.target_len = 0;
    cfg.r_win = 5;
    cfg.step = 8;
    cfg.n_blocks = 3;
    cfg.channel_step = 3;
    cfg.c_out = 4;
    cfg.embed_dim = 16;
    cfg.shots = {1, 2};
    cfg.epochs = 5;
    cfg.fewshot_seeds = {1, 2};
    return cfg;
}

}  // namespace

TEST(Synth, LayoutAndPrompts) {
    const auto dir = temp_dir("synth_layout");
    SyntheticDatasetSpec spec;
    spec.frames = 8;
    spec.height = spec.width = 64;
    const auto ds = synth_dataset(spec, dir);
    EXPECT_EQ(ds.clips.size(), 48u);
    EXPECT_EQ(ds.prompts.size(), 4u);
    std::size_t dirs = 0;
    for (const auto& e : fs::directory_iterator(dir)) dirs += e.is_directory();
    EXPECT_EQ(dirs, 48u);
    std::size_t frames = 0;
    for (const auto& e : fs::directory_iterator(dir / "wave_003")) frames += e.path().extension() == ".pgm";
    EXPECT_EQ(frames, 8u);
    std::ifstream prompts(dir / "prompts.txt");
    std::size_t lines = 0;
    for (std::string line; std::getline(prompts, line);) lines += !line.empty();
    EXPECT_EQ(lines, 4u);
    const auto back = read_dataset(dir);
    EXPECT_EQ(back.clips.size(), 48u);
    EXPECT_EQ(back.prompts[1].prompt, motion_prompt(Motion::wave));
    EXPECT_EQ(motion_prompt(Motion::wave), "a person waving");
    EXPECT_EQ(motion_from_name("throw"), Motion::throw_);
}

TEST(Synth, RenderIsDeterministicPerSeed) {
    SyntheticDatasetSpec spec;
    spec.frames = 16;
    EXPECT_EQ(render_clip(Motion::punch, 2, spec), render_clip(Motion::punch, 2, spec));
    EXPECT_NE(render_clip(Motion::punch, 2, spec), render_clip(Motion::punch, 3, spec));
    SyntheticDatasetSpec other = spec;
    other.seed = 1;
    EXPECT_NE(render_clip(Motion::punch, 2, spec), render_clip(Motion::punch, 2, other));
    const auto clip = render_clip(Motion::clap, 0, spec);
    for (double v : clip.values()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Synth, WaveOscillatesHorizontally) {
    const SyntheticDatasetSpec spec;
    const auto v = render_clip(Motion::wave, 0, spec);
    int changes = 0, prev_sign = 0;
    double prev_x = bright_centroid(v, 0).first;
    for (std::size_t n = 1; n < v.frame_count(); ++n) {
        const double x = bright_centroid(v, n).first;
        const int sign = x > prev_x + 1e-9 ? 1 : (x < prev_x - 1e-9 ? -1 : 0);
        if (sign != 0) {
            if (prev_sign != 0 && sign != prev_sign) ++changes;
            prev_sign = sign;
        }
        prev_x = x;
    }
    EXPECT_GE(changes, 2);
}

TEST(PipelineConfig, JsonRoundTripAndUnknownKeys) {
    PipelineConfig cfg = tiny_config("x");
    cfg.shots = {3, 5};
    cfg.lr = 0.125;
    const auto back = pipeline_config_from_json(pipeline_config_to_json(cfg));
    EXPECT_EQ(back.shots, cfg.shots);
    EXPECT_EQ(back.lr, cfg.lr);
    EXPECT_EQ(back.resolution, cfg.resolution);
    EXPECT_EQ(pipeline_config_to_json(back), pipeline_config_to_json(cfg));
    EXPECT_THROW(pipeline_config_from_json(R"({"clasess": 4})"), PreconditionError);
}

TEST(Pipeline, TinyRunIsByteDeterministic) {
    const auto a = temp_dir("pipe_a"), b = temp_dir("pipe_b");
    const auto ra = run_pipeline(tiny_config(a));
    const auto rb = run_pipeline(tiny_config(b));
    for (const char* f : {"metrics.json", "ledger.json", "embeddings.json"}) {
        ASSERT_TRUE(fs::exists(a / f)) << f;
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
    EXPECT_EQ(ra.mean_top1, rb.mean_top1);
    EXPECT_EQ(ra.mean_top1.size(), 2u);
    for (double acc : ra.mean_top1) {
        EXPECT_GE(acc, 0.0);
        EXPECT_LE(acc, 1.0);
    }
}

TEST(Pipeline, LaterStageNeedsEarlierOutput) {
    auto cfg = tiny_config(temp_dir("pipe_missing"));
    cfg.stages = {"fewshot"};
    EXPECT_THROW(run_pipeline(cfg), PreconditionError);
}
