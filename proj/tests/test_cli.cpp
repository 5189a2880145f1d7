#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <sys/wait.h>

#include "spiketk/align.hpp"
#include "spiketk/spike_stream.hpp"

namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("spiketk_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run(const std::string& args) {
    const std::string cmd = std::string(SPIKETK_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_binary_pgm(const fs::path& p, const std::vector<int>& bits, int h, int w) {
    std::ofstream out(p, std::ios::binary);
    out << "P5\n" << w << ' ' << h << "\n255\n";
    for (int b : bits) out.put(static_cast<char>(b ? 255 : 0));
}

}  // namespace

TEST(Cli, FramesSurviveEncodeDecode) {
    const auto dir = temp_dir("frames");
    fs::create_directories(dir / "in");
    std::mt19937_64 rng(1);
    std::bernoulli_distribution b(0.4);
    for (int n = 0; n < 12; ++n) {
        std::vector<int> bits(6 * 7);
        for (int& v : bits) v = b(rng);
        char name[32];
        std::snprintf(name, sizeof name, "frame_%05d.pgm", n);
        write_binary_pgm(dir / "in" / name, bits, 6, 7);
    }
    ASSERT_EQ(run("encode --seed 0 --theta 1 " + (dir / "in").string() + " " + (dir / "s.dat").string()), 0);
    ASSERT_EQ(run("decode --out " + (dir / "out").string() + " " + (dir / "s.dat").string()), 0);
    std::size_t compared = 0;
    for (const auto& e : fs::directory_iterator(dir / "in")) {
        const auto twin = dir / "out" / e.path().filename();
        ASSERT_TRUE(fs::exists(twin)) << twin;
        EXPECT_EQ(slurp(e.path()), slurp(twin)) << twin;
        ++compared;
    }
    EXPECT_EQ(compared, 12u);
}

TEST(Cli, StreamSurvivesDecodeEncode) {
    const auto dir = temp_dir("stream");
    std::mt19937_64 rng(2);
    std::bernoulli_distribution b(0.3);
    spiketk::SpikeStream s(20, 5, 9);
    for (std::size_t i = 0; i < s.element_count(); ++i) s.set(i, b(rng));
    spiketk::write_dat(s, spiketk::StreamMeta::of(s, 1.0), dir / "a.dat");
    spiketk::write_meta(spiketk::StreamMeta::of(s, 1.0), spiketk::sidecar_path(dir / "a.dat"));
    ASSERT_EQ(run("decode --out " + (dir / "frames").string() + " " + (dir / "a.dat").string()), 0);
    ASSERT_EQ(run("encode --seed 0 --theta 1 " + (dir / "frames").string() + " " + (dir / "b.dat").string()), 0);
    EXPECT_EQ(slurp(dir / "a.dat"), slurp(dir / "b.dat"));
}

TEST(Cli, ExitCodes) {
    const auto dir = temp_dir("codes");
    EXPECT_EQ(run("--help"), 0);
    EXPECT_EQ(run("no-such-command"), 2);
    EXPECT_EQ(run("encode " + (dir / "missing").string() + " " + (dir / "x.dat").string()), 2);
    EXPECT_EQ(run("--seed 1 encode " + (dir / "missing").string() + " " + (dir / "x.dat").string()), 3);
    EXPECT_EQ(run("decode --out " + (dir / "o").string() + " " + (dir / "missing.dat").string()), 3);
    EXPECT_EQ(run("--seed 1 train-head --shots 1 " + (dir / "none.json").string() + " " + (dir / "none.txt").string()),
              3);
}

TEST(Cli, TrainAndEvaluateHead) {
    const auto dir = temp_dir("head");
    const std::vector<spiketk::ClassPrompt> classes{{"wave", "a person waving"}, {"clap", "a person clapping"}};
    spiketk::write_prompts(classes, dir / "prompts.txt");
    std::vector<spiketk::LabeledEmbedding> rows;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 0.05);
    for (int i = 0; i < 8; ++i) {
        const bool wave = i % 2 == 0;
        rows.push_back({"c" + std::to_string(i), wave ? "wave" : "clap",
                        {(wave ? 1.0 : -1.0) + n(rng), (wave ? -0.5 : 0.7) + n(rng), n(rng)}});
    }
    spiketk::write_embeddings(rows, dir / "emb.json");
    const std::string head = (dir / "head.json").string();
    ASSERT_EQ(run("--seed 4 --out " + head + " train-head --shots 3 --epochs 20 " + (dir / "emb.json").string() + " " +
                  (dir / "prompts.txt").string()),
              0);
    ASSERT_TRUE(fs::exists(head));
    EXPECT_EQ(run("eval --topk 1,2 " + head + " " + (dir / "emb.json").string()), 0);
    EXPECT_EQ(run("eval --topk 3 " + head + " " + (dir / "emb.json").string()), 2);
    EXPECT_EQ(run("--seed 4 train-head --shots 3 " + (dir / "emb.json").string() + " " + (dir / "prompts.txt").string()),
              2);
}
