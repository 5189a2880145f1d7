#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "spiketk/error.hpp"
#include "spiketk/snn_runtime.hpp"
#include "spiketk/spike_camera.hpp"

using namespace spiketk;

namespace {

std::vector<std::size_t> spike_frames(const SpikeStream& s) {
    std::vector<std::size_t> out;
    for (std::size_t t = 0; t < s.t_len(); ++t) {
        if (s.at(t, 0, 0)) out.push_back(t + 1);
    }
    return out;
}

SpikeStream encode_constant(double level, std::size_t frames, double theta = 5.0) {
    return encode_video(IntensityVideo(frames, 1, 1, level), {theta, 0.0}, 0);
}

}  // namespace

TEST(SimulatePixel, EveryFifthPoll) {
    // α·I·tick = θ/5 with α = 1, θ = 5, tick = 1 → I = 1.
    const PixelModel model{1.0, 5.0, 1.0};
    const auto sim = simulate_pixel([](double) { return 1.0; }, model, 50.0, 0.25);
    ASSERT_EQ(sim.spikes.size(), 50u);
    for (std::size_t n = 0; n < 50; ++n) EXPECT_EQ(sim.spikes[n], (n + 1) % 5 == 0 ? 1 : 0) << "poll " << n + 1;
}

TEST(SimulatePixel, DarkPixelNeverFires) {
    const auto sim = simulate_pixel([](double) { return 0.0; }, {1.0, 5.0, 1e-3}, 1.0, 1e-4);
    for (auto s : sim.spikes) EXPECT_EQ(s, 0);
}

TEST(SimulatePixel, RampCrossingTimes) {
    const PixelModel model{1.0, 5.0, 1e-2};
    const auto sim = simulate_pixel([](double t) { return t; }, model, 15.0, 1e-3);
    ASSERT_GE(sim.crossing_times.size(), 3u);
    const double expected[] = {3.1623, 4.4721, 5.4772};
    for (int k = 0; k < 3; ++k) {
        EXPECT_NEAR(sim.crossing_times[k], std::sqrt(10.0 * (k + 1)), 1e-6);
        EXPECT_NEAR(sim.crossing_times[k], expected[k], 1e-4);
    }
    // The first spike is reported at the first poll after the crossing.
    const auto first = std::find(sim.spikes.begin(), sim.spikes.end(), 1) - sim.spikes.begin();
    EXPECT_NEAR(static_cast<double>(first + 1) * model.tick, std::sqrt(10.0), model.tick);
}

TEST(SimulatePixel, ResidualStaysInRange) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    std::vector<double> levels(1000);
    for (double& v : levels) v = u(rng);
    const PixelModel model{1.0, 1.0, 1e-2};
    std::size_t checks = 0;
    simulate_pixel([&](double t) { return levels[static_cast<std::size_t>(t) % levels.size()]; }, model, 100.0, 1e-3,
                   [&](double, double a) {
                       ++checks;
                       ASSERT_GE(a, 0.0);
                       ASSERT_LT(a, model.theta);
                   });
    EXPECT_GE(checks, 100'000u);
}

TEST(SimulatePixel, SpikeCountMatchesIntegral) {
    const PixelModel model{2.0, 5.0, 1e-2};
    const auto f = [](double t) { return 0.5 + 0.4 * std::sin(t); };
    const double duration = 40.0;
    const auto sim = simulate_pixel(f, model, duration, 1e-3);
    // Fine-step integration oracle.
    double integral = 0.0;
    const double h = 1e-5;
    for (double t = 0.0; t < duration; t += h) integral += model.alpha * f(t + h / 2) * h;
    const auto expected = std::floor(integral / model.theta);
    EXPECT_NEAR(static_cast<double>(sim.crossing_times.size()), expected, 1.0);
}

TEST(SimulatePixel, Preconditions) {
    EXPECT_THROW(simulate_pixel([](double) { return 1.0; }, {1.0, 5.0, 1e-3}, 1.0, 2e-3), PreconditionError);
    EXPECT_THROW(simulate_pixel([](double) { return -1.0; }, {1.0, 5.0, 1e-3}, 1.0, 1e-4), PreconditionError);
}

TEST(Encoder, ConstantOneFiresEveryFifthFrame) {
    const auto frames = spike_frames(encode_constant(1.0, 50));
    ASSERT_EQ(frames.size(), 10u);
    for (std::size_t i = 0; i < frames.size(); ++i) EXPECT_EQ(frames[i], 5 * (i + 1));
}

TEST(Encoder, ConstantPointSixMatchesAccumulationOracle) {
    const auto frames = spike_frames(encode_constant(0.6, 50));
    EXPECT_EQ(frames, (std::vector<std::size_t>{9, 17, 25, 34, 42, 50}));
    EXPECT_EQ(encode_constant(0.6, 500).count_ones(), oracle::encoder_spike_frames(3, 5, 5, 500).size());
    EXPECT_EQ(spike_frames(encode_constant(0.6, 500)), oracle::encoder_spike_frames(3, 5, 5, 500));
}

TEST(Encoder, DarkPixelNeverFires) { EXPECT_EQ(encode_constant(0.0, 100).count_ones(), 0u); }

TEST(Encoder, RateEqualsIntensityOverTheta) {
    for (double level : {0.1, 0.25, 0.37, 0.6, 0.83, 1.0}) {
        const double rate = static_cast<double>(encode_constant(level, 10'000).count_ones()) / 10'000.0;
        EXPECT_NEAR(rate, level / 5.0, 1.0 / 10'000.0) << level;
    }
}

TEST(Encoder, NoiselessEncodingIsSeedIndependent) {
    std::mt19937_64 rng(1);
    IntensityVideo v(40, 4, 4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t n = 0; n < 40; ++n) {
        for (auto& p : v.frame(n)) p = u(rng);
    }
    EXPECT_EQ(encode_video(v, {5.0, 0.0}, 1), encode_video(v, {5.0, 0.0}, 999));
    EXPECT_EQ(encode_video(v, {5.0, 0.2}, 3), encode_video(v, {5.0, 0.2}, 3));
    EXPECT_NE(encode_video(v, {5.0, 0.2}, 3), encode_video(v, {5.0, 0.2}, 4));
}

TEST(Encoder, MatchesSoftResetLif) {
    // decay 1, threshold θ, subtract reset, inputs = frame intensities.
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    IntensityVideo v(200, 3, 3);
    for (std::size_t n = 0; n < 200; ++n) {
        for (auto& p : v.frame(n)) p = u(rng);
    }
    const auto s = encode_video(v, {5.0, 0.0}, 0);
    LifParams p;
    p.thresh = 5.0;
    p.decay = 1.0;
    p.reset = ResetMode::subtract;
    auto state = MembraneState::zeros(9);
    for (std::size_t n = 0; n < 200; ++n) {
        auto step = lif_step(std::move(state), v.frame(n), p);
        const auto frame = s.frame(n);
        for (std::size_t i = 0; i < 9; ++i) ASSERT_EQ(step.spikes[i], frame[i]) << "frame " << n << " pixel " << i;
        state = std::move(step.state);
    }
}

TEST(Grayscale, LumaWeights) {
    Image img{1, 3, 3, {1, 1, 1, 0, 0, 0, 1, 0, 0}};
    const auto g = to_grayscale(img);
    EXPECT_DOUBLE_EQ(g[0], 1.0);
    EXPECT_DOUBLE_EQ(g[1], 0.0);
    EXPECT_DOUBLE_EQ(g[2], 0.299);
    Image gray{1, 1, 1, {0.5}};
    EXPECT_THROW(to_grayscale(gray), PreconditionError);
}

TEST(Upsample, IdentityMidpointAndEndpoints) {
    IntensityVideo two(2, 2, 2);
    for (auto& p : two.frame(1)) p = 1.0;
    EXPECT_EQ(upsample_temporal(two, 1), two);
    const auto up = upsample_temporal(two, 2);
    ASSERT_EQ(up.frame_count(), 3u);
    for (double p : up.frame(1)) EXPECT_DOUBLE_EQ(p, 0.5);

    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        IntensityVideo v(5, 3, 4);
        for (std::size_t n = 0; n < 5; ++n) {
            for (auto& p : v.frame(n)) p = u(rng);
        }
        const auto r = upsample_temporal(v, 10);
        ASSERT_EQ(r.frame_count(), 41u);
        for (std::size_t n = 0; n < 5; ++n) {
            const auto a = v.frame(n);
            const auto b = r.frame(n * 10);
            EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
        }
    }
    EXPECT_THROW(upsample_temporal(two, 0), PreconditionError);
}
