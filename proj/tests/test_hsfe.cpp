#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "spiketk/error.hpp"
#include "spiketk/hsfe.hpp"

using namespace spiketk;

namespace {

SpikeStream random_stream(std::size_t t, std::size_t h, std::size_t w, std::uint64_t seed, double p = 0.2) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution b(p);
    SpikeStream s(t, h, w);
    for (std::size_t i = 0; i < s.element_count(); ++i) s.set(i, b(rng));
    return s;
}

HsfeConfig small_config() {
    HsfeConfig cfg;
    cfg.blocks = {6, 5, 3};
    cfg.branches = 3;
    cfg.channel_step = 4;
    cfg.c_out = 4;
    return cfg;
}

Tensor block_tensor(const SpikeStream& s, std::size_t begin, std::size_t len) {
    Tensor t({len, s.height(), s.width()});
    for (std::size_t f = 0; f < len; ++f) {
        const auto frame = s.frame(begin + f);
        for (std::size_t i = 0; i < frame.size(); ++i) t[f * frame.size() + i] = frame[i];
    }
    return t;
}

// Central k frames, mask, centered moving average of width w truncated at the edges.
Tensor branch_input_oracle(const Tensor& block, std::size_t k, std::size_t w, const std::vector<double>& mask) {
    const std::size_t len = block.dim(0), h = block.dim(1), wd = block.dim(2);
    const std::size_t start = (len - k) / 2;
    Tensor out({k, h, wd});
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < wd; ++x) {
                double sum = 0.0;
                int n = 0;
                for (long long s = static_cast<long long>(c) - static_cast<long long>((w - 1) / 2);
                     s < static_cast<long long>(c) - static_cast<long long>((w - 1) / 2) + static_cast<long long>(w); ++s) {
                    if (s < 0 || s >= static_cast<long long>(k)) continue;
                    sum += mask[static_cast<std::size_t>(s)] * block.at(start + static_cast<std::size_t>(s), y, x);
                    ++n;
                }
                out.at(c, y, x) = sum / n;
            }
        }
    }
    return out;
}

}  // namespace

TEST(SliceBlocks, DefaultCenters) {
    const auto blocks = slice_blocks(SpikeStream(250, 2, 2), BlockSpec{});
    ASSERT_EQ(blocks.size(), 5u);
    const std::size_t centers[] = {30, 75, 120, 165, 210};
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_EQ(blocks[i].center, centers[i]);
        EXPECT_EQ(blocks[i].frames.dim(0), 61u);
    }
    EXPECT_EQ(BlockSpec{}.required_length(), 241u);
}

TEST(SliceBlocks, SingleFrameBlocks) {
    auto s = random_stream(3, 2, 2, 1, 0.5);
    const auto blocks = slice_blocks(s, {0, 1, 3});
    ASSERT_EQ(blocks.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(blocks[i].frames, block_tensor(s, i, 1));
}

TEST(SliceBlocks, TooShortIsError) {
    EXPECT_THROW(slice_blocks(SpikeStream(240, 1, 1), BlockSpec{}), PreconditionError);
    EXPECT_NO_THROW(slice_blocks(SpikeStream(241, 1, 1), BlockSpec{}));
}

TEST(SliceBlocks, ContentMatchesWindow) {
    const auto s = random_stream(250, 3, 3, 2);
    const auto blocks = slice_blocks(s, BlockSpec{});
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        EXPECT_EQ(blocks[i].frames, block_tensor(s, blocks[i].center - 30, 61));
        if (i > 0) {
            EXPECT_EQ(blocks[i].center - blocks[i - 1].center, 45u);
        }
    }
}

TEST(AllocateChannels, DefaultExample) {
    const auto a = allocate_channels(61, 3, 20);
    ASSERT_EQ(a.size(), 3u);
    EXPECT_EQ(a[0].k, 61u);
    EXPECT_EQ(a[1].k, 41u);
    EXPECT_EQ(a[2].k, 21u);
    EXPECT_EQ(a[0].w, 1u);
    EXPECT_EQ(a[1].w, 1u);
    EXPECT_EQ(a[2].w, 3u);
}

TEST(AllocateChannels, NoSlicingAndSingleBranch) {
    for (const auto& b : allocate_channels(61, 3, 0)) {
        EXPECT_EQ(b.k, 61u);
        EXPECT_EQ(b.w, 1u);
    }
    const auto one = allocate_channels(61, 1, 20);
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one[0].k, 61u);
    EXPECT_EQ(one[0].w, 1u);
    EXPECT_THROW(allocate_channels(61, 4, 21), PreconditionError);
}

TEST(AllocateChannels, PhotonConservation) {
    for (std::size_t total = 1; total <= 80; ++total) {
        for (std::size_t m = 1; m <= 5; ++m) {
            for (std::size_t step = 0; step <= 15; ++step) {
                if (m > total || (m - 1) * step >= total) continue;
                const auto a = allocate_channels(total, m, step);
                for (const auto& x : a) {
                    for (const auto& y : a) {
                        const auto px = static_cast<long long>(x.k * x.w), py = static_cast<long long>(y.k * y.w);
                        EXPECT_LE(std::llabs(px - py), static_cast<long long>(std::max(x.k, y.k)));
                    }
                }
            }
        }
    }
}

TEST(BranchInput, MatchesOracle) {
    std::mt19937_64 rng(3);
    const auto s = random_stream(61, 4, 5, 4, 0.4);
    const Tensor block = block_tensor(s, 0, 61);
    for (const auto& alloc : allocate_channels(61, 3, 20)) {
        const auto mask = oracle::random_vector(alloc.k, rng, 0.0, 2.0);
        const Tensor got = branch_input(block, alloc, mask);
        const Tensor want = branch_input_oracle(block, alloc.k, alloc.w, mask);
        ASSERT_EQ(got.shape(), want.shape());
        for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], want[i], 1e-12);
    }
}

TEST(Mtf, IdentityKernelPassesFrame) {
    HsfeConfig cfg = small_config();
    cfg.branches = 1;
    const auto s = random_stream(13, 5, 5, 5, 0.5);
    const Tensor block = block_tensor(s, 0, 13);
    WeightSet w = init_hsfe_weights(cfg, 1);
    Tensor kernel({cfg.c_out, 13, 3, 3});
    kernel.at(0, 6, 1, 1) = 1.0;
    w.put("hsfe.branch0.conv.w", kernel);
    const auto out = mtf_forward(block, cfg, w);
    for (std::size_t y = 0; y < 5; ++y) {
        for (std::size_t x = 0; x < 5; ++x) EXPECT_EQ(out[0].at(0, y, x), block.at(6, y, x));
    }
}

TEST(Mtf, ZeroMaskGivesZero) {
    const HsfeConfig cfg = small_config();
    WeightSet w = init_hsfe_weights(cfg, 2);
    const auto alloc = allocate_channels(13, 3, 4);
    for (std::size_t i = 0; i < 3; ++i) w.put("hsfe.branch" + std::to_string(i) + ".mask", Tensor({alloc[i].k}));
    for (const auto& t : mtf_forward(block_tensor(random_stream(13, 4, 4, 6, 0.5), 0, 13), cfg, w)) {
        for (double v : t.values()) EXPECT_EQ(v, 0.0);
    }
}

TEST(Mtf, MatchesDenseLoopOracle) {
    const HsfeConfig cfg = small_config();
    const WeightSet w = init_hsfe_weights(cfg, 7);
    const Tensor block = block_tensor(random_stream(13, 6, 7, 8, 0.3), 0, 13);
    const auto out = mtf_forward(block, cfg, w);
    const auto alloc = allocate_channels(13, 3, 4);
    for (std::size_t i = 0; i < 3; ++i) {
        const std::string prefix = "hsfe.branch" + std::to_string(i);
        const auto mask = w.vector(prefix + ".mask", alloc[i].k);
        const Tensor want = oracle::conv2d(branch_input_oracle(block, alloc[i].k, alloc[i].w, mask),
                                           w.get(prefix + ".conv.w"), {}, 1, 1);
        for (std::size_t j = 0; j < want.size(); ++j) ASSERT_LT(oracle::rel_err(out[i][j], want[j]), 1e-6);
    }
}

TEST(Mtf, LinearInInput) {
    const HsfeConfig cfg = small_config();
    const WeightSet w = init_hsfe_weights(cfg, 9);
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor x = oracle::random_tensor({13, 5, 5}, rng);
        const Tensor y = oracle::random_tensor({13, 5, 5}, rng);
        const double a = 1.7, b = -0.4;
        Tensor mix({13, 5, 5});
        for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * y[i];
        const auto fx = mtf_forward(x, cfg, w), fy = mtf_forward(y, cfg, w), fm = mtf_forward(mix, cfg, w);
        for (std::size_t br = 0; br < 3; ++br) {
            for (std::size_t i = 0; i < fm[br].size(); ++i) {
                EXPECT_LT(oracle::rel_err(fm[br][i], a * fx[br][i] + b * fy[br][i]), 1e-5);
            }
        }
    }
}

TEST(SpatialAttention, SaturatedWeightsGivePlainStack) {
    const HsfeConfig cfg = small_config();
    WeightSet w = init_hsfe_weights(cfg, 11);
    w.put("hsfe.sa.conv.w", Tensor({3, 12, 3, 3}));
    w.put("hsfe.sa.conv.b", Tensor({3}, 50.0));
    std::mt19937_64 rng(12);
    std::vector<Tensor> feats;
    for (int i = 0; i < 3; ++i) feats.push_back(oracle::random_tensor({4, 5, 5}, rng));
    const Tensor out = spatial_attention(feats, w);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < feats[i].size(); ++j) EXPECT_NEAR(out[i * feats[i].size() + j], feats[i][j], 1e-4);
    }
}

TEST(SpatialAttention, ZeroInputZeroOutputAndWeightRange) {
    const HsfeConfig cfg = small_config();
    WeightSet w = init_hsfe_weights(cfg, 13);
    w.put("hsfe.sa.conv.b", Tensor({3}, 0.3));
    std::vector<Tensor> zeros(3, Tensor({4, 5, 5}));
    const Tensor zero_out = spatial_attention(zeros, w);
    for (double v : zero_out.values()) EXPECT_EQ(v, 0.0);

    std::mt19937_64 rng(14);
    std::vector<Tensor> feats;
    for (int i = 0; i < 3; ++i) feats.push_back(oracle::random_tensor({4, 5, 5}, rng, -3.0, 3.0));
    Tensor att;
    spatial_attention(feats, w, &att);
    ASSERT_EQ(att.shape(), (std::vector<std::size_t>{3, 5, 5}));
    for (double a : att.values()) {
        EXPECT_GT(a, 0.0);
        EXPECT_LT(a, 1.0);
    }
}

TEST(HsfeForward, ZeroStreamGivesZeroEstimates) {
    const HsfeConfig cfg = small_config();
    const auto out = hsfe_forward(SpikeStream(cfg.blocks.required_length(), 4, 4), cfg, init_hsfe_weights(cfg, 15));
    ASSERT_EQ(out.size(), 3u);
    for (const auto& e : out) {
        for (double v : e.values()) EXPECT_EQ(v, 0.0);
    }
}

TEST(HsfeForward, StaticContentGivesEqualEstimates) {
    const HsfeConfig cfg = small_config();
    const auto frame = random_stream(1, 4, 4, 16, 0.5);
    SpikeStream s(cfg.blocks.required_length(), 4, 4);
    for (std::size_t t = 0; t < s.t_len(); ++t) s.copy_frame_from(frame, 0, t);
    const auto out = hsfe_forward(s, cfg, init_hsfe_weights(cfg, 17));
    for (std::size_t i = 1; i < out.size(); ++i) EXPECT_EQ(out[i], out[0]);
}

TEST(HsfeForward, EqualsManualComposition) {
    const HsfeConfig cfg = small_config();
    const WeightSet w = init_hsfe_weights(cfg, 18);
    const auto s = random_stream(30, 5, 5, 19);
    const auto out = hsfe_forward(s, cfg, w);
    const auto blocks = slice_blocks(s, cfg.blocks);
    ASSERT_EQ(out.size(), blocks.size());
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        EXPECT_EQ(out[i], spatial_attention(mtf_forward(blocks[i].frames, cfg, w), w));
        EXPECT_EQ(out[i].shape(), (std::vector<std::size_t>{12, 5, 5}));
    }
}
