#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "spiketk/error.hpp"
#include "spiketk/star_net.hpp"

using namespace spiketk;

namespace {

MiniMapResNetConfig small_config() {
    MiniMapResNetConfig cfg;
    cfg.in_channels = 3;
    cfg.input_height = 64;
    cfg.input_width = 64;
    cfg.stem_channels = 8;
    cfg.group_widths = {8, 8, 16, 16};
    cfg.blocks_per_group = {1, 1, 1, 1};
    cfg.heads = 4;
    cfg.embed_dim = 8;
    cfg.ffn_hidden = 16;
    return cfg;
}

oracle::MhaWeights mha(const WeightSet& w, const std::string& prefix) {
    const auto vec = [&](const std::string& n) {
        const Tensor& t = w.get(prefix + "." + n + ".b");
        return std::vector<double>(t.values().begin(), t.values().end());
    };
    return {w.get(prefix + ".q.w"), w.get(prefix + ".k.w"), w.get(prefix + ".v.w"), w.get(prefix + ".out.w"),
            vec("q"), vec("k"), vec("v"), vec("out")};
}

std::vector<double> row(const Tensor& t, std::size_t r) {
    const std::size_t n = t.dim(1);
    return {t.data() + r * n, t.data() + (r + 1) * n};
}

std::vector<double> pool_oracle(const Tensor& fmap, const MiniMapResNetConfig& cfg, const WeightSet& w) {
    const std::size_t c = fmap.dim(0), n = fmap.dim(1) * fmap.dim(2);
    const Tensor& pos = w.get("star.pool.pos");
    std::vector<std::vector<double>> tokens(n + 1, std::vector<double>(c, 0.0));
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < n; ++i) {
            tokens[i + 1][ch] = fmap[ch * n + i];
            tokens[0][ch] += fmap[ch * n + i] / static_cast<double>(n);
        }
    }
    for (std::size_t i = 0; i <= n; ++i) {
        for (std::size_t ch = 0; ch < c; ++ch) tokens[i][ch] += pos.at(i, ch);
    }
    return oracle::attention({tokens[0]}, tokens, mha(w, "star.pool"), cfg.heads)[0];
}

std::vector<std::vector<double>> temporal_oracle(const std::vector<std::vector<double>>& x,
                                                 const MiniMapResNetConfig& cfg, const WeightSet& w) {
    const auto vec = [&](const std::string& n) {
        const Tensor& t = w.get("star.temporal." + n);
        return std::vector<double>(t.values().begin(), t.values().end());
    };
    const auto a = oracle::attention(x, x, mha(w, "star.temporal"), cfg.heads);
    std::vector<std::vector<double>> out;
    for (std::size_t t = 0; t < x.size(); ++t) {
        std::vector<double> r(x[t].size());
        for (std::size_t c = 0; c < r.size(); ++c) r[c] = a[t][c] + x[t][c];
        const auto x1 = oracle::layer_norm(r, vec("ln1.g"), vec("ln1.b"));
        auto h = oracle::affine(w.get("star.temporal.ffn1.w"), vec("ffn1.b"), x1);
        for (double& v : h) v = std::max(0.0, v);
        auto f = oracle::affine(w.get("star.temporal.ffn2.w"), vec("ffn2.b"), h);
        for (std::size_t c = 0; c < f.size(); ++c) f[c] += x1[c];
        out.push_back(oracle::layer_norm(f, vec("ln2.g"), vec("ln2.b")));
    }
    return out;
}

WeightSet randomized_biases(const MiniMapResNetConfig& cfg, std::uint64_t seed) {
    WeightSet w = init_star_net_weights(cfg, seed);
    std::mt19937_64 rng(seed + 100);
    for (const char* name : {"star.pool.q.b", "star.pool.k.b", "star.pool.v.b", "star.pool.out.b", "star.temporal.q.b",
                             "star.temporal.k.b", "star.temporal.v.b", "star.temporal.out.b", "star.temporal.ffn1.b",
                             "star.temporal.ffn2.b", "star.temporal.ln1.b", "star.temporal.ln2.b"}) {
        w.put(name, oracle::random_tensor(w.get(name).shape(), rng, -0.3, 0.3));
    }
    for (const char* name : {"star.temporal.ln1.g", "star.temporal.ln2.g"}) {
        w.put(name, oracle::random_tensor(w.get(name).shape(), rng, 0.5, 1.5));
    }
    return w;
}

CoarseEstimates random_estimates(const MiniMapResNetConfig& cfg, std::size_t steps, std::mt19937_64& rng) {
    CoarseEstimates e;
    for (std::size_t t = 0; t < steps; ++t) {
        e.push_back(oracle::random_tensor({cfg.in_channels, cfg.input_height, cfg.input_width}, rng, 0.0, 1.0));
    }
    return e;
}

}  // namespace

TEST(MiniMapResNet, TokenGrid) {
    const auto cfg = small_config();
    EXPECT_EQ(cfg.grid_height(), 2u);
    EXPECT_EQ(cfg.token_count(), 4u);
    std::mt19937_64 rng(1);
    const WeightSet w = init_star_net_weights(cfg, 2);
    const Tensor fmap = mapresnet_backbone(oracle::random_tensor({3, 64, 64}, rng, 0.0, 1.0), cfg, w);
    EXPECT_EQ(fmap.shape(), (std::vector<std::size_t>{16, 2, 2}));
    EXPECT_EQ(w.get("star.pool.pos").shape(), (std::vector<std::size_t>{5, 16}));
}

TEST(MiniMapResNet, RejectsSmallOrMismatchedInput) {
    auto cfg = small_config();
    const WeightSet w = init_star_net_weights(cfg, 3);
    EXPECT_THROW(mapresnet_backbone(Tensor({3, 16, 16}), cfg, w), PreconditionError);
    EXPECT_THROW(mapresnet_backbone(Tensor({4, 64, 64}), cfg, w), PreconditionError);
    cfg.input_height = 16;
    EXPECT_THROW(init_star_net_weights(cfg, 3), PreconditionError);
}

TEST(MiniMapResNet, ZeroInputGivesZeroEmbedding) {
    const auto cfg = small_config();
    WeightSet w = init_star_net_weights(cfg, 4);
    w.put("star.pool.pos", Tensor(w.get("star.pool.pos").shape()));
    const auto e = mini_mapresnet_forward(Tensor({3, 64, 64}), cfg, w);
    ASSERT_EQ(e.size(), cfg.embed_dim);
    for (double v : e) EXPECT_EQ(v, 0.0);
    CoarseEstimates zeros(5, Tensor({3, 64, 64}));
    for (double v : star_net_forward(zeros, cfg, w)) EXPECT_EQ(v, 0.0);
}

TEST(AttentionPool, ProbabilitiesSumToOne) {
    const auto cfg = small_config();
    const WeightSet w = randomized_biases(cfg, 5);
    std::mt19937_64 rng(6);
    Tensor probs;
    attention_pool(oracle::random_tensor({16, 2, 2}, rng), cfg, w, &probs);
    ASSERT_EQ(probs.shape(), (std::vector<std::size_t>{4, 1, 5}));
    for (std::size_t h = 0; h < 4; ++h) {
        double s = 0.0;
        for (std::size_t j = 0; j < 5; ++j) {
            EXPECT_GE(probs.at(h, 0, j), 0.0);
            s += probs.at(h, 0, j);
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(AttentionPool, MatchesLoopOracle) {
    const auto cfg = small_config();
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const WeightSet w = randomized_biases(cfg, 10 + static_cast<std::uint64_t>(trial));
        const Tensor fmap = oracle::random_tensor({16, 2, 2}, rng, -2.0, 2.0);
        const auto got = attention_pool(fmap, cfg, w);
        const auto want = pool_oracle(fmap, cfg, w);
        ASSERT_EQ(got.size(), want.size());
        for (std::size_t i = 0; i < got.size(); ++i) EXPECT_LT(oracle::rel_err(got[i], want[i]), 1e-9);
    }
}

TEST(TemporalAttention, MatchesLoopOracle) {
    const auto cfg = small_config();
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const WeightSet w = randomized_biases(cfg, 40 + static_cast<std::uint64_t>(trial));
        const std::size_t steps = 1 + static_cast<std::size_t>(trial % 5), batch = 3;
        const Tensor x = oracle::random_tensor({steps, batch, 8}, rng, -2.0, 2.0);
        const auto got = temporal_attention(FeatureTensor(x, {Axis::time, Axis::batch, Axis::channel}), cfg, w);
        for (std::size_t b = 0; b < batch; ++b) {
            std::vector<std::vector<double>> seq(steps, std::vector<double>(8));
            for (std::size_t t = 0; t < steps; ++t) {
                for (std::size_t c = 0; c < 8; ++c) seq[t][c] = x.at(t, b, c);
            }
            const auto want = temporal_oracle(seq, cfg, w);
            for (std::size_t t = 0; t < steps; ++t) {
                for (std::size_t c = 0; c < 8; ++c) {
                    EXPECT_LT(oracle::rel_err(got.tensor().at(t, b, c), want[t][c]), 1e-9);
                }
            }
        }
    }
}

TEST(TemporalAttention, ProbabilityRowsAndSingleStep) {
    const auto cfg = small_config();
    const WeightSet w = randomized_biases(cfg, 60);
    std::mt19937_64 rng(9);
    Tensor probs;
    temporal_attention(FeatureTensor(oracle::random_tensor({5, 2, 8}, rng), {Axis::time, Axis::batch, Axis::channel}),
                       cfg, w, &probs);
    ASSERT_EQ(probs.shape(), (std::vector<std::size_t>{2, 4, 5, 5}));
    for (std::size_t r = 0; r < 2 * 4 * 5; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < 5; ++j) s += probs[r * 5 + j];
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
    temporal_attention(FeatureTensor(oracle::random_tensor({1, 2, 8}, rng), {Axis::time, Axis::batch, Axis::channel}),
                       cfg, w, &probs);
    for (double p : probs.values()) EXPECT_DOUBLE_EQ(p, 1.0);
}

TEST(TemporalAttention, IdenticalStepsGiveIdenticalOutputs) {
    const auto cfg = small_config();
    const WeightSet w = randomized_biases(cfg, 61);
    std::mt19937_64 rng(10);
    const auto v = oracle::random_vector(8, rng);
    Tensor x({4, 1, 8});
    for (std::size_t t = 0; t < 4; ++t) {
        for (std::size_t c = 0; c < 8; ++c) x.at(t, 0, c) = v[c];
    }
    const auto y = temporal_attention(FeatureTensor(x, {Axis::time, Axis::batch, Axis::channel}), cfg, w);
    for (std::size_t t = 1; t < 4; ++t) {
        for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(y.tensor().at(t, 0, c), y.tensor().at(0, 0, c), 1e-12);
    }
}

TEST(TemporalAttention, RejectsWrongAxes) {
    const auto cfg = small_config();
    const WeightSet w = init_star_net_weights(cfg, 62);
    EXPECT_THROW(temporal_attention(FeatureTensor(Tensor({2, 3, 8}), {Axis::batch, Axis::time, Axis::channel}), cfg, w),
                 PreconditionError);
}

TEST(TemporalPool, Examples) {
    const Tensor x({2, 1, 2}, {1.0, 2.0, 3.0, 6.0});
    EXPECT_EQ(temporal_pool(FeatureTensor(x, {Axis::time, Axis::batch, Axis::channel})), Tensor({1, 2}, {2.0, 4.0}));
    const Tensor one({1, 2, 3}, {1, 2, 3, 4, 5, 6});
    EXPECT_EQ(temporal_pool(FeatureTensor(one, {Axis::time, Axis::batch, Axis::channel})),
              Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
}

TEST(StarNet, BatchRowsAreIndependentOfOrder) {
    const auto cfg = small_config();
    const WeightSet w = randomized_biases(cfg, 70);
    std::mt19937_64 rng(11);
    const std::vector<CoarseEstimates> clips{random_estimates(cfg, 3, rng), random_estimates(cfg, 3, rng)};
    const Tensor ab = star_net_forward_batch(clips, cfg, w);
    const Tensor ba = star_net_forward_batch({clips[1], clips[0]}, cfg, w);
    EXPECT_EQ(row(ab, 0), row(ba, 1));
    EXPECT_EQ(row(ab, 1), row(ba, 0));
    EXPECT_EQ(row(ab, 0), star_net_forward(clips[0], cfg, w));
}

TEST(StarNet, EqualsManualComposition) {
    const auto cfg = small_config();
    const WeightSet w = randomized_biases(cfg, 71);
    std::mt19937_64 rng(12);
    const auto clip = random_estimates(cfg, 5, rng);
    std::vector<std::vector<double>> seq;
    for (const auto& e : clip) seq.push_back(pool_oracle(mapresnet_backbone(e, cfg, w), cfg, w));
    const auto fused = temporal_oracle(seq, cfg, w);
    const auto got = star_net_forward(clip, cfg, w);
    ASSERT_EQ(got.size(), 8u);
    for (std::size_t c = 0; c < 8; ++c) {
        double mean = 0.0;
        for (const auto& f : fused) mean += f[c];
        mean /= static_cast<double>(fused.size());
        EXPECT_LT(oracle::rel_err(got[c], mean), 1e-9);
    }
}

TEST(StarNet, DeterministicForSeed) {
    const auto cfg = small_config();
    std::mt19937_64 rng(13);
    const auto clip = random_estimates(cfg, 2, rng);
    EXPECT_EQ(star_net_forward(clip, cfg, init_star_net_weights(cfg, 5)),
              star_net_forward(clip, cfg, init_star_net_weights(cfg, 5)));
    EXPECT_NE(star_net_forward(clip, cfg, init_star_net_weights(cfg, 5)),
              star_net_forward(clip, cfg, init_star_net_weights(cfg, 6)));
}
