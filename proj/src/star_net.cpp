#include "spiketk/star_net.hpp"

#include <cmath>
#include <string>

#include "spiketk/error.hpp"

namespace spiketk {

namespace {

std::size_t halve(std::size_t n) { return (n + 1) / 2; }

struct BlockPlan {
    std::string prefix;
    std::size_t in;
    std::size_t mid;
    std::size_t out;
    std::size_t stride;
    bool projection;
};

std::vector<BlockPlan> plan_blocks(const MiniMapResNetConfig& cfg) {
    std::vector<BlockPlan> plan;
    std::size_t in = cfg.stem_channels;
    for (std::size_t g = 0; g < 4; ++g) {
        const std::size_t out = cfg.group_widths[g];
        for (std::size_t b = 0; b < cfg.blocks_per_group[g]; ++b) {
            const std::size_t stride = (b == 0 && (g == 1 || g == 2)) ? 2 : 1;
            const std::size_t mid = cfg.style == ResidualStyle::bottleneck ? std::max<std::size_t>(1, out / 4) : out;
            plan.push_back({"star.g" + std::to_string(g) + ".b" + std::to_string(b), in, mid, out, stride,
                            in != out || stride != 1});
            in = out;
        }
    }
    return plan;
}

Tensor conv(const Tensor& x, const WeightSet& w, const std::string& name, std::size_t out, std::size_t in,
            std::size_t k, std::size_t stride) {
    const Tensor& kernel = w.get(name + ".w", {out, in, k, k});
    const auto bias = w.vector(name + ".b", out);
    return conv2d(x, kernel, bias, stride, k / 2);
}

Tensor residual_block(const Tensor& x, const BlockPlan& p, const MiniMapResNetConfig& cfg, const WeightSet& w) {
    Tensor y;
    if (cfg.style == ResidualStyle::bottleneck) {
        y = conv(x, w, p.prefix + ".conv1", p.mid, p.in, 1, 1);
        relu_inplace(y);
        y = conv(y, w, p.prefix + ".conv2", p.mid, p.mid, 3, p.stride);
        relu_inplace(y);
        y = conv(y, w, p.prefix + ".conv3", p.out, p.mid, 1, 1);
    } else {
        y = conv(x, w, p.prefix + ".conv1", p.out, p.in, 3, p.stride);
        relu_inplace(y);
        y = conv(y, w, p.prefix + ".conv2", p.out, p.out, 3, 1);
    }
    const Tensor shortcut = p.projection ? conv(x, w, p.prefix + ".proj", p.out, p.in, 1, p.stride) : x;
    require(shortcut.shape() == y.shape(), "residual branch and shortcut shapes differ");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += shortcut[i];
    relu_inplace(y);
    return y;
}

AttentionWeights attention_weights(const WeightSet& w, const std::string& prefix, std::size_t width,
                                   std::size_t out) {
    AttentionWeights a;
    a.wq = w.get(prefix + ".q.w", {width, width});
    a.wk = w.get(prefix + ".k.w", {width, width});
    a.wv = w.get(prefix + ".v.w", {width, width});
    a.wo = w.get(prefix + ".out.w", {out, width});
    a.bq = w.vector(prefix + ".q.b", width);
    a.bk = w.vector(prefix + ".k.b", width);
    a.bv = w.vector(prefix + ".v.b", width);
    a.bo = w.vector(prefix + ".out.b", out);
    return a;
}

}  // namespace

void MiniMapResNetConfig::validate() const {
    require(in_channels >= 1 && stem_channels >= 1, "channel counts must be positive");
    require(input_height >= 32 && input_width >= 32,
            "star_net input must be at least 32x32 (got " + std::to_string(input_height) + "x" +
                std::to_string(input_width) + ")");
    for (std::size_t g = 0; g < 4; ++g) {
        require(group_widths[g] >= 1, "group widths must be positive");
        if (g > 0) require(group_widths[g] >= group_widths[g - 1], "group widths must be non-decreasing");
    }
    require(heads >= 1 && embed_dim % heads == 0, "embed_dim must be divisible by heads");
    require(group_widths[3] % heads == 0, "final group width must be divisible by heads");
    require(ffn_hidden >= 1, "ffn_hidden must be positive");
}

std::size_t MiniMapResNetConfig::grid_height() const {
    std::size_t h = input_height;
    for (int i = 0; i < 5; ++i) h = halve(h);
    return h;
}

std::size_t MiniMapResNetConfig::grid_width() const {
    std::size_t w = input_width;
    for (int i = 0; i < 5; ++i) w = halve(w);
    return w;
}

Tensor mapresnet_backbone(const Tensor& estimate, const MiniMapResNetConfig& cfg, const WeightSet& weights) {
    cfg.validate();
    require(estimate.rank() == 3, "coarse estimate must be [C,H,W]");
    require(estimate.dim(1) >= 32 && estimate.dim(2) >= 32, "coarse estimate spatially too small for star_net");
    require(estimate.dim(0) == cfg.in_channels && estimate.dim(1) == cfg.input_height &&
                estimate.dim(2) == cfg.input_width,
            "coarse estimate shape " + estimate.shape_string() + " does not match the star_net config");

    Tensor x = estimate;
    std::size_t in = cfg.in_channels;
    for (std::size_t j = 0; j < 3; ++j) {
        x = conv(x, weights, "star.stem" + std::to_string(j), cfg.stem_channels, in, 3, 2);
        relu_inplace(x);
        in = cfg.stem_channels;
    }
    for (const auto& block : plan_blocks(cfg)) x = residual_block(x, block, cfg, weights);
    ensure(x.dim(1) == cfg.grid_height() && x.dim(2) == cfg.grid_width(), "unexpected token grid size");
    return x;
}

std::vector<double> attention_pool(const Tensor& feature_map, const MiniMapResNetConfig& cfg,
                                   const WeightSet& weights, Tensor* probs) {
    require(feature_map.rank() == 3, "feature map must be [C,h,w]");
    const std::size_t width = feature_map.dim(0);
    const std::size_t n = feature_map.dim(1) * feature_map.dim(2);
    const Tensor& pos = weights.get("star.pool.pos", {n + 1, width});

    Tensor tokens({n + 1, width});
    for (std::size_t c = 0; c < width; ++c) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = feature_map[c * n + i];
            tokens.at(i + 1, c) = v;
            sum += v;
        }
        tokens.at(0, c) = sum / static_cast<double>(n);
    }
    for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i] += pos[i];

    Tensor query({1, width});
    std::copy(tokens.data(), tokens.data() + width, query.data());
    const auto attn = attention_weights(weights, "star.pool", width, cfg.embed_dim);
    const Tensor pooled = multi_head_attention(query, tokens, attn, cfg.heads, probs);
    return {pooled.values().begin(), pooled.values().end()};
}

std::vector<double> mini_mapresnet_forward(const Tensor& estimate, const MiniMapResNetConfig& cfg,
                                           const WeightSet& weights) {
    return attention_pool(mapresnet_backbone(estimate, cfg, weights), cfg, weights);
}

FeatureTensor temporal_attention(const FeatureTensor& seq, const MiniMapResNetConfig& cfg,
                                 const WeightSet& weights, Tensor* probs) {
    require(seq.axes() == std::vector<Axis>{Axis::time, Axis::batch, Axis::channel},
            "temporal attention expects axes [time, batch, channel]");
    const std::size_t steps = seq.extent(Axis::time);
    const std::size_t batch = seq.extent(Axis::batch);
    const std::size_t d = seq.extent(Axis::channel);
    require(steps >= 1 && batch >= 1, "temporal attention needs a non-empty sequence");
    require(d == cfg.embed_dim, "sequence width " + std::to_string(d) + " != embed_dim " +
                                    std::to_string(cfg.embed_dim));

    const auto attn = attention_weights(weights, "star.temporal", d, d);
    const auto ln1_g = weights.vector("star.temporal.ln1.g", d);
    const auto ln1_b = weights.vector("star.temporal.ln1.b", d);
    const auto ln2_g = weights.vector("star.temporal.ln2.g", d);
    const auto ln2_b = weights.vector("star.temporal.ln2.b", d);
    const Tensor& ffn1 = weights.get("star.temporal.ffn1.w", {cfg.ffn_hidden, d});
    const auto ffn1_b = weights.vector("star.temporal.ffn1.b", cfg.ffn_hidden);
    const Tensor& ffn2 = weights.get("star.temporal.ffn2.w", {d, cfg.ffn_hidden});
    const auto ffn2_b = weights.vector("star.temporal.ffn2.b", d);

    if (probs) *probs = Tensor({batch, cfg.heads, steps, steps});
    const Tensor& in = seq.tensor();
    Tensor out({steps, batch, d});
    for (std::size_t b = 0; b < batch; ++b) {
        Tensor x({steps, d});
        for (std::size_t t = 0; t < steps; ++t) {
            for (std::size_t c = 0; c < d; ++c) x.at(t, c) = in.at(t, b, c);
        }
        Tensor p;
        Tensor a = multi_head_attention(x, x, attn, cfg.heads, probs ? &p : nullptr);
        if (probs) std::copy(p.values().begin(), p.values().end(), probs->data() + b * p.size());
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += x[i];
        const Tensor x1 = layer_norm(a, ln1_g, ln1_b);
        Tensor hidden = linear(x1, ffn1, ffn1_b);
        relu_inplace(hidden);
        Tensor f = linear(hidden, ffn2, ffn2_b);
        for (std::size_t i = 0; i < f.size(); ++i) f[i] += x1[i];
        const Tensor y = layer_norm(f, ln2_g, ln2_b);
        for (std::size_t t = 0; t < steps; ++t) {
            for (std::size_t c = 0; c < d; ++c) out.at(t, b, c) = y.at(t, c);
        }
    }
    return FeatureTensor(std::move(out), seq.axes());
}

Tensor temporal_pool(const FeatureTensor& seq) {
    require(seq.axes() == std::vector<Axis>{Axis::time, Axis::batch, Axis::channel},
            "temporal pooling expects axes [time, batch, channel]");
    const std::size_t steps = seq.extent(Axis::time);
    const std::size_t batch = seq.extent(Axis::batch);
    const std::size_t d = seq.extent(Axis::channel);
    require(steps >= 1, "temporal pooling over an empty time axis");
    Tensor out({batch, d});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < d; ++c) {
            double sum = 0.0;
            for (std::size_t t = 0; t < steps; ++t) sum += seq.tensor().at(t, b, c);
            out.at(b, c) = sum / static_cast<double>(steps);
        }
    }
    return out;
}

Tensor star_net_forward_batch(const std::vector<CoarseEstimates>& clips, const MiniMapResNetConfig& cfg,
                              const WeightSet& weights) {
    require(!clips.empty(), "empty clip batch");
    const std::size_t steps = clips.front().size();
    require(steps >= 1, "clip has no coarse estimates");
    const std::size_t batch = clips.size();
    Tensor seq({steps, batch, cfg.embed_dim});
    for (std::size_t b = 0; b < batch; ++b) {
        require(clips[b].size() == steps, "clips disagree on estimate count");
        for (std::size_t t = 0; t < steps; ++t) {
            const auto v = mini_mapresnet_forward(clips[b][t], cfg, weights);
            for (std::size_t c = 0; c < cfg.embed_dim; ++c) seq.at(t, b, c) = v[c];
        }
    }
    const FeatureTensor fused =
        temporal_attention(FeatureTensor(std::move(seq), {Axis::time, Axis::batch, Axis::channel}), cfg, weights);
    return temporal_pool(fused);
}

std::vector<double> star_net_forward(const CoarseEstimates& estimates, const MiniMapResNetConfig& cfg,
                                     const WeightSet& weights) {
    const Tensor pooled = star_net_forward_batch({estimates}, cfg, weights);
    return {pooled.values().begin(), pooled.values().end()};
}

WeightSet init_star_net_weights(const MiniMapResNetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    WeightInit init(seed);
    WeightSet w;
    w.seed = seed;
    const double relu_gain = std::sqrt(2.0);
    const auto put_conv = [&](const std::string& name, std::size_t out, std::size_t in, std::size_t k,
                              double gain) {
        w.put(name + ".w", init.uniform({out, in, k, k}, in * k * k, gain));
        w.put(name + ".b", WeightInit::constant({out}, 0.0));
    };
    const auto put_linear = [&](const std::string& name, std::size_t out, std::size_t in) {
        w.put(name + ".w", init.uniform({out, in}, in));
        w.put(name + ".b", WeightInit::constant({out}, 0.0));
    };

    std::size_t in = cfg.in_channels;
    for (std::size_t j = 0; j < 3; ++j) {
        put_conv("star.stem" + std::to_string(j), cfg.stem_channels, in, 3, relu_gain);
        in = cfg.stem_channels;
    }
    for (const auto& p : plan_blocks(cfg)) {
        if (cfg.style == ResidualStyle::bottleneck) {
            put_conv(p.prefix + ".conv1", p.mid, p.in, 1, relu_gain);
            put_conv(p.prefix + ".conv2", p.mid, p.mid, 3, relu_gain);
            put_conv(p.prefix + ".conv3", p.out, p.mid, 1, 1.0);
        } else {
            put_conv(p.prefix + ".conv1", p.out, p.in, 3, relu_gain);
            put_conv(p.prefix + ".conv2", p.out, p.out, 3, 1.0);
        }
        if (p.projection) put_conv(p.prefix + ".proj", p.out, p.in, 1, 1.0);
    }

    const std::size_t width = cfg.group_widths[3];
    w.put("star.pool.pos", init.normal({cfg.token_count() + 1, width}, 1.0 / std::sqrt(static_cast<double>(width))));
    put_linear("star.pool.q", width, width);
    put_linear("star.pool.k", width, width);
    put_linear("star.pool.v", width, width);
    put_linear("star.pool.out", cfg.embed_dim, width);

    const std::size_t d = cfg.embed_dim;
    put_linear("star.temporal.q", d, d);
    put_linear("star.temporal.k", d, d);
    put_linear("star.temporal.v", d, d);
    put_linear("star.temporal.out", d, d);
    put_linear("star.temporal.ffn1", cfg.ffn_hidden, d);
    put_linear("star.temporal.ffn2", d, cfg.ffn_hidden);
    for (const char* ln : {"ln1", "ln2"}) {
        w.put(std::string("star.temporal.") + ln + ".g", WeightInit::constant({d}, 1.0));
        w.put(std::string("star.temporal.") + ln + ".b", WeightInit::constant({d}, 0.0));
    }
    return w;
}

}  // namespace spiketk
