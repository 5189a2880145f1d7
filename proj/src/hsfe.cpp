#include "spiketk/hsfe.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spiketk/error.hpp"

namespace spiketk {

namespace {

std::string branch_name(std::size_t i, const char* leaf) {
    return "hsfe.branch" + std::to_string(i) + "." + leaf;
}

}  // namespace

void BlockSpec::validate() const {
    require(step >= 1, "block step must be >= 1");
    require(n_blocks >= 1, "block count must be >= 1");
}

void HsfeConfig::validate() const {
    blocks.validate();
    require(branches >= 1, "branch count must be >= 1");
    require(c_out >= 1, "branch output width must be >= 1");
}

std::vector<TimeBlock> slice_blocks(const SpikeStream& stream, const BlockSpec& spec) {
    spec.validate();
    require(stream.t_len() >= spec.required_length(),
            "stream too short for block slicing: t_len=" + std::to_string(stream.t_len()) + ", need >= " +
                std::to_string(spec.required_length()));
    const std::size_t len = spec.block_len();
    const std::size_t plane = stream.frame_size();
    std::vector<TimeBlock> blocks;
    blocks.reserve(spec.n_blocks);
    for (std::size_t i = 0; i < spec.n_blocks; ++i) {
        const std::size_t center = spec.center(i);
        Tensor frames({len, stream.height(), stream.width()});
        const std::size_t first = (center - spec.r_win) * plane;
        for (std::size_t j = 0; j < len * plane; ++j) frames[j] = stream.get(first + j) ? 1.0 : 0.0;
        blocks.push_back({center, std::move(frames)});
    }
    return blocks;
}

std::vector<BranchAllocation> allocate_channels(std::size_t total_channels, std::size_t m,
                                                std::size_t channel_step) {
    require(m >= 1, "branch count must be >= 1");
    require(total_channels >= m, "total channels must be >= branch count");
    require((m - 1) * channel_step < total_channels,
            "channel_step " + std::to_string(channel_step) + " drives a branch below one channel");
    std::vector<BranchAllocation> out;
    out.reserve(m);
    const double widest = static_cast<double>(total_channels);
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t k = total_channels - i * channel_step;
        const auto w = static_cast<std::size_t>(std::lround(widest / static_cast<double>(k)));
        out.push_back({k, std::max<std::size_t>(w, 1)});
    }
    return out;
}

Tensor branch_input(const Tensor& block, const BranchAllocation& alloc, std::span<const double> mask) {
    require(block.rank() == 3, "time block must be [L,H,W]");
    const std::size_t len = block.dim(0);
    const std::size_t plane = block.dim(1) * block.dim(2);
    require(alloc.k >= 1 && alloc.k <= len, "branch channel count exceeds block length");
    require(alloc.w >= 1, "averaging width must be >= 1");
    require(mask.size() == alloc.k, "mask length " + std::to_string(mask.size()) + " != branch channels " +
                                        std::to_string(alloc.k));

    const std::size_t start = (len - alloc.k) / 2;
    Tensor masked({alloc.k, block.dim(1), block.dim(2)});
    for (std::size_t c = 0; c < alloc.k; ++c) {
        const double* src = block.data() + (start + c) * plane;
        double* dst = masked.data() + c * plane;
        for (std::size_t p = 0; p < plane; ++p) dst[p] = mask[c] * src[p];
    }
    if (alloc.w == 1) return masked;

    Tensor averaged({alloc.k, block.dim(1), block.dim(2)});
    const std::size_t before = (alloc.w - 1) / 2;
    for (std::size_t c = 0; c < alloc.k; ++c) {
        const auto start = static_cast<std::ptrdiff_t>(c) - static_cast<std::ptrdiff_t>(before);
        const auto lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(start, 0));
        const auto hi = static_cast<std::size_t>(
            std::min<std::ptrdiff_t>(start + static_cast<std::ptrdiff_t>(alloc.w), static_cast<std::ptrdiff_t>(alloc.k)));
        double* dst = averaged.data() + c * plane;
        const double inv = 1.0 / static_cast<double>(hi - lo);
        for (std::size_t s = lo; s < hi; ++s) {
            const double* src = masked.data() + s * plane;
            for (std::size_t p = 0; p < plane; ++p) dst[p] += src[p];
        }
        for (std::size_t p = 0; p < plane; ++p) dst[p] *= inv;
    }
    return averaged;
}

std::vector<Tensor> mtf_forward(const Tensor& block, const HsfeConfig& cfg, const WeightSet& weights) {
    cfg.validate();
    require(block.rank() == 3, "time block must be [L,H,W]");
    require(block.dim(0) == cfg.blocks.block_len(),
            "block length " + std::to_string(block.dim(0)) + " != " + std::to_string(cfg.blocks.block_len()));
    const auto allocation = allocate_channels(block.dim(0), cfg.branches, cfg.channel_step);
    std::vector<Tensor> out;
    out.reserve(cfg.branches);
    for (std::size_t i = 0; i < cfg.branches; ++i) {
        const auto& alloc = allocation[i];
        const auto mask = weights.vector(branch_name(i, "mask"), alloc.k);
        const Tensor& kernel = weights.get(branch_name(i, "conv.w"), {cfg.c_out, alloc.k, 3, 3});
        out.push_back(conv2d(branch_input(block, alloc, mask), kernel, {}, 1, 1));
    }
    return out;
}

Tensor spatial_attention(const std::vector<Tensor>& features, const WeightSet& weights, Tensor* attention) {
    require(!features.empty(), "spatial attention needs at least one branch");
    const auto& first = features.front().shape();
    require(first.size() == 3, "branch features must be [C,H,W]");
    for (const auto& f : features) require(f.shape() == first, "branch feature shapes differ");
    const std::size_t m = features.size();
    const std::size_t c = first[0];
    const std::size_t plane = first[1] * first[2];

    Tensor stacked({m * c, first[1], first[2]});
    for (std::size_t i = 0; i < m; ++i) {
        std::copy(features[i].values().begin(), features[i].values().end(), stacked.data() + i * c * plane);
    }
    const Tensor& kernel = weights.get("hsfe.sa.conv.w", {m, m * c, 3, 3});
    const auto bias = weights.vector("hsfe.sa.conv.b", m);
    Tensor logits = conv2d(stacked, kernel, bias, 1, 1);
    for (double& v : logits.values()) v = sigmoid(v);

    for (std::size_t i = 0; i < m; ++i) {
        const double* a = logits.data() + i * plane;
        for (std::size_t ch = 0; ch < c; ++ch) {
            double* dst = stacked.data() + (i * c + ch) * plane;
            for (std::size_t p = 0; p < plane; ++p) dst[p] *= a[p];
        }
    }
    if (attention) *attention = std::move(logits);
    return stacked;
}

CoarseEstimates hsfe_forward(const SpikeStream& stream, const HsfeConfig& cfg, const WeightSet& weights) {
    cfg.validate();
    CoarseEstimates out;
    for (const auto& block : slice_blocks(stream, cfg.blocks)) {
        out.push_back(spatial_attention(mtf_forward(block.frames, cfg, weights), weights));
    }
    ensure(out.size() == cfg.blocks.n_blocks, "coarse estimate count differs from block count");
    return out;
}

WeightSet init_hsfe_weights(const HsfeConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    WeightInit init(seed);
    WeightSet w;
    w.seed = seed;
    const auto allocation = allocate_channels(cfg.blocks.block_len(), cfg.branches, cfg.channel_step);
    for (std::size_t i = 0; i < cfg.branches; ++i) {
        const std::size_t k = allocation[i].k;
        w.put(branch_name(i, "mask"), WeightInit::constant({k}, 1.0));
        w.put(branch_name(i, "conv.w"), init.uniform({cfg.c_out, k, 3, 3}, k * 9, std::sqrt(2.0)));
    }
    const std::size_t in = cfg.out_channels();
    w.put("hsfe.sa.conv.w", init.uniform({cfg.branches, in, 3, 3}, in * 9));
    w.put("hsfe.sa.conv.b", WeightInit::constant({cfg.branches}, 0.0));
    return w;
}

}  // namespace spiketk
