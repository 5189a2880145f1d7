#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "spiketk/spike_stream.hpp"
#include "spiketk/tensor.hpp"
#include "spiketk/weights.hpp"

namespace spiketk {

/// Overlapping temporal blocks S[t_i − r, t_i + r], t_i = r + i·step.
struct BlockSpec {
    std::size_t r_win = 30;
    std::size_t step = 45;
    std::size_t n_blocks = 5;

    void validate() const;
    std::size_t block_len() const { return 2 * r_win + 1; }
    std::size_t center(std::size_t i) const { return r_win + i * step; }
    /// Minimum stream length: last center + r_win + 1.
    std::size_t required_length() const { return center(n_blocks - 1) + r_win + 1; }
};

/// One filtering branch: k input channels (central frames of the block)
/// and an averaging width w with k·w held near the block length.
struct BranchAllocation {
    std::size_t k;
    std::size_t w;
};

struct HsfeConfig {
    BlockSpec blocks;
    std::size_t branches = 3;
    std::size_t channel_step = 20;  // 0 disables channel slicing
    std::size_t c_out = 16;

    void validate() const;
    std::size_t out_channels() const { return branches * c_out; }
};

struct TimeBlock {
    std::size_t center;
    Tensor frames;  // [2r+1, H, W], values 0/1
};

using CoarseEstimates = std::vector<Tensor>;  // n_blocks × [m·c_out, H, W]

std::vector<TimeBlock> slice_blocks(const SpikeStream& stream, const BlockSpec& spec);

/// k_i = total − i·channel_step, w_i = round(k_0 / k_i).
std::vector<BranchAllocation> allocate_channels(std::size_t total_channels, std::size_t m,
                                                std::size_t channel_step);

/// Central k frames of `block`, multiplied by `mask`, then a centered
/// moving average of width w along time (truncated at the edges).
Tensor branch_input(const Tensor& block, const BranchAllocation& alloc, std::span<const double> mask);

/// H_t^(i) for every branch: 3×3 convolution of branch_input to c_out maps.
std::vector<Tensor> mtf_forward(const Tensor& block, const HsfeConfig& cfg, const WeightSet& weights);

/// Per-branch, per-pixel logistic weights from a 3×3 convolution over the
/// concatenated branch maps; returns the channel stack of weighted maps.
/// `attention` (optional) receives the [m, H, W] weights.
Tensor spatial_attention(const std::vector<Tensor>& features, const WeightSet& weights,
                         Tensor* attention = nullptr);

CoarseEstimates hsfe_forward(const SpikeStream& stream, const HsfeConfig& cfg, const WeightSet& weights);

/// Masks all ones, branch convolutions seeded uniform, attention bias zero.
WeightSet init_hsfe_weights(const HsfeConfig& cfg, std::uint64_t seed);

}  // namespace spiketk
