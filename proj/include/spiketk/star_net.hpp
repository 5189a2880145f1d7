#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "spiketk/hsfe.hpp"
#include "spiketk/tensor.hpp"
#include "spiketk/weights.hpp"

namespace spiketk {

enum class ResidualStyle { bottleneck, basic };

struct MiniMapResNetConfig {
    std::size_t in_channels = 48;
    std::size_t input_height = 64;
    std::size_t input_width = 64;
    std::size_t stem_channels = 16;
    std::array<std::size_t, 4> group_widths{16, 32, 64, 128};
    std::array<std::size_t, 4> blocks_per_group{2, 2, 2, 2};
    std::size_t heads = 8;
    std::size_t embed_dim = 64;
    std::size_t ffn_hidden = 128;
    ResidualStyle style = ResidualStyle::bottleneck;

    void validate() const;
    /// Token grid after the stem (÷8) and the downsampling in groups 2 and 3 (÷4).
    std::size_t grid_height() const;
    std::size_t grid_width() const;
    std::size_t token_count() const { return grid_height() * grid_width(); }
};

/// Stem and residual groups: estimate [C,H,W] -> feature map [C4, H/32, W/32].
Tensor mapresnet_backbone(const Tensor& estimate, const MiniMapResNetConfig& cfg, const WeightSet& weights);

/// Multi-head attention pooling of a feature map [C,h,w] into [D]. The query
/// is the mean token; keys and values are the mean token followed by the
/// flattened tokens, each with its learnable positional code added.
/// `probs` (optional) receives [heads, 1, N+1] softmax rows.
std::vector<double> attention_pool(const Tensor& feature_map, const MiniMapResNetConfig& cfg,
                                   const WeightSet& weights, Tensor* probs = nullptr);

std::vector<double> mini_mapresnet_forward(const Tensor& estimate, const MiniMapResNetConfig& cfg,
                                           const WeightSet& weights);

/// One post-norm transformer encoder layer over the time axis of [T,B,D],
/// applied to each batch element independently. `probs` (optional)
/// receives [B, heads, T, T].
FeatureTensor temporal_attention(const FeatureTensor& seq, const MiniMapResNetConfig& cfg,
                                 const WeightSet& weights, Tensor* probs = nullptr);

/// Mean over the time axis of [T,B,D], summed left to right -> [B,D].
Tensor temporal_pool(const FeatureTensor& seq);

/// Five coarse estimates -> clip embedding [D].
std::vector<double> star_net_forward(const CoarseEstimates& estimates, const MiniMapResNetConfig& cfg,
                                     const WeightSet& weights);

/// Batched variant; row b of the result is the embedding of clip b.
Tensor star_net_forward_batch(const std::vector<CoarseEstimates>& clips, const MiniMapResNetConfig& cfg,
                              const WeightSet& weights);

WeightSet init_star_net_weights(const MiniMapResNetConfig& cfg, std::uint64_t seed);

}  // namespace spiketk
