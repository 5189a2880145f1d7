#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spiketk/energy_meter.hpp"
#include "spiketk/spike_stream.hpp"
#include "spiketk/tensor.hpp"
#include "spiketk/weights.hpp"

namespace spiketk {

enum class ResetMode {
    hard,      // fired neurons return to 0
    subtract,  // fired neurons lose thresh
};

struct LifParams {
    double thresh = 0.5;
    double decay = 0.5;  // leak factor in (0, 1]
    double lens = 0.5;   // surrogate half-width
    ResetMode reset = ResetMode::hard;

    void validate() const;
};

struct MembraneState {
    std::vector<double> u;
    std::size_t step_index = 0;

    static MembraneState zeros(std::size_t neurons) { return {std::vector<double>(neurons, 0.0), 0}; }
};

struct LifStep {
    std::vector<std::uint8_t> spikes;
    MembraneState state;
};

/// u ← decay·u + input; spike where u ≥ thresh; fired neurons reset.
LifStep lif_step(MembraneState state, std::span<const double> input, const LifParams& p);

/// Runs lif_step over the leading (time) axis of `pre`, starting from rest.
/// Returns 0/1 values with the same shape.
Tensor lif_sequence(const Tensor& pre, const LifParams& p);

/// Rectangular surrogate ∂S/∂u: 1/(2·lens) when |u − thresh| ≤ lens, else 0.
double surrogate_grad(double u, const LifParams& p);

/// Normalizes each channel with statistics pooled over every other axis
/// (time, batch and space together), then applies gamma and beta.
FeatureTensor tdbn(const FeatureTensor& x, std::span<const double> gamma, std::span<const double> beta,
                   double eps = 1e-5);

struct SnResult {
    std::vector<std::uint8_t> spikes;
    double v_th;
};

/// Θ(x − V_th) with V_th = alpha · mean|x|; Θ(0) = 1.
SnResult sn_threshold(std::span<const double> x, double alpha);
/// Θ(x − v_th) for a given threshold.
std::vector<std::uint8_t> sn_apply(std::span<const double> x, double v_th);

/// Conv 3×3 of binary S [T,B,C,H,W], TDBN, add S, LIF over time.
/// Records one ledger entry under `name` when a ledger is given.
FeatureTensor spiking_residual_block(const FeatureTensor& spikes, const Tensor& conv_weight,
                                     std::span<const double> gamma, std::span<const double> beta,
                                     const LifParams& p, EnergyLedger* ledger = nullptr,
                                     const std::string& name = "residual");

struct SdsaParams {
    double alpha_sn = 1.0;
    double scale = 0.0;  // 0 selects 1/√d
    std::size_t d = 16;
    bool per_token = false;  // mean|x| per row instead of over the whole tensor

    void validate() const;
    double effective_scale() const;
};

struct SdsaWeights {
    Tensor wq, wk, wv, wo;  // [d,d]
    std::vector<double> bq, bk, bv, bo;
};

/// Intermediate values of one E-SDSA call, for inspection.
struct SdsaTrace {
    Tensor q_s, k_s, v_s;  // binary [N,d]
    Tensor correlation;    // Q_S·K_Sᵀ/√d, before `scale`
    Tensor attention;      // binary [N,N]
    double v_th_inner = 0.0;
    double v_th_reparam = 0.0;
};

/// U [N,d] -> U' [N,d]. Q/K/V are spike-normalized projections; the
/// correlation is thresholded at V_th/scale, which equals thresholding
/// correlation⊙scale at V_th.
Tensor esdsa_forward(const Tensor& tokens, const SdsaParams& params, const SdsaWeights& weights,
                     EnergyLedger* ledger = nullptr, SdsaTrace* trace = nullptr,
                     const std::string& name = "esdsa");

struct FsveConfig {
    std::size_t timesteps = 2;
    std::size_t in_channels = 8;  // frames per time step
    std::size_t channels = 16;
    std::size_t blocks = 2;
    std::size_t pool = 4;
    LifParams lif;
    double sdsa_alpha = 1.0;

    void validate() const;
};

struct FsveResult {
    std::vector<double> embedding;  // [channels]
    EnergyLedger ledger;
    std::size_t spike_tensors_checked = 0;
};

/// Full-spiking encoder: spiking conv stem, spiking residual blocks,
/// binary max-pool to tokens, E-SDSA per time step, mean readout.
FsveResult fsve_forward(const SpikeStream& clip, const FsveConfig& cfg, const WeightSet& weights);

WeightSet init_fsve_weights(const FsveConfig& cfg, std::uint64_t seed);
SdsaWeights sdsa_weights(const WeightSet& weights, const std::string& prefix, std::size_t d);

}  // namespace spiketk
