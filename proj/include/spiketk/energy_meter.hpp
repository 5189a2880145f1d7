#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace spiketk {

// 45 nm CMOS costs.
inline constexpr double kSopPicojoules = 4.6;
inline constexpr double kNeuronOpPicojoules = 0.9;

/// Counts for one layer. One SOP is one accumulation caused by one input
/// spike reaching one output; one neuron op is one membrane update (and
/// compare) of one neuron at one time step, fired or not. `max_sops` is the
/// dense multiply-accumulate count of the same layer shape.
struct LayerRecord {
    std::string layer_name;
    std::uint64_t spike_count = 0;
    std::uint64_t element_count = 0;
    std::uint64_t fan_out = 0;
    std::uint64_t actual_sops = 0;
    std::uint64_t neuron_ops = 0;
    std::optional<std::uint64_t> max_sops;

    friend bool operator==(const LayerRecord&, const LayerRecord&) = default;
};

/// Per-run list of layer records. Adding a record for a layer that is
/// already present accumulates into it, so merging is associative.
class EnergyLedger {
public:
    void add(const LayerRecord& record);
    void merge(const EnergyLedger& other);

    const std::vector<LayerRecord>& layers() const { return layers_; }
    bool empty() const { return layers_.empty(); }

    std::string to_json() const;
    static EnergyLedger from_json(const std::string& text);

    friend bool operator==(const EnergyLedger&, const EnergyLedger&) = default;

private:
    std::vector<LayerRecord> layers_;
};

/// (number of ones) × fan_out. Throws on non-binary input.
std::uint64_t count_sops(std::span<const std::uint8_t> spikes, std::uint64_t fan_out);

/// kernel_h · kernel_w · out_channels: the interior fan-out of a convolution.
std::uint64_t conv_fan_out(std::size_t kernel_h, std::size_t kernel_w, std::size_t out_channels);

/// Exact convolution SOPs for spikes [C,H,W]: each spike is charged for the
/// output positions its kernel footprint actually reaches (borders included).
std::uint64_t count_conv_sops_exact(std::span<const std::uint8_t> spikes, std::size_t channels,
                                    std::size_t height, std::size_t width, std::size_t kernel_h,
                                    std::size_t kernel_w, std::size_t stride, std::size_t padding,
                                    std::size_t out_channels);

/// Σ actual_sops × 4.6 pJ + neuron_ops × 0.9 pJ, in joules.
double estimate_snn_energy(const EnergyLedger& ledger);
/// Σ max_sops × 4.6 pJ, in joules. Throws when any layer lacks max_sops.
double estimate_ann_energy(const EnergyLedger& ledger);

double reduction_percent(double e_snn, double e_ann);

struct EnergyReport {
    double e_snn = 0.0;
    double e_ann = 0.0;
    double reduction_pct = 0.0;
    std::vector<std::pair<std::string, double>> sparsity;  // 1 − spikes / elements
};

/// Both ledgers must name the same layers in the same order.
EnergyReport energy_report(const EnergyLedger& snn, const EnergyLedger& ann);

/// Table-style text summary, energies to 3 significant digits.
std::string format_report(const EnergyReport& report);

}  // namespace spiketk
