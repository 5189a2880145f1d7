#include "spiketk/energy_meter.hpp"

#include <cstdio>
#include <sstream>

#include "json_util.hpp"
#include "spiketk/error.hpp"

namespace spiketk {

namespace {

// Costs in tenths of a picojoule keep the per-ledger sum an exact integer.
constexpr std::uint64_t kSopTenths = 46;
constexpr std::uint64_t kNeuronTenths = 9;
constexpr double kTenthsPerJoule = 1e13;

std::uint64_t checked_mul_add(std::uint64_t acc, std::uint64_t a, std::uint64_t b) {
    std::uint64_t product = 0;
    std::uint64_t sum = 0;
    if (__builtin_mul_overflow(a, b, &product) || __builtin_add_overflow(acc, product, &sum)) {
        throw PreconditionError("operation count overflows the energy accumulator");
    }
    return sum;
}

void validate(const LayerRecord& r) {
    require(!r.layer_name.empty(), "layer record needs a name");
    if (r.max_sops) {
        require(r.actual_sops <= *r.max_sops,
                "layer '" + r.layer_name + "': actual_sops exceeds max_sops");
    }
}

}  // namespace

void EnergyLedger::add(const LayerRecord& record) {
    validate(record);
    for (auto& existing : layers_) {
        if (existing.layer_name != record.layer_name) continue;
        require(existing.fan_out == record.fan_out, "layer '" + record.layer_name + "' fan-out changed");
        require(existing.max_sops.has_value() == record.max_sops.has_value(),
                "layer '" + record.layer_name + "' mixes records with and without max_sops");
        existing.spike_count += record.spike_count;
        existing.element_count += record.element_count;
        existing.actual_sops += record.actual_sops;
        existing.neuron_ops += record.neuron_ops;
        if (existing.max_sops) *existing.max_sops += *record.max_sops;
        return;
    }
    layers_.push_back(record);
}

void EnergyLedger::merge(const EnergyLedger& other) {
    for (const auto& r : other.layers_) add(r);
}

std::string EnergyLedger::to_json() const {
    detail::json arr = detail::json::array();
    for (const auto& r : layers_) {
        detail::json j = {{"layer_name", r.layer_name},     {"spike_count", r.spike_count},
                          {"element_count", r.element_count}, {"fan_out", r.fan_out},
                          {"actual_sops", r.actual_sops},     {"neuron_ops", r.neuron_ops}};
        j["max_sops"] = r.max_sops ? detail::json(*r.max_sops) : detail::json(nullptr);
        arr.push_back(std::move(j));
    }
    return arr.dump(2);
}

EnergyLedger EnergyLedger::from_json(const std::string& text) {
    detail::json arr;
    try {
        arr = detail::json::parse(text);
    } catch (const detail::json::parse_error& e) {
        throw PreconditionError(std::string("malformed ledger JSON: ") + e.what());
    }
    if (arr.is_object() && arr.contains("layers")) arr = arr["layers"];
    require(arr.is_array(), "ledger must be an array of layer records");
    EnergyLedger ledger;
    for (const auto& j : arr) {
        LayerRecord r;
        r.layer_name = detail::field<std::string>(j, "layer_name", "ledger");
        r.spike_count = detail::field<std::uint64_t>(j, "spike_count", "ledger");
        r.element_count = j.contains("element_count") ? detail::field<std::uint64_t>(j, "element_count", "ledger") : 0;
        r.fan_out = detail::field<std::uint64_t>(j, "fan_out", "ledger");
        r.actual_sops = detail::field<std::uint64_t>(j, "actual_sops", "ledger");
        r.neuron_ops = detail::field<std::uint64_t>(j, "neuron_ops", "ledger");
        if (j.contains("max_sops") && !j["max_sops"].is_null()) {
            r.max_sops = detail::field<std::uint64_t>(j, "max_sops", "ledger");
        }
        ledger.add(r);
    }
    return ledger;
}

std::uint64_t count_sops(std::span<const std::uint8_t> spikes, std::uint64_t fan_out) {
    std::uint64_t ones = 0;
    for (std::uint8_t s : spikes) {
        require(s <= 1, "SOP counting needs binary input");
        ones += s;
    }
    return checked_mul_add(0, ones, fan_out);
}

std::uint64_t conv_fan_out(std::size_t kernel_h, std::size_t kernel_w, std::size_t out_channels) {
    return static_cast<std::uint64_t>(kernel_h) * kernel_w * out_channels;
}

std::uint64_t count_conv_sops_exact(std::span<const std::uint8_t> spikes, std::size_t channels,
                                    std::size_t height, std::size_t width, std::size_t kernel_h,
                                    std::size_t kernel_w, std::size_t stride, std::size_t padding,
                                    std::size_t out_channels) {
    require(spikes.size() == channels * height * width, "spike tensor size does not match [C,H,W]");
    require(stride >= 1, "stride must be >= 1");
    require(height + 2 * padding >= kernel_h && width + 2 * padding >= kernel_w, "kernel larger than input");
    const std::size_t oh = (height + 2 * padding - kernel_h) / stride + 1;
    const std::size_t ow = (width + 2 * padding - kernel_w) / stride + 1;

    // reach[y] = number of (oy, ky) pairs with oy·stride + ky − padding == y
    const auto reach = [&](std::size_t extent, std::size_t out_extent, std::size_t kernel) {
        std::vector<std::uint64_t> r(extent, 0);
        for (std::size_t o = 0; o < out_extent; ++o) {
            for (std::size_t k = 0; k < kernel; ++k) {
                const std::size_t pos = o * stride + k;
                if (pos >= padding && pos - padding < extent) ++r[pos - padding];
            }
        }
        return r;
    };
    const auto reach_y = reach(height, oh, kernel_h);
    const auto reach_x = reach(width, ow, kernel_w);

    std::uint64_t total = 0;
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t y = 0; y < height; ++y) {
            for (std::size_t x = 0; x < width; ++x) {
                const std::uint8_t s = spikes[(c * height + y) * width + x];
                require(s <= 1, "SOP counting needs binary input");
                if (s) total = checked_mul_add(total, reach_y[y] * reach_x[x], out_channels);
            }
        }
    }
    return total;
}

double estimate_snn_energy(const EnergyLedger& ledger) {
    std::uint64_t tenths = 0;
    for (const auto& r : ledger.layers()) {
        tenths = checked_mul_add(tenths, r.actual_sops, kSopTenths);
        tenths = checked_mul_add(tenths, r.neuron_ops, kNeuronTenths);
    }
    return static_cast<double>(tenths) / kTenthsPerJoule;
}

double estimate_ann_energy(const EnergyLedger& ledger) {
    std::uint64_t tenths = 0;
    for (const auto& r : ledger.layers()) {
        require(r.max_sops.has_value(), "layer '" + r.layer_name + "' has no max_sops for the dense estimate");
        tenths = checked_mul_add(tenths, *r.max_sops, kSopTenths);
    }
    return static_cast<double>(tenths) / kTenthsPerJoule;
}

double reduction_percent(double e_snn, double e_ann) {
    require(e_ann > 0.0, "dense energy must be positive to compute a reduction");
    return 100.0 * (1.0 - e_snn / e_ann);
}

EnergyReport energy_report(const EnergyLedger& snn, const EnergyLedger& ann) {
    require(snn.layers().size() == ann.layers().size(), "ledgers cover different layer sets");
    for (std::size_t i = 0; i < snn.layers().size(); ++i) {
        require(snn.layers()[i].layer_name == ann.layers()[i].layer_name,
                "ledgers cover different layer sets ('" + snn.layers()[i].layer_name + "' vs '" +
                    ann.layers()[i].layer_name + "')");
    }
    EnergyReport report;
    report.e_snn = estimate_snn_energy(snn);
    report.e_ann = estimate_ann_energy(ann);
    report.reduction_pct = reduction_percent(report.e_snn, report.e_ann);
    for (const auto& r : snn.layers()) {
        const double sparsity = r.element_count == 0
                                    ? 1.0
                                    : 1.0 - static_cast<double>(r.spike_count) / static_cast<double>(r.element_count);
        report.sparsity.emplace_back(r.layer_name, sparsity);
    }
    return report;
}

std::string format_report(const EnergyReport& report) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "%-24s %12s\n", "Model", "Energy (J)");
    out << line;
    std::snprintf(line, sizeof line, "%-24s %12.3g\n", "ANN (dense)", report.e_ann);
    out << line;
    std::snprintf(line, sizeof line, "%-24s %12.3g   (%+.1f%%)\n", "SNN", report.e_snn, -report.reduction_pct);
    out << line;
    out << "\nLayer sparsity\n";
    for (const auto& [name, s] : report.sparsity) {
        std::snprintf(line, sizeof line, "  %-22s %8.4f\n", name.c_str(), s);
        out << line;
    }
    return out.str();
}

}  // namespace spiketk
