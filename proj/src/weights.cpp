#include "spiketk/weights.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

#include "json_util.hpp"
#include "spiketk/error.hpp"

namespace spiketk {

namespace {

double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

void WeightSet::put(const std::string& name, Tensor value) {
    for (double& v : value.values()) v = round_f32(v);
    tensors_.insert_or_assign(name, std::move(value));
}

const Tensor& WeightSet::get(const std::string& name) const {
    const auto it = tensors_.find(name);
    require(it != tensors_.end(), "weight '" + name + "' missing from weight set");
    return it->second;
}

const Tensor& WeightSet::get(const std::string& name, const std::vector<std::size_t>& shape) const {
    const Tensor& t = get(name);
    if (t.shape() != shape) {
        throw PreconditionError("weight '" + name + "' has shape " + t.shape_string() + ", expected " +
                                Tensor(shape).shape_string());
    }
    return t;
}

std::vector<double> WeightSet::vector(const std::string& name, std::size_t length) const {
    const Tensor& t = get(name, {length});
    return {t.values().begin(), t.values().end()};
}

Tensor WeightInit::uniform(std::vector<std::size_t> shape, std::size_t fan_in, double gain) {
    const double bound = gain * std::sqrt(3.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = round_f32(dist(rng_));
    return t;
}

Tensor WeightInit::normal(std::vector<std::size_t> shape, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = round_f32(dist(rng_));
    return t;
}

Tensor WeightInit::constant(std::vector<std::size_t> shape, double value) {
    return Tensor(std::move(shape), round_f32(value));
}

void save_archive(const WeightSet& weights, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    detail::json entries = detail::json::array();
    for (const auto& [name, tensor] : weights.tensors()) {
        entries.push_back({{"name", name}, {"dtype", "f32"}, {"shape", tensor.shape()}});
        const auto path = dir / (name + ".bin");
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + path.string());
        for (double v : tensor.values()) {
            const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
            const char b[4] = {static_cast<char>(bits & 0xFF), static_cast<char>((bits >> 8) & 0xFF),
                               static_cast<char>((bits >> 16) & 0xFF), static_cast<char>((bits >> 24) & 0xFF)};
            out.write(b, 4);
        }
        if (!out) throw IoError("write failed for " + path.string());
    }
    detail::json manifest = {{"tensors", entries}};
    if (weights.seed) manifest["seed"] = *weights.seed;
    detail::write_json_file(manifest, dir / "manifest.json");
}

WeightSet load_archive(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    if (!std::filesystem::exists(manifest_path)) throw IoError("no manifest.json in " + dir.string());
    const auto manifest = detail::read_json_file(manifest_path);
    const std::string where = manifest_path.string();

    const detail::json* entries = &manifest;
    if (manifest.is_object()) {
        if (!manifest.contains("tensors")) throw PreconditionError(where + ": missing 'tensors'");
        entries = &manifest["tensors"];
    }
    if (!entries->is_array()) throw PreconditionError(where + ": tensor list must be an array");

    WeightSet weights;
    if (manifest.is_object() && manifest.contains("seed")) weights.seed = manifest["seed"].get<std::uint64_t>();
    for (const auto& entry : *entries) {
        const auto name = detail::field<std::string>(entry, "name", where);
        const auto dtype = detail::field<std::string>(entry, "dtype", where);
        require(dtype == "f32", where + ": tensor '" + name + "' has unsupported dtype " + dtype);
        const auto shape = detail::field<std::vector<std::size_t>>(entry, "shape", where);
        const auto path = dir / (name + ".bin");
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open " + path.string());
        std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        const std::size_t count = element_count(shape);
        if (raw.size() < count * 4) throw IoError(path.string() + " is truncated");
        require(raw.size() == count * 4, path.string() + " is larger than its manifest shape");
        std::vector<double> data(count);
        for (std::size_t i = 0; i < count; ++i) {
            const std::uint32_t bits = static_cast<std::uint32_t>(raw[4 * i]) |
                                       (static_cast<std::uint32_t>(raw[4 * i + 1]) << 8) |
                                       (static_cast<std::uint32_t>(raw[4 * i + 2]) << 16) |
                                       (static_cast<std::uint32_t>(raw[4 * i + 3]) << 24);
            data[i] = static_cast<double>(std::bit_cast<float>(bits));
        }
        weights.put(name, Tensor(shape, std::move(data)));
    }
    return weights;
}

void merge_weights(WeightSet& base, const WeightSet& extra) {
    for (const auto& [name, tensor] : extra.tensors()) {
        require(!base.contains(name), "duplicate weight name '" + name + "'");
        base.put(name, tensor);
    }
}

}  // namespace spiketk
