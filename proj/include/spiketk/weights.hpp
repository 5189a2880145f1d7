#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "spiketk/tensor.hpp"

namespace spiketk {

/// Named parameter tensors. Values are kept f32-representable so that an
/// archive round trip reproduces them bit for bit.
class WeightSet {
public:
    void put(const std::string& name, Tensor value);
    bool contains(const std::string& name) const { return tensors_.contains(name); }

    /// Throws PreconditionError when missing or when the shape differs.
    const Tensor& get(const std::string& name, const std::vector<std::size_t>& shape) const;
    const Tensor& get(const std::string& name) const;
    std::vector<double> vector(const std::string& name, std::size_t length) const;

    const std::map<std::string, Tensor>& tensors() const { return tensors_; }

    std::optional<std::uint64_t> seed;

    friend bool operator==(const WeightSet&, const WeightSet&) = default;

private:
    std::map<std::string, Tensor> tensors_;
};

/// Seeded generator for parameter tensors.
class WeightInit {
public:
    explicit WeightInit(std::uint64_t seed) : rng_(seed) {}

    /// Uniform(−b, b) with b = gain·sqrt(3 / fan_in), rounded to f32.
    Tensor uniform(std::vector<std::size_t> shape, std::size_t fan_in, double gain = 1.0);
    Tensor normal(std::vector<std::size_t> shape, double stddev);
    static Tensor constant(std::vector<std::size_t> shape, double value);

private:
    std::mt19937_64 rng_;
};

/// Directory of `<name>.bin` little-endian f32 blobs plus `manifest.json`
/// listing {name, dtype:"f32", shape} entries and the generating seed.
void save_archive(const WeightSet& weights, const std::filesystem::path& dir);
WeightSet load_archive(const std::filesystem::path& dir);

/// Merges `extra` into `base`; names must not collide.
void merge_weights(WeightSet& base, const WeightSet& extra);

}  // namespace spiketk
