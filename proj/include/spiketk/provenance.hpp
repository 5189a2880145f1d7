#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace spiketk {

inline constexpr const char* kToolkitVersion = "0.3.0";

/// Where an artifact came from: input fingerprints, the seed that drove it,
/// and the toolkit version that wrote it.
struct Provenance {
    std::vector<std::pair<std::string, std::string>> inputs;  // path -> fnv1a64 hex
    std::optional<std::uint64_t> seed;
    std::string command;
    std::string version = kToolkitVersion;

    void add_input(const std::filesystem::path& path);
};

/// FNV-1a 64 of a file's bytes as 16 hex digits.
std::string file_fingerprint(const std::filesystem::path& path);

}  // namespace spiketk
