#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"
#include "spiketk/error.hpp"
#include "spiketk/provenance.hpp"

namespace spiketk::detail {

using nlohmann::json;

inline json provenance_json(const Provenance& p) {
    json inputs = json::array();
    for (const auto& [path, hash] : p.inputs) inputs.push_back({{"path", path}, {"fnv1a64", hash}});
    json out = {{"inputs", inputs}, {"toolkit_version", p.version}};
    if (!p.command.empty()) out["command"] = p.command;
    if (p.seed) out["seed"] = *p.seed;
    return out;
}

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw PreconditionError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

inline void write_json_file(const json& value, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << value.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

// Field accessors that turn schema problems into precondition errors.
template <typename T>
T field(const json& obj, const char* name, const std::string& where) {
    if (!obj.is_object() || !obj.contains(name)) {
        throw PreconditionError(where + ": missing field '" + name + "'");
    }
    try {
        return obj.at(name).get<T>();
    } catch (const json::exception& e) {
        throw PreconditionError(where + ": bad field '" + name + "': " + e.what());
    }
}

}  // namespace spiketk::detail
