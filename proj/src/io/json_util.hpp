#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "detkit/io/coco.hpp"

// Strict JSON access helpers shared by the readers: every failure names the
// offending JSON path.
namespace detkit::jsonutil {

using nlohmann::json;

inline json load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return j;
}

inline void write_file(const json& j, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

inline const json& member(const json& obj, const std::string& path, const std::string& key) {
    if (!obj.is_object()) throw ValidationError(path + ": expected an object");
    const auto it = obj.find(key);
    if (it == obj.end()) throw ValidationError(path + "." + key + ": missing");
    return *it;
}

inline const json* member_opt(const json& obj, const std::string& path, const std::string& key) {
    if (!obj.is_object()) throw ValidationError(path + ": expected an object");
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

inline double as_number(const json& j, const std::string& path) {
    if (!j.is_number()) throw ValidationError(path + ": expected a number");
    return j.get<double>();
}

inline int as_int(const json& j, const std::string& path) {
    if (!j.is_number_integer()) throw ValidationError(path + ": expected an integer");
    return j.get<int>();
}

inline std::uint64_t as_u64(const json& j, const std::string& path) {
    if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0)) {
        throw ValidationError(path + ": expected a non-negative integer");
    }
    return j.get<std::uint64_t>();
}

inline bool as_bool(const json& j, const std::string& path) {
    if (j.is_boolean()) return j.get<bool>();
    if (j.is_number_integer()) {
        const auto v = j.get<std::int64_t>();
        if (v == 0 || v == 1) return v == 1;
    }
    throw ValidationError(path + ": expected a boolean");
}

inline std::string as_string(const json& j, const std::string& path) {
    if (!j.is_string()) throw ValidationError(path + ": expected a string");
    return j.get<std::string>();
}

inline const json& as_array(const json& j, const std::string& path) {
    if (!j.is_array()) throw ValidationError(path + ": expected an array");
    return j;
}

}  // namespace detkit::jsonutil
