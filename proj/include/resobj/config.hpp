#pragma once

#include <filesystem>

#include <json.hpp>

#include "resobj/model.hpp"
#include "resobj/synthetic.hpp"

namespace resobj {

// JSON mappings use the struct field names verbatim. Missing fields keep their
// defaults; unknown fields are rejected so typos do not pass silently.

nlohmann::json to_json(const AnchorLayout& layout);
nlohmann::json to_json(const SceneConfig& config);
nlohmann::json to_json(const ModelConfig& config);

AnchorLayout anchor_layout_from_json(const nlohmann::json& j);
SceneConfig scene_config_from_json(const nlohmann::json& j);
ModelConfig model_config_from_json(const nlohmann::json& j);

const char* to_string(ResidualSource source);
const char* to_string(GradientFlow flow);
ResidualSource residual_source_from_string(const std::string& s);
GradientFlow gradient_flow_from_string(const std::string& s);

/// Parse a JSON file; syntax errors and unreadable files raise FormatError.
nlohmann::json read_json_file(const std::filesystem::path& path);

namespace detail {

/// Throws FormatError if `j` is not an object or has a key outside `allowed`.
void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const char* what);

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

}  // namespace resobj
