#include "resobj/config.hpp"

#include <algorithm>
#include <fstream>
#include <string>

#include "resobj/errors.hpp"

namespace resobj {

using nlohmann::json;

namespace detail {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* what) {
    if (!j.is_object()) throw FormatError(std::string(what) + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
        if (!known) throw FormatError(std::string(what) + ": unknown field '" + key + "'");
    }
}

}  // namespace detail

const char* to_string(ResidualSource source) {
    return source == ResidualSource::objectness_head ? "objectness_head" : "class_head";
}

const char* to_string(GradientFlow flow) { return flow == GradientFlow::isolated ? "isolated" : "coupled"; }

ResidualSource residual_source_from_string(const std::string& s) {
    if (s == "objectness_head") return ResidualSource::objectness_head;
    if (s == "class_head") return ResidualSource::class_head;
    throw FormatError("unknown residual_source '" + s + "'");
}

GradientFlow gradient_flow_from_string(const std::string& s) {
    if (s == "isolated") return GradientFlow::isolated;
    if (s == "coupled") return GradientFlow::coupled;
    throw FormatError("unknown gradient_flow '" + s + "'");
}

json to_json(const AnchorLayout& layout) {
    json templates = json::array();
    for (const auto& t : layout.templates) templates.push_back({{"scale", t.scale}, {"ratio", t.ratio}});
    return {{"grid_h", layout.grid_h}, {"grid_w", layout.grid_w}, {"templates", templates}};
}

json to_json(const SceneConfig& c) {
    return {{"grid_h", c.grid_h},           {"grid_w", c.grid_w},         {"channels", c.channels},
            {"num_classes", c.num_classes}, {"min_objects", c.min_objects}, {"max_objects", c.max_objects},
            {"min_size", c.min_size},       {"max_size", c.max_size},     {"noise_std", c.noise_std},
            {"base_seed", c.base_seed}};
}

json to_json(const ModelConfig& c) {
    return {{"num_classes", c.num_classes},
            {"layout", to_json(c.layout)},
            {"input_channels", c.input_channels},
            {"residual_steps", c.residual_steps},
            {"trunk_channels", c.trunk_channels},
            {"head_depth", c.head_depth},
            {"init_prior", c.init_prior},
            {"init_std", c.init_std},
            {"fan_in_init", c.fan_in_init},
            {"objectness", c.objectness},
            {"residual_source", to_string(c.residual_source)},
            {"gradient_flow", to_string(c.gradient_flow)},
            {"seed", c.seed}};
}

AnchorLayout anchor_layout_from_json(const json& j) {
    detail::check_keys(j, {"grid_h", "grid_w", "templates"}, "layout");
    AnchorLayout layout;
    detail::read_field(j, "grid_h", layout.grid_h);
    detail::read_field(j, "grid_w", layout.grid_w);
    if (j.contains("templates")) {
        layout.templates.clear();
        for (const auto& t : j.at("templates")) {
            detail::check_keys(t, {"scale", "ratio"}, "anchor template");
            layout.templates.push_back({t.at("scale").get<double>(), t.at("ratio").get<double>()});
        }
    }
    return layout;
}

SceneConfig scene_config_from_json(const json& j) {
    detail::check_keys(j,
                       {"grid_h", "grid_w", "channels", "num_classes", "min_objects", "max_objects", "min_size",
                        "max_size", "noise_std", "base_seed"},
                       "scene config");
    SceneConfig c;
    try {
        detail::read_field(j, "grid_h", c.grid_h);
        detail::read_field(j, "grid_w", c.grid_w);
        detail::read_field(j, "channels", c.channels);
        detail::read_field(j, "num_classes", c.num_classes);
        detail::read_field(j, "min_objects", c.min_objects);
        detail::read_field(j, "max_objects", c.max_objects);
        detail::read_field(j, "min_size", c.min_size);
        detail::read_field(j, "max_size", c.max_size);
        detail::read_field(j, "noise_std", c.noise_std);
        detail::read_field(j, "base_seed", c.base_seed);
    } catch (const json::exception& e) {
        throw FormatError(std::string("scene config: ") + e.what());
    }
    return c;
}

ModelConfig model_config_from_json(const json& j) {
    detail::check_keys(j,
                       {"num_classes", "layout", "input_channels", "residual_steps", "trunk_channels", "head_depth",
                        "init_prior", "init_std", "fan_in_init", "objectness", "residual_source", "gradient_flow", "seed"},
                       "model config");
    ModelConfig c;
    try {
        detail::read_field(j, "num_classes", c.num_classes);
        if (j.contains("layout")) c.layout = anchor_layout_from_json(j.at("layout"));
        detail::read_field(j, "input_channels", c.input_channels);
        detail::read_field(j, "residual_steps", c.residual_steps);
        detail::read_field(j, "trunk_channels", c.trunk_channels);
        detail::read_field(j, "head_depth", c.head_depth);
        detail::read_field(j, "init_prior", c.init_prior);
        detail::read_field(j, "init_std", c.init_std);
        detail::read_field(j, "fan_in_init", c.fan_in_init);
        detail::read_field(j, "objectness", c.objectness);
        if (j.contains("residual_source")) {
            c.residual_source = residual_source_from_string(j.at("residual_source").get<std::string>());
        }
        if (j.contains("gradient_flow")) {
            c.gradient_flow = gradient_flow_from_string(j.at("gradient_flow").get<std::string>());
        }
        detail::read_field(j, "seed", c.seed);
    } catch (const json::exception& e) {
        throw FormatError(std::string("model config: ") + e.what());
    }
    return c;
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace resobj
