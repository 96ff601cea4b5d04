#include "resobj/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "binary_io.hpp"
#include "resobj/errors.hpp"

namespace resobj {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
constexpr char kSceneMagic[8] = {'R', 'O', 'B', 'J', 'S', 'C', 'N', 'E'};
constexpr std::uint32_t kSceneVersion = 1;

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

bool overlaps(const Box& a, const Box& b) {
    return a.x1 < b.x2 && b.x1 < a.x2 && a.y1 < b.y2 && b.y1 < a.y2;
}

}  // namespace

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_(mix64(mix64(seed + kGolden) ^ (stream * 0xd1342543de82ef95ULL + 1))) {}

std::uint64_t CounterRng::next_u64() { return mix64(key_ + kGolden * ++counter_); }

double CounterRng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::size_t CounterRng::uniform_int(std::size_t lo, std::size_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::size_t>(next_u64() % span);
}

double CounterRng::normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void validate(const SceneConfig& c) {
    if (c.num_classes < 1) throw ContractViolation("scene config: num_classes must be >= 1");
    if (c.grid_h == 0 || c.grid_w == 0 || c.channels == 0) {
        throw ContractViolation("scene config: grid and channel sizes must be >= 1");
    }
    if (c.min_objects > c.max_objects) throw ContractViolation("scene config: min_objects > max_objects");
    if (c.min_size == 0 || c.min_size > c.max_size) {
        throw ContractViolation("scene config: object size range must satisfy 1 <= min_size <= max_size");
    }
    if (c.max_size > c.grid_h || c.max_size > c.grid_w) {
        throw ContractViolation("scene config: objects do not fit inside the grid");
    }
    if (!(c.noise_std >= 0.0)) throw ContractViolation("scene config: noise_std must be >= 0");
}

std::vector<double> class_pattern(int cls, int num_classes, std::size_t channels) {
    if (cls < 1 || cls > num_classes) throw ContractViolation("class_pattern: class outside 1..K");
    // Digits of (cls - 1) in base L, where L^C >= K, mapped to levels (d + 1) / L.
    std::size_t levels = 1;
    while (std::pow(static_cast<double>(levels), static_cast<double>(channels)) < num_classes) ++levels;
    levels = std::max<std::size_t>(levels, 2);
    std::vector<double> pattern(channels);
    auto code = static_cast<std::size_t>(cls - 1);
    for (std::size_t c = 0; c < channels; ++c) {
        pattern[c] = static_cast<double>(code % levels + 1) / static_cast<double>(levels);
        code /= levels;
    }
    return pattern;
}

Scene generate_scene(const SceneConfig& config, std::uint64_t index) {
    validate(config);
    CounterRng rng(config.base_seed, index);
    Scene scene;
    scene.index = index;
    scene.input = Tensor(Shape{config.channels, config.grid_h, config.grid_w});

    const std::size_t count = rng.uniform_int(config.min_objects, config.max_objects);
    for (std::size_t n = 0; n < count; ++n) {
        const int cls = static_cast<int>(rng.uniform_int(1, static_cast<std::size_t>(config.num_classes)));
        for (int attempt = 0; attempt < 100; ++attempt) {
            const std::size_t w = rng.uniform_int(config.min_size, config.max_size);
            const std::size_t h = rng.uniform_int(config.min_size, config.max_size);
            const std::size_t x = rng.uniform_int(0, config.grid_w - w);
            const std::size_t y = rng.uniform_int(0, config.grid_h - h);
            const Box box{static_cast<double>(x), static_cast<double>(y), static_cast<double>(x + w),
                          static_cast<double>(y + h)};
            bool clash = false;
            for (const auto& o : scene.objects) clash |= overlaps(o.box, box);
            if (clash) continue;
            scene.objects.push_back({box, cls});
            const auto pattern = class_pattern(cls, config.num_classes, config.channels);
            for (std::size_t c = 0; c < config.channels; ++c)
                for (std::size_t yy = y; yy < y + h; ++yy)
                    for (std::size_t xx = x; xx < x + w; ++xx)
                        scene.input[(c * config.grid_h + yy) * config.grid_w + xx] = pattern[c];
            break;
        }
    }
    if (config.noise_std > 0.0) {
        for (double& v : scene.input.data) v += config.noise_std * rng.normal();
    }
    return scene;
}

Scene validation_scene(const SceneConfig& config, std::uint64_t validation_seed, std::size_t j) {
    SceneConfig held_out = config;
    held_out.base_seed = validation_seed;
    return generate_scene(held_out, 2 * static_cast<std::uint64_t>(j) + 1);
}

ImbalanceStats imbalance_stats(const SceneConfig& config, const AnchorLayout& layout,
                               std::size_t n_scenes) {
    if (n_scenes == 0) throw ContractViolation("imbalance_stats: n_scenes must be >= 1");
    const auto anchors = generate_anchors(layout);
    double pos = 0.0, neg = 0.0;
    for (std::size_t i = 0; i < n_scenes; ++i) {
        const Scene scene = generate_scene(config, i);
        const auto labels = assign_labels(anchors, scene.objects);
        pos += static_cast<double>(labels.positives);
        neg += static_cast<double>(labels.negatives);
    }
    ImbalanceStats stats;
    stats.mean_positives = pos / static_cast<double>(n_scenes);
    stats.mean_negatives = neg / static_cast<double>(n_scenes);
    stats.positive_fraction = pos + neg > 0.0 ? pos / (pos + neg) : 0.0;
    return stats;
}

void write_scene_file(const std::filesystem::path& path, const Scene& scene) {
    nlohmann::json meta;
    meta["index"] = scene.index;
    meta["shape"] = scene.input.shape;
    meta["objects"] = nlohmann::json::array();
    for (const auto& o : scene.objects) {
        meta["objects"].push_back(
            {{"class", o.cls}, {"x1", o.box.x1}, {"y1", o.box.y1}, {"x2", o.box.x2}, {"y2", o.box.y2}});
    }
    const std::string text = meta.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    os.write(kSceneMagic, sizeof kSceneMagic);
    detail::write_u32(os, kSceneVersion);
    detail::write_u32(os, static_cast<std::uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (double v : scene.input.data) detail::write_f32(os, v);
    if (!os) throw FormatError("failed writing " + path.string());
}

Scene read_scene_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path.string());
    const std::string magic = detail::read_bytes(is, sizeof kSceneMagic, "magic");
    if (magic != std::string(kSceneMagic, sizeof kSceneMagic)) throw FormatError("bad scene file magic");
    if (detail::read_u32(is, "version") != kSceneVersion) throw FormatError("unsupported scene file version");
    const std::uint32_t len = detail::read_u32(is, "metadata length");
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(detail::read_bytes(is, len, "metadata"));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("scene metadata: ") + e.what());
    }
    Scene scene;
    try {
        scene.index = meta.at("index").get<std::uint64_t>();
        scene.input = Tensor(meta.at("shape").get<Shape>());
        for (const auto& o : meta.at("objects")) {
            scene.objects.push_back({{o.at("x1").get<double>(), o.at("y1").get<double>(),
                                      o.at("x2").get<double>(), o.at("y2").get<double>()},
                                     o.at("class").get<int>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("scene metadata: ") + e.what());
    }
    for (double& v : scene.input.data) v = detail::read_f32(is, "payload");
    return scene;
}

}  // namespace resobj
