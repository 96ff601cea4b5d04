#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "resobj/anchors.hpp"
#include "resobj/tensor.hpp"

namespace resobj {

struct SceneConfig {
    std::size_t grid_h = 32;
    std::size_t grid_w = 32;
    std::size_t channels = 3;
    int num_classes = 3;
    std::size_t min_objects = 1;
    std::size_t max_objects = 3;
    /// Object side lengths in cells, drawn uniformly from [min_size, max_size].
    std::size_t min_size = 3;
    std::size_t max_size = 6;
    double noise_std = 0.1;
    std::uint64_t base_seed = 1;

    friend bool operator==(const SceneConfig&, const SceneConfig&) = default;
};

struct Scene {
    std::uint64_t index = 0;
    /// [C, grid_h, grid_w]
    Tensor input;
    std::vector<GroundTruth> objects;
};

/// Counter-based generator: the stream for (key, counter) is a pure function of
/// both, so any scene can be produced without generating its predecessors.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double uniform();
    /// Uniform integer in [lo, hi].
    std::size_t uniform_int(std::size_t lo, std::size_t hi);
    double normal();

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

void validate(const SceneConfig& config);

/// Per-channel intensities rendered for objects of class `cls` (1..K). Distinct
/// for distinct classes and strictly positive in every channel.
std::vector<double> class_pattern(int cls, int num_classes, std::size_t channels);

Scene generate_scene(const SceneConfig& config, std::uint64_t index);

/// Held-out scenes: odd indices of the stream keyed by `validation_seed`.
Scene validation_scene(const SceneConfig& config, std::uint64_t validation_seed, std::size_t j);

struct ImbalanceStats {
    double mean_positives = 0.0;
    double mean_negatives = 0.0;
    double positive_fraction = 0.0;  // P / (P + N) over all scenes
};

ImbalanceStats imbalance_stats(const SceneConfig& config, const AnchorLayout& layout,
                               std::size_t n_scenes);

/// Scene dump: "ROBJSCNE", u32 version, u32 metadata length, JSON metadata,
/// then the input tensor as little-endian float32.
void write_scene_file(const std::filesystem::path& path, const Scene& scene);
Scene read_scene_file(const std::filesystem::path& path);

}  // namespace resobj
