#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "resobj/checkpoint.hpp"
#include "resobj/evaluation.hpp"
#include "resobj/inference.hpp"
#include "resobj/losses.hpp"
#include "resobj/model.hpp"
#include "resobj/synthetic.hpp"

namespace resobj {

enum class LossMode { ce, focal, obj, resobj };

const char* to_string(LossMode mode);
LossMode loss_mode_from_string(const std::string& s);

struct TrainConfig {
    LossMode mode = LossMode::resobj;
    ModelConfig model;
    SceneConfig scene;
    std::size_t iterations = 4000;
    std::size_t batch_size = 1;
    double learning_rate = 0.01;
    double momentum = 0.9;
    /// Fractions of `iterations` at which the learning rate is multiplied by lr_decay_factor.
    std::vector<double> lr_decay_at = {2.0 / 3.0, 8.0 / 9.0};
    double lr_decay_factor = 0.1;
    /// Linear ramp from learning_rate * warmup_factor over the first iterations.
    std::size_t warmup_iterations = 0;
    double warmup_factor = 1.0 / 3.0;
    /// Rescale the gradient to this L2 norm when larger (0: off). The norm is
    /// taken separately over the base detector and over each residual subnet.
    double grad_clip_norm = 10.0;
    std::size_t log_interval = 100;
    /// AP is evaluated every eval_interval iterations (0: only after the last one).
    std::size_t eval_interval = 0;
    /// Drives parameter initialization and the training-scene stream.
    std::uint64_t seed = 0;
    std::uint64_t validation_seed = 7919;
    std::size_t probe_scenes = 64;
    std::size_t validation_scenes = 100;
    FocalConfig focal;
    AssignThresholds assign;
    DetectOptions detect;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// The configuration train() actually runs: model classes/grid/channels follow
/// the scene, the objectness subnet is dropped for CE and focal, T = 0 for Obj,
/// and model.seed = seed. Throws ContractViolation for ResObj with T = 0 or an
/// otherwise invalid setup.
TrainConfig effective_config(const TrainConfig& config);

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig load_train_config(const std::filesystem::path& path);

double learning_rate_at(const TrainConfig& config, std::size_t iteration);

/// A fixed scene together with its anchor labels.
struct LabeledScene {
    Scene scene;
    AnchorLabels labels;
};

std::vector<LabeledScene> validation_set(const TrainConfig& config, std::size_t count);

/// Mean sigma(o_t) over positive and over negative anchors of the probe scenes,
/// for t = 0..T, with o_t = o_0 + r_1 + ... + r_t on every anchor.
struct ObjectnessProbe {
    std::vector<double> positive;
    std::vector<double> negative;
};

ObjectnessProbe probe_objectness(const ModelConfig& model, const ModelParameters& params,
                                 const std::vector<LabeledScene>& probe);

struct MetricsRow {
    std::size_t iteration = 0;
    double learning_rate = 0.0;
    LossReport loss;
    ObjectnessProbe objectness;
    std::optional<APResult> ap;
};

/// Header plus one line per row; score columns pos_obj_t{t} / neg_obj_t{t}.
void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows, std::size_t steps,
                       bool has_objectness);

struct TrainResult {
    TrainConfig config;  // effective configuration
    Checkpoint checkpoint;
    std::vector<MetricsRow> metrics;
};

using ProgressCallback = std::function<void(const MetricsRow&)>;

/// SGD with momentum over generated scenes. Deterministic for a given config.
/// A non-finite loss raises NumericError naming the iteration and components.
TrainResult train(const TrainConfig& config, const ProgressCallback& progress = {});

/// checkpoint.bin, metrics.csv and config.json under `dir`.
void write_training_outputs(const std::filesystem::path& dir, const TrainResult& result);

/// Detections for each validation scene, keyed by scene index.
DetectionsByScene detect_all(const ModelConfig& model, const ModelParameters& params,
                             const std::vector<LabeledScene>& scenes, const DetectOptions& options);
GroundTruthByScene ground_truth_of(const std::vector<LabeledScene>& scenes);

APResult evaluate_model(const ModelConfig& model, const ModelParameters& params,
                        const std::vector<LabeledScene>& scenes, const DetectOptions& options);

}  // namespace resobj
