#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "resobj/train.hpp"

namespace resobj {

/// Score thresholds and NMS thresholds of the default sweep grid.
std::vector<double> default_sweep_score_thresholds();
std::vector<double> default_sweep_nms_thresholds();

struct SweepRow {
    double score_threshold = 0.0;
    double nms_threshold = 0.0;
    APResult result;
    std::size_t detections = 0;
};

struct SweepTable {
    std::vector<SweepRow> rows;  // score thresholds outer, NMS thresholds inner
    std::size_t best = 0;        // row with the highest AP (first on ties)
};

/// Runs the network once per scene, then post-processes every (score, NMS) pair.
SweepTable sweep_inference(const ModelConfig& model, const ModelParameters& params,
                           const std::vector<LabeledScene>& scenes, const std::vector<double>& score_thresholds,
                           const std::vector<double>& nms_thresholds, const DetectOptions& base = {});

void write_sweep_csv(std::ostream& os, const SweepTable& table);

enum class AblationAxis { gradient_flow, residual_source, steps };

const char* to_string(AblationAxis axis);
AblationAxis ablation_axis_from_string(const std::string& s);

struct AblationVariant {
    std::string name;
    TrainConfig config;
};

/// gradient_flow: isolated / coupled; residual_source: objectness_head /
/// class_head; steps: one variant per entry of `steps` (T = 0 trains Obj).
std::vector<AblationVariant> ablation_variants(AblationAxis axis, const TrainConfig& base,
                                               const std::vector<std::size_t>& steps = {0, 1, 2, 3});

/// Dotted paths of the config fields that differ (e.g. "model.gradient_flow").
std::vector<std::string> config_diff(const TrainConfig& a, const TrainConfig& b);

struct RunSummary {
    std::uint64_t seed = 0;
    APResult ap;
    ObjectnessProbe final_objectness;
};

struct VariantReport {
    std::string name;
    TrainConfig config;                    // seed field is per run
    std::vector<std::string> differs_from_first;
    std::vector<RunSummary> runs;          // in seed order
    double mean_ap = 0.0, spread_ap = 0.0;  // spread: sample standard deviation
    double mean_ap50 = 0.0, mean_ap75 = 0.0;
    /// Objectness curves averaged over seeds: [log row][step].
    std::vector<std::size_t> curve_iterations;
    std::vector<std::vector<double>> positive_curve, negative_curve;
};

struct AblationReport {
    AblationAxis axis = AblationAxis::steps;
    std::vector<std::uint64_t> seeds;
    std::vector<VariantReport> variants;
};

struct AblationOptions {
    std::vector<std::size_t> steps = {0, 1, 2, 3};
    /// Worker threads (0: hardware concurrency). Results do not depend on it.
    std::size_t threads = 0;
    /// When set, each run's checkpoint and metrics go to <dir>/<variant>/seed<k>.
    std::filesystem::path run_dir;
};

/// Trains every variant for every seed (at least three) and aggregates.
AblationReport run_ablation(AblationAxis axis, const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                            const AblationOptions& options = {});

/// One row per variant: name, mean/spread AP, AP50, AP75, per-seed AP, config diff.
void write_ablation_summary_csv(std::ostream& os, const AblationReport& report);
/// variant, iteration, then pos_obj_t{t} / neg_obj_t{t} seed means.
void write_ablation_curves_csv(std::ostream& os, const AblationReport& report);
nlohmann::json to_json(const AblationReport& report);

}  // namespace resobj
