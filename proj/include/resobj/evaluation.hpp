#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "resobj/anchors.hpp"
#include "resobj/inference.hpp"

namespace resobj {

using DetectionsByScene = std::map<std::uint64_t, std::vector<Detection>>;
using GroundTruthByScene = std::map<std::uint64_t, std::vector<GroundTruth>>;

/// 0.50, 0.55, ..., 0.95
std::vector<double> coco_iou_thresholds();

struct APResult {
    double ap = 0.0;    // mean over the requested IoU thresholds
    double ap50 = 0.0;
    double ap75 = 0.0;
    /// Fraction of ground-truth boxes matched at IoU 0.5.
    double recall50 = 0.0;
    /// Classes with at least one ground-truth box; the others are excluded.
    std::vector<int> evaluated_classes;
};

/// Per class, detections from all scenes are ranked by score (ties: scene id,
/// then the scene's own order). Each matches the unmatched same-scene,
/// same-class ground truth of highest IoU >= threshold (ties: lower index).
/// Per-class AP is the 101-point interpolated precision; AP is averaged over
/// classes, then thresholds. Throws ContractViolation if no class has ground truth.
APResult evaluate_ap(const DetectionsByScene& detections, const GroundTruthByScene& ground_truth,
                     const std::vector<double>& iou_thresholds = coco_iou_thresholds());

/// Interpolated AP of one class at one IoU threshold (NaN without ground truth).
double class_average_precision(const DetectionsByScene& detections, const GroundTruthByScene& ground_truth,
                               int cls, double iou_threshold);

}  // namespace resobj
