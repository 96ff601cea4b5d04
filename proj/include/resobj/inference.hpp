#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <vector>

#include "resobj/anchors.hpp"
#include "resobj/model.hpp"

namespace resobj {

struct Detection {
    int cls = 1;  // 1..K
    double score = 0.0;
    Box box;
    std::size_t anchor = 0;  // source anchor, used to break score ties

    friend bool operator==(const Detection&, const Detection&) = default;
};

struct DetectOptions {
    double score_threshold = 0.001;
    double nms_threshold = 0.45;
    std::size_t max_detections = 100;
    /// Highest-scoring candidates kept before NMS.
    std::size_t pre_nms_top_k = 1000;

    friend bool operator==(const DetectOptions&, const DetectOptions&) = default;
};

/// p_k * o per anchor and class; class_probs is [A*K], objectness [A].
Tensor combine_scores(const Tensor& class_probs, const Tensor& objectness);

/// Greedy per-class suppression: visit in descending score (ties: lower anchor
/// index first), keep, and drop later same-class boxes whose IoU with a kept box
/// exceeds the threshold. Output sorted by descending score.
std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold);

/// Everything detect() needs after the network forward pass.
struct ScenePredictions {
    int num_classes = 1;
    Tensor scores;            // [A*K] class-specific scores
    std::vector<Box> boxes;   // decoded and clipped to the scene, one per anchor
    Tensor final_objectness;  // [A] sigmoid(o_T); empty for models without objectness
};

ScenePredictions predict(const ModelConfig& config, const ModelParameters& params, const Tensor& scene_input);

std::vector<Detection> postprocess(const ScenePredictions& predictions, const DetectOptions& options);

/// forward -> o_0 + sum r_t -> p_k * sigma(o_T) -> threshold -> decode and clip
/// -> per-class NMS -> top max_detections.
std::vector<Detection> detect(const ModelConfig& config, const ModelParameters& params, const Tensor& scene_input,
                              const DetectOptions& options = {});

/// One "scene_id,class,score,x1,y1,x2,y2" record per detection, header first.
void write_detections(std::ostream& os, const std::map<std::uint64_t, std::vector<Detection>>& by_scene);

}  // namespace resobj
