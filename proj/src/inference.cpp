#include "resobj/inference.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>

#include "resobj/errors.hpp"

namespace resobj {

namespace {

double sigmoid_value(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

bool ranks_before(const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.anchor != b.anchor) return a.anchor < b.anchor;
    return a.cls < b.cls;
}

Box clip(const Box& b, double width, double height) {
    return {std::clamp(b.x1, 0.0, width), std::clamp(b.y1, 0.0, height), std::clamp(b.x2, 0.0, width),
            std::clamp(b.y2, 0.0, height)};
}

}  // namespace

Tensor combine_scores(const Tensor& class_probs, const Tensor& objectness) {
    const std::size_t a = objectness.numel();
    if (a == 0 || class_probs.numel() % a != 0) {
        throw ContractViolation("combine_scores: " + std::to_string(class_probs.numel()) +
                                " class scores for " + std::to_string(a) + " anchors");
    }
    const std::size_t k = class_probs.numel() / a;
    Tensor out(Shape{class_probs.numel()});
    for (std::size_t i = 0; i < a; ++i)
        for (std::size_t c = 0; c < k; ++c) out[i * k + c] = class_probs[i * k + c] * objectness[i];
    return out;
}

std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold) {
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
        throw ContractViolation("nms: IoU threshold must lie in (0, 1]");
    }
    std::stable_sort(detections.begin(), detections.end(), ranks_before);
    std::vector<Detection> kept;
    for (const Detection& d : detections) {
        const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
            return k.cls == d.cls && iou(k.box, d.box) > iou_threshold;
        });
        if (!suppressed) kept.push_back(d);
    }
    return kept;
}

ScenePredictions predict(const ModelConfig& config, const ModelParameters& params, const Tensor& scene_input) {
    Tape tape;
    const auto bound = bind_parameters(tape, params);
    const HeadOutputs heads = forward(config, params, bound, scene_input);

    ScenePredictions out;
    out.num_classes = config.num_classes;
    const Tensor& logits = heads.class_logits.value();
    Tensor probs(Shape{logits.numel()});
    for (std::size_t i = 0; i < probs.numel(); ++i) probs[i] = sigmoid_value(logits[i]);

    if (heads.obj_logits.valid()) {
        std::vector<Tensor> residuals;
        for (const Var& r : heads.residual_logits) residuals.push_back(r.value());
        const Tensor final_logits = refine_objectness_infer(heads.obj_logits.value(), residuals);
        out.final_objectness = Tensor(Shape{final_logits.numel()});
        for (std::size_t i = 0; i < final_logits.numel(); ++i) {
            out.final_objectness[i] = sigmoid_value(final_logits[i]);
        }
        out.scores = combine_scores(probs, out.final_objectness);
    } else {
        out.scores = std::move(probs);
        out.final_objectness = Tensor(Shape{0});
    }

    const auto anchors = generate_anchors(config.layout);
    const Tensor& deltas = heads.box_deltas.value();
    const auto width = static_cast<double>(config.layout.grid_w);
    const auto height = static_cast<double>(config.layout.grid_h);
    out.boxes.reserve(anchors.size());
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        const BoxDeltas d{deltas[i * 4], deltas[i * 4 + 1], deltas[i * 4 + 2], deltas[i * 4 + 3]};
        out.boxes.push_back(clip(decode_box(anchors[i], d), width, height));
    }
    return out;
}

std::vector<Detection> postprocess(const ScenePredictions& p, const DetectOptions& options) {
    const auto k = static_cast<std::size_t>(p.num_classes);
    std::vector<Detection> candidates;
    for (std::size_t i = 0; i < p.boxes.size(); ++i) {
        if (!p.boxes[i].valid()) continue;
        for (std::size_t c = 0; c < k; ++c) {
            const double s = p.scores[i * k + c];
            if (s < options.score_threshold) continue;
            candidates.push_back({static_cast<int>(c) + 1, s, p.boxes[i], i});
        }
    }
    std::sort(candidates.begin(), candidates.end(), ranks_before);
    if (candidates.size() > options.pre_nms_top_k) candidates.resize(options.pre_nms_top_k);
    auto kept = nms(std::move(candidates), options.nms_threshold);
    if (kept.size() > options.max_detections) kept.resize(options.max_detections);
    return kept;
}

std::vector<Detection> detect(const ModelConfig& config, const ModelParameters& params, const Tensor& scene_input,
                              const DetectOptions& options) {
    return postprocess(predict(config, params, scene_input), options);
}

void write_detections(std::ostream& os, const std::map<std::uint64_t, std::vector<Detection>>& by_scene) {
    const auto old_precision = os.precision(std::numeric_limits<double>::max_digits10);
    os << "scene_id,class,score,x1,y1,x2,y2\n";
    for (const auto& [scene, dets] : by_scene) {
        for (const auto& d : dets) {
            os << scene << ',' << d.cls << ',' << d.score << ',' << d.box.x1 << ',' << d.box.y1 << ','
               << d.box.x2 << ',' << d.box.y2 << '\n';
        }
    }
    os.precision(old_precision);
}

}  // namespace resobj
