#include "resobj/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "resobj/errors.hpp"

namespace resobj {

namespace {

constexpr int kRecallPoints = 101;

struct Ranked {
    double score;
    std::uint64_t scene;
    std::size_t order;
    const Detection* det;
};

struct MatchCurve {
    std::vector<bool> true_positive;  // in rank order
    std::size_t num_gt = 0;
};

MatchCurve match_class(const DetectionsByScene& detections, const GroundTruthByScene& ground_truth, int cls,
                       double iou_threshold) {
    MatchCurve curve;
    std::map<std::uint64_t, std::vector<bool>> used;
    for (const auto& [scene, gts] : ground_truth) {
        auto& flags = used[scene];
        flags.assign(gts.size(), false);
        for (const auto& g : gts) curve.num_gt += g.cls == cls;
    }

    std::vector<Ranked> ranked;
    for (const auto& [scene, dets] : detections)
        for (std::size_t i = 0; i < dets.size(); ++i)
            if (dets[i].cls == cls) ranked.push_back({dets[i].score, scene, i, &dets[i]});
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.scene != b.scene) return a.scene < b.scene;
        return a.order < b.order;
    });

    curve.true_positive.reserve(ranked.size());
    for (const Ranked& r : ranked) {
        const auto it = ground_truth.find(r.scene);
        bool hit = false;
        if (it != ground_truth.end()) {
            const auto& gts = it->second;
            auto& flags = used[r.scene];
            double best = -1.0;
            std::size_t best_index = 0;
            for (std::size_t g = 0; g < gts.size(); ++g) {
                if (gts[g].cls != cls || flags[g]) continue;
                const double o = iou(r.det->box, gts[g].box);
                if (o >= iou_threshold && o > best) {
                    best = o;
                    best_index = g;
                }
            }
            if (best >= 0.0) {
                flags[best_index] = true;
                hit = true;
            }
        }
        curve.true_positive.push_back(hit);
    }
    return curve;
}

double interpolated_ap(const MatchCurve& curve) {
    const std::size_t n = curve.true_positive.size();
    std::vector<std::size_t> tp(n);
    std::vector<double> precision(n);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        hits += curve.true_positive[i];
        tp[i] = hits;
        precision[i] = static_cast<double>(hits) / static_cast<double>(i + 1);
    }
    for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);

    // Recall point r = q/100 is reached at the first rank with tp*100 >= q*num_gt.
    double total = 0.0;
    std::size_t rank = 0;
    for (int q = 0; q < kRecallPoints; ++q) {
        const std::size_t need = static_cast<std::size_t>(q) * curve.num_gt;
        while (rank < n && tp[rank] * 100 < need) ++rank;
        if (rank == n) break;
        total += precision[rank];
    }
    return total / kRecallPoints;
}

}  // namespace

std::vector<double> coco_iou_thresholds() {
    std::vector<double> t;
    for (int i = 0; i < 10; ++i) t.push_back((50 + 5 * i) / 100.0);
    return t;
}

double class_average_precision(const DetectionsByScene& detections, const GroundTruthByScene& ground_truth,
                               int cls, double iou_threshold) {
    const MatchCurve curve = match_class(detections, ground_truth, cls, iou_threshold);
    if (curve.num_gt == 0) return std::numeric_limits<double>::quiet_NaN();
    return interpolated_ap(curve);
}

APResult evaluate_ap(const DetectionsByScene& detections, const GroundTruthByScene& ground_truth,
                     const std::vector<double>& iou_thresholds) {
    if (iou_thresholds.empty()) throw ContractViolation("evaluate_ap: no IoU thresholds");
    std::set<int> classes;
    std::size_t total_gt = 0;
    for (const auto& [scene, gts] : ground_truth) {
        for (const auto& g : gts) classes.insert(g.cls);
        total_gt += gts.size();
    }
    if (classes.empty()) throw ContractViolation("evaluate_ap: every class has an empty ground-truth set");

    APResult r;
    r.evaluated_classes.assign(classes.begin(), classes.end());
    const double nc = static_cast<double>(classes.size());
    auto mean_ap = [&](double threshold) {
        double s = 0.0;
        for (int c : classes) s += class_average_precision(detections, ground_truth, c, threshold);
        return s / nc;
    };
    double sum = 0.0;
    for (double t : iou_thresholds) sum += mean_ap(t);
    r.ap = sum / static_cast<double>(iou_thresholds.size());
    r.ap50 = mean_ap(0.5);
    r.ap75 = mean_ap(0.75);

    std::size_t matched = 0;
    for (int c : classes) {
        for (bool hit : match_class(detections, ground_truth, c, 0.5).true_positive) matched += hit;
    }
    r.recall50 = static_cast<double>(matched) / static_cast<double>(total_gt);
    return r;
}

}  // namespace resobj
