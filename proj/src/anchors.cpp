#include "resobj/anchors.hpp"

#include <algorithm>
#include <cmath>

#include "resobj/errors.hpp"

namespace resobj {

std::vector<bool> AnchorLabels::positive_mask() const {
    std::vector<bool> mask(anchors.size());
    for (std::size_t i = 0; i < anchors.size(); ++i) mask[i] = is_positive(i);
    return mask;
}

std::vector<bool> AnchorLabels::negative_mask() const {
    std::vector<bool> mask(anchors.size());
    for (std::size_t i = 0; i < anchors.size(); ++i) mask[i] = is_negative(i);
    return mask;
}

std::vector<Box> generate_anchors(const AnchorLayout& layout) {
    if (layout.grid_h == 0 || layout.grid_w == 0) {
        throw ContractViolation("generate_anchors: grid dimensions must be >= 1");
    }
    if (layout.templates.empty()) throw ContractViolation("generate_anchors: no anchor templates");
    for (const auto& t : layout.templates) {
        if (!(t.scale > 0.0) || !(t.ratio > 0.0)) {
            throw ContractViolation("generate_anchors: template scale and ratio must be positive");
        }
    }
    std::vector<Box> boxes;
    boxes.reserve(layout.total());
    for (std::size_t y = 0; y < layout.grid_h; ++y) {
        for (std::size_t x = 0; x < layout.grid_w; ++x) {
            const double cx = static_cast<double>(x) + 0.5;
            const double cy = static_cast<double>(y) + 0.5;
            for (const auto& t : layout.templates) {
                const double w = t.scale * std::sqrt(t.ratio);
                const double h = t.scale / std::sqrt(t.ratio);
                boxes.push_back({cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h});
            }
        }
    }
    return boxes;
}

double iou(const Box& a, const Box& b) {
    const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    return inter / (a.area() + b.area() - inter);
}

AnchorLabels assign_labels(std::span<const Box> anchors, std::span<const GroundTruth> gts,
                           const AssignThresholds& thresholds) {
    if (thresholds.negative_high > thresholds.positive) {
        throw ContractViolation("assign_labels: negative_high must not exceed the positive threshold");
    }
    AnchorLabels labels;
    labels.anchors.resize(anchors.size());
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        double best = 0.0;
        std::size_t best_gt = 0;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            const double v = iou(anchors[i], gts[g].box);
            if (v > best) {
                best = v;
                best_gt = g;
            }
        }
        auto& a = labels.anchors[i];
        a.max_iou = best;
        if (!gts.empty() && best >= thresholds.positive) {
            a.status = AnchorStatus::positive;
            a.cls = gts[best_gt].cls;
            a.gt_index = best_gt;
            ++labels.positives;
        } else if (best >= thresholds.negative_low && best < thresholds.negative_high) {
            a.status = AnchorStatus::negative;
            ++labels.negatives;
        } else {
            a.status = AnchorStatus::ignore;
            ++labels.ignored;
        }
    }
    return labels;
}

BoxDeltas encode_box_targets(const Box& anchor, const Box& gt) {
    const double wa = anchor.width(), ha = anchor.height();
    const double cxa = anchor.x1 + 0.5 * wa, cya = anchor.y1 + 0.5 * ha;
    const double wg = gt.width(), hg = gt.height();
    const double cxg = gt.x1 + 0.5 * wg, cyg = gt.y1 + 0.5 * hg;
    return {(cxg - cxa) / wa, (cyg - cya) / ha, std::log(wg / wa), std::log(hg / ha)};
}

Box decode_box(const Box& anchor, const BoxDeltas& d) {
    const double wa = anchor.width(), ha = anchor.height();
    const double cxa = anchor.x1 + 0.5 * wa, cya = anchor.y1 + 0.5 * ha;
    const double cx = cxa + d[0] * wa;
    const double cy = cya + d[1] * ha;
    const double w = wa * std::exp(std::clamp(d[2], -kMaxLogDelta, kMaxLogDelta));
    const double h = ha * std::exp(std::clamp(d[3], -kMaxLogDelta, kMaxLogDelta));
    return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

}  // namespace resobj
