#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace resobj {

/// Axis-aligned box in continuous grid coordinates (one unit per grid cell).
struct Box {
    double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }
    bool valid() const { return x1 < x2 && y1 < y2; }

    friend bool operator==(const Box&, const Box&) = default;
};

/// Anchor shape relative to a cell: width = scale*sqrt(ratio), height = scale/sqrt(ratio).
struct AnchorTemplate {
    double scale = 1.0;
    double ratio = 1.0;

    friend bool operator==(const AnchorTemplate&, const AnchorTemplate&) = default;
};

struct AnchorLayout {
    std::size_t grid_h = 1;
    std::size_t grid_w = 1;
    std::vector<AnchorTemplate> templates;

    std::size_t per_cell() const { return templates.size(); }
    std::size_t total() const { return grid_h * grid_w * templates.size(); }

    friend bool operator==(const AnchorLayout&, const AnchorLayout&) = default;
};

struct GroundTruth {
    Box box;
    int cls = 1;  // 1..K
};

enum class AnchorStatus { negative, positive, ignore };

struct AnchorAssignment {
    AnchorStatus status = AnchorStatus::negative;
    int cls = 0;                // 1..K for positives, 0 otherwise
    std::size_t gt_index = 0;   // valid for positives
    double max_iou = 0.0;
};

struct AnchorLabels {
    std::vector<AnchorAssignment> anchors;
    std::size_t positives = 0;
    std::size_t negatives = 0;
    std::size_t ignored = 0;

    std::size_t size() const { return anchors.size(); }
    bool is_positive(std::size_t i) const { return anchors[i].status == AnchorStatus::positive; }
    bool is_negative(std::size_t i) const { return anchors[i].status == AnchorStatus::negative; }
    std::vector<bool> positive_mask() const;
    std::vector<bool> negative_mask() const;
};

struct AssignThresholds {
    double positive = 0.5;
    double negative_low = 0.0;
    double negative_high = 0.4;

    friend bool operator==(const AssignThresholds&, const AssignThresholds&) = default;
};

using BoxDeltas = std::array<double, 4>;

/// Maximum magnitude of the log-size deltas accepted by decode_box().
inline constexpr double kMaxLogDelta = 4.0;

/// One box per (cell, template), centred on the cell, row-major then template index.
std::vector<Box> generate_anchors(const AnchorLayout& layout);

double iou(const Box& a, const Box& b);

/// Threshold assignment: positive iff max IoU >= positive (argmax gt, ties to the
/// lowest gt index), negative iff max IoU in [negative_low, negative_high),
/// ignore otherwise. With no ground truth every anchor is negative.
AnchorLabels assign_labels(std::span<const Box> anchors, std::span<const GroundTruth> gts,
                           const AssignThresholds& thresholds = {});

/// (dcx/w_a, dcy/h_a, log(w_g/w_a), log(h_g/h_a))
BoxDeltas encode_box_targets(const Box& anchor, const Box& gt);
/// Inverse of encode_box_targets; log-size terms are clamped to kMaxLogDelta.
Box decode_box(const Box& anchor, const BoxDeltas& deltas);

}  // namespace resobj
