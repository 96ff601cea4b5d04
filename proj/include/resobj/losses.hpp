#pragma once

#include <optional>
#include <span>
#include <vector>

#include "resobj/anchors.hpp"
#include "resobj/autograd.hpp"
#include "resobj/model.hpp"

namespace resobj {

struct FocalConfig {
    double gamma = 2.0;
    double alpha = 0.25;

    friend bool operator==(const FocalConfig&, const FocalConfig&) = default;
};

enum class ClassLossMode {
    all_anchors,     // every non-ignore anchor (CE / focal baselines)
    positives_only,  // objectness models: negatives train only the objectness head
};

struct LossReport {
    double total = 0.0;
    double class_loss = 0.0;
    double box = 0.0;
    double objectness = 0.0;
    std::vector<double> residual;  // one entry per refinement step
    double normalizer = 1.0;
    bool degenerate = false;
};

struct LossResult {
    Var total;
    LossReport report;
};

/// Per-element binary cross entropy -[t log s(z) + (1-t) log(1-s(z))], evaluated
/// as softplus(+-z) so saturated logits neither overflow nor cancel.
Var bce_with_logits(Var logits, const Tensor& targets);
double bce_with_logits(double logit, int target);

/// max(P, 1)
double loss_normalizer(const AnchorLabels& labels);

/// Unnormalized sum of one-vs-all sigmoid CE over the selected anchors.
Var class_loss(Var class_logits, const AnchorLabels& labels, int num_classes, ClassLossMode mode);

/// Sum over non-ignore anchors and classes of alpha_t (1 - p_t)^gamma CE,
/// divided by max(P, 1).
Var focal_loss(Var class_logits, const AnchorLabels& labels, int num_classes, const FocalConfig& config);

/// Regression targets [A*4]; zero rows for non-positive anchors.
Tensor box_targets(std::span<const Box> anchors, const AnchorLabels& labels,
                   std::span<const GroundTruth> gts);

inline constexpr double kSmoothL1Beta = 1.0 / 9.0;

/// Smooth-L1 over positive anchors divided by max(P, 1).
Var box_loss(Var box_deltas, const AnchorLabels& labels, const Tensor& targets);

/// Unnormalized objectness BCE over anchors selected by `mask` that are not ignored.
Var objectness_bce(Var obj_logits, const AnchorLabels& labels, const std::vector<bool>& mask);

/// CE baseline: all-anchor class CE + box, each divided by max(P, 1).
LossResult ce_total_loss(const HeadOutputs& heads, const AnchorLabels& labels, const Tensor& targets,
                         int num_classes);

LossResult focal_total_loss(const HeadOutputs& heads, const AnchorLabels& labels, const Tensor& targets,
                            int num_classes, const FocalConfig& config);

/// Objectness BCE over non-ignore anchors + positives-only class CE + box.
LossResult objectness_total_loss(const HeadOutputs& heads, const AnchorLabels& labels,
                                 const Tensor& targets, int num_classes);

/// objectness_total_loss plus, for each refinement step, BCE of o_t over that
/// step's mask. With no residual logits this equals objectness_total_loss.
LossResult residual_objectness_loss(const HeadOutputs& heads, const AnchorLabels& labels,
                                    const Tensor& targets, int num_classes, bool detach_previous);

struct NegativeLossRatio {
    double class_negative = 0.0;       // sum_neg sum_k -log(1 - p_k)
    double objectness_negative = 0.0;  // sum_neg -log(1 - o)
    std::optional<double> ratio;       // empty when objectness_negative == 0
};

/// Aggregate negative loss of a K-way sigmoid classifier against a single
/// objectness output on the same negative anchors (no focal modulation).
NegativeLossRatio negative_loss_ratio(const Tensor& class_logits, const Tensor& obj_logits,
                                      const AnchorLabels& labels);

}  // namespace resobj
