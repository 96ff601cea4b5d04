#include "resobj/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "resobj/errors.hpp"

namespace resobj {

namespace {

// Flat per-(anchor, class) masks and targets for the class head.
struct ClassSelection {
    std::vector<bool> mask;
    std::vector<double> targets;  // for the selected entries, in flat order
};

ClassSelection select_class_terms(const Var& class_logits, const AnchorLabels& labels, int num_classes,
                                  bool positives_only) {
    const auto k = static_cast<std::size_t>(num_classes);
    if (class_logits.value().numel() != labels.size() * k) {
        throw ContractViolation("class loss: logits of shape " + shape_string(class_logits.shape()) +
                                " do not cover " + std::to_string(labels.size()) + " anchors x " +
                                std::to_string(k) + " classes");
    }
    ClassSelection sel;
    sel.mask.assign(labels.size() * k, false);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto& a = labels.anchors[i];
        if (a.status == AnchorStatus::ignore) continue;
        if (positives_only && a.status != AnchorStatus::positive) continue;
        if (a.status == AnchorStatus::positive && (a.cls < 1 || a.cls > num_classes)) {
            throw ContractViolation("class loss: positive anchor " + std::to_string(i) + " has class " +
                                    std::to_string(a.cls) + " outside 1.." + std::to_string(num_classes));
        }
        for (std::size_t c = 0; c < k; ++c) {
            sel.mask[i * k + c] = true;
            const bool hit = a.status == AnchorStatus::positive && a.cls == static_cast<int>(c) + 1;
            sel.targets.push_back(hit ? 1.0 : 0.0);
        }
    }
    return sel;
}

Tensor margin_signs(const std::vector<double>& targets) {
    Tensor s(Shape{targets.size()});
    for (std::size_t i = 0; i < targets.size(); ++i) s[i] = targets[i] > 0.5 ? 1.0 : -1.0;
    return s;
}

// Neumaier-compensated running sum; keeps long sums of equal terms exact to ~1 ulp.
struct CompensatedSum {
    double sum = 0.0;
    double carry = 0.0;

    void add(double v) {
        const double t = sum + v;
        carry += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
        sum = t;
    }
    double value() const { return sum + carry; }
};

void check_finite(const LossReport& r, const char* what) {
    if (std::isfinite(r.total)) return;
    std::string msg = std::string(what) + " is not finite: class=" + std::to_string(r.class_loss) +
                      " box=" + std::to_string(r.box) + " objectness=" + std::to_string(r.objectness);
    for (std::size_t t = 0; t < r.residual.size(); ++t) {
        msg += " residual" + std::to_string(t + 1) + "=" + std::to_string(r.residual[t]);
    }
    throw NumericError(msg);
}

LossResult assemble(Var class_term, Var box_term, std::optional<Var> obj_term, std::vector<Var> residual_terms,
                    double normalizer, bool degenerate) {
    LossResult r;
    r.report.normalizer = normalizer;
    r.report.degenerate = degenerate;
    r.report.class_loss = class_term.value().item();
    r.report.box = box_term.value().item();
    Var total = add(class_term, box_term);
    if (obj_term) {
        r.report.objectness = obj_term->value().item();
        total = add(total, *obj_term);
    }
    for (const Var& t : residual_terms) {
        r.report.residual.push_back(t.value().item());
        total = add(total, t);
    }
    r.total = total;
    r.report.total = total.value().item();
    return r;
}

}  // namespace

Var bce_with_logits(Var logits, const Tensor& targets) {
    if (targets.numel() != logits.value().numel()) {
        throw ContractViolation("bce_with_logits: " + std::to_string(targets.numel()) + " targets for logits " +
                                shape_string(logits.shape()));
    }
    // t = 1: -log s(z) = softplus(-z);  t = 0: -log(1 - s(z)) = softplus(z)
    Tensor sign(logits.shape());
    for (std::size_t i = 0; i < sign.numel(); ++i) sign[i] = targets[i] > 0.5 ? -1.0 : 1.0;
    return softplus(multiply(logits, logits.tape().constant(std::move(sign))));
}

double bce_with_logits(double z, int target) {
    const double u = target ? -z : z;
    return std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u)));
}

double loss_normalizer(const AnchorLabels& labels) {
    return static_cast<double>(std::max<std::size_t>(labels.positives, 1));
}

Var class_loss(Var class_logits, const AnchorLabels& labels, int num_classes, ClassLossMode mode) {
    const auto sel = select_class_terms(class_logits, labels, num_classes, mode == ClassLossMode::positives_only);
    Var picked = masked_select(class_logits, sel.mask);
    return sum(bce_with_logits(picked, Tensor(Shape{sel.targets.size()}, sel.targets)));
}

Var focal_loss(Var class_logits, const AnchorLabels& labels, int num_classes, const FocalConfig& config) {
    if (!(config.gamma >= 0.0)) throw ContractViolation("focal_loss: gamma must be >= 0");
    if (!(config.alpha > 0.0 && config.alpha < 1.0)) throw ContractViolation("focal_loss: alpha must lie in (0, 1)");
    const auto sel = select_class_terms(class_logits, labels, num_classes, false);
    Tape& tape = class_logits.tape();
    Tensor alpha_t(Shape{sel.targets.size()});
    for (std::size_t i = 0; i < alpha_t.numel(); ++i) {
        alpha_t[i] = sel.targets[i] > 0.5 ? config.alpha : 1.0 - config.alpha;
    }
    // u = z for target 1, -z for target 0: p_t = s(u), CE = softplus(-u),
    // (1 - p_t)^gamma = exp(-gamma * softplus(u)).
    Var u = multiply(masked_select(class_logits, sel.mask), tape.constant(margin_signs(sel.targets)));
    Var ce = softplus(scale(u, -1.0));
    Var modulation = exp(scale(softplus(u), -config.gamma));
    Var terms = multiply(tape.constant(std::move(alpha_t)), multiply(modulation, ce));
    return scale(sum(terms), 1.0 / loss_normalizer(labels));
}

Tensor box_targets(std::span<const Box> anchors, const AnchorLabels& labels, std::span<const GroundTruth> gts) {
    if (anchors.size() != labels.size()) throw ContractViolation("box_targets: anchor/label count mismatch");
    Tensor t(Shape{anchors.size() * 4});
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        if (!labels.is_positive(i)) continue;
        const auto d = encode_box_targets(anchors[i], gts[labels.anchors[i].gt_index].box);
        std::copy(d.begin(), d.end(), t.data.begin() + static_cast<std::ptrdiff_t>(i * 4));
    }
    return t;
}

Var box_loss(Var box_deltas, const AnchorLabels& labels, const Tensor& targets) {
    if (box_deltas.value().numel() != labels.size() * 4 || targets.numel() != labels.size() * 4) {
        throw ContractViolation("box_loss: deltas " + shape_string(box_deltas.shape()) + " / targets " +
                                shape_string(targets.shape) + " do not match " +
                                std::to_string(labels.size()) + " anchors");
    }
    std::vector<bool> mask(labels.size() * 4, false);
    std::vector<double> picked_targets;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!labels.is_positive(i)) continue;
        for (std::size_t c = 0; c < 4; ++c) {
            mask[i * 4 + c] = true;
            picked_targets.push_back(targets[i * 4 + c]);
        }
    }
    Tape& tape = box_deltas.tape();
    const std::size_t n = picked_targets.size();
    Var diff = subtract(masked_select(box_deltas, mask), tape.constant(Tensor(Shape{n}, std::move(picked_targets))));
    return scale(sum(smooth_l1(diff, kSmoothL1Beta)), 1.0 / loss_normalizer(labels));
}

Var objectness_bce(Var obj_logits, const AnchorLabels& labels, const std::vector<bool>& mask) {
    if (obj_logits.value().numel() != labels.size() || mask.size() != labels.size()) {
        throw ContractViolation("objectness loss: logits " + shape_string(obj_logits.shape()) +
                                " do not match " + std::to_string(labels.size()) + " anchors");
    }
    std::vector<bool> selected(labels.size(), false);
    std::vector<double> targets;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!mask[i] || labels.anchors[i].status == AnchorStatus::ignore) continue;
        selected[i] = true;
        targets.push_back(labels.is_positive(i) ? 1.0 : 0.0);
    }
    const std::size_t n = targets.size();
    return sum(bce_with_logits(masked_select(obj_logits, selected), Tensor(Shape{n}, std::move(targets))));
}

LossResult ce_total_loss(const HeadOutputs& heads, const AnchorLabels& labels, const Tensor& targets,
                         int num_classes) {
    const double norm = loss_normalizer(labels);
    Var cls = scale(class_loss(heads.class_logits, labels, num_classes, ClassLossMode::all_anchors), 1.0 / norm);
    LossResult r = assemble(cls, box_loss(heads.box_deltas, labels, targets), std::nullopt, {}, norm, false);
    check_finite(r.report, "CE loss");
    return r;
}

LossResult focal_total_loss(const HeadOutputs& heads, const AnchorLabels& labels, const Tensor& targets,
                            int num_classes, const FocalConfig& config) {
    Var cls = focal_loss(heads.class_logits, labels, num_classes, config);
    LossResult r = assemble(cls, box_loss(heads.box_deltas, labels, targets), std::nullopt, {},
                            loss_normalizer(labels), false);
    check_finite(r.report, "focal loss");
    return r;
}

LossResult objectness_total_loss(const HeadOutputs& heads, const AnchorLabels& labels, const Tensor& targets,
                                 int num_classes) {
    return residual_objectness_loss(HeadOutputs{heads.class_logits, heads.box_deltas, heads.obj_logits, {}},
                                    labels, targets, num_classes, true);
}

LossResult residual_objectness_loss(const HeadOutputs& heads, const AnchorLabels& labels, const Tensor& targets,
                                    int num_classes, bool detach_previous) {
    if (!heads.obj_logits.valid()) throw ContractViolation("objectness loss: model has no objectness head");
    const double norm = loss_normalizer(labels);
    Var cls = scale(class_loss(heads.class_logits, labels, num_classes, ClassLossMode::positives_only), 1.0 / norm);
    Var box = box_loss(heads.box_deltas, labels, targets);
    const std::vector<bool> everything(labels.size(), true);
    Var obj = scale(objectness_bce(heads.obj_logits, labels, everything), 1.0 / norm);

    const Refinement steps =
        refine_objectness_train(heads.obj_logits, heads.residual_logits, labels.positive_mask(), detach_previous);
    std::vector<Var> residual_terms;
    for (std::size_t t = 0; t < steps.masks.size(); ++t) {
        residual_terms.push_back(scale(objectness_bce(steps.logits[t + 1], labels, steps.masks[t]), 1.0 / norm));
    }
    LossResult r = assemble(cls, box, obj, std::move(residual_terms), norm, steps.degenerate);
    check_finite(r.report, "objectness loss");
    return r;
}

NegativeLossRatio negative_loss_ratio(const Tensor& class_logits, const Tensor& obj_logits,
                                      const AnchorLabels& labels) {
    const std::size_t n = labels.size();
    if (n == 0 || obj_logits.numel() != n || class_logits.numel() % n != 0) {
        throw ContractViolation("negative_loss_ratio: logits do not match the anchor labels");
    }
    const std::size_t k = class_logits.numel() / n;
    CompensatedSum class_sum, obj_sum;
    for (std::size_t i = 0; i < n; ++i) {
        if (!labels.is_negative(i)) continue;
        for (std::size_t c = 0; c < k; ++c) class_sum.add(bce_with_logits(class_logits[i * k + c], 0));
        obj_sum.add(bce_with_logits(obj_logits[i], 0));
    }
    NegativeLossRatio r;
    r.class_negative = class_sum.value();
    r.objectness_negative = obj_sum.value();
    if (r.objectness_negative > 0.0) r.ratio = r.class_negative / r.objectness_negative;
    return r;
}

}  // namespace resobj
