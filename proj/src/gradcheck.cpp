#include "resobj/gradcheck.hpp"

#include <algorithm>
#include <vector>

#include "resobj/anchors.hpp"
#include "resobj/autograd.hpp"
#include "resobj/errors.hpp"
#include "resobj/losses.hpp"
#include "resobj/synthetic.hpp"

namespace resobj {

const char* to_string(GradCheckLoss loss) {
    switch (loss) {
        case GradCheckLoss::ce: return "ce";
        case GradCheckLoss::focal: return "focal";
        case GradCheckLoss::obj: return "obj";
        case GradCheckLoss::resobj: return "resobj";
        case GradCheckLoss::box: return "box";
    }
    return "?";
}

GradCheckLoss gradcheck_loss_from_string(const std::string& s) {
    for (GradCheckLoss l :
         {GradCheckLoss::ce, GradCheckLoss::focal, GradCheckLoss::obj, GradCheckLoss::resobj, GradCheckLoss::box}) {
        if (s == to_string(l)) return l;
    }
    throw ContractViolation("unknown loss '" + s + "'");
}

namespace {

constexpr int kClasses = 3;
constexpr std::size_t kSteps = 2;

struct Instance {
    AnchorLabels labels;
    Tensor targets;
    std::vector<Tensor> heads;  // class, box, o_0, r_1, r_2
};

Tensor gaussian(std::size_t n, CounterRng& rng, double sd) {
    Tensor t(Shape{n});
    for (double& v : t.data) v = sd * rng.normal();
    return t;
}

Instance make_instance(std::uint64_t seed, std::size_t index) {
    const AnchorLayout layout{4, 3, {{2.0, 1.0}, {3.0, 1.0}}};
    const auto anchors = generate_anchors(layout);
    CounterRng rng(seed, index);
    std::vector<GroundTruth> gts;
    // One gt copied from an anchor guarantees a positive; the others are random.
    const Box& a = anchors[rng.uniform_int(0, anchors.size() - 1)];
    gts.push_back({a, static_cast<int>(rng.uniform_int(1, kClasses))});
    for (std::size_t n = rng.uniform_int(0, 2); n > 0; --n) {
        const double x = 3.0 * rng.uniform(), y = 4.0 * rng.uniform();
        gts.push_back({Box{x, y, x + 1.0 + 2.0 * rng.uniform(), y + 1.0 + 2.0 * rng.uniform()},
                       static_cast<int>(rng.uniform_int(1, kClasses))});
    }
    Instance in;
    in.labels = assign_labels(anchors, gts);
    in.targets = box_targets(anchors, in.labels, gts);
    const std::size_t n = anchors.size();
    in.heads = {gaussian(n * kClasses, rng, 2.0), gaussian(n * 4, rng, 0.5), gaussian(n, rng, 2.0),
                gaussian(n, rng, 1.0), gaussian(n, rng, 1.0)};
    return in;
}

HeadOutputs as_heads(std::span<const Var> v, std::size_t steps) {
    HeadOutputs h{v[0], v[1], v[2], {}};
    for (std::size_t t = 0; t < steps; ++t) h.residual_logits.push_back(v[3 + t]);
    return h;
}

}  // namespace

GradCheckSummary run_loss_gradcheck(GradCheckLoss loss, std::size_t instances, std::uint64_t seed,
                                    double epsilon) {
    GradCheckSummary summary;
    summary.loss = loss;
    auto record = [&](const GradCheckResult& r) {
        summary.max_relative_error = std::max(summary.max_relative_error, r.max_relative_error);
        summary.elements_checked += r.checked;
    };
    for (std::size_t i = 0; i < instances; ++i) {
        const Instance in = make_instance(seed, i);
        const AnchorLabels& l = in.labels;
        const Tensor& tg = in.targets;
        const std::vector<Tensor> three(in.heads.begin(), in.heads.begin() + 3);
        switch (loss) {
            case GradCheckLoss::ce:
                record(finite_diff_check(
                    [&](Tape&, auto v) { return ce_total_loss(as_heads(v, 0), l, tg, kClasses).total; },
                    {in.heads[0], in.heads[1]}, epsilon));
                break;
            case GradCheckLoss::focal:
                record(finite_diff_check(
                    [&](Tape&, auto v) { return focal_total_loss(as_heads(v, 0), l, tg, kClasses, {}).total; },
                    {in.heads[0], in.heads[1]}, epsilon));
                break;
            case GradCheckLoss::obj:
                record(finite_diff_check(
                    [&](Tape&, auto v) { return objectness_total_loss(as_heads(v, 0), l, tg, kClasses).total; },
                    three, epsilon));
                break;
            case GradCheckLoss::box:
                record(finite_diff_check([&](Tape&, auto v) { return box_loss(v[0], l, tg); }, {in.heads[1]},
                                         epsilon));
                break;
            case GradCheckLoss::resobj: {
                record(finite_diff_check(
                    [&](Tape&, auto v) {
                        return residual_objectness_loss(as_heads(v, kSteps), l, tg, kClasses, false).total;
                    },
                    in.heads, epsilon));
                const std::vector<std::size_t> live = {0, 1, 2 + kSteps};
                record(finite_diff_check(
                    [&](Tape&, auto v) {
                        return residual_objectness_loss(as_heads(v, kSteps), l, tg, kClasses, true).total;
                    },
                    in.heads, epsilon, live));
                break;
            }
        }
        ++summary.instances;
    }
    return summary;
}

}  // namespace resobj
