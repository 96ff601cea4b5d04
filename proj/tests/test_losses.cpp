#include <doctest.h>

#include <cmath>
#include <random>

#include "resobj/errors.hpp"
#include "resobj/losses.hpp"

using namespace resobj;

namespace {

double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }
// Reference BCE through log1p, independent of the softplus route.
double ref_bce(double z, int t) {
    return t ? std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

struct LabelEntry {
    AnchorStatus status;
    int cls;
};

AnchorLabels make_labels(const std::vector<LabelEntry>& entries) {
    AnchorLabels l;
    for (const auto& s : entries) {
        AnchorAssignment a;
        a.status = s.status;
        a.cls = s.cls;
        a.max_iou = s.status == AnchorStatus::positive ? 0.7 : 0.0;
        l.anchors.push_back(a);
        if (s.status == AnchorStatus::positive) ++l.positives;
        if (s.status == AnchorStatus::negative) ++l.negatives;
        if (s.status == AnchorStatus::ignore) ++l.ignored;
    }
    return l;
}

AnchorLabels random_labels(std::size_t n, int k, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> kind(0, 9);
    std::uniform_int_distribution<int> cls(1, k);
    std::vector<LabelEntry> entries;
    for (std::size_t i = 0; i < n; ++i) {
        const int r = kind(rng);
        entries.push_back(r < 3   ? LabelEntry{AnchorStatus::positive, cls(rng)}
                        : r < 9 ? LabelEntry{AnchorStatus::negative, 0}
                                : LabelEntry{AnchorStatus::ignore, 0});
    }
    return make_labels(entries);
}

Tensor random_tensor(std::size_t n, std::mt19937_64& rng, double sd = 2.0) {
    std::normal_distribution<double> dist(0.0, sd);
    Tensor t(Shape{n});
    for (double& v : t.data) v = dist(rng);
    return t;
}

// Scalar-loop oracle for the full residual objectness objective. The mask
// threshold is found on sigmoid scores rather than logits.
double residual_total_oracle(const Tensor& cls, const Tensor& box, const Tensor& targets, const Tensor& obj,
                             const std::vector<Tensor>& res, const AnchorLabels& l, int k) {
    const double norm = std::max<double>(1.0, static_cast<double>(l.positives));
    double class_sum = 0.0, box_sum = 0.0, obj_sum = 0.0, res_sum = 0.0;
    for (std::size_t i = 0; i < l.size(); ++i) {
        if (!l.is_positive(i)) continue;
        for (int c = 0; c < k; ++c) class_sum += ref_bce(cls[i * k + c], l.anchors[i].cls == c + 1);
        for (int c = 0; c < 4; ++c) {
            const double d = std::abs(box[i * 4 + c] - targets[i * 4 + c]);
            box_sum += d < kSmoothL1Beta ? 0.5 * d * d / kSmoothL1Beta : d - 0.5 * kSmoothL1Beta;
        }
    }
    for (std::size_t i = 0; i < l.size(); ++i) {
        if (l.anchors[i].status != AnchorStatus::ignore) obj_sum += ref_bce(obj[i], l.is_positive(i));
    }
    std::vector<double> o(obj.data);
    for (const Tensor& r : res) {
        double minp = 2.0;
        for (std::size_t i = 0; i < l.size(); ++i)
            if (l.is_positive(i)) minp = std::min(minp, sig(o[i]));
        std::vector<double> next = o;
        for (std::size_t i = 0; i < l.size(); ++i) {
            if (l.positives == 0 || sig(o[i]) < minp) continue;
            next[i] = o[i] + r[i];
            if (l.anchors[i].status != AnchorStatus::ignore) res_sum += ref_bce(next[i], l.is_positive(i));
        }
        o = next;
    }
    return class_sum / norm + box_sum / norm + obj_sum / norm + res_sum / norm;
}

}  // namespace

TEST_CASE("bce_with_logits values") {
    CHECK(bce_with_logits(0.0, 1) == doctest::Approx(0.6931471805599453).epsilon(1e-15));
    CHECK(bce_with_logits(50.0, 1) < 1e-20);
    // log(1 + e^10) evaluated to high precision: 10.000045398899216...
    CHECK(bce_with_logits(-10.0, 1) == doctest::Approx(10.000045398899218).epsilon(1e-14));
    CHECK(std::isfinite(bce_with_logits(700.0, 0)));
    CHECK(std::isfinite(bce_with_logits(-700.0, 1)));

    Tape tape;
    Var z = tape.constant(Tensor::vector({0.0, 50.0, -10.0, 700.0}));
    const Tensor v = bce_with_logits(z, Tensor::vector({1, 1, 1, 0})).value();
    CHECK(v[0] == doctest::Approx(std::log(2.0)));
    CHECK(v[1] < 1e-20);
    CHECK(v[2] == doctest::Approx(10.000045398899218));
    CHECK(v[3] == doctest::Approx(700.0));
}

TEST_CASE("class_loss") {
    SUBCASE("one positive, two classes at logit 0") {
        Tape tape;
        Var z = tape.constant(Tensor::vector({0.0, 0.0}));
        const auto l = make_labels({{AnchorStatus::positive, 1}});
        CHECK(class_loss(z, l, 2, ClassLossMode::all_anchors).value().item() ==
              doctest::Approx(2 * std::log(2.0)));
    }
    SUBCASE("positives-only with no positives") {
        Tape tape;
        Var z = tape.constant(Tensor::vector({0.4, -1.0, 2.0, 0.1}));
        const auto l = make_labels({{AnchorStatus::negative, 0}, {AnchorStatus::negative, 0}});
        CHECK(class_loss(z, l, 2, ClassLossMode::positives_only).value().item() == 0.0);
    }
    SUBCASE("matches the per-term oracle") {
        std::mt19937_64 rng(77);
        for (int trial = 0; trial < 20; ++trial) {
            const auto l = random_labels(5, 3, rng);
            const Tensor z = random_tensor(15, rng);
            for (auto mode : {ClassLossMode::all_anchors, ClassLossMode::positives_only}) {
                double expect = 0.0;
                for (std::size_t i = 0; i < 5; ++i) {
                    const auto& a = l.anchors[i];
                    if (a.status == AnchorStatus::ignore) continue;
                    if (mode == ClassLossMode::positives_only && a.status != AnchorStatus::positive) continue;
                    for (int c = 0; c < 3; ++c) expect += ref_bce(z[i * 3 + c], a.cls == c + 1);
                }
                Tape tape;
                CHECK(std::abs(class_loss(tape.constant(z), l, 3, mode).value().item() - expect) <= 1e-12);
            }
        }
    }
    SUBCASE("class outside 1..K") {
        Tape tape;
        Var z = tape.constant(Tensor::vector({0.0, 0.0}));
        CHECK_THROWS_AS(class_loss(z, make_labels({{AnchorStatus::positive, 3}}), 2, ClassLossMode::all_anchors),
                        ContractViolation);
    }
}

TEST_CASE("focal_loss") {
    SUBCASE("single term") {
        Tape tape;
        Var z = tape.constant(Tensor::vector({0.0}));
        const double v = focal_loss(z, make_labels({{AnchorStatus::positive, 1}}), 1, {2.0, 0.25}).value().item();
        CHECK(v == doctest::Approx(0.25 * 0.25 * std::log(2.0)).epsilon(1e-14));
        CHECK(v == doctest::Approx(0.043322).epsilon(1e-5));
    }
    SUBCASE("well-classified terms vanish for gamma > 0") {
        Tape tape;
        Var z = tape.constant(Tensor::vector({40.0, -40.0}));
        const double v =
            focal_loss(z, make_labels({{AnchorStatus::positive, 1}, {AnchorStatus::negative, 0}}), 1, {2.0, 0.25})
                .value()
                .item();
        CHECK(v < 1e-30);
    }
    SUBCASE("gamma 0, alpha 0.5 is half the normalized CE") {
        std::mt19937_64 rng(5);
        for (int trial = 0; trial < 100; ++trial) {
            const auto l = random_labels(12, 4, rng);
            const Tensor z = random_tensor(48, rng, 4.0);
            Tape tape;
            Var zv = tape.constant(z);
            const double focal = focal_loss(zv, l, 4, {0.0, 0.5}).value().item();
            const double ce = class_loss(zv, l, 4, ClassLossMode::all_anchors).value().item();
            CHECK(std::abs(focal - 0.5 * ce / loss_normalizer(l)) <= 1e-12);
        }
    }
}

TEST_CASE("box_loss") {
    const auto one = make_labels({{AnchorStatus::positive, 1}, {AnchorStatus::negative, 0}});
    Tape tape;
    const Tensor targets = Tensor(Shape{8}, std::vector<double>{0.1, 0.2, 0.3, 0.4, 0, 0, 0, 0});
    SUBCASE("perfect regression") {
        CHECK(box_loss(tape.constant(targets), one, targets).value().item() == 0.0);
    }
    SUBCASE("no positives") {
        const auto none = make_labels({{AnchorStatus::negative, 0}, {AnchorStatus::ignore, 0}});
        CHECK(box_loss(tape.constant(Tensor(Shape{8}, 3.0)), none, targets).value().item() == 0.0);
    }
    SUBCASE("residual of one half per coordinate") {
        Tensor pred = targets;
        for (int c = 0; c < 4; ++c) pred[c] += 0.5;
        pred[5] = 9.0;  // negative anchor row is ignored
        const double expect = 4 * (0.5 - kSmoothL1Beta / 2);
        CHECK(box_loss(tape.constant(pred), one, targets).value().item() == doctest::Approx(expect).epsilon(1e-14));
        CHECK(expect == doctest::Approx(1.7778).epsilon(1e-4));
    }
}

TEST_CASE("objectness_total_loss") {
    SUBCASE("ten negatives at logit zero") {
        std::vector<LabelEntry> entries(10, {AnchorStatus::negative, 0});
        const auto l = make_labels(entries);
        Tape tape;
        HeadOutputs h{tape.constant(Tensor(Shape{20})), tape.constant(Tensor(Shape{40})),
                      tape.constant(Tensor(Shape{10})), {}};
        const auto r = objectness_total_loss(h, l, Tensor(Shape{40}), 2);
        CHECK(r.report.objectness == doctest::Approx(10 * std::log(2.0)));
        CHECK(r.report.class_loss == 0.0);
        CHECK(r.report.box == 0.0);
        CHECK(r.report.total == doctest::Approx(10 * std::log(2.0)));
    }
    SUBCASE("random instances match the scalar loop") {
        std::mt19937_64 rng(31);
        for (int trial = 0; trial < 20; ++trial) {
            const auto l = random_labels(20, 3, rng);
            const Tensor cls = random_tensor(60, rng), box = random_tensor(80, rng), obj = random_tensor(20, rng);
            const Tensor targets = random_tensor(80, rng, 0.3);
            Tape tape;
            HeadOutputs h{tape.constant(cls), tape.constant(box), tape.constant(obj), {}};
            const auto r = objectness_total_loss(h, l, targets, 3);
            CHECK(std::abs(r.report.total - residual_total_oracle(cls, box, targets, obj, {}, l, 3)) <= 1e-12);
            CHECK(std::abs(r.report.total - (r.report.class_loss + r.report.box + r.report.objectness)) <= 1e-12);
            CHECK(r.report.total >= 0.0);
        }
    }
}

TEST_CASE("residual_objectness_loss") {
    auto lg = [](double p) { return std::log(p / (1 - p)); };
    SUBCASE("three-anchor instance") {
        const auto l = make_labels(
            {{AnchorStatus::positive, 1}, {AnchorStatus::negative, 0}, {AnchorStatus::negative, 0}});
        Tape tape;
        HeadOutputs h{tape.constant(Tensor(Shape{3})), tape.constant(Tensor(Shape{12})),
                      tape.constant(Tensor::vector({lg(0.6), lg(0.7), lg(0.1)})),
                      {tape.constant(Tensor(Shape{3}))}};
        const auto r = residual_objectness_loss(h, l, Tensor(Shape{12}), 1, true);
        REQUIRE(r.report.residual.size() == 1);
        CHECK(r.report.residual[0] == doctest::Approx(-std::log(0.6) - std::log(1 - 0.7)).epsilon(1e-13));
    }
    SUBCASE("zero residuals reproduce the masked base BCE") {
        std::mt19937_64 rng(2);
        const auto l = random_labels(30, 2, rng);
        const Tensor obj = random_tensor(30, rng);
        Tape tape;
        HeadOutputs h{tape.constant(random_tensor(60, rng)), tape.constant(Tensor(Shape{120})),
                      tape.constant(obj), {tape.constant(Tensor(Shape{30})), tape.constant(Tensor(Shape{30}))}};
        const auto r = residual_objectness_loss(h, l, Tensor(Shape{120}), 2, true);
        double minp = 1e9;
        for (std::size_t i = 0; i < 30; ++i)
            if (l.is_positive(i)) minp = std::min(minp, obj[i]);
        double expect = 0.0;
        for (std::size_t i = 0; i < 30; ++i)
            if (obj[i] >= minp && l.anchors[i].status != AnchorStatus::ignore) expect += ref_bce(obj[i], l.is_positive(i));
        expect /= loss_normalizer(l);
        CHECK(r.report.residual[0] == doctest::Approx(expect).epsilon(1e-13));
        CHECK(r.report.residual[1] == doctest::Approx(expect).epsilon(1e-13));
    }
    SUBCASE("T = 2 random instances match the scalar loop") {
        std::mt19937_64 rng(13);
        for (int trial = 0; trial < 20; ++trial) {
            const auto l = random_labels(24, 3, rng);
            const Tensor cls = random_tensor(72, rng), box = random_tensor(96, rng), obj = random_tensor(24, rng);
            const std::vector<Tensor> res = {random_tensor(24, rng), random_tensor(24, rng)};
            const Tensor targets = random_tensor(96, rng, 0.3);
            Tape tape;
            HeadOutputs h{tape.constant(cls), tape.constant(box), tape.constant(obj),
                          {tape.constant(res[0]), tape.constant(res[1])}};
            const auto r = residual_objectness_loss(h, l, targets, 3, true);
            CHECK(std::abs(r.report.total - residual_total_oracle(cls, box, targets, obj, res, l, 3)) <= 1e-12);
            double parts = r.report.class_loss + r.report.box + r.report.objectness;
            for (double v : r.report.residual) parts += v;
            CHECK(std::abs(r.report.total - parts) <= 1e-12);
        }
    }
    SUBCASE("no residual steps equals the objectness objective") {
        std::mt19937_64 rng(14);
        const auto l = random_labels(16, 2, rng);
        Tape tape;
        HeadOutputs h{tape.constant(random_tensor(32, rng)), tape.constant(random_tensor(64, rng)),
                      tape.constant(random_tensor(16, rng)), {}};
        const Tensor targets = random_tensor(64, rng);
        CHECK(residual_objectness_loss(h, l, targets, 2, true).report.total ==
              objectness_total_loss(h, l, targets, 2).report.total);
    }
    SUBCASE("zero positives is degenerate") {
        const auto l = make_labels({{AnchorStatus::negative, 0}, {AnchorStatus::negative, 0}});
        Tape tape;
        HeadOutputs h{tape.constant(Tensor(Shape{2})), tape.constant(Tensor(Shape{8})),
                      tape.constant(Tensor::vector({0.0, 1.0})), {tape.constant(Tensor::vector({3.0, 3.0}))}};
        const auto r = residual_objectness_loss(h, l, Tensor(Shape{8}), 1, true);
        CHECK(r.report.degenerate);
        CHECK(r.report.residual[0] == 0.0);
        CHECK(r.report.objectness == doctest::Approx(ref_bce(0.0, 0) + ref_bce(1.0, 0)));
    }
}

TEST_CASE("negative_loss_ratio") {
    const double lg = std::log(0.01 / 0.99);
    for (int k : {1, 2, 10, 80}) {
        std::vector<LabelEntry> entries(500, {AnchorStatus::negative, 0});
        entries[3] = {AnchorStatus::positive, 1};
        entries[7] = {AnchorStatus::ignore, 0};
        const auto l = make_labels(entries);
        const auto r = negative_loss_ratio(Tensor(Shape{500 * static_cast<std::size_t>(k)}, lg), Tensor(Shape{500}, lg), l);
        REQUIRE(r.ratio.has_value());
        CHECK(std::abs(*r.ratio - k) <= 1e-12);
        CHECK(r.objectness_negative == doctest::Approx(-498 * std::log(0.99)));
    }
    SUBCASE("undefined ratio") {
        const auto l = make_labels({{AnchorStatus::positive, 1}});
        CHECK_FALSE(negative_loss_ratio(Tensor(Shape{2}), Tensor(Shape{1}), l).ratio.has_value());
    }
}

TEST_CASE("loss gradients match finite differences") {
    std::mt19937_64 rng(99);
    const double eps = 1e-5;
    for (int trial = 0; trial < 5; ++trial) {
        const auto l = random_labels(12, 3, rng);
        const Tensor targets = random_tensor(48, rng, 0.3);
        const std::vector<Tensor> p = {random_tensor(36, rng), random_tensor(48, rng), random_tensor(12, rng),
                                       random_tensor(12, rng), random_tensor(12, rng)};
        auto heads = [&](std::span<const Var> v, std::size_t steps) {
            HeadOutputs h{v[0], v[1], v[2], {}};
            for (std::size_t t = 0; t < steps; ++t) h.residual_logits.push_back(v[3 + t]);
            return h;
        };
        CHECK(finite_diff_check([&](Tape&, auto v) { return focal_loss(v[0], l, 3, {}); }, {p[0]}, eps)
                  .max_relative_error < 1e-5);
        CHECK(finite_diff_check([&](Tape&, auto v) { return ce_total_loss(heads(v, 0), l, targets, 3).total; },
                                p, eps)
                  .max_relative_error < 1e-5);
        CHECK(finite_diff_check([&](Tape&, auto v) { return box_loss(v[0], l, targets); }, {p[1]}, eps)
                  .max_relative_error < 1e-5);
        CHECK(finite_diff_check(
                  [&](Tape&, auto v) { return objectness_total_loss(heads(v, 0), l, targets, 3).total; }, p, eps)
                  .max_relative_error < 1e-5);
        // Coupled: the analytic gradient is the true derivative everywhere.
        CHECK(finite_diff_check(
                  [&](Tape&, auto v) { return residual_objectness_loss(heads(v, 2), l, targets, 3, false).total; },
                  p, eps)
                  .max_relative_error < 1e-5);
        // Isolated: o_0 and r_1 reach later steps only through stop_gradient, so
        // class, box and the last residual are the parameters whose analytic
        // gradient is the full derivative.
        const std::vector<std::size_t> live = {0, 1, 4};
        CHECK(finite_diff_check(
                  [&](Tape&, auto v) { return residual_objectness_loss(heads(v, 2), l, targets, 3, true).total; },
                  p, eps, live)
                  .max_relative_error < 1e-5);
    }
}
