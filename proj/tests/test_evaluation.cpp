#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "resobj/errors.hpp"
#include "resobj/evaluation.hpp"
#include "oracles.hpp"

using namespace resobj;
using oracle::oracle_ap;

TEST_CASE("AP examples") {
    const Box a{0, 0, 4, 4}, b{10, 10, 13, 14};
    GroundTruthByScene gts{{0, {{a, 1}, {b, 2}}}, {1, {{b, 1}}}};

    SUBCASE("perfect detections score exactly one") {
        DetectionsByScene d{{0, {{1, 1.0, a, 0}, {2, 1.0, b, 1}}}, {1, {{1, 1.0, b, 0}}}};
        const auto r = evaluate_ap(d, gts);
        CHECK(r.ap == 1.0);
        CHECK(r.ap50 == 1.0);
        CHECK(r.ap75 == 1.0);
        CHECK(r.recall50 == 1.0);
    }
    SUBCASE("no detections score zero") {
        const auto r = evaluate_ap({}, gts);
        CHECK(r.ap == 0.0);
        CHECK(r.ap50 == 0.0);
        CHECK(r.recall50 == 0.0);
    }
    SUBCASE("a false positive after full recall costs nothing") {
        GroundTruthByScene one{{0, {{a, 1}}}};
        DetectionsByScene d{{0, {{1, 0.9, a, 0}, {1, 0.8, b, 1}}}};
        CHECK(evaluate_ap(d, one).ap50 == 1.0);
        CHECK(evaluate_ap(d, one).ap50 == oracle_ap(d, one, 0.5));
    }
    SUBCASE("a false positive ranked first halves precision") {
        GroundTruthByScene one{{0, {{a, 1}}}};
        DetectionsByScene d{{0, {{1, 0.9, b, 1}, {1, 0.8, a, 0}}}};
        CHECK(evaluate_ap(d, one).ap50 == doctest::Approx(0.5));
    }
    SUBCASE("classes without ground truth are excluded") {
        GroundTruthByScene one{{0, {{a, 1}}}};
        DetectionsByScene d{{0, {{1, 0.9, a, 0}, {3, 0.95, a, 1}}}};
        const auto r = evaluate_ap(d, one);
        CHECK(r.evaluated_classes == std::vector<int>{1});
        CHECK(r.ap50 == 1.0);
    }
    CHECK_THROWS_AS(evaluate_ap({}, GroundTruthByScene{{0, {}}}), ContractViolation);
    CHECK_THROWS_AS(evaluate_ap({}, gts, {}), ContractViolation);
}

TEST_CASE("duplicate detections match a ground truth only once") {
    const Box a{0, 0, 4, 4};
    GroundTruthByScene gts{{0, {{a, 1}}}};
    DetectionsByScene d{{0, {{1, 0.9, a, 0}, {1, 0.9, a, 1}}}};
    const auto r = evaluate_ap(d, gts);
    CHECK(r.ap50 == 1.0);
    CHECK(r.recall50 == 1.0);
}

TEST_CASE("evaluator equals the brute-force PR oracle") {
    std::mt19937_64 rng(2024);
    const auto thresholds = coco_iou_thresholds();
    int evaluated = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        GroundTruthByScene gts;
        DetectionsByScene dets;
        oracle::random_ap_instance(rng, dets, gts);
        if (!oracle::has_ground_truth(gts)) {
            CHECK_THROWS_AS(evaluate_ap(dets, gts), ContractViolation);
            continue;
        }
        ++evaluated;
        const auto r = evaluate_ap(dets, gts);
        double sum = 0.0;
        for (double t : thresholds) sum += oracle_ap(dets, gts, t);
        CHECK(std::abs(r.ap - sum / 10.0) <= 1e-12);
        CHECK(std::abs(r.ap50 - oracle_ap(dets, gts, 0.5)) <= 1e-12);
        CHECK(std::abs(r.ap75 - oracle_ap(dets, gts, 0.75)) <= 1e-12);
        CHECK(r.ap50 >= r.ap75);
        CHECK(r.ap >= 0.0);
        CHECK(r.ap <= 1.0);
    }
    CHECK(evaluated > 800);
}
