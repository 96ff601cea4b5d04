#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "resobj/config.hpp"
#include "resobj/errors.hpp"
#include "resobj/experiments.hpp"
#include "resobj/train.hpp"

using namespace resobj;

namespace {

// A 12x12 task small enough to train for a few iterations inside a unit test.
TrainConfig tiny_config(LossMode mode, std::size_t steps = 2) {
    TrainConfig c;
    c.mode = mode;
    c.scene.grid_h = c.scene.grid_w = 12;
    c.model.layout = default_anchor_layout(12, 12);
    c.model.trunk_channels = 4;
    c.model.head_depth = 1;
    c.model.residual_steps = steps;
    c.iterations = 6;
    c.log_interval = 2;
    c.probe_scenes = 4;
    c.validation_scenes = 4;
    c.learning_rate = 0.005;
    return c;
}

std::string metrics_text(const TrainResult& r) {
    std::ostringstream os;
    write_metrics_csv(os, r.metrics, r.config.model.residual_steps, r.config.model.objectness);
    return os.str();
}

std::string checkpoint_bytes(const Checkpoint& ck) {
    std::ostringstream os;
    write_checkpoint(os, ck);
    return os.str();
}

}  // namespace

TEST_CASE("effective_config") {
    TrainConfig c = tiny_config(LossMode::focal);
    const TrainConfig e = effective_config(c);
    CHECK_FALSE(e.model.objectness);
    CHECK(e.model.residual_steps == 0);
    CHECK(effective_config(tiny_config(LossMode::obj)).model.residual_steps == 0);
    CHECK(effective_config(tiny_config(LossMode::resobj, 3)).model.residual_steps == 3);

    c = tiny_config(LossMode::obj);
    c.seed = 42;
    CHECK(effective_config(c).model.seed == 42);

    CHECK_THROWS_AS(effective_config(tiny_config(LossMode::resobj, 0)), ContractViolation);
    c = tiny_config(LossMode::obj);
    c.model.num_classes = 4;
    CHECK_THROWS_AS(effective_config(c), ContractViolation);
    c = tiny_config(LossMode::obj);
    c.log_interval = 0;
    CHECK_THROWS_AS(effective_config(c), ContractViolation);
}

TEST_CASE("learning rate schedule") {
    TrainConfig c;
    c.iterations = 90;
    c.learning_rate = 0.01;
    CHECK(learning_rate_at(c, 0) == 0.01);
    CHECK(learning_rate_at(c, 59) == 0.01);
    CHECK(learning_rate_at(c, 60) == doctest::Approx(0.001));
    CHECK(learning_rate_at(c, 80) == doctest::Approx(0.0001));
    c.warmup_iterations = 10;
    CHECK(learning_rate_at(c, 0) == doctest::Approx(0.01 / 3.0));
    CHECK(learning_rate_at(c, 10) == 0.01);
    CHECK(learning_rate_at(c, 5) > learning_rate_at(c, 4));
}

TEST_CASE("objectness starts near 1/K") {
    const TrainResult r = train(tiny_config(LossMode::obj));
    REQUIRE_FALSE(r.metrics.empty());
    const MetricsRow& first = r.metrics.front();
    CHECK(first.iteration == 0);
    REQUIRE(first.objectness.positive.size() == 1);
    CHECK(first.objectness.positive[0] == doctest::Approx(1.0 / 3.0).epsilon(0.02));
    CHECK(first.objectness.negative[0] == doctest::Approx(1.0 / 3.0).epsilon(0.02));
}

TEST_CASE("metrics rows and final evaluation") {
    const TrainResult r = train(tiny_config(LossMode::resobj));
    std::vector<std::size_t> its;
    for (const auto& row : r.metrics) its.push_back(row.iteration);
    CHECK(its == std::vector<std::size_t>{0, 2, 4, 6});
    CHECK(r.metrics.back().ap.has_value());
    CHECK_FALSE(r.metrics.front().ap.has_value());
    CHECK(r.checkpoint.iteration == 6);
    for (const auto& row : r.metrics) {
        CHECK(std::isfinite(row.loss.total));
        CHECK(row.objectness.positive.size() == 3);
    }
    const std::string csv = metrics_text(r);
    CHECK(csv.rfind("iteration,learning_rate,loss_total", 0) == 0);
    CHECK(csv.find("pos_obj_t2") != std::string::npos);
}

TEST_CASE("zero learning rate keeps metrics constant") {
    TrainConfig c = tiny_config(LossMode::resobj);
    c.learning_rate = 0.0;
    c.eval_interval = 2;
    const TrainResult r = train(c);
    const auto start = init_model(r.config.model);
    CHECK(r.checkpoint.params == start);
    for (const auto& row : r.metrics) {
        CHECK(row.objectness.positive == r.metrics.front().objectness.positive);
        CHECK(row.objectness.negative == r.metrics.front().objectness.negative);
        if (row.ap) CHECK(row.ap->ap == r.metrics.back().ap->ap);
    }
}

TEST_CASE("training replays bit for bit") {
    for (LossMode mode : {LossMode::ce, LossMode::focal, LossMode::obj, LossMode::resobj}) {
        CAPTURE(to_string(mode));
        const TrainConfig c = tiny_config(mode);
        const TrainResult a = train(c);
        const TrainResult b = train(c);
        CHECK(metrics_text(a) == metrics_text(b));
        CHECK(checkpoint_bytes(a.checkpoint) == checkpoint_bytes(b.checkpoint));
    }
    TrainConfig other = tiny_config(LossMode::obj);
    other.seed = 1;
    CHECK(metrics_text(train(other)) != metrics_text(train(tiny_config(LossMode::obj))));
}

TEST_CASE("divergence raises NumericError naming the iteration") {
    TrainConfig c = tiny_config(LossMode::focal);
    c.learning_rate = 1e200;
    c.grad_clip_norm = 0.0;
    c.momentum = 0.0;
    try {
        train(c);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).rfind("iteration ", 0) == 0);
    }
}

TEST_CASE("train config JSON") {
    const TrainConfig c = effective_config(tiny_config(LossMode::resobj));
    CHECK(train_config_from_json(to_json(c)) == c);
    auto j = to_json(c);
    j["mode"] = "Bogus";
    CHECK_THROWS_AS(train_config_from_json(j), FormatError);
    j = to_json(c);
    j["surprise"] = 1;
    CHECK_THROWS_AS(train_config_from_json(j), FormatError);
}

TEST_CASE("training outputs on disk") {
    const TrainResult r = train(tiny_config(LossMode::obj));
    const auto dir = std::filesystem::temp_directory_path() / "resobj_test_train_outputs";
    std::filesystem::remove_all(dir);
    write_training_outputs(dir, r);
    Checkpoint stored = r.checkpoint;
    quantize_to_f32(stored.params);
    CHECK(load_checkpoint(dir / "checkpoint.bin") == stored);
    CHECK(load_train_config(dir / "config.json") == r.config);
    std::ifstream in(dir / "metrics.csv");
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == metrics_text(r));
    std::filesystem::remove_all(dir);
}

TEST_CASE("inference sweep") {
    TrainConfig c = effective_config(tiny_config(LossMode::resobj));
    const TrainResult r = train(c);
    const auto scenes = validation_set(r.config, 4);
    const SweepTable table = sweep_inference(r.config.model, r.checkpoint.params, scenes,
                                             default_sweep_score_thresholds(), default_sweep_nms_thresholds());
    REQUIRE(table.rows.size() == 10);
    // Lower score thresholds keep a superset of detections at the same NMS setting.
    for (std::size_t i = 2; i < table.rows.size(); ++i) {
        CHECK(table.rows[i].score_threshold < table.rows[i - 2].score_threshold);
        CHECK(table.rows[i].result.recall50 >= table.rows[i - 2].result.recall50);
        CHECK(table.rows[i].detections >= table.rows[i - 2].detections);
    }
    for (const auto& row : table.rows) CHECK(row.result.ap <= table.rows[table.best].result.ap);

    SUBCASE("a single pair matches evaluate_model") {
        DetectOptions o = r.config.detect;
        o.score_threshold = 0.05;
        o.nms_threshold = 0.5;
        const SweepTable one = sweep_inference(r.config.model, r.checkpoint.params, scenes, {0.05}, {0.5});
        REQUIRE(one.rows.size() == 1);
        const APResult direct = evaluate_model(r.config.model, r.checkpoint.params, scenes, o);
        CHECK(one.rows[0].result.ap == direct.ap);
        CHECK(one.rows[0].result.ap50 == direct.ap50);
    }
    SUBCASE("zero residuals sweep like the plain model") {
        ModelConfig plain = r.config.model;
        plain.residual_steps = 0;
        const ModelParameters plain_params = without_residual_subnets(r.checkpoint.params);
        ModelParameters zeroed = r.checkpoint.params;
        for (std::size_t i = 0; i < zeroed.size(); ++i)
            if (zeroed.names[i].rfind("res", 0) == 0 && zeroed.names[i].find(".out.") != std::string::npos)
                for (double& v : zeroed.tensors[i].data) v = 0.0;
        const auto a = sweep_inference(r.config.model, zeroed, scenes, default_sweep_score_thresholds(),
                                       default_sweep_nms_thresholds());
        const auto b = sweep_inference(plain, plain_params, scenes, default_sweep_score_thresholds(),
                                       default_sweep_nms_thresholds());
        for (std::size_t i = 0; i < a.rows.size(); ++i) {
            CHECK(a.rows[i].result.ap == b.rows[i].result.ap);
            CHECK(a.rows[i].detections == b.rows[i].detections);
        }
    }
    std::ostringstream os;
    write_sweep_csv(os, table);
    CHECK(os.str().rfind("score_threshold,nms_threshold,ap", 0) == 0);
}

TEST_CASE("ablation variants") {
    const TrainConfig base = tiny_config(LossMode::resobj, 1);
    const auto flow = ablation_variants(AblationAxis::gradient_flow, base);
    REQUIRE(flow.size() == 2);
    CHECK(flow[0].name == "isolated");
    CHECK(config_diff(flow[0].config, flow[1].config) == std::vector<std::string>{"model.gradient_flow"});
    const auto source = ablation_variants(AblationAxis::residual_source, base);
    CHECK(config_diff(source[0].config, source[1].config) == std::vector<std::string>{"model.residual_source"});

    const auto steps = ablation_variants(AblationAxis::steps, base, {0, 2});
    REQUIRE(steps.size() == 2);
    CHECK(steps[0].name == "T0");
    CHECK(steps[0].config.mode == LossMode::obj);
    CHECK(steps[1].config.model.residual_steps == 2);
    CHECK(ablation_axis_from_string("steps") == AblationAxis::steps);
    CHECK_THROWS_AS(ablation_axis_from_string("depth"), FormatError);
}

TEST_CASE("run_ablation") {
    TrainConfig base = tiny_config(LossMode::resobj, 1);
    base.iterations = 2;
    base.log_interval = 1;
    CHECK_THROWS_AS(run_ablation(AblationAxis::steps, base, {0, 1}), ContractViolation);

    AblationOptions opts;
    opts.steps = {0};
    opts.threads = 2;
    const AblationReport report = run_ablation(AblationAxis::steps, base, {0, 1, 2}, opts);
    REQUIRE(report.variants.size() == 1);
    const VariantReport& v = report.variants[0];
    REQUIRE(v.runs.size() == 3);
    // T = 0 is a plain Obj run.
    TrainConfig obj = base;
    obj.mode = LossMode::obj;
    obj.seed = 1;
    const TrainResult direct = train(obj);
    CHECK(v.runs[1].ap.ap == direct.metrics.back().ap->ap);
    CHECK(v.runs[1].final_objectness.positive == direct.metrics.back().objectness.positive);
    double mean = 0.0;
    for (const auto& run : v.runs) mean += run.ap.ap / 3.0;
    CHECK(v.mean_ap == doctest::Approx(mean));

    opts.threads = 1;
    std::ostringstream a, b;
    write_ablation_summary_csv(a, report);
    write_ablation_summary_csv(b, run_ablation(AblationAxis::steps, base, {0, 1, 2}, opts));
    CHECK(a.str() == b.str());
}

TEST_CASE("isolated refinement leaves the base detector untouched") {
    TrainConfig obj = tiny_config(LossMode::obj);
    obj.learning_rate = 0.05;
    obj.grad_clip_norm = 0.5;  // small enough that clipping is active
    TrainConfig res = obj;
    res.mode = LossMode::resobj;
    res.model.residual_steps = 2;
    const TrainResult a = train(obj);
    const TrainResult b = train(res);
    CHECK(without_residual_subnets(b.checkpoint.params) == a.checkpoint.params);
    for (std::size_t i = 0; i < a.metrics.size(); ++i)
        CHECK(a.metrics[i].objectness.positive[0] == b.metrics[i].objectness.positive[0]);

    res.model.gradient_flow = GradientFlow::coupled;
    CHECK_FALSE(without_residual_subnets(train(res).checkpoint.params) == a.checkpoint.params);
}
