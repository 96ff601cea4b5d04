#include "resobj/train.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "resobj/config.hpp"
#include "resobj/errors.hpp"

namespace resobj {

using nlohmann::json;

const char* to_string(LossMode mode) {
    switch (mode) {
        case LossMode::ce: return "CE";
        case LossMode::focal: return "FocalLoss";
        case LossMode::obj: return "Obj";
        case LossMode::resobj: return "ResObj";
    }
    return "?";
}

LossMode loss_mode_from_string(const std::string& s) {
    if (s == "CE") return LossMode::ce;
    if (s == "FocalLoss") return LossMode::focal;
    if (s == "Obj") return LossMode::obj;
    if (s == "ResObj") return LossMode::resobj;
    throw FormatError("unknown mode '" + s + "' (expected CE, FocalLoss, Obj or ResObj)");
}

TrainConfig effective_config(const TrainConfig& config) {
    TrainConfig c = config;
    validate(c.scene);
    const SceneConfig& s = c.scene;
    if (c.model.num_classes != s.num_classes || c.model.input_channels != s.channels ||
        c.model.layout.grid_h != s.grid_h || c.model.layout.grid_w != s.grid_w) {
        throw ContractViolation("train config: model num_classes/input_channels/layout grid must match the scene");
    }
    switch (c.mode) {
        case LossMode::ce:
        case LossMode::focal:
            c.model.objectness = false;
            c.model.residual_steps = 0;
            break;
        case LossMode::obj:
            c.model.objectness = true;
            c.model.residual_steps = 0;
            break;
        case LossMode::resobj:
            c.model.objectness = true;
            if (c.model.residual_steps == 0) throw ContractViolation("train config: ResObj needs residual_steps >= 1");
            break;
    }
    c.model.seed = c.seed;
    validate(c.model);
    if (c.iterations == 0 || c.batch_size == 0) {
        throw ContractViolation("train config: iterations and batch_size must be >= 1");
    }
    if (!(c.learning_rate >= 0.0) || !(c.momentum >= 0.0 && c.momentum < 1.0)) {
        throw ContractViolation("train config: need learning_rate >= 0 and momentum in [0, 1)");
    }
    if (!(c.grad_clip_norm >= 0.0) || !(c.warmup_factor > 0.0 && c.warmup_factor <= 1.0)) {
        throw ContractViolation("train config: need grad_clip_norm >= 0 and warmup_factor in (0, 1]");
    }
    if (c.log_interval == 0) throw ContractViolation("train config: log_interval must be >= 1");
    if (c.validation_scenes == 0) throw ContractViolation("train config: validation_scenes must be >= 1");
    return c;
}

json to_json(const TrainConfig& c) {
    return {{"mode", to_string(c.mode)},
            {"model", to_json(c.model)},
            {"scene", to_json(c.scene)},
            {"iterations", c.iterations},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"momentum", c.momentum},
            {"lr_decay_at", c.lr_decay_at},
            {"lr_decay_factor", c.lr_decay_factor},
            {"warmup_iterations", c.warmup_iterations},
            {"warmup_factor", c.warmup_factor},
            {"grad_clip_norm", c.grad_clip_norm},
            {"log_interval", c.log_interval},
            {"eval_interval", c.eval_interval},
            {"seed", c.seed},
            {"validation_seed", c.validation_seed},
            {"probe_scenes", c.probe_scenes},
            {"validation_scenes", c.validation_scenes},
            {"focal", {{"gamma", c.focal.gamma}, {"alpha", c.focal.alpha}}},
            {"assign",
             {{"positive", c.assign.positive},
              {"negative_low", c.assign.negative_low},
              {"negative_high", c.assign.negative_high}}},
            {"detect",
             {{"score_threshold", c.detect.score_threshold},
              {"nms_threshold", c.detect.nms_threshold},
              {"max_detections", c.detect.max_detections},
              {"pre_nms_top_k", c.detect.pre_nms_top_k}}}};
}

TrainConfig train_config_from_json(const json& j) {
    detail::check_keys(j,
                       {"mode", "model", "scene", "iterations", "batch_size", "learning_rate", "momentum",
                        "lr_decay_at", "lr_decay_factor", "warmup_iterations", "warmup_factor", "grad_clip_norm", "log_interval", "eval_interval", "seed",
                        "validation_seed", "probe_scenes", "validation_scenes", "focal", "assign", "detect"},
                       "train config");
    TrainConfig c;
    try {
        if (j.contains("mode")) c.mode = loss_mode_from_string(j.at("mode").get<std::string>());
        if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
        if (j.contains("scene")) c.scene = scene_config_from_json(j.at("scene"));
        detail::read_field(j, "iterations", c.iterations);
        detail::read_field(j, "batch_size", c.batch_size);
        detail::read_field(j, "learning_rate", c.learning_rate);
        detail::read_field(j, "momentum", c.momentum);
        detail::read_field(j, "lr_decay_at", c.lr_decay_at);
        detail::read_field(j, "lr_decay_factor", c.lr_decay_factor);
        detail::read_field(j, "warmup_iterations", c.warmup_iterations);
        detail::read_field(j, "warmup_factor", c.warmup_factor);
        detail::read_field(j, "grad_clip_norm", c.grad_clip_norm);
        detail::read_field(j, "log_interval", c.log_interval);
        detail::read_field(j, "eval_interval", c.eval_interval);
        detail::read_field(j, "seed", c.seed);
        detail::read_field(j, "validation_seed", c.validation_seed);
        detail::read_field(j, "probe_scenes", c.probe_scenes);
        detail::read_field(j, "validation_scenes", c.validation_scenes);
        if (j.contains("focal")) {
            const auto& f = j.at("focal");
            detail::check_keys(f, {"gamma", "alpha"}, "focal");
            detail::read_field(f, "gamma", c.focal.gamma);
            detail::read_field(f, "alpha", c.focal.alpha);
        }
        if (j.contains("assign")) {
            const auto& a = j.at("assign");
            detail::check_keys(a, {"positive", "negative_low", "negative_high"}, "assign");
            detail::read_field(a, "positive", c.assign.positive);
            detail::read_field(a, "negative_low", c.assign.negative_low);
            detail::read_field(a, "negative_high", c.assign.negative_high);
        }
        if (j.contains("detect")) {
            const auto& d = j.at("detect");
            detail::check_keys(d, {"score_threshold", "nms_threshold", "max_detections", "pre_nms_top_k"},
                               "detect");
            detail::read_field(d, "score_threshold", c.detect.score_threshold);
            detail::read_field(d, "nms_threshold", c.detect.nms_threshold);
            detail::read_field(d, "max_detections", c.detect.max_detections);
            detail::read_field(d, "pre_nms_top_k", c.detect.pre_nms_top_k);
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("train config: ") + e.what());
    }
    return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    return train_config_from_json(read_json_file(path));
}

double learning_rate_at(const TrainConfig& config, std::size_t iteration) {
    double lr = config.learning_rate;
    for (double f : config.lr_decay_at) {
        const auto at = static_cast<std::size_t>(std::floor(f * static_cast<double>(config.iterations)));
        if (iteration >= at) lr *= config.lr_decay_factor;
    }
    if (iteration < config.warmup_iterations) {
        const double frac = static_cast<double>(iteration) / static_cast<double>(config.warmup_iterations);
        lr *= config.warmup_factor + (1.0 - config.warmup_factor) * frac;
    }
    return lr;
}

std::vector<LabeledScene> validation_set(const TrainConfig& config, std::size_t count) {
    const auto anchors = generate_anchors(config.model.layout);
    std::vector<LabeledScene> out;
    out.reserve(count);
    for (std::size_t j = 0; j < count; ++j) {
        Scene s = validation_scene(config.scene, config.validation_seed, j);
        AnchorLabels labels = assign_labels(anchors, s.objects, config.assign);
        out.push_back({std::move(s), std::move(labels)});
    }
    return out;
}

namespace {

double sigmoid_value(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

SceneConfig training_stream(const TrainConfig& c) {
    SceneConfig s = c.scene;
    CounterRng mix(c.scene.base_seed, c.seed);
    s.base_seed = mix.next_u64();
    return s;
}

LossResult compute_loss(const TrainConfig& c, const HeadOutputs& heads, const AnchorLabels& labels,
                        const Tensor& targets) {
    const int k = c.model.num_classes;
    switch (c.mode) {
        case LossMode::ce: return ce_total_loss(heads, labels, targets, k);
        case LossMode::focal: return focal_total_loss(heads, labels, targets, k, c.focal);
        case LossMode::obj: return objectness_total_loss(heads, labels, targets, k);
        case LossMode::resobj:
            return residual_objectness_loss(heads, labels, targets, k,
                                            c.model.gradient_flow == GradientFlow::isolated);
    }
    throw ContractViolation("unknown loss mode");
}

void accumulate(LossReport& into, const LossReport& r, double w) {
    into.total += w * r.total;
    into.class_loss += w * r.class_loss;
    into.box += w * r.box;
    into.objectness += w * r.objectness;
    into.residual.resize(r.residual.size(), 0.0);
    for (std::size_t t = 0; t < r.residual.size(); ++t) into.residual[t] += w * r.residual[t];
    into.normalizer += w * r.normalizer;
    into.degenerate = into.degenerate || r.degenerate;
}

struct BatchOutcome {
    LossReport report;
    std::vector<Tensor> grads;
};

BatchOutcome run_batch(const TrainConfig& c, const ModelParameters& params, const SceneConfig& stream,
                       const std::vector<Box>& anchors, std::size_t iteration, bool with_grads) {
    BatchOutcome out;
    out.report.normalizer = 0.0;
    const double w = 1.0 / static_cast<double>(c.batch_size);
    for (std::size_t b = 0; b < c.batch_size; ++b) {
        const Scene scene = generate_scene(stream, iteration * c.batch_size + b);
        const AnchorLabels labels = assign_labels(anchors, scene.objects, c.assign);
        const Tensor targets = box_targets(anchors, labels, scene.objects);
        Tape tape;
        const auto bound = bind_parameters(tape, params);
        const HeadOutputs heads = forward(c.model, params, bound, scene.input);
        LossResult loss;
        try {
            loss = compute_loss(c, heads, labels, targets);
        } catch (const NumericError& e) {
            throw NumericError("iteration " + std::to_string(iteration) + ": " + e.what());
        }
        accumulate(out.report, loss.report, w);
        if (!with_grads) continue;
        const GradMap g = tape.backward(loss.total);
        if (out.grads.empty()) {
            for (const Tensor& t : params.tensors) out.grads.emplace_back(t.shape);
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            const Tensor& gi = g.at(i);
            for (std::size_t e = 0; e < gi.numel(); ++e) out.grads[i][e] += w * gi[e];
        }
    }
    return out;
}

}  // namespace

ObjectnessProbe probe_objectness(const ModelConfig& model, const ModelParameters& params,
                                 const std::vector<LabeledScene>& probe) {
    ObjectnessProbe out;
    if (!model.objectness) return out;
    const std::size_t steps = model.residual_steps;
    std::vector<double> pos_sum(steps + 1, 0.0), neg_sum(steps + 1, 0.0);
    std::size_t pos_n = 0, neg_n = 0;
    for (const LabeledScene& ls : probe) {
        Tape tape;
        const HeadOutputs heads = forward(model, params, bind_parameters(tape, params), ls.scene.input);
        Tensor logits = heads.obj_logits.value();
        for (std::size_t t = 0; t <= steps; ++t) {
            if (t > 0) {
                const Tensor& r = heads.residual_logits[t - 1].value();
                for (std::size_t i = 0; i < logits.numel(); ++i) logits[i] += r[i];
            }
            for (std::size_t i = 0; i < logits.numel(); ++i) {
                if (ls.labels.is_positive(i)) pos_sum[t] += sigmoid_value(logits[i]);
                else if (ls.labels.is_negative(i)) neg_sum[t] += sigmoid_value(logits[i]);
            }
        }
        pos_n += ls.labels.positives;
        neg_n += ls.labels.negatives;
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t t = 0; t <= steps; ++t) {
        out.positive.push_back(pos_n ? pos_sum[t] / static_cast<double>(pos_n) : nan);
        out.negative.push_back(neg_n ? neg_sum[t] / static_cast<double>(neg_n) : nan);
    }
    return out;
}

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows, std::size_t steps,
                       bool has_objectness) {
    const auto old_precision = os.precision(std::numeric_limits<double>::max_digits10);
    os << "iteration,learning_rate,loss_total,loss_class,loss_box,loss_obj";
    for (std::size_t t = 1; t <= steps; ++t) os << ",loss_res_t" << t;
    if (has_objectness) {
        for (std::size_t t = 0; t <= steps; ++t) os << ",pos_obj_t" << t;
        for (std::size_t t = 0; t <= steps; ++t) os << ",neg_obj_t" << t;
    }
    os << ",ap,ap50,ap75\n";
    for (const MetricsRow& r : rows) {
        os << r.iteration << ',' << r.learning_rate << ',' << r.loss.total << ',' << r.loss.class_loss << ','
           << r.loss.box << ',' << r.loss.objectness;
        for (std::size_t t = 0; t < steps; ++t) os << ',' << (t < r.loss.residual.size() ? r.loss.residual[t] : 0.0);
        if (has_objectness) {
            for (double v : r.objectness.positive) os << ',' << v;
            for (double v : r.objectness.negative) os << ',' << v;
        }
        if (r.ap) {
            os << ',' << r.ap->ap << ',' << r.ap->ap50 << ',' << r.ap->ap75 << '\n';
        } else {
            os << ",,,\n";
        }
    }
    os.precision(old_precision);
}

DetectionsByScene detect_all(const ModelConfig& model, const ModelParameters& params,
                             const std::vector<LabeledScene>& scenes, const DetectOptions& options) {
    DetectionsByScene out;
    for (const LabeledScene& ls : scenes) out[ls.scene.index] = detect(model, params, ls.scene.input, options);
    return out;
}

GroundTruthByScene ground_truth_of(const std::vector<LabeledScene>& scenes) {
    GroundTruthByScene out;
    for (const LabeledScene& ls : scenes) out[ls.scene.index] = ls.scene.objects;
    return out;
}

APResult evaluate_model(const ModelConfig& model, const ModelParameters& params,
                        const std::vector<LabeledScene>& scenes, const DetectOptions& options) {
    return evaluate_ap(detect_all(model, params, scenes, options), ground_truth_of(scenes));
}

namespace {

// Gradient clipping runs per group: the base detector, then each residual
// subnet on its own. A global norm would let residual gradients rescale the
// base detector's update and break isolation.
std::vector<std::vector<std::size_t>> clipping_groups(const ModelParameters& params) {
    std::vector<std::string> keys;
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::string& n = params.names[i];
        const bool residual = n.starts_with("res") && n.size() > 3 && std::isdigit(static_cast<unsigned char>(n[3]));
        const std::string key = residual ? n.substr(0, n.find('.')) : std::string();
        const auto it = std::find(keys.begin(), keys.end(), key);
        if (it == keys.end()) {
            keys.push_back(key);
            groups.push_back({i});
        } else {
            groups[static_cast<std::size_t>(it - keys.begin())].push_back(i);
        }
    }
    return groups;
}

}  // namespace

TrainResult train(const TrainConfig& config, const ProgressCallback& progress) {
    TrainResult result;
    result.config = effective_config(config);
    const TrainConfig& c = result.config;
    ModelParameters params = init_model(c.model);
    const auto anchors = generate_anchors(c.model.layout);
    const SceneConfig stream = training_stream(c);

    const auto validation = validation_set(c, std::max(c.validation_scenes, c.probe_scenes));
    const std::vector<LabeledScene> probe(validation.begin(),
                                          validation.begin() + static_cast<std::ptrdiff_t>(c.probe_scenes));
    const std::vector<LabeledScene> held_out(validation.begin(),
                                             validation.begin() + static_cast<std::ptrdiff_t>(c.validation_scenes));

    auto log_row = [&](std::size_t iteration, const LossReport& loss) {
        MetricsRow row;
        row.iteration = iteration;
        row.learning_rate = learning_rate_at(c, iteration);
        row.loss = loss;
        row.objectness = probe_objectness(c.model, params, probe);
        const bool last = iteration == c.iterations;
        if (last || (c.eval_interval > 0 && iteration % c.eval_interval == 0)) {
            row.ap = evaluate_model(c.model, params, held_out, c.detect);
        }
        if (progress) progress(row);
        result.metrics.push_back(std::move(row));
    };

    std::vector<Tensor> velocity;
    for (const Tensor& t : params.tensors) velocity.emplace_back(t.shape);
    const auto clip_groups = clipping_groups(params);
    for (std::size_t it = 0; it < c.iterations; ++it) {
        BatchOutcome batch = run_batch(c, params, stream, anchors, it, true);
        if (it % c.log_interval == 0) log_row(it, batch.report);
        const double lr = learning_rate_at(c, it);
        if (c.grad_clip_norm > 0.0) {
            for (const auto& group : clip_groups) {
                double sq = 0.0;
                for (std::size_t i : group)
                    for (double v : batch.grads[i].data) sq += v * v;
                const double norm = std::sqrt(sq);
                if (norm > c.grad_clip_norm) {
                    const double f = c.grad_clip_norm / norm;
                    for (std::size_t i : group)
                        for (double& v : batch.grads[i].data) v *= f;
                }
            }
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor& v = velocity[i];
            Tensor& p = params.tensors[i];
            const Tensor& g = batch.grads[i];
            for (std::size_t e = 0; e < p.numel(); ++e) {
                v[e] = c.momentum * v[e] + g[e];
                p[e] -= lr * v[e];
            }
        }
    }
    log_row(c.iterations, run_batch(c, params, stream, anchors, c.iterations, false).report);

    result.checkpoint = {c.model, std::move(params), c.iterations};
    return result;
}

void write_training_outputs(const std::filesystem::path& dir, const TrainResult& result) {
    std::filesystem::create_directories(dir);
    save_checkpoint(dir / "checkpoint.bin", result.checkpoint);
    std::ofstream metrics(dir / "metrics.csv", std::ios::trunc);
    if (!metrics) throw FormatError("cannot write " + (dir / "metrics.csv").string());
    write_metrics_csv(metrics, result.metrics, result.config.model.residual_steps, result.config.model.objectness);
    std::ofstream cfg(dir / "config.json", std::ios::trunc);
    cfg << to_json(result.config).dump(2) << '\n';
}

}  // namespace resobj
