#include "resobj/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <ostream>
#include <thread>

#include "resobj/config.hpp"
#include "resobj/errors.hpp"

namespace resobj {

using nlohmann::json;

std::vector<double> default_sweep_score_thresholds() { return {0.1, 0.05, 0.01, 0.005, 0.001}; }
std::vector<double> default_sweep_nms_thresholds() { return {0.45, 0.5}; }

SweepTable sweep_inference(const ModelConfig& model, const ModelParameters& params,
                           const std::vector<LabeledScene>& scenes, const std::vector<double>& score_thresholds,
                           const std::vector<double>& nms_thresholds, const DetectOptions& base) {
    if (score_thresholds.empty() || nms_thresholds.empty()) {
        throw ContractViolation("sweep_inference: empty threshold list");
    }
    std::vector<ScenePredictions> predictions;
    predictions.reserve(scenes.size());
    for (const LabeledScene& ls : scenes) predictions.push_back(predict(model, params, ls.scene.input));
    const GroundTruthByScene gts = ground_truth_of(scenes);

    SweepTable table;
    for (double s : score_thresholds) {
        for (double n : nms_thresholds) {
            DetectOptions opt = base;
            opt.score_threshold = s;
            opt.nms_threshold = n;
            DetectionsByScene dets;
            SweepRow row{s, n, {}, 0};
            for (std::size_t i = 0; i < scenes.size(); ++i) {
                auto& d = dets[scenes[i].scene.index] = postprocess(predictions[i], opt);
                row.detections += d.size();
            }
            row.result = evaluate_ap(dets, gts);
            if (table.rows.empty() || row.result.ap > table.rows[table.best].result.ap) {
                table.best = table.rows.size();
            }
            table.rows.push_back(std::move(row));
        }
    }
    return table;
}

void write_sweep_csv(std::ostream& os, const SweepTable& table) {
    const auto old_precision = os.precision(std::numeric_limits<double>::max_digits10);
    os << "score_threshold,nms_threshold,ap,ap50,ap75,recall50,detections,best\n";
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const SweepRow& r = table.rows[i];
        os << r.score_threshold << ',' << r.nms_threshold << ',' << r.result.ap << ',' << r.result.ap50 << ','
           << r.result.ap75 << ',' << r.result.recall50 << ',' << r.detections << ',' << (i == table.best ? 1 : 0)
           << '\n';
    }
    os.precision(old_precision);
}

const char* to_string(AblationAxis axis) {
    switch (axis) {
        case AblationAxis::gradient_flow: return "gradient-flow";
        case AblationAxis::residual_source: return "residual-source";
        case AblationAxis::steps: return "steps";
    }
    return "?";
}

AblationAxis ablation_axis_from_string(const std::string& s) {
    if (s == "gradient-flow") return AblationAxis::gradient_flow;
    if (s == "residual-source") return AblationAxis::residual_source;
    if (s == "steps") return AblationAxis::steps;
    throw FormatError("unknown ablation axis '" + s + "'");
}

std::vector<AblationVariant> ablation_variants(AblationAxis axis, const TrainConfig& base,
                                               const std::vector<std::size_t>& steps) {
    std::vector<AblationVariant> out;
    TrainConfig c = base;
    switch (axis) {
        case AblationAxis::gradient_flow:
        case AblationAxis::residual_source:
            if (c.mode != LossMode::resobj) throw ContractViolation("ablation: this axis needs mode ResObj");
            if (axis == AblationAxis::gradient_flow) {
                for (GradientFlow f : {GradientFlow::isolated, GradientFlow::coupled}) {
                    c.model.gradient_flow = f;
                    out.push_back({to_string(f), c});
                }
            } else {
                for (ResidualSource s : {ResidualSource::objectness_head, ResidualSource::class_head}) {
                    c.model.residual_source = s;
                    out.push_back({to_string(s), c});
                }
            }
            break;
        case AblationAxis::steps:
            if (steps.empty()) throw ContractViolation("ablation: no step counts given");
            for (std::size_t t : steps) {
                c.mode = t == 0 ? LossMode::obj : LossMode::resobj;
                c.model.residual_steps = t;
                out.push_back({"T" + std::to_string(t), c});
            }
            break;
    }
    return out;
}

namespace {

void flatten(const json& j, const std::string& prefix, std::map<std::string, json>& out) {
    if (j.is_object()) {
        for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, out);
    } else {
        out[prefix] = j;
    }
}

struct Job {
    std::size_t variant;
    std::size_t seed_index;
};

}  // namespace

std::vector<std::string> config_diff(const TrainConfig& a, const TrainConfig& b) {
    std::map<std::string, json> fa, fb;
    flatten(to_json(a), "", fa);
    flatten(to_json(b), "", fb);
    std::vector<std::string> diff;
    for (const auto& [k, v] : fa) {
        const auto it = fb.find(k);
        if (it == fb.end() || it->second != v) diff.push_back(k);
    }
    for (const auto& [k, v] : fb)
        if (!fa.count(k)) diff.push_back(k);
    return diff;
}

AblationReport run_ablation(AblationAxis axis, const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                            const AblationOptions& options) {
    if (seeds.size() < 3) throw ContractViolation("run_ablation: at least three seeds are required");
    const auto variants = ablation_variants(axis, base, options.steps);
    for (const auto& v : variants) effective_config(v.config);

    std::vector<Job> jobs;
    for (std::size_t v = 0; v < variants.size(); ++v)
        for (std::size_t s = 0; s < seeds.size(); ++s) jobs.push_back({v, s});
    std::vector<TrainResult> results(jobs.size());

    std::size_t workers = options.threads ? options.threads : std::thread::hardware_concurrency();
    workers = std::clamp<std::size_t>(workers, 1, jobs.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            try {
                TrainConfig c = variants[jobs[i].variant].config;
                c.seed = seeds[jobs[i].seed_index];
                results[i] = train(c);
                if (!options.run_dir.empty()) {
                    write_training_outputs(options.run_dir / variants[jobs[i].variant].name /
                                               ("seed" + std::to_string(c.seed)),
                                           results[i]);
                }
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);

    AblationReport report;
    report.axis = axis;
    report.seeds = seeds;
    for (std::size_t v = 0; v < variants.size(); ++v) {
        VariantReport vr;
        vr.name = variants[v].name;
        vr.config = variants[v].config;
        vr.differs_from_first = config_diff(variants.front().config, variants[v].config);
        std::vector<const TrainResult*> mine;
        for (std::size_t i = 0; i < jobs.size(); ++i)
            if (jobs[i].variant == v) mine.push_back(&results[i]);

        double sum = 0.0, sum50 = 0.0, sum75 = 0.0;
        for (const TrainResult* r : mine) {
            const MetricsRow& last = r->metrics.back();
            vr.runs.push_back({r->config.seed, *last.ap, last.objectness});
            sum += last.ap->ap;
            sum50 += last.ap->ap50;
            sum75 += last.ap->ap75;
        }
        const double n = static_cast<double>(mine.size());
        vr.mean_ap = sum / n;
        vr.mean_ap50 = sum50 / n;
        vr.mean_ap75 = sum75 / n;
        double var = 0.0;
        for (const auto& run : vr.runs) var += (run.ap.ap - vr.mean_ap) * (run.ap.ap - vr.mean_ap);
        vr.spread_ap = std::sqrt(var / (n - 1.0));

        const auto& rows0 = mine.front()->metrics;
        for (std::size_t row = 0; row < rows0.size(); ++row) {
            vr.curve_iterations.push_back(rows0[row].iteration);
            const std::size_t steps = rows0[row].objectness.positive.size();
            std::vector<double> pos(steps, 0.0), neg(steps, 0.0);
            for (const TrainResult* r : mine) {
                for (std::size_t t = 0; t < steps; ++t) {
                    pos[t] += r->metrics[row].objectness.positive[t] / n;
                    neg[t] += r->metrics[row].objectness.negative[t] / n;
                }
            }
            vr.positive_curve.push_back(std::move(pos));
            vr.negative_curve.push_back(std::move(neg));
        }
        report.variants.push_back(std::move(vr));
    }
    return report;
}

void write_ablation_summary_csv(std::ostream& os, const AblationReport& report) {
    const auto old_precision = os.precision(std::numeric_limits<double>::max_digits10);
    os << "variant,mean_ap,spread_ap,mean_ap50,mean_ap75";
    for (std::uint64_t s : report.seeds) os << ",ap_seed" << s;
    os << ",config_diff\n";
    for (const auto& v : report.variants) {
        os << v.name << ',' << v.mean_ap << ',' << v.spread_ap << ',' << v.mean_ap50 << ',' << v.mean_ap75;
        for (const auto& r : v.runs) os << ',' << r.ap.ap;
        os << ',';
        for (std::size_t i = 0; i < v.differs_from_first.size(); ++i) {
            os << (i ? ";" : "") << v.differs_from_first[i];
        }
        os << '\n';
    }
    os.precision(old_precision);
}

void write_ablation_curves_csv(std::ostream& os, const AblationReport& report) {
    const auto old_precision = os.precision(std::numeric_limits<double>::max_digits10);
    std::size_t max_steps = 0;
    for (const auto& v : report.variants)
        for (const auto& row : v.positive_curve) max_steps = std::max(max_steps, row.size());
    os << "variant,iteration";
    for (std::size_t t = 0; t < max_steps; ++t) os << ",pos_obj_t" << t;
    for (std::size_t t = 0; t < max_steps; ++t) os << ",neg_obj_t" << t;
    os << '\n';
    for (const auto& v : report.variants) {
        for (std::size_t row = 0; row < v.curve_iterations.size(); ++row) {
            os << v.name << ',' << v.curve_iterations[row];
            for (std::size_t t = 0; t < max_steps; ++t) {
                os << ',';
                if (t < v.positive_curve[row].size()) os << v.positive_curve[row][t];
            }
            for (std::size_t t = 0; t < max_steps; ++t) {
                os << ',';
                if (t < v.negative_curve[row].size()) os << v.negative_curve[row][t];
            }
            os << '\n';
        }
    }
    os.precision(old_precision);
}

json to_json(const AblationReport& report) {
    json variants = json::array();
    for (const auto& v : report.variants) {
        json runs = json::array();
        for (const auto& r : v.runs) {
            runs.push_back({{"seed", r.seed},
                            {"ap", r.ap.ap},
                            {"ap50", r.ap.ap50},
                            {"ap75", r.ap.ap75},
                            {"final_pos_obj", r.final_objectness.positive},
                            {"final_neg_obj", r.final_objectness.negative}});
        }
        variants.push_back({{"name", v.name},
                            {"config", to_json(v.config)},
                            {"config_diff", v.differs_from_first},
                            {"mean_ap", v.mean_ap},
                            {"spread_ap", v.spread_ap},
                            {"mean_ap50", v.mean_ap50},
                            {"mean_ap75", v.mean_ap75},
                            {"runs", runs}});
    }
    return {{"axis", to_string(report.axis)}, {"seeds", report.seeds}, {"variants", variants}};
}

}  // namespace resobj
