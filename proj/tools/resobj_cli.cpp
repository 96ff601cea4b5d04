#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "resobj/checkpoint.hpp"
#include "resobj/config.hpp"
#include "resobj/errors.hpp"
#include "resobj/experiments.hpp"
#include "resobj/gradcheck.hpp"
#include "resobj/train.hpp"

using namespace resobj;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitFormat = 3;

std::ofstream open_output(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    return out;
}

void print_ap(const APResult& r) {
    std::cout << "AP " << r.ap << "  AP50 " << r.ap50 << "  AP75 " << r.ap75 << "  recall50 " << r.recall50 << '\n';
}

// Checkpoint parameters validated against the model the config describes.
ModelParameters checked_parameters(const fs::path& checkpoint, const TrainConfig& config) {
    return parameters_for(load_checkpoint(checkpoint), config.model);
}

int cmd_gen_data(const fs::path& config_path, std::size_t count, const fs::path& out) {
    const TrainConfig config = effective_config(load_train_config(config_path));
    fs::create_directories(out);
    for (std::size_t i = 0; i < count; ++i) {
        write_scene_file(out / ("scene_" + std::to_string(i) + ".bin"), generate_scene(config.scene, i));
    }
    const auto stats = imbalance_stats(config.scene, config.model.layout, std::max<std::size_t>(count, 1));
    std::cout << "wrote " << count << " scenes to " << out.string() << "\n"
              << "mean positives " << stats.mean_positives << ", mean negatives " << stats.mean_negatives
              << ", positive fraction " << stats.positive_fraction << '\n';
    return kExitOk;
}

int cmd_train(const fs::path& config_path, const fs::path& out, bool quiet) {
    const TrainConfig config = load_train_config(config_path);
    const TrainResult result = train(config, [&](const MetricsRow& row) {
        if (quiet) return;
        std::cout << "iter " << row.iteration << "  loss " << row.loss.total;
        if (!row.objectness.positive.empty()) {
            std::cout << "  pos_obj " << row.objectness.positive.back() << "  neg_obj "
                      << row.objectness.negative.back();
        }
        if (row.ap) std::cout << "  AP " << row.ap->ap;
        std::cout << std::endl;
    });
    write_training_outputs(out, result);
    print_ap(*result.metrics.back().ap);
    return kExitOk;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& config_path, double score, double nms,
             const fs::path& out) {
    TrainConfig config = effective_config(load_train_config(config_path));
    config.detect.score_threshold = score;
    config.detect.nms_threshold = nms;
    const ModelParameters params = checked_parameters(checkpoint, config);
    const auto scenes = validation_set(config, config.validation_scenes);
    const DetectionsByScene dets = detect_all(config.model, params, scenes, config.detect);
    const APResult r = evaluate_ap(dets, ground_truth_of(scenes));
    print_ap(r);
    if (!out.empty()) {
        fs::create_directories(out);
        auto det_file = open_output(out / "detections.csv");
        write_detections(det_file, dets);
        SweepTable single;
        single.rows.push_back({score, nms, r, 0});
        for (const auto& [s, d] : dets) single.rows[0].detections += d.size();
        auto eval_file = open_output(out / "eval.csv");
        write_sweep_csv(eval_file, single);
    }
    return kExitOk;
}

int cmd_sweep(const fs::path& checkpoint, const fs::path& config_path, const std::vector<double>& thresholds,
              const std::vector<double>& nms, const fs::path& out) {
    const TrainConfig config = effective_config(load_train_config(config_path));
    const ModelParameters params = checked_parameters(checkpoint, config);
    const auto scenes = validation_set(config, config.validation_scenes);
    const SweepTable table = sweep_inference(config.model, params, scenes, thresholds, nms, config.detect);
    write_sweep_csv(std::cout, table);
    if (!out.empty()) {
        auto f = open_output(out);
        write_sweep_csv(f, table);
    }
    const SweepRow& best = table.rows[table.best];
    std::cout << "best: score " << best.score_threshold << ", nms " << best.nms_threshold << ", AP "
              << best.result.ap << '\n';
    return kExitOk;
}

int cmd_ablate(const std::string& axis_name, const fs::path& config_path, std::size_t n_seeds,
               const std::vector<std::size_t>& steps, std::size_t threads, const fs::path& out) {
    const TrainConfig base = load_train_config(config_path);
    std::vector<std::uint64_t> seeds;
    for (std::size_t s = 0; s < n_seeds; ++s) seeds.push_back(base.seed + s);
    AblationOptions options;
    options.steps = steps;
    options.threads = threads;
    if (!out.empty()) options.run_dir = out / "runs";
    const AblationReport report = run_ablation(ablation_axis_from_string(axis_name), base, seeds, options);
    write_ablation_summary_csv(std::cout, report);
    if (!out.empty()) {
        auto summary = open_output(out / "summary.csv");
        write_ablation_summary_csv(summary, report);
        auto curves = open_output(out / "curves.csv");
        write_ablation_curves_csv(curves, report);
        auto json_file = open_output(out / "report.json");
        json_file << to_json(report).dump(2) << '\n';
    }
    return kExitOk;
}

int cmd_gradcheck(const std::vector<std::string>& losses, std::size_t instances, double tolerance) {
    bool ok = true;
    for (const std::string& name : losses) {
        const auto r = run_loss_gradcheck(gradcheck_loss_from_string(name), instances);
        const bool pass = r.max_relative_error <= tolerance;
        ok = ok && pass;
        std::cout << (pass ? "PASS " : "FAIL ") << name << "  instances " << r.instances << "  elements "
                  << r.elements_checked << "  max relative error " << r.max_relative_error << '\n';
    }
    return ok ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Residual objectness detector: data generation, training, evaluation and experiments"};
    app.require_subcommand(1);

    fs::path config, out, checkpoint;
    std::size_t count = 100;
    auto* gen = app.add_subcommand("gen-data", "Dump generated scenes and report their imbalance");
    gen->add_option("--config", config, "Train config (JSON)")->required()->check(CLI::ExistingFile);
    gen->add_option("--count", count, "Number of scenes")->required();
    gen->add_option("--out", out, "Output directory")->required();

    bool quiet = false;
    auto* tr = app.add_subcommand("train", "Train a model; writes checkpoint.bin, metrics.csv, config.json");
    tr->add_option("--config", config, "Train config (JSON)")->required()->check(CLI::ExistingFile);
    tr->add_option("--out", out, "Output directory")->required();
    tr->add_flag("--quiet", quiet, "No per-log progress lines");

    double score_thresh = DetectOptions{}.score_threshold, nms_thresh = DetectOptions{}.nms_threshold;
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the validation scenes");
    ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    ev->add_option("--config", config, "Train config (JSON)")->required()->check(CLI::ExistingFile);
    ev->add_option("--score-thresh", score_thresh, "Score threshold");
    ev->add_option("--nms", nms_thresh, "NMS IoU threshold");
    ev->add_option("--out", out, "Directory for detections.csv and eval.csv");

    std::vector<double> thresholds = default_sweep_score_thresholds(), nms_list = default_sweep_nms_thresholds();
    auto* sw = app.add_subcommand("sweep", "AP over a grid of score and NMS thresholds");
    sw->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    sw->add_option("--config", config, "Train config (JSON)")->required()->check(CLI::ExistingFile);
    sw->add_option("--thresholds", thresholds, "Score thresholds")->delimiter(',');
    sw->add_option("--nms", nms_list, "NMS thresholds")->delimiter(',');
    sw->add_option("--out", out, "CSV output file");

    std::string axis;
    std::size_t seeds = 5, threads = 0;
    std::vector<std::size_t> steps = {0, 1, 2, 3};
    auto* ab = app.add_subcommand("ablate", "Train variants along one axis over several seeds");
    ab->add_option("--axis", axis, "gradient-flow | residual-source | steps")
        ->required()
        ->check(CLI::IsMember({"gradient-flow", "residual-source", "steps"}));
    ab->add_option("--config", config, "Base train config (JSON)")->required()->check(CLI::ExistingFile);
    ab->add_option("--seeds", seeds, "Number of seeds (config seed, seed+1, ...)")->check(CLI::Range(3, 1000));
    ab->add_option("--steps", steps, "Step counts for the steps axis")->delimiter(',');
    ab->add_option("--threads", threads, "Worker threads (0: all cores)");
    ab->add_option("--out", out, "Output directory");

    std::vector<std::string> losses = {"ce", "focal", "obj", "resobj", "box"};
    std::size_t instances = 20;
    double tolerance = 1e-5;
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every loss");
    gc->add_option("--loss", losses, "Losses to check")
        ->delimiter(',')
        ->check(CLI::IsMember({"ce", "focal", "obj", "resobj", "box"}));
    gc->add_option("--instances", instances, "Random instances per loss");
    gc->add_option("--tolerance", tolerance, "Maximum relative error");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*gen) return cmd_gen_data(config, count, out);
        if (*tr) return cmd_train(config, out, quiet);
        if (*ev) return cmd_eval(checkpoint, config, score_thresh, nms_thresh, out);
        if (*sw) return cmd_sweep(checkpoint, config, thresholds, nms_list, out);
        if (*ab) return cmd_ablate(axis, config, seeds, steps, threads, out);
        if (*gc) return cmd_gradcheck(losses, instances, tolerance);
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const DomainError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << '\n';
        return kExitFormat;
    } catch (const ContractViolation& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}
