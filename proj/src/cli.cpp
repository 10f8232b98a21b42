#include "stmmot/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "stmmot/checks.hpp"
#include "stmmot/errors.hpp"
#include "stmmot/harness.hpp"
#include "stmmot/losses.hpp"

namespace stmmot::cli {

namespace {

namespace fs = std::filesystem;

int cmd_track(const std::string& config, const std::string& detections, const std::string& out_path, std::ostream& out) {
    const RunConfig cfg = load_run_config(config);
    const TrackerModel model = build_model(cfg);
    Sequence results;
    if (detections == "synthetic") {
        results = track_synthetic(cfg, model);
    } else {
        if (cfg.pipeline != "oracle") throw std::invalid_argument("track: detection files need the oracle pipeline");
        results = track_detections(parse_mot_file(detections), cfg.scene.frame_count, cfg, model);
    }
    write_mot_results(results, out_path);
    std::size_t rows = 0;
    for (const auto& f : results) rows += f.rows.size();
    out << "wrote " << rows << " rows over " << results.size() << " frames to " << out_path << "\n";
    return 0;
}

int cmd_synth(const std::string& scene_path, const std::string& gt_path, const std::string& det_path, std::ostream& out) {
    const SceneConfig sc = scene_from_json(nlohmann::json::parse(read_text(scene_path)));
    Rng rng(sc.seed);
    const Scene scene = generate_scene(sc, rng);
    write_mot_results(scene.gt, gt_path);
    out << "wrote ground truth for " << sc.n_objects << " objects to " << gt_path << "\n";
    if (!det_path.empty()) {
        write_mot_results(oracle_detections(scene, rng), det_path);
        out << "wrote oracle detections to " << det_path << "\n";
    }
    return 0;
}

int cmd_eval(const std::string& gt_path, const std::string& pred_path, double iou, const std::string& csv_path,
             std::ostream& out) {
    const MetricReport report = evaluate(parse_mot_file(gt_path), parse_mot_file(pred_path), iou);
    out << to_json(report).dump(2) << "\n";
    if (!csv_path.empty()) {
        const auto [header, row] = to_csv(report);
        write_text(csv_path, header + "\n" + row + "\n");
    }
    return 0;
}

int cmd_selftest(std::uint64_t seed, std::ostream& out) {
    Rng rng(seed);
    std::vector<checks::CheckResult> results;
    results.push_back(checks::loss_gradients(1000, rng));
    results.push_back(checks::attention_conv_oracle(200, rng));
    results.push_back(checks::deformable_degeneration(100, rng));
    results.push_back(checks::buffer_invariants(10000, rng));
    results.push_back(checks::hungarian_oracle(1000, rng));
    results.push_back(checks::idf1_oracle(100, rng));
    results.push_back(checks::metric_arithmetic(100, rng));
    results.push_back(checks::equivariance(100, rng));

    // one worked loss evaluation, reported as-is
    std::vector<QueryEntry> entries(2);
    entries[0] = {QueryKind::candidate, -1, {}, {0.5, 0.5, 0.2, 0.2}, 0.9, 0.8, 0.72};
    entries[1] = {QueryKind::tracklet, 1, {}, {0.3, 0.4, 0.1, 0.2}, 0.6, 1.0, 0.6};
    Supervision sup;
    sup.targets = {EntryTarget{1.0, 1.0, Box{0.52, 0.5, 0.2, 0.22}, 0}, EntryTarget{0.0, std::nullopt, std::nullopt, std::nullopt}};
    sup.visible = 1;

    bool ok = true;
    nlohmann::json report{{"seed", seed}, {"checks", nlohmann::json::array()}};
    for (const auto& r : results) {
        ok = ok && r.passed;
        report["checks"].push_back(checks::to_json(r));
    }
    report["loss_example"] = to_json(track_loss(entries, sup, LossWeights{}));
    report["passed"] = ok;
    out << report.dump(2) << "\n";
    return ok ? 0 : 1;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"stmmot: memory-based multi-object tracking on synthetic and MOT-format data", "stmmot"};
    app.require_subcommand(1);

    std::string config, detections, out_path;
    auto* track = app.add_subcommand("track", "track detections with a run configuration");
    track->add_option("--config", config, "run configuration (JSON)")->required();
    track->add_option("--detections", detections, "MOT detection file, or 'synthetic' for the configured scene")
        ->required();
    track->add_option("--out", out_path, "results file")->required();

    std::string scene_path, gt_path, det_path;
    auto* synth = app.add_subcommand("synth", "generate a synthetic scene");
    synth->add_option("--scene", scene_path, "scene configuration (JSON)")->required();
    synth->add_option("--out-gt", gt_path, "ground-truth file")->required();
    synth->add_option("--out-det", det_path, "oracle detection file");

    std::string pred_path, csv_path;
    double iou = 0.5;
    auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
    eval->add_option("--gt", gt_path, "ground-truth file")->required();
    eval->add_option("--pred", pred_path, "prediction file")->required();
    eval->add_option("--iou", iou, "IoU threshold")->check(CLI::Range(0.0, 1.0));
    eval->add_option("--csv", csv_path, "also write a CSV summary row here");

    std::uint64_t seed = 20240601;
    auto* selftest = app.add_subcommand("selftest", "run gradient checks and oracle suites");
    selftest->add_option("--seed", seed, "seed of the randomized suites");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n" << "run with --help for usage\n";
        return 2;
    }

    try {
        if (*track) return cmd_track(config, detections, out_path, out);
        if (*synth) return cmd_synth(scene_path, gt_path, det_path, out);
        if (*eval) return cmd_eval(gt_path, pred_path, iou, csv_path, out);
        if (*selftest) return cmd_selftest(seed, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace stmmot::cli
