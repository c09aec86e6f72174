// Command-line front end: scenario validation, simulation, offline attack
// injection, detection, the end-to-end pipeline, and plot-data export.
//
// Exit codes: 0 success, 2 configuration/validation problem, 3 runtime or
// numerical failure.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "koopdet/koopdet.hpp"

namespace {

namespace fs = std::filesystem;
using namespace koopdet;

struct CommonArgs {
    std::string scenario;
    std::string out_dir = "koopdet-out";
    std::optional<std::uint64_t> seed;
    std::optional<int> n;
    std::optional<int> n_tilde;
    std::optional<double> tau;
};

ScenarioConfig load_with_overrides(const CommonArgs& args) {
    ScenarioConfig cfg = load_scenario(resolve_scenario_path(args.scenario));
    if (args.seed) {
        cfg.simulation.seed = *args.seed;
        cfg.detector_seed = *args.seed;
        for (auto& spec : cfg.attacks) spec.seed = *args.seed;
    }
    if (args.n) cfg.detector.n = *args.n;
    if (args.n_tilde) cfg.detector.n_tilde = *args.n_tilde;
    if (args.tau) cfg.detector.tau = *args.tau;
    cfg.validate();
    return cfg;
}

void print_metrics(const RunMetrics& m) {
    std::cout << "reports: " << m.report_count
              << "  attack verdicts: " << m.attack_verdict_steps << "\n";
    if (m.latency_samples)
        std::cout << "detection latency: " << *m.latency_samples << " samples\n";
    if (m.precision && m.recall)
        std::cout << "precision: " << *m.precision << "  recall: " << *m.recall << "\n";
    std::cout << "false positive step rate: " << m.false_positive_step_rate << "\n";
}

int cmd_validate(const CommonArgs& args) {
    const fs::path path = resolve_scenario_path(args.scenario);
    const ScenarioConfig cfg = load_scenario(path);
    std::cout << "OK: " << path.string() << "\n"
              << "buses: " << cfg.network.size() << "  sensors: " << cfg.sensor_count()
              << "  events: " << cfg.events.size() << "  attacks: " << cfg.attacks.size()
              << "\n"
              << "horizon: " << cfg.simulation.t_end << " s at dt = " << cfg.simulation.dt
              << " s\n"
              << "config hash: " << config_hash_hex(cfg) << "\n";
    return 0;
}

int cmd_simulate(const CommonArgs& args) {
    const ScenarioConfig cfg = load_with_overrides(args);
    const std::string hash = config_hash_hex(cfg);

    AttackInjector injector(cfg.attacks);
    const AttackHook hook = [&injector](double t, long, const Eigen::VectorXd& y) {
        return injector.apply(t, y);
    };
    SimOptions opts;
    opts.noise_std = cfg.simulation.noise_std;
    opts.seed = cfg.simulation.seed;
    opts.include_magnitude = cfg.simulation.include_magnitude;
    opts.initial_state = cfg.simulation.initial_state;
    const SimResult sim =
        simulate(cfg.network, cfg.controller, cfg.events, cfg.attacks.empty() ? nullptr : hook,
                 cfg.simulation.t_end, cfg.simulation.dt, opts);

    std::vector<double> times;
    std::vector<std::vector<int>> attacked;
    for (Eigen::Index i = 0; i < sim.true_stream.size(); ++i) {
        times.push_back(sim.true_stream.time_at(i));
        attacked.push_back(attacked_sensors(cfg.attacks, sim.true_stream.time_at(i)));
    }

    const fs::path out(args.out_dir);
    write_stream_csv(out / "true_stream.csv", sim.true_stream, "koopdet.stream.v1", hash);
    write_stream_csv(out / "received_stream.csv", sim.received_stream, "koopdet.stream.v1",
                     hash);
    write_labels_csv(out / "labels.csv", times, cfg.sensor_count(), attacked, hash);
    for (const auto& w : injector.warnings()) std::cerr << "warning: " << w << "\n";
    std::cout << "wrote " << (out / "true_stream.csv").string() << "\n"
              << "wrote " << (out / "received_stream.csv").string() << "\n"
              << "wrote " << (out / "labels.csv").string() << "\n";
    return 0;
}

int cmd_attack(const CommonArgs& args, const std::string& stream_path) {
    const ScenarioConfig cfg = load_with_overrides(args);
    const std::string hash = config_hash_hex(cfg);
    const StreamWindow stream = read_stream_csv(stream_path);

    AttackInjector injector(cfg.attacks);
    Eigen::MatrixXd data(stream.dim(), stream.size());
    std::vector<double> times;
    std::vector<std::vector<int>> attacked;
    for (Eigen::Index i = 0; i < stream.size(); ++i) {
        const double t = stream.time_at(i);
        data.col(i) = injector.apply(t, stream.data().col(i));
        times.push_back(t);
        attacked.push_back(attacked_sensors(cfg.attacks, t));
    }
    const StreamWindow received(stream.t0(), stream.dt(), std::move(data));

    const fs::path out(args.out_dir);
    write_stream_csv(out / "received_stream.csv", received, "koopdet.stream.v1", hash);
    write_labels_csv(out / "labels.csv", times, static_cast<int>(stream.dim()), attacked, hash);
    for (const auto& w : injector.warnings()) std::cerr << "warning: " << w << "\n";
    std::cout << "wrote " << (out / "received_stream.csv").string() << "\n"
              << "wrote " << (out / "labels.csv").string() << "\n";
    return 0;
}

int cmd_detect(const CommonArgs& args, const std::string& stream_path,
               const std::string& labels_path) {
    const ScenarioConfig cfg = load_with_overrides(args);
    const std::string hash = config_hash_hex(cfg);
    const StreamWindow stream = read_stream_csv(stream_path);

    const auto reports = detect_stream(stream, cfg.detector, cfg.detector_seed);
    const fs::path out(args.out_dir);
    write_reports_jsonl(out / "reports.jsonl", reports, hash);
    std::cout << "wrote " << (out / "reports.jsonl").string() << "\n";

    LabelTable labels;
    if (!labels_path.empty()) {
        labels = read_labels_csv(labels_path);
    } else {
        // No ground truth: score against an all-clean label table so the
        // verdict counts and false-positive rate are still reported.
        for (Eigen::Index i = 0; i < stream.size(); ++i) {
            labels.times.push_back(stream.time_at(i));
            labels.attacked.emplace_back();
        }
        labels.sensor_count = static_cast<int>(stream.dim());
    }
    const RunMetrics metrics = compute_metrics(reports, labels, cfg.detector.n);
    nlohmann::json mj = metrics.to_json();
    mj["schema"] = "koopdet.metrics.v1";
    mj["config"] = hash;
    atomic_write_text(out / "metrics.json", mj.dump(2) + "\n");
    std::cout << "wrote " << (out / "metrics.json").string() << "\n";
    print_metrics(metrics);
    return 0;
}

int cmd_run(const CommonArgs& args) {
    const ScenarioConfig cfg = load_with_overrides(args);
    const RunArtifacts art = run_pipeline(cfg, args.out_dir);
    std::cout << "wrote " << art.true_stream.string() << "\n"
              << "wrote " << art.received_stream.string() << "\n"
              << "wrote " << art.labels.string() << "\n"
              << "wrote " << art.reports.string() << "\n"
              << "wrote " << art.metrics.string() << "\n";
    print_metrics(art.metrics_summary);
    return 0;
}

int cmd_plot_data(const std::string& artifacts_dir, const std::string& which,
                  std::optional<long> step) {
    PlotKind kind;
    if (which == "timeseries")
        kind = PlotKind::timeseries;
    else if (which == "mode_spread")
        kind = PlotKind::mode_spread;
    else if (which == "clusters")
        kind = PlotKind::clusters;
    else
        throw ValidationError("--which: expected timeseries, mode_spread, or clusters");
    const fs::path path = emit_plot_data(artifacts_dir, kind, step);
    std::cout << "wrote " << path.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Koopman-mode attack detection on simulated power-grid sensor streams"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string stream_path;
    std::string labels_path;
    std::string artifacts_dir;
    std::string which = "timeseries";
    std::optional<long> step;

    auto add_common = [&](CLI::App* sub, bool with_detector_overrides) {
        sub->add_option("--scenario", args.scenario, "Scenario file or name under $" +
                                                         std::string(kScenarioDirEnvVar))
            ->required();
        sub->add_option("--out", args.out_dir, "Output directory");
        sub->add_option("--seed", args.seed, "Override all seeds in the scenario");
        if (with_detector_overrides) {
            sub->add_option("--n", args.n, "Override detector window length");
            sub->add_option("--n-tilde", args.n_tilde, "Override prediction window length");
            sub->add_option("--tau", args.tau, "Override attack threshold");
        }
    };

    CLI::App* validate = app.add_subcommand("validate", "Check a scenario file");
    validate->add_option("--scenario", args.scenario, "Scenario file or name")->required();

    CLI::App* simulate = app.add_subcommand("simulate", "Closed-loop simulation only");
    add_common(simulate, false);

    CLI::App* attack = app.add_subcommand("attack", "Corrupt a recorded stream offline");
    add_common(attack, false);
    attack->add_option("--stream", stream_path, "Input stream CSV")->required();

    CLI::App* detect = app.add_subcommand("detect", "Run the detector on a stream CSV");
    add_common(detect, true);
    detect->add_option("--stream", stream_path, "Input stream CSV")->required();
    detect->add_option("--labels", labels_path, "Ground-truth labels CSV for scoring");

    CLI::App* run = app.add_subcommand("run", "Simulate, attack, detect, score");
    add_common(run, true);

    CLI::App* plot = app.add_subcommand("plot-data", "Flatten artifacts into plot tables");
    plot->add_option("--artifacts", artifacts_dir, "Pipeline output directory")->required();
    plot->add_option("--which", which, "timeseries | mode_spread | clusters");
    plot->add_option("--step", step, "Report step for mode_spread");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand(validate)) return cmd_validate(args);
        if (app.got_subcommand(simulate)) return cmd_simulate(args);
        if (app.got_subcommand(attack)) return cmd_attack(args, stream_path);
        if (app.got_subcommand(detect)) return cmd_detect(args, stream_path, labels_path);
        if (app.got_subcommand(run)) return cmd_run(args);
        if (app.got_subcommand(plot)) return cmd_plot_data(artifacts_dir, which, step);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const InvalidSpec& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const MissingArtifact& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
