// End-to-end pipeline: simulate -> corrupt -> detect -> score -> serialize.
//
// Artifacts written per run:
//   true_stream.csv      clean measurements
//   received_stream.csv  what the controller/detector saw
//   labels.csv           ground-truth attacked-sensor indicator per sample
//   reports.jsonl        one detection report per analyzed step
//   metrics.json         scoring summary
// All files carry the config hash, and identical configs reproduce identical
// bytes, so reruns can be verified by hashing.

#ifndef KOOPDET_PIPELINE_HPP
#define KOOPDET_PIPELINE_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "koopdet/attacks.hpp"
#include "koopdet/detector.hpp"
#include "koopdet/errors.hpp"
#include "koopdet/gridsim.hpp"
#include "koopdet/io.hpp"
#include "koopdet/scenario.hpp"

namespace koopdet {

inline std::string config_hash_hex(const ScenarioConfig& cfg) {
    return hash_hex(fnv1a64(cfg.to_json().dump()));
}

struct RunMetrics {
    long report_count = 0;
    long attack_verdict_steps = 0;              // reports with attack = true
    std::optional<long> first_attacked_sample;  // ground truth onset
    std::optional<long> first_verdict_step;     // first attack = true report
    std::optional<long> latency_samples;        // first verdict at/after onset
    std::optional<double> precision;            // union of flagged sets vs truth
    std::optional<double> recall;
    double false_positive_step_rate = 0.0;      // verdicts with attack-free windows

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["report_count"] = report_count;
        j["attack_verdict_steps"] = attack_verdict_steps;
        j["first_attacked_sample"] =
            first_attacked_sample ? nlohmann::json(*first_attacked_sample) : nlohmann::json();
        j["first_verdict_step"] =
            first_verdict_step ? nlohmann::json(*first_verdict_step) : nlohmann::json();
        j["latency_samples"] =
            latency_samples ? nlohmann::json(*latency_samples) : nlohmann::json();
        j["precision"] = precision ? nlohmann::json(*precision) : nlohmann::json();
        j["recall"] = recall ? nlohmann::json(*recall) : nlohmann::json();
        j["false_positive_step_rate"] = false_positive_step_rate;
        return j;
    }
};

// Scores detector reports against per-sample ground truth. `window` is the
// detector history length n: the report at step k summarizes samples
// [k - n, k].
//
// Latency counts samples from the first attacked sample to the first
// attack-true report at or after it. Precision/recall compare the union of
// flagged sets over attack-verdict reports at attacked samples against the
// union of all attacked sensors: sustained detection may flag subsets of the
// attacked set step by step, so set-union aggregation is what "every attacked
// sensor named, no clean sensor ever named" means here. The false-positive
// rate is the fraction of reports whose whole analysis window is attack-free
// yet still claim an attack; a window that overlaps the attack interval is
// attributed to the attack (in a feedback loop the corruption also perturbs
// the plant, so only windows never touched by the attack can refute the
// detector).
inline RunMetrics compute_metrics(const std::vector<DetectionReport>& reports,
                                  const LabelTable& labels, int window) {
    RunMetrics m;
    m.report_count = static_cast<long>(reports.size());

    const long samples = static_cast<long>(labels.attacked.size());
    std::vector<int> truth_union;
    // attacked_before[k] = number of attacked samples with index < k.
    std::vector<long> attacked_before(static_cast<std::size_t>(samples) + 1, 0);
    for (long k = 0; k < samples; ++k) {
        const auto& truth = labels.attacked[static_cast<std::size_t>(k)];
        attacked_before[static_cast<std::size_t>(k) + 1] =
            attacked_before[static_cast<std::size_t>(k)] + (truth.empty() ? 0 : 1);
        if (!truth.empty() && !m.first_attacked_sample) m.first_attacked_sample = k;
        truth_union.insert(truth_union.end(), truth.begin(), truth.end());
    }
    std::sort(truth_union.begin(), truth_union.end());
    truth_union.erase(std::unique(truth_union.begin(), truth_union.end()), truth_union.end());

    const auto window_touches_attack = [&](long step) {
        const long lo = std::max(step - static_cast<long>(window), 0L);
        const long hi = std::min(step + 1, samples);
        return hi > lo && attacked_before[static_cast<std::size_t>(hi)] >
                              attacked_before[static_cast<std::size_t>(lo)];
    };

    std::vector<int> flagged_union;
    long clean_reports = 0, clean_false = 0;
    for (const auto& rep : reports) {
        if (rep.attack) {
            ++m.attack_verdict_steps;
            if (!m.first_verdict_step) m.first_verdict_step = rep.step;
            if (!m.latency_samples && m.first_attacked_sample &&
                rep.step >= *m.first_attacked_sample)
                m.latency_samples = rep.step - *m.first_attacked_sample;
        }
        const bool at_attacked_sample =
            rep.step >= 0 && rep.step < samples &&
            !labels.attacked[static_cast<std::size_t>(rep.step)].empty();
        if (rep.attack && at_attacked_sample)
            flagged_union.insert(flagged_union.end(), rep.flagged.begin(), rep.flagged.end());
        if (!window_touches_attack(rep.step)) {
            ++clean_reports;
            if (rep.attack) ++clean_false;
        }
    }
    std::sort(flagged_union.begin(), flagged_union.end());
    flagged_union.erase(std::unique(flagged_union.begin(), flagged_union.end()),
                        flagged_union.end());

    if (!truth_union.empty()) {
        long hits = 0;
        for (int s : flagged_union)
            if (std::binary_search(truth_union.begin(), truth_union.end(), s)) ++hits;
        if (!flagged_union.empty())
            m.precision = static_cast<double>(hits) / static_cast<double>(flagged_union.size());
        m.recall = static_cast<double>(hits) / static_cast<double>(truth_union.size());
    }
    if (clean_reports > 0)
        m.false_positive_step_rate =
            static_cast<double>(clean_false) / static_cast<double>(clean_reports);
    return m;
}

struct RunArtifacts {
    std::filesystem::path true_stream;
    std::filesystem::path received_stream;
    std::filesystem::path labels;
    std::filesystem::path reports;
    std::filesystem::path metrics;
    RunMetrics metrics_summary;
};

inline RunArtifacts run_pipeline(const ScenarioConfig& cfg,
                                 const std::filesystem::path& out_dir) {
    cfg.validate();
    const std::string hash = config_hash_hex(cfg);

    AttackInjector injector(cfg.attacks);
    const AttackHook hook = [&injector](double t, long k, const Eigen::VectorXd& y) {
        (void)k;
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
    times.reserve(static_cast<std::size_t>(sim.true_stream.size()));
    for (Eigen::Index i = 0; i < sim.true_stream.size(); ++i) {
        times.push_back(sim.true_stream.time_at(i));
        attacked.push_back(attacked_sensors(cfg.attacks, sim.true_stream.time_at(i)));
    }

    const std::vector<DetectionReport> reports =
        detect_stream(sim.received_stream, cfg.detector, cfg.detector_seed);

    LabelTable labels;
    labels.times = times;
    labels.attacked = attacked;
    labels.sensor_count = cfg.sensor_count();

    RunArtifacts art;
    art.true_stream = out_dir / "true_stream.csv";
    art.received_stream = out_dir / "received_stream.csv";
    art.labels = out_dir / "labels.csv";
    art.reports = out_dir / "reports.jsonl";
    art.metrics = out_dir / "metrics.json";
    art.metrics_summary = compute_metrics(reports, labels, cfg.detector.n);

    write_stream_csv(art.true_stream, sim.true_stream, "koopdet.stream.v1", hash);
    write_stream_csv(art.received_stream, sim.received_stream, "koopdet.stream.v1", hash);
    write_labels_csv(art.labels, times, cfg.sensor_count(), attacked, hash);
    write_reports_jsonl(art.reports, reports, hash);

    nlohmann::json metrics = art.metrics_summary.to_json();
    metrics["schema"] = "koopdet.metrics.v1";
    metrics["config"] = hash;
    atomic_write_text(art.metrics, metrics.dump(2) + "\n");
    return art;
}

enum class PlotKind { timeseries, mode_spread, clusters };

// Flattens pipeline artifacts into long-format tables for plotting tools.
//
//   timeseries  -> plot_timeseries.csv: t,sensor,value,received_value
//   mode_spread -> plot_mode_spread.csv: sensor,mode,weight,cluster (one step,
//                  default the first attack-verdict step, else the last)
//   clusters    -> plot_clusters.csv: t,sensor,cluster,flagged
inline std::filesystem::path emit_plot_data(const std::filesystem::path& artifact_dir,
                                            PlotKind which,
                                            std::optional<long> step = std::nullopt) {
    namespace fs = std::filesystem;
    switch (which) {
        case PlotKind::timeseries: {
            const StreamWindow truth = read_stream_csv(artifact_dir / "true_stream.csv");
            const StreamWindow received = read_stream_csv(artifact_dir / "received_stream.csv");
            if (truth.size() != received.size() || truth.dim() != received.dim())
                throw ParseError("stream artifacts disagree in shape");
            std::string out = "t,sensor,value,received_value\n";
            for (Eigen::Index i = 0; i < truth.size(); ++i) {
                for (Eigen::Index s = 0; s < truth.dim(); ++s) {
                    out += format_double(truth.time_at(i));
                    out += ',';
                    out += std::to_string(s);
                    out += ',';
                    out += format_double(truth.data()(s, i));
                    out += ',';
                    out += format_double(received.data()(s, i));
                    out += '\n';
                }
            }
            const fs::path path = artifact_dir / "plot_timeseries.csv";
            atomic_write_text(path, out);
            return path;
        }
        case PlotKind::mode_spread: {
            const auto reports = read_reports_jsonl(artifact_dir / "reports.jsonl");
            if (reports.empty()) throw MissingArtifact("reports.jsonl holds no reports");
            const DetectionReport* chosen = nullptr;
            if (step) {
                for (const auto& rep : reports)
                    if (rep.step == *step) chosen = &rep;
                if (!chosen)
                    throw MissingArtifact("no report at step " + std::to_string(*step));
            } else {
                for (const auto& rep : reports)
                    if (rep.attack) {
                        chosen = &rep;
                        break;
                    }
                if (!chosen) chosen = &reports.back();
            }
            std::string out = "sensor,mode,weight,cluster\n";
            for (Eigen::Index s = 0; s < chosen->mode_rows.rows(); ++s) {
                for (Eigen::Index mo = 0; mo < chosen->mode_rows.cols(); ++mo) {
                    out += std::to_string(s);
                    out += ',';
                    out += std::to_string(mo);
                    out += ',';
                    out += format_double(chosen->mode_rows(s, mo));
                    out += ',';
                    out += std::to_string(chosen->labels[static_cast<std::size_t>(s)]);
                    out += '\n';
                }
            }
            const fs::path path = artifact_dir / "plot_mode_spread.csv";
            atomic_write_text(path, out);
            return path;
        }
        case PlotKind::clusters: {
            const auto reports = read_reports_jsonl(artifact_dir / "reports.jsonl");
            std::string out = "t,sensor,cluster,flagged\n";
            for (const auto& rep : reports) {
                for (std::size_t s = 0; s < rep.labels.size(); ++s) {
                    const bool flagged = std::binary_search(rep.flagged.begin(),
                                                            rep.flagged.end(),
                                                            static_cast<int>(s));
                    out += format_double(rep.t);
                    out += ',';
                    out += std::to_string(s);
                    out += ',';
                    out += std::to_string(rep.labels[s]);
                    out += ',';
                    out += flagged ? '1' : '0';
                    out += '\n';
                }
            }
            const fs::path path = artifact_dir / "plot_clusters.csv";
            atomic_write_text(path, out);
            return path;
        }
    }
    throw InvalidArgument("unknown plot kind");
}

}  // namespace koopdet

#endif  // KOOPDET_PIPELINE_HPP
