// Scenario configuration: one JSON file describing network, controller,
// events, attacks, simulation horizon, and detector settings. Parsing is
// strict: unknown keys, wrong types, and constraint violations all fail with
// the offending field spelled out.

#ifndef KOOPDET_SCENARIO_HPP
#define KOOPDET_SCENARIO_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "koopdet/attacks.hpp"
#include "koopdet/detector.hpp"
#include "koopdet/errors.hpp"
#include "koopdet/gridsim.hpp"

namespace koopdet {

struct SimulationConfig {
    double t_end = 60.0;
    double dt = 1.0 / 30.0;
    double noise_std = 0.0;
    std::uint64_t seed = 0;
    bool include_magnitude = false;
    std::optional<SimState> initial_state;  // absolute; defaults to equilibrium
};

struct ScenarioConfig {
    NetworkModel network;
    ControllerConfig controller;
    std::vector<EventSpec> events;
    std::vector<AttackSpec> attacks;
    SimulationConfig simulation;
    WindowConfig detector;
    std::uint64_t detector_seed = 0;

    int sensor_count() const {
        return static_cast<int>((simulation.include_magnitude ? 3 : 2) * network.size());
    }

    void validate() const;
    nlohmann::json to_json() const;
    static ScenarioConfig from_json(const nlohmann::json& j);
};

namespace detail {

inline const nlohmann::json& require_key(const nlohmann::json& obj, const std::string& key,
                                         const std::string& path) {
    if (!obj.is_object()) throw ValidationError(path + ": expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) throw ValidationError(path + "." + key + ": missing");
    return *it;
}

inline void reject_unknown_keys(const nlohmann::json& obj, const std::set<std::string>& allowed,
                                const std::string& path) {
    if (!obj.is_object()) throw ValidationError(path + ": expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key()))
            throw ValidationError(path + "." + it.key() + ": unknown key");
    }
}

inline double as_number(const nlohmann::json& v, const std::string& path) {
    if (!v.is_number()) throw ValidationError(path + ": expected a number");
    return v.get<double>();
}

inline double number_at(const nlohmann::json& obj, const std::string& key,
                        const std::string& path) {
    return as_number(require_key(obj, key, path), path + "." + key);
}

inline double number_or(const nlohmann::json& obj, const std::string& key, double fallback,
                        const std::string& path) {
    if (!obj.is_object() || !obj.contains(key)) return fallback;
    return as_number(obj.at(key), path + "." + key);
}

inline long integer_at(const nlohmann::json& obj, const std::string& key,
                       const std::string& path) {
    const auto& v = require_key(obj, key, path);
    if (!v.is_number_integer())
        throw ValidationError(path + "." + key + ": expected an integer");
    return v.get<long>();
}

inline long integer_or(const nlohmann::json& obj, const std::string& key, long fallback,
                       const std::string& path) {
    if (!obj.is_object() || !obj.contains(key)) return fallback;
    if (!obj.at(key).is_number_integer())
        throw ValidationError(path + "." + key + ": expected an integer");
    return obj.at(key).get<long>();
}

inline std::uint64_t seed_or(const nlohmann::json& obj, const std::string& key,
                             std::uint64_t fallback, const std::string& path) {
    if (!obj.is_object() || !obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                   v.get<long long>() < 0))
        throw ValidationError(path + "." + key + ": expected a non-negative integer");
    return v.get<std::uint64_t>();
}

inline bool bool_or(const nlohmann::json& obj, const std::string& key, bool fallback,
                    const std::string& path) {
    if (!obj.is_object() || !obj.contains(key)) return fallback;
    if (!obj.at(key).is_boolean())
        throw ValidationError(path + "." + key + ": expected a boolean");
    return obj.at(key).get<bool>();
}

inline Eigen::VectorXd vector_at(const nlohmann::json& obj, const std::string& key,
                                 const std::string& path) {
    const auto& v = require_key(obj, key, path);
    if (!v.is_array()) throw ValidationError(path + "." + key + ": expected an array");
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i)
        out[static_cast<Eigen::Index>(i)] =
            as_number(v[i], path + "." + key + "[" + std::to_string(i) + "]");
    return out;
}

inline Eigen::MatrixXd matrix_at(const nlohmann::json& obj, const std::string& key,
                                 const std::string& path) {
    const auto& v = require_key(obj, key, path);
    if (!v.is_array() || v.empty())
        throw ValidationError(path + "." + key + ": expected a non-empty array of rows");
    const std::size_t rows = v.size();
    const std::size_t cols = v[0].is_array() ? v[0].size() : 0;
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows; ++i) {
        const std::string row_path = path + "." + key + "[" + std::to_string(i) + "]";
        if (!v[i].is_array() || v[i].size() != cols)
            throw ValidationError(row_path + ": expected a row of length " +
                                  std::to_string(cols));
        for (std::size_t j = 0; j < cols; ++j)
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                as_number(v[i][j], row_path + "[" + std::to_string(j) + "]");
    }
    return out;
}

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline AttackKind parse_attack_kind(const std::string& name, const std::string& path) {
    for (std::size_t i = 0; i < attack_kind_names().size(); ++i) {
        if (attack_kind_names()[i] == name) return static_cast<AttackKind>(i);
    }
    std::string valid;
    for (const auto& n : attack_kind_names()) {
        if (!valid.empty()) valid += ", ";
        valid += n;
    }
    throw ValidationError(path + ".kind: unknown attack kind \"" + name + "\" (valid: " + valid +
                          ")");
}

}  // namespace detail

inline ScenarioConfig ScenarioConfig::from_json(const nlohmann::json& j) {
    using namespace detail;
    ScenarioConfig cfg;
    reject_unknown_keys(j, {"network", "controller", "events", "attacks", "simulation",
                            "detector"},
                        "scenario");

    const auto& net = require_key(j, "network", "scenario");
    reject_unknown_keys(net, {"buses", "susceptance", "inertia", "damping", "injection"},
                        "network");
    cfg.network.susceptance = matrix_at(net, "susceptance", "network");
    cfg.network.inertia = vector_at(net, "inertia", "network");
    cfg.network.damping = vector_at(net, "damping", "network");
    cfg.network.injection = vector_at(net, "injection", "network");
    const long buses = integer_or(net, "buses", cfg.network.inertia.size(), "network");
    if (buses != cfg.network.inertia.size())
        throw ValidationError("network.buses: declared " + std::to_string(buses) +
                              " but inertia has " + std::to_string(cfg.network.inertia.size()) +
                              " entries");

    if (j.contains("controller")) {
        const auto& ctl = j.at("controller");
        reject_unknown_keys(ctl, {"gain", "enabled"}, "controller");
        cfg.controller.gain = number_or(ctl, "gain", 0.0, "controller");
        cfg.controller.enabled = bool_or(ctl, "enabled", true, "controller");
    }

    if (j.contains("events")) {
        const auto& evs = j.at("events");
        if (!evs.is_array()) throw ValidationError("events: expected an array");
        for (std::size_t i = 0; i < evs.size(); ++i) {
            const std::string path = "events[" + std::to_string(i) + "]";
            reject_unknown_keys(evs[i], {"kind", "bus", "t_start", "delta_p"}, path);
            const auto& kind = require_key(evs[i], "kind", path);
            if (!kind.is_string() || kind.get<std::string>() != "load_step")
                throw ValidationError(path + ".kind: only \"load_step\" is supported");
            EventSpec ev;
            ev.bus = static_cast<int>(integer_at(evs[i], "bus", path));
            ev.t_start = number_at(evs[i], "t_start", path);
            ev.delta_p = number_at(evs[i], "delta_p", path);
            cfg.events.push_back(ev);
        }
    }

    if (j.contains("attacks")) {
        const auto& atks = j.at("attacks");
        if (!atks.is_array()) throw ValidationError("attacks: expected an array");
        for (std::size_t i = 0; i < atks.size(); ++i) {
            const std::string path = "attacks[" + std::to_string(i) + "]";
            const auto& a = atks[i];
            reject_unknown_keys(a,
                                {"kind", "targets", "t_start", "t_end", "seed", "magnitude",
                                 "rate", "bound", "rise", "hold", "fall", "peak", "gamma",
                                 "baseline_window", "replay_offset", "delay_samples",
                                 "loss_probability"},
                                path);
            const auto& kind = require_key(a, "kind", path);
            if (!kind.is_string()) throw ValidationError(path + ".kind: expected a string");
            AttackSpec spec;
            spec.kind = parse_attack_kind(kind.get<std::string>(), path);
            const auto& targets = require_key(a, "targets", path);
            if (!targets.is_array() || targets.empty())
                throw ValidationError(path + ".targets: expected a non-empty array");
            for (const auto& tgt : targets) {
                if (!tgt.is_number_integer())
                    throw ValidationError(path + ".targets: expected integer indices");
                spec.targets.push_back(tgt.get<int>());
            }
            spec.t_start = number_at(a, "t_start", path);
            spec.t_end = number_at(a, "t_end", path);
            spec.seed = seed_or(a, "seed", 0, path);
            spec.magnitude = number_or(a, "magnitude", 0.0, path);
            spec.rate = number_or(a, "rate", 0.0, path);
            spec.bound = number_or(a, "bound", 0.0, path);
            spec.rise = number_or(a, "rise", 0.0, path);
            spec.hold = number_or(a, "hold", 0.0, path);
            spec.fall = number_or(a, "fall", 0.0, path);
            spec.peak = number_or(a, "peak", 0.0, path);
            spec.gamma = number_or(a, "gamma", 0.0, path);
            spec.baseline_window = number_or(a, "baseline_window", 2.0, path);
            spec.replay_offset = number_or(a, "replay_offset", 0.0, path);
            spec.delay_samples = static_cast<int>(integer_or(a, "delay_samples", 0, path));
            spec.loss_probability = number_or(a, "loss_probability", 0.0, path);
            cfg.attacks.push_back(std::move(spec));
        }
    }

    const auto& sim = require_key(j, "simulation", "scenario");
    reject_unknown_keys(sim,
                        {"t_end", "dt", "noise_std", "seed", "include_magnitude",
                         "initial_state"},
                        "simulation");
    cfg.simulation.t_end = number_at(sim, "t_end", "simulation");
    cfg.simulation.dt = number_or(sim, "dt", 1.0 / 30.0, "simulation");
    cfg.simulation.noise_std = number_or(sim, "noise_std", 0.0, "simulation");
    cfg.simulation.seed = seed_or(sim, "seed", 0, "simulation");
    cfg.simulation.include_magnitude = bool_or(sim, "include_magnitude", false, "simulation");
    if (sim.contains("initial_state")) {
        const auto& init = sim.at("initial_state");
        reject_unknown_keys(init, {"angle", "freq"}, "simulation.initial_state");
        SimState st;
        st.angle = vector_at(init, "angle", "simulation.initial_state");
        st.freq = vector_at(init, "freq", "simulation.initial_state");
        cfg.simulation.initial_state = std::move(st);
    }

    const auto& det = require_key(j, "detector", "scenario");
    reject_unknown_keys(det,
                        {"n", "n_tilde", "rcond", "epsilon", "k", "tau",
                         "min_flag_persistence", "seed"},
                        "detector");
    cfg.detector.n = static_cast<int>(integer_or(det, "n", 120, "detector"));
    cfg.detector.n_tilde = static_cast<int>(integer_or(det, "n_tilde", 12, "detector"));
    cfg.detector.rcond = number_or(det, "rcond", 1e-10, "detector");
    cfg.detector.epsilon = number_or(det, "epsilon", 1e-9, "detector");
    cfg.detector.k = static_cast<int>(integer_or(det, "k", 2, "detector"));
    cfg.detector.tau = number_or(det, "tau", 3.0, "detector");
    cfg.detector.min_flag_persistence =
        static_cast<int>(integer_or(det, "min_flag_persistence", 2, "detector"));
    cfg.detector_seed = seed_or(det, "seed", 0, "detector");

    cfg.validate();
    return cfg;
}

inline void ScenarioConfig::validate() const {
    network.validate();
    if (!std::isfinite(controller.gain))
        throw ValidationError("controller.gain: must be finite");
    for (std::size_t i = 0; i < events.size(); ++i) {
        const std::string path = "events[" + std::to_string(i) + "]";
        if (events[i].bus < 0 || events[i].bus >= network.size())
            throw ValidationError(path + ".bus: index out of range");
        if (events[i].t_start < 0.0)
            throw ValidationError(path + ".t_start: must be >= 0");
    }
    if (!(simulation.t_end > 0.0)) throw ValidationError("simulation.t_end: must be > 0");
    if (!(simulation.dt > 0.0)) throw ValidationError("simulation.dt: must be > 0");
    if (simulation.noise_std < 0.0)
        throw ValidationError("simulation.noise_std: must be >= 0");
    if (simulation.initial_state) {
        if (simulation.initial_state->angle.size() != network.size() ||
            simulation.initial_state->freq.size() != network.size())
            throw ValidationError("simulation.initial_state: dimension mismatch");
    }
    const int p = sensor_count();
    for (std::size_t i = 0; i < attacks.size(); ++i)
        attacks[i].validate(p, "attacks[" + std::to_string(i) + "]");
    detector.validate(p);
    const long frames = static_cast<long>(std::floor(simulation.t_end / simulation.dt + 1e-9)) + 1;
    if (frames < detector.n + 1)
        throw ValidationError("detector.n: window needs " + std::to_string(detector.n + 1) +
                              " frames but the simulation only produces " +
                              std::to_string(frames));
}

inline nlohmann::json ScenarioConfig::to_json() const {
    using namespace detail;
    nlohmann::json j;
    j["network"] = {{"buses", network.size()},
                    {"susceptance", matrix_to_json(network.susceptance)},
                    {"inertia", vector_to_json(network.inertia)},
                    {"damping", vector_to_json(network.damping)},
                    {"injection", vector_to_json(network.injection)}};
    j["controller"] = {{"gain", controller.gain}, {"enabled", controller.enabled}};
    j["events"] = nlohmann::json::array();
    for (const auto& ev : events)
        j["events"].push_back({{"kind", "load_step"},
                               {"bus", ev.bus},
                               {"t_start", ev.t_start},
                               {"delta_p", ev.delta_p}});
    j["attacks"] = nlohmann::json::array();
    for (const auto& a : attacks) {
        nlohmann::json spec = {{"kind", attack_kind_name(a.kind)},
                               {"targets", a.targets},
                               {"t_start", a.t_start},
                               {"t_end", a.t_end},
                               {"seed", a.seed}};
        switch (a.kind) {
            case AttackKind::step: spec["magnitude"] = a.magnitude; break;
            case AttackKind::ramp: spec["rate"] = a.rate; break;
            case AttackKind::random: spec["bound"] = a.bound; break;
            case AttackKind::trapezoidal:
                spec["rise"] = a.rise;
                spec["hold"] = a.hold;
                spec["fall"] = a.fall;
                spec["peak"] = a.peak;
                break;
            case AttackKind::multiplicative:
                spec["gamma"] = a.gamma;
                spec["baseline_window"] = a.baseline_window;
                break;
            case AttackKind::replay: spec["replay_offset"] = a.replay_offset; break;
            case AttackKind::time_delay: spec["delay_samples"] = a.delay_samples; break;
            case AttackKind::packet_loss: spec["loss_probability"] = a.loss_probability; break;
            case AttackKind::freezing: break;
        }
        j["attacks"].push_back(std::move(spec));
    }
    j["simulation"] = {{"t_end", simulation.t_end},
                       {"dt", simulation.dt},
                       {"noise_std", simulation.noise_std},
                       {"seed", simulation.seed},
                       {"include_magnitude", simulation.include_magnitude}};
    if (simulation.initial_state) {
        j["simulation"]["initial_state"] = {
            {"angle", vector_to_json(simulation.initial_state->angle)},
            {"freq", vector_to_json(simulation.initial_state->freq)}};
    }
    j["detector"] = {{"n", detector.n},
                     {"n_tilde", detector.n_tilde},
                     {"rcond", detector.rcond},
                     {"epsilon", detector.epsilon},
                     {"k", detector.k},
                     {"tau", detector.tau},
                     {"min_flag_persistence", detector.min_flag_persistence},
                     {"seed", detector_seed}};
    return j;
}

inline ScenarioConfig load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open scenario file: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("scenario " + path.string() + ": " + e.what());
    }
    try {
        return ScenarioConfig::from_json(j);
    } catch (const ValidationError& e) {
        throw ValidationError("scenario " + path.string() + ": " + e.what());
    }
}

// Scenario lookup used by the CLI: an existing path wins; otherwise the name
// is resolved against the directory in this environment variable.
inline constexpr const char* kScenarioDirEnvVar = "KOOPDET_SCENARIO_DIR";

inline std::filesystem::path resolve_scenario_path(const std::string& name) {
    namespace fs = std::filesystem;
    if (fs::exists(name)) return name;
    if (const char* dir = std::getenv(kScenarioDirEnvVar)) {
        const fs::path candidate = fs::path(dir) / name;
        if (fs::exists(candidate)) return candidate;
        const fs::path with_ext = fs::path(dir) / (name + ".json");
        if (fs::exists(with_ext)) return with_ext;
    }
    throw ParseError("scenario not found: " + name + " (also searched $" +
                     std::string(kScenarioDirEnvVar) + ")");
}

}  // namespace koopdet

#endif  // KOOPDET_SCENARIO_HPP
