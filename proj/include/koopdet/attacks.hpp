// Measurement-stream corruption: false-data-injection and denial-of-service
// transforms applied between the plant and the controller/detector.
//
// Additive kinds inject a(t) on the targeted channels inside the attack
// window; DoS kinds substitute stale or frozen values. Everything off-target
// or out-of-window passes through bit-exact. Seeded kinds (random, packet
// loss) are reproducible.

#ifndef KOOPDET_ATTACKS_HPP
#define KOOPDET_ATTACKS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "koopdet/errors.hpp"
#include "koopdet/frame.hpp"
#include "koopdet/rng.hpp"

namespace koopdet {

enum class AttackKind {
    step,            // a = magnitude
    ramp,            // a = rate * (t - t_start)
    random,          // a ~ Uniform(-bound, bound), seeded
    trapezoidal,     // piecewise-linear rise / hold / fall to peak
    multiplicative,  // a = gamma * (t - t_start) * (y - baseline mean)
    replay,          // substitute y(t - replay_offset)
    time_delay,      // substitute y delayed by delay_samples
    packet_loss,     // with probability loss_probability hold last delivered
    freezing,        // substitute y(t_start) throughout the window
};

inline const char* attack_kind_name(AttackKind k) {
    switch (k) {
        case AttackKind::step: return "step";
        case AttackKind::ramp: return "ramp";
        case AttackKind::random: return "random";
        case AttackKind::trapezoidal: return "trapezoidal";
        case AttackKind::multiplicative: return "multiplicative";
        case AttackKind::replay: return "replay";
        case AttackKind::time_delay: return "time_delay";
        case AttackKind::packet_loss: return "packet_loss";
        case AttackKind::freezing: return "freezing";
    }
    return "?";
}

inline const std::vector<std::string>& attack_kind_names() {
    static const std::vector<std::string> names = {
        "step",   "ramp",        "random",     "trapezoidal", "multiplicative",
        "replay", "time_delay",  "packet_loss", "freezing"};
    return names;
}

struct AttackSpec {
    AttackKind kind = AttackKind::step;
    std::vector<int> targets;  // sensor indices, stored sorted unique
    double t_start = 0.0;
    double t_end = 0.0;
    std::uint64_t seed = 0;

    // Kind-specific parameters; only the ones for `kind` are read.
    double magnitude = 0.0;         // step
    double rate = 0.0;              // ramp
    double bound = 0.0;             // random
    double rise = 0.0;              // trapezoidal, s
    double hold = 0.0;              // trapezoidal, s
    double fall = 0.0;              // trapezoidal, s
    double peak = 0.0;              // trapezoidal
    double gamma = 0.0;             // multiplicative, 1/s
    double baseline_window = 2.0;   // multiplicative, s of history averaged
    double replay_offset = 0.0;     // replay, s
    int delay_samples = 0;          // time_delay
    double loss_probability = 0.0;  // packet_loss

    void validate(int sensor_count = -1, const std::string& prefix = "attack") const {
        if (targets.empty()) throw InvalidSpec(prefix + ".targets: must be non-empty");
        for (int s : targets) {
            if (s < 0 || (sensor_count >= 0 && s >= sensor_count))
                throw InvalidSpec(prefix + ".targets: sensor index " + std::to_string(s) +
                                  " out of range");
        }
        if (!(t_start < t_end)) throw InvalidSpec(prefix + ".t_start: must be < t_end");
        switch (kind) {
            case AttackKind::random:
                if (bound < 0.0) throw InvalidSpec(prefix + ".bound: must be >= 0");
                break;
            case AttackKind::trapezoidal:
                if (rise < 0.0 || hold < 0.0 || fall < 0.0)
                    throw InvalidSpec(prefix + ".rise/hold/fall: must be >= 0");
                break;
            case AttackKind::multiplicative:
                if (!(baseline_window > 0.0))
                    throw InvalidSpec(prefix + ".baseline_window: must be > 0");
                break;
            case AttackKind::replay:
                if (replay_offset < 0.0)
                    throw InvalidSpec(prefix + ".replay_offset: must be >= 0");
                break;
            case AttackKind::time_delay:
                if (delay_samples < 0)
                    throw InvalidSpec(prefix + ".delay_samples: must be >= 0");
                break;
            case AttackKind::packet_loss:
                if (!(loss_probability >= 0.0 && loss_probability < 1.0))
                    throw InvalidSpec(prefix + ".loss_probability: must lie in [0, 1)");
                break;
            default:
                break;
        }
    }

    // Window membership with a tolerance so samples landing exactly on the
    // boundaries are included regardless of rounding in t = k * dt.
    bool active_at(double t) const { return t >= t_start - 1e-9 && t <= t_end + 1e-9; }
};

// Injected signal recovered from the two recorded streams: a = received - true.
inline MeasurementFrame attack_signal(const MeasurementFrame& true_frame,
                                      const MeasurementFrame& received_frame) {
    if (true_frame.values.size() != received_frame.values.size())
        throw DimensionMismatch("frames differ in dimension");
    return MeasurementFrame{true_frame.t, received_frame.values - true_frame.values};
}

// Union of targets of all specs active at time t; ground truth for scoring.
inline std::vector<int> attacked_sensors(const std::vector<AttackSpec>& specs, double t) {
    std::vector<int> out;
    for (const auto& spec : specs) {
        if (spec.active_at(t)) out.insert(out.end(), spec.targets.begin(), spec.targets.end());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// Stateful stream corruptor. Feed frames in order via apply(); the injector
// keeps the true-frame history needed by replay/delay/multiplicative kinds
// and per-spec RNG state for the seeded kinds. Specs are applied in order,
// each seeing the output of the previous one on its targets.
class AttackInjector {
public:
    explicit AttackInjector(std::vector<AttackSpec> specs) : specs_(std::move(specs)) {
        for (std::size_t i = 0; i < specs_.size(); ++i) {
            specs_[i].validate(-1, "attacks[" + std::to_string(i) + "]");
            auto& t = specs_[i].targets;
            std::sort(t.begin(), t.end());
            t.erase(std::unique(t.begin(), t.end()), t.end());
        }
        states_.resize(specs_.size());
        for (std::size_t i = 0; i < specs_.size(); ++i)
            states_[i].rng = SplitMix64(specs_[i].seed);
    }

    const std::vector<AttackSpec>& specs() const { return specs_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

    std::vector<int> active_targets(double t) const { return attacked_sensors(specs_, t); }

    Eigen::VectorXd apply(double t, const Eigen::VectorXd& y) {
        for (const auto& spec : specs_) {
            for (int s : spec.targets) {
                if (s >= y.size())
                    throw InvalidSpec("attack target " + std::to_string(s) +
                                      " out of range for stream dimension " +
                                      std::to_string(y.size()));
            }
        }
        const long k = static_cast<long>(times_.size());
        times_.push_back(t);
        history_.push_back(y);

        Eigen::VectorXd out = y;
        for (std::size_t i = 0; i < specs_.size(); ++i) {
            if (!specs_[i].active_at(t)) continue;
            apply_one(specs_[i], states_[i], t, k, y, out);
        }
        return out;
    }

private:
    struct SpecState {
        SplitMix64 rng{0};
        bool baseline_ready = false;
        Eigen::VectorXd baseline;        // multiplicative: per-target mean
        bool frozen_ready = false;
        Eigen::VectorXd frozen;          // freezing: per-target held values
        bool hold_ready = false;
        Eigen::VectorXd last_delivered;  // packet_loss: per-target
        bool warned_short_history = false;
    };

    double sample_interval(long k) const {
        if (k >= 1) return times_[1] - times_[0];
        return 0.0;
    }

    // True-frame lookup `shift` samples back, clamped to recorded history.
    const Eigen::VectorXd& lookback(const AttackSpec& spec, SpecState& st, long k, long shift) {
        long idx = k - shift;
        if (idx < 0) {
            if (!st.warned_short_history) {
                warnings_.push_back(std::string(attack_kind_name(spec.kind)) +
                                    " attack reaches before recorded history; holding first frame");
                st.warned_short_history = true;
            }
            idx = 0;
        }
        return history_[static_cast<std::size_t>(idx)];
    }

    void apply_one(const AttackSpec& spec, SpecState& st, double t, long k,
                   const Eigen::VectorXd& y_true, Eigen::VectorXd& out) {
        const double rel = t - spec.t_start;
        switch (spec.kind) {
            case AttackKind::step:
                for (int s : spec.targets) out[s] += spec.magnitude;
                break;
            case AttackKind::ramp:
                for (int s : spec.targets) out[s] += spec.rate * rel;
                break;
            case AttackKind::random:
                for (int s : spec.targets)
                    out[s] += st.rng.uniform(-spec.bound, spec.bound);
                break;
            case AttackKind::trapezoidal: {
                double a = 0.0;
                if (rel < spec.rise) {
                    a = spec.rise > 0.0 ? spec.peak * rel / spec.rise : spec.peak;
                } else if (rel < spec.rise + spec.hold) {
                    a = spec.peak;
                } else if (rel < spec.rise + spec.hold + spec.fall) {
                    a = spec.peak * (1.0 - (rel - spec.rise - spec.hold) / spec.fall);
                }
                for (int s : spec.targets) out[s] += a;
                break;
            }
            case AttackKind::multiplicative: {
                if (!st.baseline_ready) {
                    // Per-target mean of the true signal over the baseline
                    // window immediately before the attack starts.
                    st.baseline = Eigen::VectorXd::Zero(y_true.size());
                    long count = 0;
                    for (std::size_t i = 0; i < times_.size(); ++i) {
                        if (times_[i] >= spec.t_start - spec.baseline_window - 1e-9 &&
                            times_[i] < spec.t_start - 1e-9) {
                            st.baseline += history_[i];
                            ++count;
                        }
                    }
                    if (count > 0) {
                        st.baseline /= static_cast<double>(count);
                    } else {
                        st.baseline = y_true;
                        warnings_.push_back(
                            "multiplicative attack has no pre-attack history; "
                            "baseline set to first attacked frame");
                    }
                    st.baseline_ready = true;
                }
                for (int s : spec.targets)
                    out[s] += spec.gamma * rel * (y_true[s] - st.baseline[s]);
                break;
            }
            case AttackKind::replay: {
                const double dt = sample_interval(k);
                const long shift =
                    dt > 0.0 ? static_cast<long>(std::llround(spec.replay_offset / dt))
                             : (spec.replay_offset > 0.0 ? k + 1 : 0);
                const Eigen::VectorXd& past = lookback(spec, st, k, shift);
                for (int s : spec.targets) out[s] = past[s];
                break;
            }
            case AttackKind::time_delay: {
                const Eigen::VectorXd& past = lookback(spec, st, k, spec.delay_samples);
                for (int s : spec.targets) out[s] = past[s];
                break;
            }
            case AttackKind::packet_loss: {
                if (!st.hold_ready) {
                    // Nothing delivered yet: seed the hold register with the
                    // previous true frame, or the current one at stream start.
                    st.last_delivered = k > 0 ? history_[static_cast<std::size_t>(k - 1)] : y_true;
                    st.hold_ready = true;
                }
                for (int s : spec.targets) {
                    if (st.rng.uniform() < spec.loss_probability) {
                        out[s] = st.last_delivered[s];
                    } else {
                        st.last_delivered[s] = out[s];
                    }
                }
                break;
            }
            case AttackKind::freezing: {
                if (!st.frozen_ready) {
                    st.frozen = y_true;
                    st.frozen_ready = true;
                }
                for (int s : spec.targets) out[s] = st.frozen[s];
                break;
            }
        }
    }

    std::vector<AttackSpec> specs_;
    std::vector<SpecState> states_;
    std::vector<double> times_;
    std::vector<Eigen::VectorXd> history_;
    std::vector<std::string> warnings_;
};

// Batch form: corrupt a whole recorded stream with one or more specs.
inline StreamWindow apply_attacks(const StreamWindow& stream,
                                  const std::vector<AttackSpec>& specs) {
    AttackInjector injector(specs);
    Eigen::MatrixXd data(stream.dim(), stream.size());
    for (Eigen::Index i = 0; i < stream.size(); ++i)
        data.col(i) = injector.apply(stream.time_at(i), stream.data().col(i));
    return StreamWindow(stream.t0(), stream.dt(), std::move(data));
}

inline StreamWindow apply_attack(const StreamWindow& stream, const AttackSpec& spec) {
    return apply_attacks(stream, {spec});
}

}  // namespace koopdet

#endif  // KOOPDET_ATTACKS_HPP
