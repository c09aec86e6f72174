// Desk-scale closed-loop power network simulator.
//
// Classical swing-equation dynamics on an N-bus network:
//   d(delta_i)/dt = omega_i
//   M_i d(omega_i)/dt = P_i(t) - D_i omega_i - sum_j B_ij sin(delta_i - delta_j) + u_i
// with proportional output feedback u = -gain * (received frequency channels)
// closing the loop through the measurement stream, so corrupted measurements
// feed back into the plant. Integration is fixed-step RK4 at the sampling
// interval. Measurements are deviations from the nominal equilibrium, so the
// operating point sits at the origin of the observable space.

#ifndef KOOPDET_GRIDSIM_HPP
#define KOOPDET_GRIDSIM_HPP

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "koopdet/errors.hpp"
#include "koopdet/frame.hpp"
#include "koopdet/rng.hpp"

namespace koopdet {

struct NetworkModel {
    Eigen::MatrixXd susceptance;  // N x N symmetric, per-unit
    Eigen::VectorXd inertia;      // M_i > 0, s^2
    Eigen::VectorXd damping;      // D_i >= 0, s
    Eigen::VectorXd injection;    // P_i, per-unit; must balance to ~0

    Eigen::Index size() const { return inertia.size(); }

    void validate() const {
        const Eigen::Index n = inertia.size();
        if (n < 2) throw ValidationError("network: needs at least 2 buses");
        if (susceptance.rows() != n || susceptance.cols() != n)
            throw ValidationError("network.susceptance: must be " + std::to_string(n) + "x" +
                                  std::to_string(n));
        if (!susceptance.isApprox(susceptance.transpose(), 1e-12))
            throw ValidationError("network.susceptance: must be symmetric");
        if (damping.size() != n) throw ValidationError("network.damping: length mismatch");
        if (injection.size() != n) throw ValidationError("network.injection: length mismatch");
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!(inertia[i] > 0.0))
                throw ValidationError("network.inertia: entry " + std::to_string(i) +
                                      " must be > 0");
            if (damping[i] < 0.0)
                throw ValidationError("network.damping: entry " + std::to_string(i) +
                                      " must be >= 0");
        }
        if (std::abs(injection.sum()) > 1e-9)
            throw ValidationError("network.injection: must sum to zero, got " +
                                  std::to_string(injection.sum()));
    }
};

struct SimState {
    Eigen::VectorXd angle;  // rad
    Eigen::VectorXd freq;   // rad/s deviation from synchronous
};

struct ControllerConfig {
    double gain = 0.0;  // per-unit per rad/s, applied to frequency channels
    bool enabled = true;
};

// Permanent step change of net injection at one bus.
struct EventSpec {
    int bus = 0;
    double t_start = 0.0;
    double delta_p = 0.0;  // per-unit
};

// Raw observable map: y = [angle; freq]. States are expected to already be
// deviations from the operating point, making this linear with g(0) = 0.
inline MeasurementFrame measure(const SimState& state, double t = 0.0) {
    Eigen::VectorXd y(state.angle.size() + state.freq.size());
    y << state.angle, state.freq;
    return MeasurementFrame{t, std::move(y)};
}

// State magnitude beyond which integration is aborted as diverged.
inline constexpr double kBlowupLimit = 1e6;

namespace detail {

inline Eigen::VectorXd effective_injection(const NetworkModel& model,
                                           const std::vector<EventSpec>& events, double t) {
    Eigen::VectorXd p = model.injection;
    for (const auto& ev : events) {
        if (t >= ev.t_start - 1e-12) p[ev.bus] += ev.delta_p;
    }
    return p;
}

// Right-hand side of the swing dynamics with a held control input u.
inline void swing_rhs(const NetworkModel& model, const Eigen::VectorXd& p_eff,
                      const Eigen::VectorXd& u, const Eigen::VectorXd& angle,
                      const Eigen::VectorXd& freq, Eigen::VectorXd& d_angle,
                      Eigen::VectorXd& d_freq) {
    const Eigen::Index n = model.size();
    d_angle = freq;
    d_freq.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double flow = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            const double b = model.susceptance(i, j);
            if (b != 0.0) flow += b * std::sin(angle[i] - angle[j]);
        }
        d_freq[i] = (p_eff[i] - model.damping[i] * freq[i] - flow + u[i]) / model.inertia[i];
    }
}

// Static observable channels appended when magnitude sensing is enabled:
// |V|_i = 1 + 0.05 cos(angle_i), a proxy that tracks angle swings without
// modeling voltage dynamics.
inline Eigen::VectorXd magnitude_proxy(const Eigen::VectorXd& angle) {
    return 1.0 + 0.05 * angle.array().cos();
}

}  // namespace detail

// One RK4 step of length dt starting at time t. The received frame is the
// possibly-corrupted measurement; its frequency channels drive the feedback
// input, held constant across the step. Events act through P_i(t) evaluated
// at each integration stage.
inline SimState step(const NetworkModel& model, const SimState& state,
                     const ControllerConfig& controller, const MeasurementFrame& received,
                     const std::vector<EventSpec>& events, double t, double dt) {
    const Eigen::Index n = model.size();
    if (state.angle.size() != n || state.freq.size() != n)
        throw DimensionMismatch("state dimension does not match network size");

    Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
    if (controller.enabled && controller.gain != 0.0) {
        if (received.values.size() < 2 * n)
            throw DimensionMismatch("received frame has " + std::to_string(received.values.size()) +
                                    " channels, need at least " + std::to_string(2 * n));
        u = -controller.gain * received.values.segment(n, n);
    }

    Eigen::VectorXd ka1, kf1, ka2, kf2, ka3, kf3, ka4, kf4;
    const Eigen::VectorXd p1 = detail::effective_injection(model, events, t);
    const Eigen::VectorXd p2 = detail::effective_injection(model, events, t + 0.5 * dt);
    const Eigen::VectorXd p4 = detail::effective_injection(model, events, t + dt);

    detail::swing_rhs(model, p1, u, state.angle, state.freq, ka1, kf1);
    detail::swing_rhs(model, p2, u, state.angle + 0.5 * dt * ka1, state.freq + 0.5 * dt * kf1,
                      ka2, kf2);
    detail::swing_rhs(model, p2, u, state.angle + 0.5 * dt * ka2, state.freq + 0.5 * dt * kf2,
                      ka3, kf3);
    detail::swing_rhs(model, p4, u, state.angle + dt * ka3, state.freq + dt * kf3, ka4, kf4);

    SimState next;
    next.angle = state.angle + (dt / 6.0) * (ka1 + 2.0 * ka2 + 2.0 * ka3 + ka4);
    next.freq = state.freq + (dt / 6.0) * (kf1 + 2.0 * kf2 + 2.0 * kf3 + kf4);

    const double worst =
        std::max(next.angle.cwiseAbs().maxCoeff(), next.freq.cwiseAbs().maxCoeff());
    if (!std::isfinite(worst) || worst > kBlowupLimit)
        throw NumericalBlowup("simulation state exceeded " + std::to_string(kBlowupLimit) +
                              " at t = " + std::to_string(t + dt) + " s");
    return next;
}

// Newton solve for the synchronous equilibrium: freq = 0 and nodal power
// balance. Bus 0 fixes the angle reference; the dropped balance equation is
// redundant because injections sum to zero.
inline SimState solve_equilibrium(const NetworkModel& model) {
    model.validate();
    const Eigen::Index n = model.size();
    Eigen::VectorXd angle = Eigen::VectorXd::Zero(n);

    constexpr int kMaxIter = 80;
    constexpr double kTol = 1e-12;
    for (int it = 0; it < kMaxIter; ++it) {
        Eigen::VectorXd res(n - 1);
        Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n - 1, n - 1);
        for (Eigen::Index i = 1; i < n; ++i) {
            double flow = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j == i) continue;
                const double b = model.susceptance(i, j);
                if (b == 0.0) continue;
                flow += b * std::sin(angle[i] - angle[j]);
                const double c = b * std::cos(angle[i] - angle[j]);
                jac(i - 1, i - 1) -= c;
                if (j >= 1) jac(i - 1, j - 1) += c;
            }
            res[i - 1] = model.injection[i] - flow;
        }
        if (res.lpNorm<Eigen::Infinity>() < kTol) {
            return SimState{std::move(angle), Eigen::VectorXd::Zero(n)};
        }
        // Newton update: jac * delta = -res, with jac = d(res)/d(angle).
        const Eigen::VectorXd delta = jac.partialPivLu().solve(-res);
        if (!delta.allFinite())
            throw Error("equilibrium solve produced a singular Newton step");
        angle.segment(1, n - 1) += delta;
    }
    throw Error("equilibrium solve did not converge; network may lack a stable operating point");
}

// Energy function of the open-loop swing dynamics; non-increasing along
// trajectories when damping is positive. Used by validation harnesses.
inline double swing_energy(const NetworkModel& model, const SimState& state) {
    const Eigen::Index n = model.size();
    double e = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        e += 0.5 * model.inertia[i] * state.freq[i] * state.freq[i];
        e -= model.injection[i] * state.angle[i];
        for (Eigen::Index j = i + 1; j < n; ++j)
            e -= model.susceptance(i, j) * std::cos(state.angle[i] - state.angle[j]);
    }
    return e;
}

// Measurement-stream transform applied between plant and controller/detector.
// Receives (t, sample index, true observation), returns what the loop sees.
using AttackHook = std::function<Eigen::VectorXd(double, long, const Eigen::VectorXd&)>;

struct SimOptions {
    double noise_std = 0.0;              // per-step Gaussian kick on freq
    std::uint64_t seed = 0;
    bool include_magnitude = false;      // append |V| proxy channels (p = 3N)
    std::optional<SimState> initial_state;  // absolute; defaults to equilibrium
};

struct SimResult {
    StreamWindow true_stream;      // y, deviations from nominal
    StreamWindow received_stream;  // what the controller/detector saw
    SimState nominal;              // solved equilibrium
    SimState final_state;          // absolute state at t_end
};

// Closed-loop run over [0, t_end]: measure, corrupt, feed back, integrate.
// Both the clean and the corrupted stream are recorded; they are identical
// when the hook is null. Process noise perturbs frequencies after each step.
inline SimResult simulate(const NetworkModel& model, const ControllerConfig& controller,
                          const std::vector<EventSpec>& events, const AttackHook& attack_hook,
                          double t_end, double dt, const SimOptions& opts = {}) {
    model.validate();
    if (!(dt > 0.0)) throw InvalidArgument("dt must be > 0");
    if (!(t_end > 0.0)) throw InvalidArgument("t_end must be > 0");
    for (const auto& ev : events) {
        if (ev.bus < 0 || ev.bus >= model.size())
            throw ValidationError("events.bus: index " + std::to_string(ev.bus) +
                                  " out of range");
    }
    const long n_frames = static_cast<long>(std::floor(t_end / dt + 1e-9)) + 1;
    if (n_frames < 2) throw InvalidArgument("t_end must cover at least one step");

    const SimState nominal = solve_equilibrium(model);
    const Eigen::VectorXd nominal_mag = detail::magnitude_proxy(nominal.angle);
    SimState state = opts.initial_state ? *opts.initial_state : nominal;
    if (state.angle.size() != model.size() || state.freq.size() != model.size())
        throw DimensionMismatch("initial state dimension does not match network size");

    const Eigen::Index n = model.size();
    const Eigen::Index p = opts.include_magnitude ? 3 * n : 2 * n;
    Eigen::MatrixXd true_data(p, n_frames);
    Eigen::MatrixXd received_data(p, n_frames);
    SplitMix64 rng(opts.seed);

    for (long k = 0; k < n_frames; ++k) {
        const double t = static_cast<double>(k) * dt;
        Eigen::VectorXd y(p);
        y.segment(0, n) = state.angle - nominal.angle;
        y.segment(n, n) = state.freq - nominal.freq;
        if (opts.include_magnitude)
            y.segment(2 * n, n) = detail::magnitude_proxy(state.angle) - nominal_mag;

        Eigen::VectorXd received = attack_hook ? attack_hook(t, k, y) : y;
        if (received.size() != p)
            throw DimensionMismatch("attack hook changed the frame dimension");
        true_data.col(k) = y;
        received_data.col(k) = received;

        if (k + 1 < n_frames) {
            state = step(model, state, controller, MeasurementFrame{t, received}, events, t, dt);
            if (opts.noise_std > 0.0) state.freq += opts.noise_std * rng.normal_vector(n);
        }
    }

    return SimResult{StreamWindow(0.0, dt, std::move(true_data)),
                     StreamWindow(0.0, dt, std::move(received_data)), nominal, state};
}

}  // namespace koopdet

#endif  // KOOPDET_GRIDSIM_HPP
