// Sliding-window anomaly detector over synchronized sensor streams.
//
// Per step, the newest n + 1 frames split into a learning window (first
// n - n_tilde frames) and a prediction window (last n_tilde + 1 frames). A
// propagator fitted on the learning window is rolled forward through the
// prediction window; the prediction errors are decomposed into modes, sensors
// are clustered by their modal signatures, and a large inter/intra-cluster
// divergence ratio flags the minority cluster as attacked. Natural transients
// hit all coupled sensors with similar signatures, while injected data has no
// dynamical reason to match, which is what the ratio measures.

#ifndef KOOPDET_DETECTOR_HPP
#define KOOPDET_DETECTOR_HPP

#include <algorithm>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "koopdet/clustering.hpp"
#include "koopdet/errors.hpp"
#include "koopdet/frame.hpp"
#include "koopdet/koopman.hpp"

namespace koopdet {

struct WindowConfig {
    int n = 120;         // history length; each step analyzes n + 1 frames
    int n_tilde = 12;     // prediction-window length and mode count
    double rcond = 1e-10;
    double epsilon = 1e-9;
    int k = 2;           // cluster count
    double tau = 3.0;    // attack threshold on the divergence ratio
    int min_flag_persistence = 2;  // consecutive raw flags before a sensor is reported

    // Throws ValidationError naming the offending field. The optional sensor
    // count enables the k <= p check when the stream dimension is known.
    void validate(int sensor_count = -1, const std::string& prefix = "detector") const {
        if (n < 5) throw ValidationError(prefix + ".n: must be >= 5");
        if (n_tilde < 2) throw ValidationError(prefix + ".n_tilde: must be >= 2");
        if (n - n_tilde < 3)
            throw ValidationError(prefix + ".n_tilde: learning window n - n_tilde must be >= 3");
        if (!(rcond > 0.0 && rcond < 1.0))
            throw ValidationError(prefix + ".rcond: must lie in (0, 1)");
        if (!(epsilon > 0.0)) throw ValidationError(prefix + ".epsilon: must be > 0");
        if (k < 2) throw ValidationError(prefix + ".k: must be >= 2");
        if (sensor_count >= 0 && k > sensor_count)
            throw ValidationError(prefix + ".k: exceeds sensor count " +
                                  std::to_string(sensor_count));
        if (!(tau > 1.0)) throw ValidationError(prefix + ".tau: must be > 1");
        if (min_flag_persistence < 1)
            throw ValidationError(prefix + ".min_flag_persistence: must be >= 1");
    }
};

struct DetectionReport {
    long step = -1;       // stream index of the newest frame in the window
    double t = 0.0;       // its timestamp
    bool attack = false;
    double separation = 0.0;          // inter/intra cluster divergence ratio
    std::vector<int> labels;          // cluster label per sensor
    std::vector<int> flagged;         // ascending sensor indices reported attacked
    double modes_residual = 0.0;      // reconstruction residual of the error modes
    Eigen::MatrixXd mode_rows;        // per-sensor distributions over error modes
};

// Elementwise difference received - predicted over the prediction window.
// received holds n_tilde + 1 frames; predicted holds the n_tilde + 1 rollout
// frames aligned with them.
inline StreamWindow compute_error_sequence(const StreamWindow& received,
                                           const std::vector<MeasurementFrame>& predicted) {
    if (static_cast<Eigen::Index>(predicted.size()) != received.size())
        throw DimensionMismatch("prediction count " + std::to_string(predicted.size()) +
                                " does not match window length " +
                                std::to_string(received.size()));
    Eigen::MatrixXd err(received.dim(), received.size());
    for (Eigen::Index i = 0; i < received.size(); ++i) {
        const auto& f = predicted[static_cast<std::size_t>(i)];
        if (f.values.size() != received.dim())
            throw DimensionMismatch("predicted frame dimension mismatch at index " +
                                    std::to_string(i));
        err.col(i) = received.data().col(i) - f.values;
    }
    return StreamWindow(received.t0(), received.dt(), std::move(err));
}

// Divergence floor for the intra-cluster mean, so a perfectly tight cluster
// (zero intra divergence) yields a huge but finite separation ratio.
inline constexpr double kIntraFloor = 1e-12;

// Error windows whose largest entry sits at numerical-noise scale carry no
// evidence either way: the divergence ratio is scale-invariant, so roundoff
// alone can push it past any threshold. Below this floor the separation is
// reported as zero and the verdict is always clean. The same floor decides
// when a learning window is numerically silent: fitting roundoff residue
// yields operators with astronomical norms and divergent rollouts.
inline constexpr double kErrorFloor = 1e-9;

// A rollout whose worst error exceeds the incoming signal by this factor
// means the fitted operator diverged; the step falls back to the zero
// operator, which turns the error sequence into the raw incoming window.
inline constexpr double kFitDivergenceFactor = 1e3;

// One detection pass over a window of exactly n + 1 frames. Reports the raw
// (un-debounced) verdict; stream-level persistence filtering lives in
// StreamDetector.
inline DetectionReport detect_step(const StreamWindow& history, const WindowConfig& cfg,
                                   std::uint64_t seed) {
    cfg.validate(static_cast<int>(history.dim()));
    if (history.size() != cfg.n + 1)
        throw InsufficientHistory("detector window needs exactly n + 1 = " +
                                  std::to_string(cfg.n + 1) + " frames, got " +
                                  std::to_string(history.size()));

    const Eigen::Index learn_len = cfg.n - cfg.n_tilde;       // frames before prediction starts
    const StreamWindow learning = history.slice(0, learn_len);
    const StreamWindow incoming = history.slice(learn_len, cfg.n_tilde + 1);
    const Eigen::Index p = history.dim();

    // Rollout is anchored at the last learning frame, so prediction m lines
    // up with incoming frame m - 1. A numerically silent learning window gets
    // the zero operator outright; a fit whose rollout blows up relative to
    // the incoming signal is discarded the same way. Under the zero operator
    // the error sequence is simply the incoming window itself, so genuine
    // injections on top of silence stay visible.
    const KoopmanEstimate zero_op{Eigen::MatrixXd::Zero(p, p), 0, 0.0};
    const bool silent_learning =
        learning.data().cwiseAbs().maxCoeff() <= kErrorFloor;
    KoopmanEstimate op = silent_learning ? zero_op : estimate_koopman(learning, cfg.rcond);

    auto roll_errors = [&](const KoopmanEstimate& k) {
        return compute_error_sequence(
            incoming, predict(k, learning.frame(learn_len - 1), cfg.n_tilde + 1, history.dt()));
    };
    StreamWindow err = [&] {
        if (op.rank == 0) return roll_errors(zero_op);
        try {
            StreamWindow e = roll_errors(op);
            const double incoming_scale = incoming.data().cwiseAbs().maxCoeff();
            if (e.data().cwiseAbs().maxCoeff() <= kFitDivergenceFactor * incoming_scale)
                return e;
        } catch (const NumericalBlowup&) {
        }
        op = zero_op;
        return roll_errors(zero_op);
    }();

    const double err_scale = err.data().cwiseAbs().maxCoeff();
    if (err_scale <= kErrorFloor) {
        // Nothing to analyze: report a clean step with placeholder grouping.
        DetectionReport rep;
        rep.t = history.time_at(history.size() - 1);
        rep.labels.assign(static_cast<std::size_t>(p), 0);
        rep.mode_rows =
            Eigen::MatrixXd::Constant(p, cfg.n_tilde, 1.0 / static_cast<double>(cfg.n_tilde));
        return rep;
    }

    const ModeSet modes = decompose_modes(err, cfg.rcond);
    const NormalizedModeMatrix nm = normalize_modes(modes, cfg.epsilon);
    const Eigen::MatrixXd div = pairwise_divergences(nm);
    const AffinityMatrix aff = affinity_from_divergences(div);
    const ClusterAssignment asg = spectral_cluster(aff, cfg.k, seed);

    double inter = 0.0, intra = 0.0;
    long inter_n = 0, intra_n = 0;
    for (Eigen::Index i = 0; i < p; ++i) {
        for (Eigen::Index j = i + 1; j < p; ++j) {
            if (asg.labels[static_cast<std::size_t>(i)] == asg.labels[static_cast<std::size_t>(j)]) {
                intra += div(i, j);
                ++intra_n;
            } else {
                inter += div(i, j);
                ++inter_n;
            }
        }
    }
    const double intra_mean = intra_n > 0 ? intra / static_cast<double>(intra_n) : 0.0;
    const double inter_mean = inter_n > 0 ? inter / static_cast<double>(inter_n) : 0.0;

    DetectionReport rep;
    rep.t = history.time_at(history.size() - 1);
    rep.separation = inter_mean / std::max(intra_mean, kIntraFloor);
    rep.attack = rep.separation >= cfg.tau;
    rep.labels = asg.labels;
    rep.modes_residual = modes.residual;
    rep.mode_rows = nm.rows;

    if (rep.attack) {
        // The attacked set is the minority cluster: injections are assumed to
        // hit fewer than half the sensors. Size ties go to the cluster whose
        // rows deviate most from the all-sensor mean signature.
        std::vector<int> sizes(static_cast<std::size_t>(cfg.k), 0);
        for (int l : asg.labels) ++sizes[static_cast<std::size_t>(l)];
        const int min_size = *std::min_element(sizes.begin(), sizes.end());
        int pick = -1;
        double pick_score = -1.0;
        const Eigen::RowVectorXd mean_row = nm.rows.colwise().mean();
        for (int c = 0; c < cfg.k; ++c) {
            if (sizes[static_cast<std::size_t>(c)] != min_size) continue;
            double score = 0.0;
            for (Eigen::Index i = 0; i < p; ++i) {
                if (asg.labels[static_cast<std::size_t>(i)] == c)
                    score += symmetrized_kl(nm.rows.row(i).transpose(), mean_row.transpose());
            }
            score /= static_cast<double>(min_size);
            if (score > pick_score) {
                pick_score = score;
                pick = c;
            }
        }
        for (Eigen::Index i = 0; i < p; ++i)
            if (asg.labels[static_cast<std::size_t>(i)] == pick)
                rep.flagged.push_back(static_cast<int>(i));
    }
    return rep;
}

// Streaming wrapper: buffers frames, runs detect_step once the buffer holds
// n + 1 frames, and debounces per-sensor flags so a sensor is reported only
// after min_flag_persistence consecutive raw flags. The stream-level attack
// verdict is "some sensor survived debouncing", which keeps the flagged set
// nonempty exactly when attack is true.
class StreamDetector {
public:
    StreamDetector(WindowConfig cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
        cfg_.validate();
    }

    // Feeds one frame; returns a report once enough history has accumulated.
    std::optional<DetectionReport> push(const MeasurementFrame& frame) {
        if (p_ < 0) {
            p_ = static_cast<int>(frame.values.size());
            cfg_.validate(p_);
            streaks_.assign(static_cast<std::size_t>(p_), 0);
        } else if (frame.values.size() != p_) {
            throw DimensionMismatch("frame dimension changed mid-stream");
        }
        if (buffer_.size() >= 2) {
            const double dt = buffer_[1].t - buffer_[0].t;
            if (std::abs(frame.t - (buffer_.back().t + dt)) > kEquispacingTol)
                throw InvalidArgument("stream frames are not equispaced at t = " +
                                      std::to_string(frame.t));
        }
        buffer_.push_back(frame);
        if (buffer_.size() > static_cast<std::size_t>(cfg_.n + 1)) buffer_.pop_front();
        const long step = next_step_++;
        if (buffer_.size() < static_cast<std::size_t>(cfg_.n + 1)) return std::nullopt;

        Eigen::MatrixXd data(p_, cfg_.n + 1);
        for (int i = 0; i <= cfg_.n; ++i) data.col(i) = buffer_[static_cast<std::size_t>(i)].values;
        const StreamWindow window(buffer_.front().t, buffer_[1].t - buffer_[0].t, std::move(data));

        DetectionReport rep = detect_step(window, cfg_, seed_);
        rep.step = step;

        std::vector<int> debounced;
        for (int s = 0; s < p_; ++s) {
            const bool raw = rep.attack &&
                             std::binary_search(rep.flagged.begin(), rep.flagged.end(), s);
            int& streak = streaks_[static_cast<std::size_t>(s)];
            streak = raw ? streak + 1 : 0;
            if (streak >= cfg_.min_flag_persistence) debounced.push_back(s);
        }
        rep.flagged = std::move(debounced);
        rep.attack = !rep.flagged.empty();
        return rep;
    }

    const WindowConfig& config() const { return cfg_; }

private:
    WindowConfig cfg_;
    std::uint64_t seed_;
    int p_ = -1;
    std::deque<MeasurementFrame> buffer_;
    std::vector<int> streaks_;
    long next_step_ = 0;
};

// Batch run over a full stream; one report per step with full history.
inline std::vector<DetectionReport> detect_stream(const StreamWindow& stream,
                                                  const WindowConfig& cfg, std::uint64_t seed) {
    StreamDetector det(cfg, seed);
    std::vector<DetectionReport> reports;
    if (stream.size() > cfg.n)
        reports.reserve(static_cast<std::size_t>(stream.size() - cfg.n));
    for (Eigen::Index i = 0; i < stream.size(); ++i) {
        if (auto rep = det.push(stream.frame(i))) reports.push_back(std::move(*rep));
    }
    return reports;
}

}  // namespace koopdet

#endif  // KOOPDET_DETECTOR_HPP
