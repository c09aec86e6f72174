// Measurement frames and equispaced snapshot windows.

#ifndef KOOPDET_FRAME_HPP
#define KOOPDET_FRAME_HPP

#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "koopdet/errors.hpp"

namespace koopdet {

// One synchronized sensor snapshot: p sensor readings taken at time t.
struct MeasurementFrame {
    double t = 0.0;
    Eigen::VectorXd values;
};

// Tolerance for deciding whether a frame sequence is equispaced in time.
inline constexpr double kEquispacingTol = 1e-9;

// A contiguous run of equispaced frames, stored frame-per-column.
// Frame i sits at column i and carries timestamp t0 + i * dt.
class StreamWindow {
public:
    StreamWindow(double t0, double dt, Eigen::MatrixXd data)
        : t0_(t0), dt_(dt), data_(std::move(data)) {
        if (data_.cols() < 2)
            throw InsufficientHistory("stream window needs at least 2 frames, got " +
                                      std::to_string(data_.cols()));
        if (data_.rows() < 2)
            throw DimensionMismatch("stream window needs sensor dimension >= 2, got " +
                                    std::to_string(data_.rows()));
        if (!(dt_ > 0.0))
            throw InvalidArgument("stream window needs dt > 0");
    }

    // Validates that the frames agree in dimension and are equispaced.
    static StreamWindow from_frames(const std::vector<MeasurementFrame>& frames) {
        if (frames.size() < 2)
            throw InsufficientHistory("stream window needs at least 2 frames, got " +
                                      std::to_string(frames.size()));
        const Eigen::Index p = frames.front().values.size();
        const double dt = frames[1].t - frames[0].t;
        Eigen::MatrixXd data(p, static_cast<Eigen::Index>(frames.size()));
        for (std::size_t i = 0; i < frames.size(); ++i) {
            if (frames[i].values.size() != p)
                throw DimensionMismatch("frame " + std::to_string(i) + " has dimension " +
                                        std::to_string(frames[i].values.size()) +
                                        ", expected " + std::to_string(p));
            const double expected = frames[0].t + static_cast<double>(i) * dt;
            if (std::abs(frames[i].t - expected) > kEquispacingTol)
                throw InvalidArgument("frames are not equispaced at index " + std::to_string(i));
            data.col(static_cast<Eigen::Index>(i)) = frames[i].values;
        }
        return StreamWindow(frames.front().t, dt, std::move(data));
    }

    Eigen::Index size() const { return data_.cols(); }
    Eigen::Index dim() const { return data_.rows(); }
    double t0() const { return t0_; }
    double dt() const { return dt_; }
    double time_at(Eigen::Index i) const { return t0_ + static_cast<double>(i) * dt_; }

    const Eigen::MatrixXd& data() const { return data_; }

    MeasurementFrame frame(Eigen::Index i) const {
        return MeasurementFrame{time_at(i), data_.col(i)};
    }

    // Copy of frames [first, first + count).
    StreamWindow slice(Eigen::Index first, Eigen::Index count) const {
        if (first < 0 || count < 2 || first + count > size())
            throw InvalidArgument("invalid slice [" + std::to_string(first) + ", " +
                                  std::to_string(first + count) + ") of window with " +
                                  std::to_string(size()) + " frames");
        return StreamWindow(time_at(first), dt_, data_.middleCols(first, count));
    }

private:
    double t0_;
    double dt_;
    Eigen::MatrixXd data_;  // p x m, frame per column
};

}  // namespace koopdet

#endif  // KOOPDET_FRAME_HPP
