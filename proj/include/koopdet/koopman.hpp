// Data-driven estimation of a finite-dimensional linear transfer operator
// from snapshot windows, open-loop prediction with it, and decomposition of a
// window into spatial modes with complex growth/oscillation factors.
//
// The estimator solves K = C1 * pinv(C0) in the observable space, where
//   C1 = (1/n) * sum_k y_{k+1} y_k^T      (one-step cross-covariance)
//   C0 = (1/n) * sum_k y_k   y_k^T        (covariance)
// over the n snapshot pairs of the window. Observables are the raw sensor
// channels; no centering is applied, so constant offsets are part of the
// dynamics and a steady state is represented by a unit eigenvalue.

#ifndef KOOPDET_KOOPMAN_HPP
#define KOOPDET_KOOPMAN_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "koopdet/errors.hpp"
#include "koopdet/frame.hpp"

namespace koopdet {

struct KoopmanEstimate {
    Eigen::MatrixXd matrix;      // p x p one-step propagator
    int rank = 0;                // singular values retained in the pseudo-inverse
    double rcond_cutoff = 0.0;   // absolute truncation threshold that was applied
};

// Complex eigenvalues are paired with their conjugates when both moduli agree
// within this tolerance; below it an imaginary part counts as rounding noise.
inline constexpr double kConjugatePairTol = 1e-9;

namespace detail {

// Truncated pseudo-inverse of a symmetric positive semidefinite matrix.
// Eigenvalues below rcond * lambda_max are treated as zero. For an SPSD
// matrix the eigendecomposition coincides with the SVD, so this implements
// singular-value truncation while exploiting symmetry.
inline Eigen::MatrixXd spsd_pinverse(const Eigen::MatrixXd& a, double rcond, int* rank,
                                     double* cutoff_used) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    if (es.info() != Eigen::Success)
        throw Error("eigendecomposition of covariance failed");
    const Eigen::VectorXd& lam = es.eigenvalues();  // ascending
    const double lam_max = std::max(lam[lam.size() - 1], 0.0);
    const double cutoff = rcond * lam_max;
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(lam.size());
    int r = 0;
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
        if (lam[i] > cutoff && lam[i] > 0.0) {
            inv[i] = 1.0 / lam[i];
            ++r;
        }
    }
    *rank = r;
    *cutoff_used = cutoff;
    return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

// Least-squares fit of the one-step propagator on a snapshot window.
//
// An all-zero window carries no information; by default that yields the zero
// operator with rank 0, in strict mode it throws DegenerateWindow.
inline KoopmanEstimate estimate_koopman(const StreamWindow& window, double rcond = 1e-10,
                                        bool strict = false) {
    if (window.size() < 3)
        throw InsufficientHistory("operator estimation needs at least 3 frames, got " +
                                  std::to_string(window.size()));
    if (!(rcond > 0.0 && rcond < 1.0))
        throw InvalidArgument("rcond must lie in (0, 1)");

    const Eigen::Index p = window.dim();
    const Eigen::Index n = window.size() - 1;  // snapshot pairs
    const Eigen::MatrixXd& g = window.data();

    if (g.isZero(0.0)) {
        if (strict) throw DegenerateWindow("snapshot window is identically zero");
        return KoopmanEstimate{Eigen::MatrixXd::Zero(p, p), 0, 0.0};
    }

    const auto g0 = g.leftCols(n);
    const auto g1 = g.rightCols(n);
    const double inv_n = 1.0 / static_cast<double>(n);
    const Eigen::MatrixXd c1 = (g1 * g0.transpose()) * inv_n;
    Eigen::MatrixXd c0 = (g0 * g0.transpose()) * inv_n;
    c0 = ((c0 + c0.transpose()) * 0.5).eval();  // exact symmetry despite rounding

    KoopmanEstimate est;
    const Eigen::MatrixXd c0_pinv = detail::spsd_pinverse(c0, rcond, &est.rank, &est.rcond_cutoff);
    est.matrix = c1 * c0_pinv;
    return est;
}

// Open-loop rollout: m successive applications of the estimated propagator to
// the anchor frame. Iterated matrix-vector products, never an explicit matrix
// power. Predicted frame j carries timestamp anchor.t + j * dt.
inline std::vector<MeasurementFrame> predict(const KoopmanEstimate& est,
                                             const MeasurementFrame& anchor, int steps,
                                             double dt) {
    if (steps < 1) throw InvalidArgument("prediction horizon must be >= 1");
    if (anchor.values.size() != est.matrix.cols())
        throw DimensionMismatch("anchor dimension " + std::to_string(anchor.values.size()) +
                                " does not match operator size " +
                                std::to_string(est.matrix.cols()));
    std::vector<MeasurementFrame> out;
    out.reserve(static_cast<std::size_t>(steps));
    Eigen::VectorXd v = anchor.values;
    for (int j = 1; j <= steps; ++j) {
        v = est.matrix * v;
        if (!v.allFinite())
            throw NumericalBlowup("prediction diverged at step " + std::to_string(j));
        out.push_back(MeasurementFrame{anchor.t + static_cast<double>(j) * dt, v});
    }
    return out;
}

// Modal picture of one window: n_modes = window.size() - 1 columns, each a
// spatial shape scaled by its amplitude, plus the matching eigenvalue whose
// modulus/argument give per-step growth and oscillation.
struct ModeSet {
    Eigen::VectorXcd eigenvalues;  // length n_modes, zero-padded past the kept modes
    Eigen::MatrixXcd modes;        // p x n_modes, columns aligned with eigenvalues
    double residual = 0.0;         // worst relative reconstruction error over the window
};

namespace detail {

// Reconstruction check: worst-case || g_k - sum_j lambda_j^k v_j ||
// relative to the largest frame norm. Powers accumulate iteratively.
inline double reconstruction_residual(const Eigen::MatrixXd& g, const Eigen::VectorXcd& lam,
                                      const Eigen::MatrixXcd& modes) {
    double scale = 0.0;
    for (Eigen::Index k = 0; k < g.cols(); ++k) scale = std::max(scale, g.col(k).norm());
    if (scale == 0.0) return 0.0;

    Eigen::VectorXcd coef = Eigen::VectorXcd::Ones(lam.size());
    double worst = 0.0;
    for (Eigen::Index k = 0; k < g.cols(); ++k) {
        Eigen::VectorXcd recon = modes * coef;
        const double err = (recon - g.col(k).cast<std::complex<double>>()).norm();
        worst = std::max(worst, err / scale);
        coef = coef.cwiseProduct(lam);
    }
    return worst;
}

}  // namespace detail

// Eigendecomposition of the window-local propagator, with per-mode amplitudes
// fitted so the modes reproduce the first frame: g_0 = sum_j v_j.
//
// Output contract:
//  - exactly window.size() - 1 columns, at most min(p, n_modes) of them
//    nonzero, the rest zero-padded (eigenvalue 0);
//  - columns sorted by descending mode energy ||v_j||_2, ties broken by
//    descending |lambda_j|, then by descending arg(lambda_j), so conjugate
//    partners sit adjacent with the positive-frequency member first;
//  - on real input, complex eigenvalues come in exact conjugate pairs with
//    conjugate mode columns.
//
// An all-zero window yields all-zero modes with residual 0.
inline ModeSet decompose_modes(const StreamWindow& window, double rcond = 1e-10) {
    if (window.size() < 3)
        throw InsufficientHistory("mode decomposition needs at least 3 frames, got " +
                                  std::to_string(window.size()));
    const Eigen::Index p = window.dim();
    const Eigen::Index n_modes = window.size() - 1;

    ModeSet out;
    out.eigenvalues = Eigen::VectorXcd::Zero(n_modes);
    out.modes = Eigen::MatrixXcd::Zero(p, n_modes);
    if (window.data().isZero(0.0)) return out;

    const KoopmanEstimate local = estimate_koopman(window, rcond);
    Eigen::EigenSolver<Eigen::MatrixXd> es(local.matrix);
    if (es.info() != Eigen::Success) throw Error("propagator eigendecomposition failed");
    Eigen::VectorXcd lam = es.eigenvalues();
    Eigen::MatrixXcd vecs = es.eigenvectors();

    // Amplitudes: minimum-norm least-squares fit of the first frame in the
    // eigenvector basis.
    const Eigen::VectorXcd g0 = window.data().col(0).cast<std::complex<double>>();
    const Eigen::VectorXcd amp = vecs.completeOrthogonalDecomposition().solve(g0);
    Eigen::MatrixXcd cand(p, p);
    for (Eigen::Index j = 0; j < p; ++j) cand.col(j) = amp[j] * vecs.col(j);

    // Pair eigenvalues with their conjugates and symmetrize each pair so the
    // two members are bitwise conjugate. Eigen's real EigenSolver emits pairs
    // adjacently, but the pairing below does not rely on that.
    std::vector<int> partner(static_cast<std::size_t>(p), -1);
    for (Eigen::Index j = 0; j < p; ++j) {
        if (partner[j] != -1 || std::abs(lam[j].imag()) <= kConjugatePairTol) continue;
        for (Eigen::Index i = j + 1; i < p; ++i) {
            if (partner[i] != -1) continue;
            if (std::abs(lam[i] - std::conj(lam[j])) <= kConjugatePairTol) {
                partner[j] = static_cast<int>(i);
                partner[i] = static_cast<int>(j);
                // Positive-imaginary member is the reference copy.
                const Eigen::Index ref = lam[j].imag() > 0.0 ? j : i;
                const Eigen::Index mir = ref == j ? i : j;
                lam[mir] = std::conj(lam[ref]);
                cand.col(mir) = cand.col(ref).conjugate();
                break;
            }
        }
    }
    // Rounding-level imaginary parts on unpaired eigenvalues are noise.
    for (Eigen::Index j = 0; j < p; ++j) {
        if (partner[j] == -1 && lam[j].imag() != 0.0 &&
            std::abs(lam[j].imag()) <= kConjugatePairTol) {
            lam[j] = std::complex<double>(lam[j].real(), 0.0);
            cand.col(j) = cand.col(j).real().cast<std::complex<double>>();
        }
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(p));
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> energy(static_cast<std::size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) energy[static_cast<std::size_t>(j)] = cand.col(j).norm();
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        const double ea = energy[static_cast<std::size_t>(a)];
        const double eb = energy[static_cast<std::size_t>(b)];
        if (ea != eb) return ea > eb;
        const double ma = std::abs(lam[a]);
        const double mb = std::abs(lam[b]);
        if (ma != mb) return ma > mb;
        return std::arg(lam[a]) > std::arg(lam[b]);
    });

    // Keep the top min(p, n_modes) columns. If the cut would separate a
    // conjugate pair, drop the widowed member too rather than keep half a
    // pair; the pad stays zero.
    Eigen::Index keep = std::min<Eigen::Index>(p, n_modes);
    if (keep < p) {
        const Eigen::Index last = order[static_cast<std::size_t>(keep - 1)];
        const Eigen::Index first_cut = order[static_cast<std::size_t>(keep)];
        if (partner[static_cast<std::size_t>(last)] == static_cast<int>(first_cut)) --keep;
    }
    for (Eigen::Index j = 0; j < keep; ++j) {
        const Eigen::Index src = order[static_cast<std::size_t>(j)];
        out.eigenvalues[j] = lam[src];
        out.modes.col(j) = cand.col(src);
    }

    out.residual = detail::reconstruction_residual(window.data(), out.eigenvalues, out.modes);
    return out;
}

}  // namespace koopdet

#endif  // KOOPDET_KOOPMAN_HPP
