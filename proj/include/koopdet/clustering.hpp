// Sensor grouping from modal signatures.
//
// Mode magnitudes are normalized into one probability distribution per sensor
// (over modes), sensors are compared by symmetrized KL divergence, and the
// resulting Gaussian affinity graph is partitioned by normalized spectral
// clustering (symmetric Laplacian embedding + k-means).

#ifndef KOOPDET_CLUSTERING_HPP
#define KOOPDET_CLUSTERING_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "koopdet/errors.hpp"
#include "koopdet/koopman.hpp"
#include "koopdet/rng.hpp"

namespace koopdet {

// Row i is sensor i's distribution over the n_modes modes: every entry
// strictly positive, each row summing to 1.
struct NormalizedModeMatrix {
    Eigen::MatrixXd rows;  // p x n_modes, row-stochastic
    double epsilon = 0.0;  // smoothing that was applied
};

// Magnitude -> smoothing -> column normalization -> row normalization.
//
// Column normalization first makes the result invariant to per-mode scaling,
// so sensors are compared by how energy distributes across modes rather than
// by absolute mode strength. Epsilon smoothing keeps every entry positive for
// the KL divergences downstream. With epsilon = 0, degenerate all-zero
// columns/rows fall back to their uniform smoothing limit.
inline NormalizedModeMatrix normalize_modes(const ModeSet& modes, double epsilon = 1e-9) {
    if (epsilon < 0.0) throw InvalidArgument("epsilon must be >= 0");
    const Eigen::Index p = modes.modes.rows();
    const Eigen::Index m = modes.modes.cols();
    if (p < 1 || m < 1) throw DimensionMismatch("mode matrix is empty");

    Eigen::MatrixXd a = modes.modes.cwiseAbs();
    a.array() += epsilon;

    for (Eigen::Index j = 0; j < m; ++j) {
        const double s = a.col(j).sum();
        if (s > 0.0)
            a.col(j) /= s;
        else
            a.col(j).setConstant(1.0 / static_cast<double>(p));
    }
    for (Eigen::Index i = 0; i < p; ++i) {
        const double s = a.row(i).sum();
        if (s > 0.0)
            a.row(i) /= s;
        else
            a.row(i).setConstant(1.0 / static_cast<double>(m));
    }
    return NormalizedModeMatrix{std::move(a), epsilon};
}

// Kullback-Leibler divergence sum_i p_i ln(p_i / q_i), natural log.
// Entries must be strictly positive; a zero entry means upstream smoothing
// was skipped, which is a contract violation worth failing loudly on.
inline double kl_divergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
    if (p.size() != q.size())
        throw DimensionMismatch("KL divergence needs equal lengths, got " +
                                std::to_string(p.size()) + " and " + std::to_string(q.size()));
    double acc = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (!(p[i] > 0.0) || !(q[i] > 0.0))
            throw NonPositiveEntry("KL divergence requires strictly positive entries");
        acc += p[i] * std::log(p[i] / q[i]);
    }
    return acc;
}

inline double symmetrized_kl(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
    return 0.5 * (kl_divergence(p, q) + kl_divergence(q, p));
}

// All pairwise symmetrized divergences between sensor rows. Symmetric with a
// zero diagonal by construction.
inline Eigen::MatrixXd pairwise_divergences(const NormalizedModeMatrix& nm) {
    const Eigen::Index p = nm.rows.rows();
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index i = 0; i < p; ++i) {
        for (Eigen::Index j = i + 1; j < p; ++j) {
            const double v = symmetrized_kl(nm.rows.row(i).transpose(), nm.rows.row(j).transpose());
            d(i, j) = v;
            d(j, i) = v;
        }
    }
    return d;
}

struct AffinityMatrix {
    Eigen::MatrixXd weights;  // p x p symmetric, entries in (0, 1], unit diagonal
    double sigma = 1.0;       // Gaussian bandwidth that was used
};

namespace detail {

// Median of the strictly-upper-triangle entries (the p(p-1)/2 distinct
// pairwise distances). Even count averages the two middle values.
inline double offdiag_median(const Eigen::MatrixXd& d) {
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(d.rows() * (d.rows() - 1) / 2));
    for (Eigen::Index i = 0; i < d.rows(); ++i)
        for (Eigen::Index j = i + 1; j < d.cols(); ++j) v.push_back(d(i, j));
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

// Gaussian kernel on a precomputed divergence matrix. Bandwidth sigma is the
// median pairwise divergence (median heuristic); an all-identical input makes
// the median 0, in which case sigma falls back to 1 and all weights are 1.
inline AffinityMatrix affinity_from_divergences(const Eigen::MatrixXd& d) {
    if (d.rows() != d.cols() || d.rows() < 2)
        throw DimensionMismatch("divergence matrix must be square with size >= 2");
    double sigma = detail::offdiag_median(d);
    if (sigma == 0.0) sigma = 1.0;
    AffinityMatrix out;
    out.sigma = sigma;
    out.weights = (-d.array().square() / (2.0 * sigma * sigma)).exp();
    out.weights.diagonal().setOnes();
    return out;
}

inline AffinityMatrix build_affinity(const NormalizedModeMatrix& nm) {
    if (nm.rows.rows() < 2)
        throw DimensionMismatch("affinity needs at least 2 sensors");
    return affinity_from_divergences(pairwise_divergences(nm));
}

struct ClusterAssignment {
    std::vector<int> labels;    // length p, values in [0, k)
    Eigen::MatrixXd centroids;  // k x k embedding-space centroids (row per cluster)
    double inertia = 0.0;       // final within-cluster sum of squared distances
    bool empty_cluster_repaired = false;
};

namespace detail {

inline Eigen::Index nearest_centroid(const Eigen::MatrixXd& centroids,
                                     const Eigen::RowVectorXd& x) {
    Eigen::Index best = 0;
    double best_d = (x - centroids.row(0)).squaredNorm();
    for (Eigen::Index c = 1; c < centroids.rows(); ++c) {
        const double d = (x - centroids.row(c)).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

// Greedy k-means++ seeding followed by Lloyd iterations. Ties in the
// assignment go to the lowest centroid index; an iteration that empties a
// cluster reseeds it at the point farthest from its assigned centroid.
inline ClusterAssignment kmeans(const Eigen::MatrixXd& x, int k, SplitMix64& rng) {
    const Eigen::Index n = x.rows();
    ClusterAssignment out;
    out.labels.assign(static_cast<std::size_t>(n), 0);
    Eigen::MatrixXd centroids(k, x.cols());

    // k-means++: first centroid uniform, the rest distance-squared weighted.
    centroids.row(0) = x.row(static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(n))));
    Eigen::VectorXd d2(n);
    for (int c = 1; c < k; ++c) {
        for (Eigen::Index i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (int cc = 0; cc < c; ++cc)
                best = std::min(best, (x.row(i) - centroids.row(cc)).squaredNorm());
            d2[i] = best;
        }
        const double total = d2.sum();
        Eigen::Index pick;
        if (total > 0.0) {
            const double r = rng.uniform() * total;
            double cum = 0.0;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                cum += d2[i];
                if (cum > r) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(n)));
        }
        centroids.row(c) = x.row(pick);
    }

    constexpr int kMaxIters = 300;
    constexpr double kMoveTol = 1e-10;
    for (int it = 0; it < kMaxIters; ++it) {
        for (Eigen::Index i = 0; i < n; ++i)
            out.labels[static_cast<std::size_t>(i)] = static_cast<int>(nearest_centroid(centroids, x.row(i)));

        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (int l : out.labels) ++counts[static_cast<std::size_t>(l)];
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) continue;
            // Reseed the empty cluster at the point farthest from its centroid.
            Eigen::Index far = 0;
            double far_d = -1.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double d =
                    (x.row(i) - centroids.row(out.labels[static_cast<std::size_t>(i)])).squaredNorm();
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            --counts[static_cast<std::size_t>(out.labels[static_cast<std::size_t>(far)])];
            out.labels[static_cast<std::size_t>(far)] = c;
            ++counts[static_cast<std::size_t>(c)];
            centroids.row(c) = x.row(far);
            out.empty_cluster_repaired = true;
        }

        Eigen::MatrixXd next = Eigen::MatrixXd::Zero(k, x.cols());
        for (Eigen::Index i = 0; i < n; ++i)
            next.row(out.labels[static_cast<std::size_t>(i)]) += x.row(i);
        for (int c = 0; c < k; ++c) next.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);

        double moved = 0.0;
        for (int c = 0; c < k; ++c) moved = std::max(moved, (next.row(c) - centroids.row(c)).norm());
        centroids = next;
        if (moved < kMoveTol) break;
    }

    out.inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        out.inertia += (x.row(i) - centroids.row(out.labels[static_cast<std::size_t>(i)])).squaredNorm();
    out.centroids = std::move(centroids);
    return out;
}

}  // namespace detail

// Normalized spectral clustering on an affinity graph.
//
// Embeds sensors with the top-k eigenvectors of D^{-1/2} W D^{-1/2}, row
// normalizes the embedding, and k-means-clusters it with the given seed.
// Labels are canonical: clusters are numbered by their smallest member
// index, so identical partitions get identical label vectors.
inline ClusterAssignment spectral_cluster(const AffinityMatrix& aff, int k, std::uint64_t seed) {
    const Eigen::Index p = aff.weights.rows();
    if (aff.weights.cols() != p) throw DimensionMismatch("affinity matrix must be square");
    if (k < 2 || k > static_cast<int>(p))
        throw InvalidArgument("cluster count must satisfy 2 <= k <= sensor count");

    // Degrees are >= 1 (unit diagonal, nonnegative weights), so the scaling
    // below never divides by zero.
    const Eigen::VectorXd deg = aff.weights.rowwise().sum();
    const Eigen::VectorXd dinv_sqrt = deg.array().rsqrt();
    Eigen::MatrixXd lap = dinv_sqrt.asDiagonal() * aff.weights * dinv_sqrt.asDiagonal();
    lap = ((lap + lap.transpose()) * 0.5).eval();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lap);
    if (es.info() != Eigen::Success)
        throw EmbeddingFailure("Laplacian eigendecomposition did not converge");
    // Eigenvalues come back ascending; the last k columns span the embedding.
    Eigen::MatrixXd u = es.eigenvectors().rightCols(k);
    for (Eigen::Index i = 0; i < p; ++i) {
        const double norm = u.row(i).norm();
        if (norm > 0.0) u.row(i) /= norm;
    }

    SplitMix64 rng(seed);
    ClusterAssignment asg = detail::kmeans(u, k, rng);

    // Canonical numbering: cluster containing the lowest sensor index first.
    std::vector<int> remap(static_cast<std::size_t>(k), -1);
    int next = 0;
    for (int l : asg.labels) {
        if (remap[static_cast<std::size_t>(l)] == -1) remap[static_cast<std::size_t>(l)] = next++;
    }
    Eigen::MatrixXd reordered(k, asg.centroids.cols());
    for (int c = 0; c < k; ++c) reordered.row(remap[static_cast<std::size_t>(c)]) = asg.centroids.row(c);
    for (int& l : asg.labels) l = remap[static_cast<std::size_t>(l)];
    asg.centroids = std::move(reordered);
    return asg;
}

}  // namespace koopdet

#endif  // KOOPDET_CLUSTERING_HPP
