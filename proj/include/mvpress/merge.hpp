#pragma once

// Stage-2 merging: Ward agglomeration on cosine distance with centroid
// representatives, plus the 1D and 2D average-pooling baselines.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mvpress/error.hpp"
#include "mvpress/model.hpp"

namespace mvpress {

/// Cluster assignment. Labels are canonical: the smallest member index of
/// cluster c increases with c.
struct Partition {
    std::vector<std::uint32_t> labels;
    std::uint32_t n_clusters = 0;

    static Partition identity(std::size_t n) {
        Partition p;
        p.labels.resize(n);
        std::iota(p.labels.begin(), p.labels.end(), 0u);
        p.n_clusters = static_cast<std::uint32_t>(n);
        return p;
    }

    /// Relabels an arbitrary assignment into canonical order.
    static Partition canonical(std::span<const std::uint32_t> raw) {
        Partition p;
        p.labels.resize(raw.size());
        std::vector<std::int64_t> remap;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            if (raw[i] >= remap.size()) remap.resize(raw[i] + 1, -1);
            if (remap[raw[i]] < 0) remap[raw[i]] = p.n_clusters++;
            p.labels[i] = static_cast<std::uint32_t>(remap[raw[i]]);
        }
        return p;
    }

    std::vector<std::size_t> sizes() const {
        std::vector<std::size_t> counts(n_clusters, 0);
        for (auto l : labels) ++counts[l];
        return counts;
    }

    friend bool operator==(const Partition&, const Partition&) = default;
};

/// Symmetric n x n matrix of pairwise distances, stored densely in double.
class DistanceMatrix {
public:
    DistanceMatrix() = default;
    explicit DistanceMatrix(std::size_t n) : n_(n), values_(n * n, 0.0) {}

    std::size_t size() const noexcept { return n_; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return values_[i * n_ + j]; }

    void set(std::size_t i, std::size_t j, double v) noexcept {
        values_[i * n_ + j] = v;
        values_[j * n_ + i] = v;
    }

private:
    std::size_t n_ = 0;
    std::vector<double> values_;
};

struct MergeResult {
    Matrix vectors;
    Partition partition;
};

inline std::uint32_t target_cluster_count(std::size_t n, std::uint32_t m) {
    if (n < 1 || m < 1) throw Error(Errc::InvalidArgument, "target_cluster_count needs n >= 1 and m >= 1");
    return static_cast<std::uint32_t>(std::max<std::size_t>(1, n / m));
}

/// Merging is skipped when the set is smaller than m or m <= 1.
inline bool merge_applies(std::size_t n, std::uint32_t m) noexcept { return !(n < m || m <= 1); }

/// Row count merge_sem_cluster produces for n inputs, without clustering.
inline std::size_t sem_cluster_output_count(std::size_t n, std::uint32_t m) {
    return merge_applies(n, m) ? target_cluster_count(n, m) : n;
}

/// 1 - cos over L2-normalized rows, clamped to [0, 2] with an exact zero diagonal.
inline DistanceMatrix cosine_distance_matrix(const Matrix& vectors) {
    const std::size_t n = vectors.rows();
    const std::size_t d = vectors.cols();
    if (n == 0) throw Error(Errc::Empty, "distance matrix of an empty set");

    std::vector<double> unit(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        auto row = vectors.row(i);
        double sq = 0.0;
        for (float x : row) sq += static_cast<double>(x) * x;
        const double norm = std::sqrt(sq);
        if (!(norm >= 1e-12)) {
            throw Error(Errc::ZeroVector, "row " + std::to_string(i) + " has norm below 1e-12");
        }
        for (std::size_t c = 0; c < d; ++c) unit[i * d + c] = row[c] / norm;
    }

    DistanceMatrix delta(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) dot += unit[i * d + c] * unit[j * d + c];
            delta.set(i, j, std::clamp(1.0 - dot, 0.0, 2.0));
        }
    }
    return delta;
}

/// One agglomeration step: `absorbed` joined into `kept` at the given Ward distance.
struct MergeStep {
    std::size_t kept;
    std::size_t absorbed;
    double distance;
};

/// Full Ward agglomeration order down to `n_clusters` clusters.
///
/// The input is cosine distance between unit vectors; 2 * delta equals their squared
/// Euclidean distance, on which the Lance-Williams Ward recurrence
///   d(k, i+j) = ((n_k + n_i) d(k,i) + (n_k + n_j) d(k,j) - n_k d(i,j)) / (n_k + n_i + n_j)
/// is exact. Each cluster lives in the slot of its smallest member. Among equal-cost
/// pairs the lexicographically smallest slot pair (i, j), i < j, merges first.
///
/// A per-row cache of the nearest higher slot keeps this O(n^2) in the common case
/// while choosing exactly the pair a full scan would.
inline std::vector<MergeStep> ward_merge_sequence(const DistanceMatrix& delta, std::size_t n_clusters) {
    const std::size_t n = delta.size();
    if (n_clusters < 1 || n_clusters > n) {
        throw Error(Errc::InvalidClusterCount,
                    "cannot cut " + std::to_string(n) + " points into " + std::to_string(n_clusters) + " clusters");
    }
    constexpr double kInf = std::numeric_limits<double>::infinity();
    constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

    std::vector<double> dist(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) dist[i * n + j] = 2.0 * delta(i, j);
    }
    std::vector<std::size_t> size(n, 1);
    std::vector<char> active(n, 1);
    std::vector<double> nn_dist(n, kInf);
    std::vector<std::size_t> nn(n, kNone);

    auto refresh = [&](std::size_t i) {
        nn_dist[i] = kInf;
        nn[i] = kNone;
        for (std::size_t j = i + 1; j < n; ++j) {
            if (active[j] && dist[i * n + j] < nn_dist[i]) {
                nn_dist[i] = dist[i * n + j];
                nn[i] = j;
            }
        }
    };
    for (std::size_t i = 0; i < n; ++i) refresh(i);

    std::vector<MergeStep> steps;
    steps.reserve(n - n_clusters);
    for (std::size_t remaining = n; remaining > n_clusters; --remaining) {
        std::size_t a = kNone;
        for (std::size_t i = 0; i < n; ++i) {
            if (active[i] && nn[i] != kNone && (a == kNone || nn_dist[i] < nn_dist[a])) a = i;
        }
        const std::size_t b = nn[a];
        const double d_ab = dist[a * n + b];
        steps.push_back({a, b, d_ab});

        const auto na = static_cast<double>(size[a]);
        const auto nb = static_cast<double>(size[b]);
        for (std::size_t k = 0; k < n; ++k) {
            if (!active[k] || k == a || k == b) continue;
            const auto nk = static_cast<double>(size[k]);
            const double updated =
                ((nk + na) * dist[k * n + a] + (nk + nb) * dist[k * n + b] - nk * d_ab) / (nk + na + nb);
            dist[k * n + a] = updated;
            dist[a * n + k] = updated;
        }
        size[a] += size[b];
        active[b] = 0;

        refresh(a);
        for (std::size_t k = 0; k < n; ++k) {
            if (!active[k] || k == a) continue;
            if (nn[k] == a || nn[k] == b) {
                refresh(k);
            } else if (k < a) {
                const double candidate = dist[k * n + a];
                if (candidate < nn_dist[k] || (candidate == nn_dist[k] && a < nn[k])) {
                    nn_dist[k] = candidate;
                    nn[k] = a;
                }
            }
        }
    }
    return steps;
}

/// Ward agglomeration on a cosine distance matrix, stopped at exactly `n_clusters`.
inline Partition ward_linkage_partition(const DistanceMatrix& delta, std::size_t n_clusters) {
    const std::size_t n = delta.size();
    const auto steps = ward_merge_sequence(delta, n_clusters);

    // Union by slot: every merge folds the higher slot into the lower one.
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto root = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    for (const auto& step : steps) parent[step.absorbed] = step.kept;

    std::vector<std::uint32_t> raw(n);
    for (std::size_t i = 0; i < n; ++i) raw[i] = static_cast<std::uint32_t>(root(i));
    return Partition::canonical(raw);
}

/// Per-cluster arithmetic mean of the given rows, accumulated in double.
inline Matrix centroids(const Matrix& vectors, const Partition& partition) {
    if (partition.labels.size() != vectors.rows()) {
        throw Error(Errc::DimensionMismatch, "partition covers " + std::to_string(partition.labels.size()) +
                                                 " points, matrix has " + std::to_string(vectors.rows()));
    }
    const std::size_t d = vectors.cols();
    std::vector<double> sums(static_cast<std::size_t>(partition.n_clusters) * d, 0.0);
    std::vector<std::size_t> counts(partition.n_clusters, 0);
    for (std::size_t i = 0; i < vectors.rows(); ++i) {
        const auto label = partition.labels[i];
        if (label >= partition.n_clusters) throw Error(Errc::IndexOutOfRange, "cluster label out of range");
        ++counts[label];
        auto row = vectors.row(i);
        for (std::size_t c = 0; c < d; ++c) sums[label * d + c] += row[c];
    }
    Matrix out(partition.n_clusters, d);
    for (std::size_t label = 0; label < partition.n_clusters; ++label) {
        if (counts[label] == 0) throw Error(Errc::InvalidClusterCount, "cluster " + std::to_string(label) + " is empty");
        auto dst = out.row(label);
        for (std::size_t c = 0; c < d; ++c) {
            dst[c] = static_cast<float>(sums[label * d + c] / static_cast<double>(counts[label]));
        }
    }
    return out;
}

/// Semantic clustering merge. Sets smaller than m, or m <= 1, pass through unchanged.
inline MergeResult merge_sem_cluster(const Matrix& vectors, std::uint32_t m) {
    const std::size_t n = vectors.rows();
    if (n == 0) throw Error(Errc::Empty, "cannot merge an empty set");
    if (m < 1) throw Error(Errc::InvalidArgument, "merging factor must be >= 1");
    if (!merge_applies(n, m)) return {vectors, Partition::identity(n)};

    const auto target = target_cluster_count(n, m);
    Partition partition = ward_linkage_partition(cosine_distance_matrix(vectors), target);
    Matrix merged = centroids(vectors, partition);
    return {std::move(merged), std::move(partition)};
}

/// Mean over consecutive windows of m rows; the last window may be shorter.
inline MergeResult merge_pool_1d(const Matrix& vectors, std::uint32_t m) {
    const std::size_t n = vectors.rows();
    if (n == 0) throw Error(Errc::Empty, "cannot pool an empty set");
    if (m < 1) throw Error(Errc::InvalidArgument, "merging factor must be >= 1");
    Partition partition;
    partition.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) partition.labels[i] = static_cast<std::uint32_t>(i / m);
    partition.n_clusters = static_cast<std::uint32_t>((n + m - 1) / m);
    Matrix pooled = centroids(vectors, partition);
    return {std::move(pooled), std::move(partition)};
}

/// Mean over s x s tiles (s = sqrt(m)) of the row-major patch grid. Edge tiles may
/// be partial; tiles are emitted in row-major order.
inline MergeResult merge_pool_2d(const Matrix& vectors, std::uint32_t m, std::optional<GridShape> grid) {
    if (m < 1 || !is_perfect_square(m)) {
        throw Error(Errc::NotPerfectSquare, "2D pooling factor " + std::to_string(m) + " is not a perfect square");
    }
    if (!grid) throw Error(Errc::MissingGrid, "2D pooling requires a grid shape");
    if (static_cast<std::uint64_t>(grid->rows) * grid->cols != vectors.rows() || vectors.rows() == 0) {
        throw Error(Errc::GridMismatch, "grid " + std::to_string(grid->rows) + "x" + std::to_string(grid->cols) +
                                            " does not match " + std::to_string(vectors.rows()) + " patches");
    }
    const auto side = static_cast<std::uint32_t>(std::lround(std::sqrt(static_cast<double>(m))));
    const std::uint32_t tiles_per_row = (grid->cols + side - 1) / side;
    const std::uint32_t tile_rows = (grid->rows + side - 1) / side;

    Partition partition;
    partition.labels.resize(vectors.rows());
    for (std::uint32_t r = 0; r < grid->rows; ++r) {
        for (std::uint32_t c = 0; c < grid->cols; ++c) {
            partition.labels[static_cast<std::size_t>(r) * grid->cols + c] = (r / side) * tiles_per_row + c / side;
        }
    }
    partition.n_clusters = tile_rows * tiles_per_row;
    Matrix pooled = centroids(vectors, partition);
    return {std::move(pooled), std::move(partition)};
}

}  // namespace mvpress
