#pragma once

// Reference implementations used only by tests. Each one is written from the
// definition, independent of the library code path it checks.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "mvpress/mvpress.hpp"

namespace oracle {

using mvpress::Matrix;

/// Literal adaptive pruning: mean, population variance via the all-pairs identity
/// var = sum_ij (x_i - x_j)^2 / (2 N^2), strict "> tau", first-argmax fallback.
inline std::vector<std::size_t> prune_adaptive(const std::vector<float>& scores, double k) {
    const std::size_t n = scores.size();
    long double sum = 0.0L;
    for (float s : scores) sum += s;
    const long double mean = sum / static_cast<long double>(n);
    long double pair_sq = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const long double diff = static_cast<long double>(scores[i]) - scores[j];
            pair_sq += diff * diff;
        }
    }
    const long double sigma = std::sqrt(pair_sq / (2.0L * n * n));
    const long double tau = mean + static_cast<long double>(k) * sigma;

    std::vector<std::size_t> kept;
    for (std::size_t j = 0; j < n; ++j) {
        if (static_cast<long double>(scores[j]) > tau) kept.push_back(j);
    }
    if (kept.empty()) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < n; ++j) {
            if (scores[j] > scores[best]) best = j;
        }
        kept.push_back(best);
    }
    return kept;
}

/// Naive Ward agglomeration: full O(n^2) scan of every active pair per step,
/// Lance-Williams on 2 * delta, lexicographically smallest (i, j) among minimal cost.
/// Returns raw labels (slot of the smallest member).
inline std::vector<std::uint32_t> ward_naive(const mvpress::DistanceMatrix& delta, std::size_t clusters) {
    const std::size_t n = delta.size();
    std::vector<std::vector<double>> dist(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) dist[i][j] = 2.0 * delta(i, j);
    }
    std::vector<std::size_t> size(n, 1);
    std::vector<bool> active(n, true);
    std::vector<std::uint32_t> owner(n);
    std::iota(owner.begin(), owner.end(), 0u);

    for (std::size_t remaining = n; remaining > clusters; --remaining) {
        std::size_t bi = 0, bj = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (!active[i]) continue;
            for (std::size_t j = i + 1; j < n; ++j) {
                if (active[j] && dist[i][j] < best) {
                    best = dist[i][j];
                    bi = i;
                    bj = j;
                }
            }
        }
        const double na = static_cast<double>(size[bi]);
        const double nb = static_cast<double>(size[bj]);
        for (std::size_t k = 0; k < n; ++k) {
            if (!active[k] || k == bi || k == bj) continue;
            const double nk = static_cast<double>(size[k]);
            const double v = ((nk + na) * dist[k][bi] + (nk + nb) * dist[k][bj] - nk * best) / (nk + na + nb);
            dist[k][bi] = v;
            dist[bi][k] = v;
        }
        size[bi] += size[bj];
        active[bj] = false;
        for (auto& o : owner) {
            if (o == bj) o = static_cast<std::uint32_t>(bi);
        }
    }
    return owner;
}

/// Ward agglomeration from first principles: merge the pair of clusters whose union
/// increases the within-cluster sum of squares (of the unit-normalized points) least,
/// computing that increase from explicit member sets.
inline std::vector<std::uint32_t> ward_by_centroids(const Matrix& vectors, std::size_t clusters) {
    const std::size_t n = vectors.rows();
    const std::size_t d = vectors.cols();
    std::vector<std::vector<double>> unit(n, std::vector<double>(d));
    for (std::size_t i = 0; i < n; ++i) {
        double sq = 0.0;
        for (std::size_t c = 0; c < d; ++c) sq += static_cast<double>(vectors(i, c)) * vectors(i, c);
        for (std::size_t c = 0; c < d; ++c) unit[i][c] = vectors(i, c) / std::sqrt(sq);
    }
    std::vector<std::vector<std::size_t>> members(n);
    for (std::size_t i = 0; i < n; ++i) members[i] = {i};

    auto sse = [&](const std::vector<std::size_t>& set) {
        std::vector<double> mean(d, 0.0);
        for (auto i : set) {
            for (std::size_t c = 0; c < d; ++c) mean[c] += unit[i][c];
        }
        for (auto& m : mean) m /= static_cast<double>(set.size());
        double total = 0.0;
        for (auto i : set) {
            for (std::size_t c = 0; c < d; ++c) total += (unit[i][c] - mean[c]) * (unit[i][c] - mean[c]);
        }
        return total;
    };

    std::size_t remaining = n;
    while (remaining > clusters) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (members[i].empty()) continue;
            for (std::size_t j = i + 1; j < n; ++j) {
                if (members[j].empty()) continue;
                auto joined = members[i];
                joined.insert(joined.end(), members[j].begin(), members[j].end());
                const double cost = sse(joined) - sse(members[i]) - sse(members[j]);
                if (cost < best) {
                    best = cost;
                    bi = i;
                    bj = j;
                }
            }
        }
        members[bi].insert(members[bi].end(), members[bj].begin(), members[bj].end());
        members[bj].clear();
        --remaining;
    }
    std::vector<std::uint32_t> labels(n);
    for (std::size_t slot = 0; slot < n; ++slot) {
        for (auto i : members[slot]) labels[i] = static_cast<std::uint32_t>(slot);
    }
    return labels;
}

/// Within-cluster sum of squared distances of unit-normalized rows.
inline double ward_objective(const Matrix& vectors, const std::vector<std::uint32_t>& labels) {
    const std::size_t d = vectors.cols();
    std::map<std::uint32_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
    double total = 0.0;
    for (const auto& [label, rows] : groups) {
        std::vector<double> mean(d, 0.0);
        std::vector<std::vector<double>> unit;
        for (auto i : rows) {
            double sq = 0.0;
            for (std::size_t c = 0; c < d; ++c) sq += static_cast<double>(vectors(i, c)) * vectors(i, c);
            std::vector<double> u(d);
            for (std::size_t c = 0; c < d; ++c) {
                u[c] = vectors(i, c) / std::sqrt(sq);
                mean[c] += u[c];
            }
            unit.push_back(std::move(u));
        }
        for (auto& m : mean) m /= static_cast<double>(rows.size());
        for (const auto& u : unit) {
            for (std::size_t c = 0; c < d; ++c) total += (u[c] - mean[c]) * (u[c] - mean[c]);
        }
    }
    return total;
}

/// Same partition up to relabeling.
inline bool same_partition(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
    if (a.size() != b.size()) return false;
    std::map<std::uint32_t, std::uint32_t> ab, ba;
    for (std::size_t i = 0; i < a.size(); ++i) {
        auto [it1, fresh1] = ab.emplace(a[i], b[i]);
        auto [it2, fresh2] = ba.emplace(b[i], a[i]);
        if (it1->second != b[i] || it2->second != a[i]) return false;
    }
    return true;
}

/// Exhaustive double loop for sum_i max_j q_i . d_j.
inline double maxsim(const Matrix& q, const Matrix& d) {
    double total = 0.0;
    for (std::size_t i = 0; i < q.rows(); ++i) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < d.rows(); ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < q.cols(); ++c) dot += static_cast<double>(q(i, c)) * d(j, c);
            best = std::max(best, dot);
        }
        total += best;
    }
    return total;
}

inline double dcg(const std::vector<int>& grades_in_rank_order, std::size_t k) {
    double total = 0.0;
    for (std::size_t r = 0; r < grades_in_rank_order.size() && r < k; ++r) {
        const double gain = static_cast<double>((1 << grades_in_rank_order[r]) - 1);
        total += gain * std::log(2.0) / std::log(static_cast<double>(r + 2));
    }
    return total;
}

/// nDCG with the ideal DCG found by trying every ordering of the judged documents.
inline double ndcg_brute_force(const std::vector<std::string>& ranking, const mvpress::QrelsRow& qrels, std::size_t k) {
    std::vector<int> judged;
    for (const auto& [doc, grade] : qrels) judged.push_back(grade);
    std::sort(judged.begin(), judged.end());
    double ideal = 0.0;
    do {
        ideal = std::max(ideal, dcg(judged, k));
    } while (std::next_permutation(judged.begin(), judged.end()));
    if (ideal == 0.0) return 0.0;

    std::vector<int> observed;
    for (const auto& doc : ranking) {
        auto it = qrels.find(doc);
        observed.push_back(it == qrels.end() ? 0 : it->second);
    }
    return dcg(observed, k) / ideal;
}

}  // namespace oracle
