#pragma once

// Stage-1 pruning: the per-document adaptive threshold and the pruning baselines.
// Every pruner returns at least one index; when a threshold rejects everything the
// single highest-importance patch survives (ties toward the smallest index).

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "mvpress/error.hpp"
#include "mvpress/model.hpp"
#include "mvpress/rng.hpp"

namespace mvpress {

struct ThresholdStats {
    double mean = 0.0;
    double stddev = 0.0;  // population form, divides by N
    double threshold = 0.0;
};

struct PruneOutcome {
    std::vector<std::size_t> kept_indices;  // strictly increasing
    std::optional<double> threshold_used;
};

namespace detail {

template <std::floating_point T>
ThresholdStats threshold_stats(std::span<const T> scores, double k) {
    if (scores.empty()) throw Error(Errc::Empty, "cannot threshold an empty score vector");
    for (T s : scores) {
        if (!std::isfinite(s)) throw Error(Errc::NonFinite, "score vector contains NaN/Inf");
    }
    ThresholdStats out;
    const bool constant = std::all_of(scores.begin(), scores.end(), [&](T s) { return s == scores.front(); });
    if (constant) {
        out.mean = static_cast<double>(scores.front());
        out.stddev = 0.0;
    } else {
        double sum = 0.0;
        for (T s : scores) sum += static_cast<double>(s);
        out.mean = sum / static_cast<double>(scores.size());
        double sq = 0.0;
        for (T s : scores) {
            const double dev = static_cast<double>(s) - out.mean;
            sq += dev * dev;
        }
        out.stddev = std::sqrt(sq / static_cast<double>(scores.size()));
    }
    out.threshold = out.mean + k * out.stddev;
    return out;
}

/// Indices with score strictly above `tau`; falls back to the first argmax when none qualify.
template <std::floating_point T>
std::vector<std::size_t> keep_above_or_best(std::span<const T> scores, double tau) {
    std::vector<std::size_t> kept;
    for (std::size_t j = 0; j < scores.size(); ++j) {
        if (static_cast<double>(scores[j]) > tau) kept.push_back(j);
    }
    if (kept.empty()) {
        const auto best = std::max_element(scores.begin(), scores.end());  // first maximum
        kept.push_back(static_cast<std::size_t>(best - scores.begin()));
    }
    return kept;
}

inline std::span<const float> require_importance(const PatchEmbeddingSet& doc) {
    if (!doc.importance) throw Error(Errc::MissingImportance, "document '" + doc.doc_id + "' has no importance scores");
    if (doc.importance->size() != doc.size()) {
        throw Error(Errc::DimensionMismatch, "document '" + doc.doc_id + "' importance length differs from patch count");
    }
    if (doc.importance->empty()) throw Error(Errc::Empty, "document '" + doc.doc_id + "' has no patches");
    if (!all_finite(*doc.importance)) throw Error(Errc::NonFinite, "document '" + doc.doc_id + "' importance contains NaN/Inf");
    return *doc.importance;
}

inline double norm(std::span<const float> v) {
    double s = 0.0;
    for (float x : v) s += static_cast<double>(x) * x;
    return std::sqrt(s);
}

inline double dot(std::span<const float> a, std::span<const float> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
}

inline double cosine(std::span<const float> a, std::span<const float> b) {
    const double na = norm(a);
    const double nb = norm(b);
    if (na < 1e-12 || nb < 1e-12) throw Error(Errc::ZeroVector, "cosine similarity of a zero-norm vector");
    return dot(a, b) / (na * nb);
}

/// (x - min) / (max - min); all zeros when the input is constant.
inline std::vector<double> minmax_normalize(std::span<const double> values) {
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    std::vector<double> out(values.size(), 0.0);
    const double range = *hi - *lo;
    if (range > 0.0) {
        for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - *lo) / range;
    }
    return out;
}

}  // namespace detail

/// mu, population sigma and tau = mu + k * sigma over `scores`.
inline ThresholdStats adaptive_threshold(std::span<const double> scores, double k) {
    return detail::threshold_stats(scores, k);
}

inline ThresholdStats adaptive_threshold(std::span<const float> scores, double k) {
    return detail::threshold_stats(scores, k);
}

/// DocPruner rule and stage 1 of prune-then-merge: keep I_j > mu + k * sigma.
inline PruneOutcome prune_adaptive(const PatchEmbeddingSet& doc, double k) {
    const auto scores = detail::require_importance(doc);
    const ThresholdStats stats = detail::threshold_stats(scores, k);
    return {detail::keep_above_or_best(scores, stats.threshold), stats.threshold};
}

/// Drops floor(ratio * N) patches uniformly at random. The stream is keyed by
/// (seed, doc_id) so corpus ordering and thread count cannot change the choice.
inline PruneOutcome prune_random(const PatchEmbeddingSet& doc, double ratio, std::uint64_t seed) {
    if (!(ratio >= 0.0 && ratio < 1.0)) throw Error(Errc::InvalidArgument, "random pruning ratio must lie in [0, 1)");
    const std::size_t n = doc.size();
    if (n == 0) throw Error(Errc::Empty, "document '" + doc.doc_id + "' has no patches");
    const auto remove = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
    const std::size_t keep = std::max<std::size_t>(1, n - std::min(remove, n));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    SplitMix64 rng(hash_key(seed, doc.doc_id));
    for (std::size_t i = 0; i < keep; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(order[i], order[j]);
    }
    order.resize(keep);
    std::sort(order.begin(), order.end());
    return {std::move(order), std::nullopt};
}

/// Drops the floor(ratio * N) lowest-importance patches. Among equal scores the
/// larger index goes first.
inline PruneOutcome prune_fixed_ratio_by_attention(const PatchEmbeddingSet& doc, double ratio) {
    if (!(ratio >= 0.0 && ratio < 1.0)) throw Error(Errc::InvalidArgument, "pruning ratio must lie in [0, 1)");
    const auto scores = detail::require_importance(doc);
    const std::size_t n = scores.size();
    const auto remove = std::min(static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n))), n - 1);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] < scores[b];
        return a > b;
    });
    std::vector<std::size_t> kept(order.begin() + static_cast<std::ptrdiff_t>(remove), order.end());
    std::sort(kept.begin(), kept.end());
    return {std::move(kept), std::nullopt};
}

/// One global cut-off for every document.
inline PruneOutcome prune_static_threshold(const PatchEmbeddingSet& doc, double tau_global) {
    const auto scores = detail::require_importance(doc);
    return {detail::keep_above_or_best(scores, tau_global), tau_global};
}

/// Composite alpha * attention + (1 - alpha) * cosine-to-EOS, each min-max normalized
/// per document, then the adaptive threshold.
inline PruneOutcome prune_attention_plus_similarity(const PatchEmbeddingSet& doc, double k, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(Errc::InvalidArgument, "alpha must lie in [0, 1]");
    const auto scores = detail::require_importance(doc);
    if (!doc.eos_embedding) throw Error(Errc::MissingEos, "document '" + doc.doc_id + "' has no eos embedding");
    if (doc.eos_embedding->size() != doc.dim()) {
        throw Error(Errc::DimensionMismatch, "document '" + doc.doc_id + "' eos embedding has wrong dimension");
    }

    const std::size_t n = scores.size();
    std::vector<double> attention(scores.begin(), scores.end());
    std::vector<double> similarity(n);
    for (std::size_t j = 0; j < n; ++j) similarity[j] = detail::cosine(doc.embeddings.row(j), *doc.eos_embedding);

    const auto a = detail::minmax_normalize(attention);
    const auto s = detail::minmax_normalize(similarity);
    std::vector<double> composite(n);
    for (std::size_t j = 0; j < n; ++j) composite[j] = alpha * a[j] + (1.0 - alpha) * s[j];

    const auto stats = detail::threshold_stats(std::span<const double>(composite), k);
    return {detail::keep_above_or_best(std::span<const double>(composite), stats.threshold), stats.threshold};
}

/// Importance filter, then de-duplication of the important set against its
/// highest-importance pivots using a second adaptive threshold on max cosine.
inline PruneOutcome prune_pivot_threshold(const PatchEmbeddingSet& doc, double k, double k_dup, std::uint32_t num_pivots) {
    if (num_pivots < 1) throw Error(Errc::InvalidArgument, "num_pivots must be >= 1");
    const auto scores = detail::require_importance(doc);
    const auto stats = detail::threshold_stats(scores, k);
    const std::vector<std::size_t> important = detail::keep_above_or_best(scores, stats.threshold);

    if (important.size() <= num_pivots) return {important, stats.threshold};

    std::vector<std::size_t> by_importance = important;
    std::stable_sort(by_importance.begin(), by_importance.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<std::size_t> pivots(by_importance.begin(), by_importance.begin() + num_pivots);
    std::vector<std::size_t> others(by_importance.begin() + num_pivots, by_importance.end());
    std::sort(pivots.begin(), pivots.end());
    std::sort(others.begin(), others.end());

    std::vector<double> sims(others.size());
    for (std::size_t i = 0; i < others.size(); ++i) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t p : pivots) best = std::max(best, detail::cosine(doc.embeddings.row(others[i]), doc.embeddings.row(p)));
        sims[i] = best;
    }
    const auto sim_stats = detail::threshold_stats(std::span<const double>(sims), k_dup);

    std::vector<std::size_t> kept = pivots;
    for (std::size_t i = 0; i < others.size(); ++i) {
        if (!(sims[i] > sim_stats.threshold)) kept.push_back(others[i]);
    }
    std::sort(kept.begin(), kept.end());
    return {std::move(kept), sim_stats.threshold};
}

}  // namespace mvpress
