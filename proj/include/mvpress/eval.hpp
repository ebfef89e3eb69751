#pragma once

// Retrieval-quality evaluation (nDCG@k), the synthetic signal/noise corpus, the
// signal-distortion comparison between prune-then-merge and a naive merge, and
// hyperparameter sweeps.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvpress/error.hpp"
#include "mvpress/merge.hpp"
#include "mvpress/model.hpp"
#include "mvpress/parallel.hpp"
#include "mvpress/pipeline.hpp"
#include "mvpress/prune.hpp"
#include "mvpress/retrieve.hpp"
#include "mvpress/rng.hpp"

namespace mvpress {

// ---------------------------------------------------------------------------
// nDCG

/// Graded nDCG@k with gain 2^g - 1 and discount log2(rank + 1). Returns 0 when the
/// qrels row has no positive grade.
inline double ndcg_at_k(std::span<const std::string> ranking, const QrelsRow& qrels, std::size_t k) {
    if (k < 1) throw Error(Errc::InvalidArgument, "ndcg cutoff k must be >= 1");
    std::vector<int> ideal;
    for (const auto& [doc, grade] : qrels) {
        if (grade > 0) ideal.push_back(grade);
    }
    if (ideal.empty()) return 0.0;
    std::sort(ideal.begin(), ideal.end(), std::greater<>());

    auto gain = [](int grade) { return std::exp2(static_cast<double>(grade)) - 1.0; };
    double idcg = 0.0;
    for (std::size_t r = 0; r < std::min(k, ideal.size()); ++r) idcg += gain(ideal[r]) / std::log2(static_cast<double>(r) + 2.0);

    double dcg = 0.0;
    for (std::size_t r = 0; r < std::min(k, ranking.size()); ++r) {
        auto it = qrels.find(ranking[r]);
        if (it != qrels.end() && it->second > 0) dcg += gain(it->second) / std::log2(static_cast<double>(r) + 2.0);
    }
    return dcg / idcg;
}

inline double ndcg_at_k(const SearchResult& result, const QrelsRow& qrels, std::size_t k) {
    std::vector<std::string> ranking;
    ranking.reserve(result.hits.size());
    for (const auto& hit : result.hits) ranking.push_back(hit.doc_id);
    return ndcg_at_k(ranking, qrels, k);
}

struct QueryScore {
    std::string query_id;
    double ndcg = 0.0;
};

struct EvalReport {
    std::size_t k = 5;
    std::vector<QueryScore> per_query;
    double mean_ndcg = 0.0;
    CorpusStats stats;
    double compress_seconds = 0.0;  // filled by callers that also compressed
    double search_seconds = 0.0;
};

/// Searches every query against `index` and scores it against its qrels row.
/// Queries without judgments score 0; judged queries missing from `queries` are an error.
inline EvalReport evaluate_run(std::span<const CompressedEmbeddingSet> index, std::span<const QueryEmbeddingSet> queries,
                               const Qrels& qrels, std::size_t k, std::size_t parallelism = 1) {
    if (queries.empty()) throw Error(Errc::EmptyQueries, "evaluation needs at least one query");
    if (index.empty()) throw Error(Errc::EmptyIndex, "evaluation over an empty index");
    for (const auto& [query_id, row] : qrels) {
        const bool present = std::any_of(queries.begin(), queries.end(),
                                         [&](const QueryEmbeddingSet& q) { return q.query_id == query_id; });
        if (!present) throw Error(Errc::UnknownQuery, "qrels judge query '" + query_id + "' which is not in the query set");
    }

    EvalReport report;
    report.k = k;
    report.stats = corpus_stats(index, index.front().embeddings.cols());

    const auto start = std::chrono::steady_clock::now();
    const auto results = batch_search(index, queries, k, parallelism);
    report.search_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    static const QrelsRow kNoJudgments;
    double sum = 0.0;
    for (const auto& result : results) {
        auto it = qrels.find(result.query_id);
        const double score = ndcg_at_k(result, it == qrels.end() ? kNoJudgments : it->second, k);
        report.per_query.push_back({result.query_id, score});
        sum += score;
    }
    report.mean_ndcg = sum / static_cast<double>(results.size());
    return report;
}

// ---------------------------------------------------------------------------
// Synthetic signal/noise corpus

struct SynthParams {
    std::size_t num_docs = 100;
    std::size_t concepts_per_doc = 4;
    std::size_t signal_per_concept = 8;
    std::size_t noise_per_doc = 32;
    std::size_t dim = 16;
    double signal_sigma = 0.05;    // per-coordinate spread around a concept center
    double noise_scale = 0.25;     // per-coordinate scale of noise patches
    double importance_band = 1.0;  // width of each importance band
    double importance_gap = 10.0;  // min(signal importance) - max(noise importance)
    std::size_t queries_per_doc = 2;
    std::uint64_t seed = 0;

    friend bool operator==(const SynthParams&, const SynthParams&) = default;
};

inline void validate(const SynthParams& p) {
    auto bad = [](const std::string& what) { throw Error(Errc::InvalidArgument, "synth params: " + what); };
    if (p.num_docs < 1 || p.concepts_per_doc < 1 || p.signal_per_concept < 1 || p.dim < 1 || p.queries_per_doc < 1) {
        bad("counts must be >= 1 (noise_per_doc may be 0)");
    }
    if (!(p.signal_sigma > 0.0) || !(p.noise_scale > 0.0)) bad("signal_sigma and noise_scale must be > 0");
    if (!(p.importance_gap > 0.0) || !(p.importance_band > 0.0)) bad("importance_gap and importance_band must be > 0");
}

struct SynthCorpus {
    std::vector<PatchEmbeddingSet> docs;
    std::vector<QueryEmbeddingSet> queries;
    Qrels qrels;
    std::vector<std::vector<std::size_t>> signal_rows;  // per doc, sorted patch indices of signal patches
};

inline std::string synth_doc_id(std::size_t i) {
    std::string digits = std::to_string(i);
    return "doc" + std::string(digits.size() < 5 ? 5 - digits.size() : 0, '0') + digits;
}

/// Deterministic given `params.seed`. Each document gets `concepts_per_doc` random unit
/// centers; signal patches scatter around them with high importance, noise patches are
/// isotropic Gaussians with low importance. Patch order is shuffled and laid out on the
/// most square grid that covers it. Every query is a set of noisy copies of its source
/// document's centers and is judged relevant (grade 1) to that document only.
inline SynthCorpus synth_corpus(const SynthParams& params) {
    validate(params);
    const std::size_t d = params.dim;
    const std::size_t n_signal = params.concepts_per_doc * params.signal_per_concept;
    const std::size_t n = n_signal + params.noise_per_doc;
    const double band = params.importance_band;
    const double signal_floor = band + params.importance_gap;

    SynthCorpus corpus;
    corpus.docs.resize(params.num_docs);
    corpus.signal_rows.resize(params.num_docs);

    std::uint32_t grid_rows = 1;
    for (std::uint32_t r = 1; static_cast<std::size_t>(r) * r <= n; ++r) {
        if (n % r == 0) grid_rows = r;
    }

    for (std::size_t doc_index = 0; doc_index < params.num_docs; ++doc_index) {
        PatchEmbeddingSet& doc = corpus.docs[doc_index];
        doc.doc_id = synth_doc_id(doc_index);
        SplitMix64 rng(hash_key(params.seed, doc.doc_id));

        Matrix centers(params.concepts_per_doc, d);
        for (std::size_t c = 0; c < params.concepts_per_doc; ++c) {
            auto row = centers.row(c);
            double sq = 0.0;
            do {
                sq = 0.0;
                for (auto& x : row) {
                    x = static_cast<float>(rng.normal());
                    sq += static_cast<double>(x) * x;
                }
            } while (sq < 1e-12);
            const double inv = 1.0 / std::sqrt(sq);
            for (auto& x : row) x = static_cast<float>(x * inv);
        }

        std::vector<std::size_t> slot(n);
        std::iota(slot.begin(), slot.end(), 0);
        for (std::size_t i = n; i > 1; --i) std::swap(slot[i - 1], slot[rng.below(i)]);

        doc.embeddings = Matrix(n, d);
        std::vector<float> importance(n);
        for (std::size_t s = 0; s < n_signal; ++s) {
            auto center = centers.row(s / params.signal_per_concept);
            auto row = doc.embeddings.row(slot[s]);
            for (std::size_t c = 0; c < d; ++c) row[c] = static_cast<float>(center[c] + params.signal_sigma * rng.normal());
            importance[slot[s]] = static_cast<float>(signal_floor + band * rng.uniform());
            corpus.signal_rows[doc_index].push_back(slot[s]);
        }
        for (std::size_t s = n_signal; s < n; ++s) {
            auto row = doc.embeddings.row(slot[s]);
            for (std::size_t c = 0; c < d; ++c) row[c] = static_cast<float>(params.noise_scale * rng.normal());
            importance[slot[s]] = static_cast<float>(band * rng.uniform());
        }
        std::sort(corpus.signal_rows[doc_index].begin(), corpus.signal_rows[doc_index].end());
        doc.importance = std::move(importance);

        std::vector<float> eos(d, 0.0f);
        for (std::size_t c = 0; c < params.concepts_per_doc; ++c) {
            for (std::size_t j = 0; j < d; ++j) eos[j] += centers(c, j);
        }
        doc.eos_embedding = std::move(eos);
        doc.grid_shape = GridShape{grid_rows, static_cast<std::uint32_t>(n / grid_rows)};

        for (std::size_t q = 0; q < params.queries_per_doc; ++q) {
            QueryEmbeddingSet query;
            query.query_id = "q" + doc.doc_id.substr(3) + "_" + std::to_string(q);
            query.embeddings = Matrix(params.concepts_per_doc, d);
            for (std::size_t t = 0; t < params.concepts_per_doc; ++t) {
                auto center = centers.row(rng.below(params.concepts_per_doc));
                auto row = query.embeddings.row(t);
                for (std::size_t c = 0; c < d; ++c) row[c] = static_cast<float>(center[c] + params.signal_sigma * rng.normal());
            }
            corpus.qrels[query.query_id][doc.doc_id] = 1;
            corpus.queries.push_back(std::move(query));
        }
    }
    return corpus;
}

// ---------------------------------------------------------------------------
// Distortion

/// Mean over signal rows of the squared Euclidean distance to the nearest codebook row.
inline double signal_distortion(const Matrix& signal, const Matrix& codebook) {
    if (signal.rows() == 0 || codebook.rows() == 0) throw Error(Errc::Empty, "distortion needs non-empty sets");
    if (signal.cols() != codebook.cols()) throw Error(Errc::DimensionMismatch, "signal and codebook dimensions differ");
    double total = 0.0;
    for (std::size_t i = 0; i < signal.rows(); ++i) {
        auto s = signal.row(i);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < codebook.rows(); ++j) {
            auto c = codebook.row(j);
            double sq = 0.0;
            for (std::size_t k = 0; k < s.size(); ++k) {
                const double diff = static_cast<double>(s[k]) - c[k];
                sq += diff * diff;
            }
            best = std::min(best, sq);
        }
        total += best;
    }
    return total / static_cast<double>(signal.rows());
}

struct SynergyReport {
    double distortion_ours = 0.0;   // prune-then-merge codebook
    double distortion_naive = 0.0;  // Ward over the full noisy set, same codebook size per document
    std::size_t codebook_size = 0;  // total codebook vectors over the corpus, equal for both
    std::size_t signal_vectors = 0;
};

/// Signal distortion of prune-then-merge against a naive single-stage merge at
/// matched codebook size, pooled over every signal vector of the synthetic corpus.
inline SynergyReport synergy_experiment(const SynthParams& params, double k, std::uint32_t m, std::size_t parallelism = 1) {
    const SynthCorpus corpus = synth_corpus(params);
    CompressionConfig config;
    config.method = Method::PruneThenMerge;
    config.k = k;
    config.m = m;

    struct PerDoc {
        double ours = 0.0;
        double naive = 0.0;
        std::size_t codebook = 0;
        std::size_t signal = 0;
    };
    std::vector<PerDoc> per_doc(corpus.docs.size());
    parallel_for(corpus.docs.size(), parallelism, [&](std::size_t i) {
        const auto& doc = corpus.docs[i];
        const Matrix signal = doc.embeddings.select_rows(corpus.signal_rows[i]);
        const CompressedEmbeddingSet ours = compress(doc, config);
        const Partition naive_partition =
            ward_linkage_partition(cosine_distance_matrix(doc.embeddings), ours.size());
        const Matrix naive = centroids(doc.embeddings, naive_partition);
        const double rows = static_cast<double>(signal.rows());
        per_doc[i] = {signal_distortion(signal, ours.embeddings) * rows, signal_distortion(signal, naive) * rows,
                      ours.size(), signal.rows()};
    });

    SynergyReport report;
    for (const auto& r : per_doc) {
        report.distortion_ours += r.ours;
        report.distortion_naive += r.naive;
        report.codebook_size += r.codebook;
        report.signal_vectors += r.signal;
    }
    report.distortion_ours /= static_cast<double>(report.signal_vectors);
    report.distortion_naive /= static_cast<double>(report.signal_vectors);
    return report;
}

// ---------------------------------------------------------------------------
// Sweeps and rate calibration

struct SweepRow {
    CompressionConfig config;
    std::optional<std::string> error;
    double pruning_rate = 0.0;
    double ndcg_mean = 0.0;
    double compress_seconds = 0.0;
    double search_seconds = 0.0;
};

/// compress_corpus + evaluate_run per config, in the given order. A failing config
/// records its error and the sweep continues.
inline std::vector<SweepRow> sweep(std::span<const PatchEmbeddingSet> docs, std::span<const QueryEmbeddingSet> queries,
                                   const Qrels& qrels, std::span<const CompressionConfig> configs, std::size_t k,
                                   std::size_t parallelism = 1) {
    if (configs.empty()) throw Error(Errc::InvalidArgument, "sweep needs at least one config");
    std::vector<SweepRow> rows;
    rows.reserve(configs.size());
    for (const auto& config : configs) {
        SweepRow row;
        row.config = config;
        try {
            const auto start = std::chrono::steady_clock::now();
            const CompressionResult compressed = compress_corpus(docs, config, parallelism);
            row.compress_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            const EvalReport report = evaluate_run(compressed.docs, queries, qrels, k, parallelism);
            row.pruning_rate = report.stats.pruning_rate;
            row.ndcg_mean = report.mean_ndcg;
            row.search_seconds = report.search_seconds;
        } catch (const Error& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

/// Corpus pruning rate a config would reach, computed from output counts only
/// (merging stages are counted, not clustered).
inline double predicted_pruning_rate(std::span<const PatchEmbeddingSet> docs, const CompressionConfig& config) {
    if (docs.empty()) throw Error(Errc::Empty, "rate of an empty corpus");
    validate_config(config);
    std::uint64_t original = 0;
    std::uint64_t kept = 0;
    for (const auto& doc : docs) {
        const std::size_t n = doc.size();
        original += n;
        switch (config.method) {
            case Method::None:
                kept += n;
                break;
            case Method::PruneThenMerge:
                kept += sem_cluster_output_count(prune_adaptive(doc, config.k).kept_indices.size(), config.m);
                break;
            case Method::SemCluster:
                kept += sem_cluster_output_count(n, config.m);
                break;
            case Method::Pool1D:
                kept += (n + config.m - 1) / config.m;
                break;
            case Method::Pool2D: {
                if (!doc.grid_shape) throw Error(Errc::MissingGrid, "2D pooling requires a grid shape");
                const auto side = static_cast<std::uint32_t>(std::lround(std::sqrt(static_cast<double>(config.m))));
                kept += static_cast<std::uint64_t>((doc.grid_shape->rows + side - 1) / side) *
                        ((doc.grid_shape->cols + side - 1) / side);
                break;
            }
            default:
                kept += detail::run_pruner(doc, config).kept_indices.size();
        }
    }
    return 1.0 - static_cast<double>(kept) / static_cast<double>(original);
}

struct Calibration {
    CompressionConfig config;
    double pruning_rate = 0.0;
};

/// Tunes the method's primary knob against a target corpus pruning rate: k for the
/// adaptive-threshold methods (m stays fixed for prune-then-merge), ratio for
/// random / attention_ratio, tau_global for attention_threshold, and m for the
/// merge-only methods.
///
/// With `tolerance` set, every candidate whose rate lies within target +- tolerance
/// qualifies and the one whose knob is nearest to `base` wins, so each method stays
/// as close to its own operating point as the matched band allows. Without it, or
/// when no candidate reaches the band, the rate nearest the target wins. Ties keep
/// the first candidate scanned.
inline Calibration calibrate_to_rate(std::span<const PatchEmbeddingSet> docs, const CompressionConfig& base,
                                     double target_rate, std::optional<double> tolerance = std::nullopt) {
    std::vector<CompressionConfig> candidates;
    auto with = [&](auto&& mutate) {
        CompressionConfig c = base;
        mutate(c);
        candidates.push_back(c);
    };
    switch (base.method) {
        case Method::PruneThenMerge:
        case Method::DocPruner:
        case Method::AttentionPlusSimilarity:
        case Method::PivotThreshold:
            for (int step = -300; step <= 300; ++step) with([&](CompressionConfig& c) { c.k = step / 100.0; });
            break;
        case Method::Random:
        case Method::AttentionRatio:
            for (int step = 0; step < 200; ++step) with([&](CompressionConfig& c) { c.ratio = step / 200.0; });
            break;
        case Method::AttentionThreshold: {
            std::vector<float> pooled;
            for (const auto& doc : docs) {
                const auto scores = detail::require_importance(doc);
                pooled.insert(pooled.end(), scores.begin(), scores.end());
            }
            std::sort(pooled.begin(), pooled.end());
            pooled.erase(std::unique(pooled.begin(), pooled.end()), pooled.end());
            const std::size_t steps = std::min<std::size_t>(pooled.size(), 400);
            for (std::size_t s = 0; s < steps; ++s) {
                const float tau = pooled[s * pooled.size() / steps];
                with([&](CompressionConfig& c) { c.tau_global = tau; });
            }
            break;
        }
        case Method::SemCluster:
        case Method::Pool1D:
            for (std::uint32_t m = 1; m <= 64; ++m) with([&](CompressionConfig& c) { c.m = m; });
            break;
        case Method::Pool2D:
            for (std::uint32_t s = 1; s <= 8; ++s) with([&](CompressionConfig& c) { c.m = s * s; });
            break;
        case Method::None:
            candidates.push_back(base);
            break;
    }

    auto knob_distance = [&](const CompressionConfig& c) {
        switch (base.method) {
            case Method::Random:
            case Method::AttentionRatio:
                return std::abs(c.ratio - base.ratio);
            case Method::AttentionThreshold:
                return std::abs(c.tau_global - base.tau_global);
            case Method::SemCluster:
            case Method::Pool1D:
            case Method::Pool2D:
                return std::abs(static_cast<double>(c.m) - static_cast<double>(base.m));
            default:
                return std::abs(c.k - base.k);
        }
    };

    Calibration nearest_rate;
    double best_gap = std::numeric_limits<double>::infinity();
    std::optional<Calibration> in_band;
    double best_knob = std::numeric_limits<double>::infinity();
    for (const auto& candidate : candidates) {
        const double rate = predicted_pruning_rate(docs, candidate);
        const double gap = std::abs(rate - target_rate);
        if (gap < best_gap) {
            best_gap = gap;
            nearest_rate = {candidate, rate};
        }
        if (tolerance && gap <= *tolerance) {
            const double knob = knob_distance(candidate);
            if (knob < best_knob) {
                best_knob = knob;
                in_band = Calibration{candidate, rate};
            }
        }
    }
    return in_band ? *in_band : nearest_rate;
}

}  // namespace mvpress
