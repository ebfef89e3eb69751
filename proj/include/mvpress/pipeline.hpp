#pragma once

// Method dispatch (prune-then-merge and every baseline) and corpus-level compression.

#include <chrono>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvpress/error.hpp"
#include "mvpress/ingest.hpp"
#include "mvpress/merge.hpp"
#include "mvpress/model.hpp"
#include "mvpress/parallel.hpp"
#include "mvpress/prune.hpp"

namespace mvpress {

namespace detail {

inline PruneOutcome run_pruner(const PatchEmbeddingSet& doc, const CompressionConfig& config) {
    switch (config.method) {
        case Method::PruneThenMerge:
        case Method::DocPruner:
            return prune_adaptive(doc, config.k);
        case Method::Random:
            return prune_random(doc, config.ratio, config.seed);
        case Method::AttentionRatio:
            return prune_fixed_ratio_by_attention(doc, config.ratio);
        case Method::AttentionThreshold:
            return prune_static_threshold(doc, config.tau_global);
        case Method::AttentionPlusSimilarity:
            return prune_attention_plus_similarity(doc, config.k, config.alpha);
        case Method::PivotThreshold:
            return prune_pivot_threshold(doc, config.k, config.k_dup, config.num_pivots);
        default:
            throw Error(Errc::MethodConfigMismatch, std::string(method_name(config.method)) + " has no pruning stage");
    }
}

inline MergeResult run_merger(const Matrix& vectors, const CompressionConfig& config, std::optional<GridShape> grid) {
    switch (config.method) {
        case Method::PruneThenMerge:
        case Method::SemCluster:
            return merge_sem_cluster(vectors, config.m);
        case Method::Pool1D:
            return merge_pool_1d(vectors, config.m);
        case Method::Pool2D:
            return merge_pool_2d(vectors, config.m, grid);
        default:
            throw Error(Errc::MethodConfigMismatch, std::string(method_name(config.method)) + " has no merging stage");
    }
}

}  // namespace detail

/// Compresses one document with the configured method.
inline CompressedEmbeddingSet compress(const PatchEmbeddingSet& doc, const CompressionConfig& config) {
    validate(doc);
    validate_config(config);

    CompressedEmbeddingSet out;
    out.doc_id = doc.doc_id;
    out.original_count = doc.size();

    if (config.method == Method::None) {
        out.embeddings = doc.embeddings;
        out.pruned_count = doc.size();
        return out;
    }
    if (config.method == Method::PruneThenMerge) {
        PruneOutcome pruned = detail::run_pruner(doc, config);
        const Matrix kept = doc.embeddings.select_rows(pruned.kept_indices);
        MergeResult merged = detail::run_merger(kept, config, std::nullopt);
        out.kept_indices = std::move(pruned.kept_indices);
        out.pruned_count = kept.rows();
        out.embeddings = std::move(merged.vectors);
        out.cluster_labels = std::move(merged.partition.labels);
        return out;
    }
    if (is_prune_only(config.method)) {
        PruneOutcome pruned = detail::run_pruner(doc, config);
        out.embeddings = doc.embeddings.select_rows(pruned.kept_indices);
        out.pruned_count = out.embeddings.rows();
        out.kept_indices = std::move(pruned.kept_indices);
        return out;
    }
    MergeResult merged = detail::run_merger(doc.embeddings, config, doc.grid_shape);
    out.pruned_count = doc.size();
    out.embeddings = std::move(merged.vectors);
    out.cluster_labels = std::move(merged.partition.labels);
    return out;
}

struct DocCompressionRecord {
    std::string doc_id;
    std::size_t original_count = 0;  // N_p
    std::size_t pruned_count = 0;    // N_p'
    std::size_t final_count = 0;     // N_p''
    double seconds = 0.0;            // compress() only, monotonic clock
};

struct CompressionJobReport {
    std::vector<DocCompressionRecord> per_doc;
    std::optional<CorpusStats> stats;  // absent for an empty corpus
};

struct CompressionResult {
    std::vector<CompressedEmbeddingSet> docs;
    CompressionJobReport report;
};

namespace detail {

inline CompressedEmbeddingSet compress_timed(const PatchEmbeddingSet& doc, const CompressionConfig& config,
                                             DocCompressionRecord& record) {
    const auto start = std::chrono::steady_clock::now();
    CompressedEmbeddingSet out;
    try {
        out = compress(doc, config);
    } catch (const Error& e) {
        throw Error(e.code(), "document '" + doc.doc_id + "': " + e.message(), e.line());
    }
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    record.doc_id = out.doc_id;
    record.original_count = out.original_count;
    record.pruned_count = out.pruned_count;
    record.final_count = out.size();
    return out;
}

}  // namespace detail

/// Output order equals input order and bytes are identical for every `parallelism`.
/// The first failing document (in input order) aborts the job.
inline CompressionResult compress_corpus(std::span<const PatchEmbeddingSet> docs, const CompressionConfig& config,
                                         std::size_t parallelism = 1) {
    validate_config(config);
    CompressionResult result;
    result.docs.resize(docs.size());
    result.report.per_doc.resize(docs.size());
    parallel_for(docs.size(), parallelism, [&](std::size_t i) {
        result.docs[i] = detail::compress_timed(docs[i], config, result.report.per_doc[i]);
    });
    if (!result.docs.empty()) result.report.stats = corpus_stats(result.docs, result.docs.front().embeddings.cols());
    return result;
}

/// Bundle-to-bundle compression holding at most `batch_size` documents in memory.
/// The output bundle carries only the compressed embeddings.
inline CompressionJobReport compress_stream(BundleReader& reader, std::ostream& out, const CompressionConfig& config,
                                            std::size_t parallelism = 1, std::size_t batch_size = 256) {
    validate_config(config);
    batch_size = std::max<std::size_t>(batch_size, 1);
    BundleWriter writer(out, reader.doc_count());
    CompressionJobReport report;
    CorpusStats stats;
    bool any = false;

    while (reader.remaining() > 0) {
        std::vector<PatchEmbeddingSet> batch;
        while (batch.size() < batch_size) {
            auto doc = reader.next();
            if (!doc) break;
            batch.push_back(std::move(*doc));
        }
        CompressionResult part = compress_corpus(batch, config, parallelism);
        for (std::size_t i = 0; i < part.docs.size(); ++i) {
            PatchEmbeddingSet record;
            record.doc_id = part.docs[i].doc_id;
            record.embeddings = std::move(part.docs[i].embeddings);
            writer.write(record);
            report.per_doc.push_back(std::move(part.report.per_doc[i]));
        }
        if (part.report.stats) {
            const auto& s = *part.report.stats;
            if (any && s.dim != stats.dim) throw Error(Errc::DimensionMismatch, "bundle mixes embedding dimensions");
            stats.dim = s.dim;
            stats.total_original_vectors += s.total_original_vectors;
            stats.total_compressed_vectors += s.total_compressed_vectors;
            any = true;
        }
    }
    writer.finish();
    if (any) {
        stats.pruning_rate = 1.0 - static_cast<double>(stats.total_compressed_vectors) /
                                       static_cast<double>(stats.total_original_vectors);
        stats.original_bytes = stats.total_original_vectors * stats.dim * sizeof(float);
        stats.compressed_bytes = stats.total_compressed_vectors * stats.dim * sizeof(float);
        report.stats = stats;
    }
    return report;
}

}  // namespace mvpress
