#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mvpress/error.hpp"

namespace mvpress {

/// Dense row-major matrix of 32-bit floats. One row per embedding vector.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw Error(Errc::DimensionMismatch, "matrix buffer holds " + std::to_string(data_.size()) +
                                                     " floats, expected " + std::to_string(rows_ * cols_));
        }
    }

    static Matrix from_rows(const std::vector<std::vector<float>>& rows) {
        if (rows.empty()) return {};
        Matrix out(rows.size(), rows.front().size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != out.cols_) {
                throw Error(Errc::DimensionMismatch, "ragged rows in Matrix::from_rows");
            }
            std::copy(rows[i].begin(), rows[i].end(), out.row(i).begin());
        }
        return out;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return rows_ == 0; }

    std::span<const float> row(std::size_t i) const noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<float> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }

    float operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }
    float& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }

    std::span<const float> data() const noexcept { return data_; }
    std::span<float> data() noexcept { return data_; }

    /// Copy of the listed rows, in the listed order.
    Matrix select_rows(std::span<const std::size_t> indices) const {
        Matrix out(indices.size(), cols_);
        for (std::size_t r = 0; r < indices.size(); ++r) {
            auto src = row(indices[r]);
            std::copy(src.begin(), src.end(), out.row(r).begin());
        }
        return out;
    }

    /// Bitwise equality (distinguishes -0.0f from 0.0f, NaN payloads compare by bits).
    friend bool operator==(const Matrix& a, const Matrix& b) noexcept {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ &&
               (a.data_.empty() || std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(float)) == 0);
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<float> data_;
};

struct GridShape {
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    friend bool operator==(const GridShape&, const GridShape&) = default;
};

/// One document page: N_p patch embeddings plus the metadata the compressors consult.
struct PatchEmbeddingSet {
    std::string doc_id;
    Matrix embeddings;
    std::optional<std::vector<float>> importance;
    std::optional<std::vector<float>> eos_embedding;
    std::optional<GridShape> grid_shape;

    std::size_t size() const noexcept { return embeddings.rows(); }
    std::size_t dim() const noexcept { return embeddings.cols(); }

    friend bool operator==(const PatchEmbeddingSet&, const PatchEmbeddingSet&) = default;
};

struct QueryEmbeddingSet {
    std::string query_id;
    Matrix embeddings;

    friend bool operator==(const QueryEmbeddingSet&, const QueryEmbeddingSet&) = default;
};

enum class Method {
    PruneThenMerge,
    DocPruner,
    Random,
    AttentionRatio,
    AttentionThreshold,
    AttentionPlusSimilarity,
    PivotThreshold,
    SemCluster,
    Pool1D,
    Pool2D,
    None,
};

inline constexpr std::pair<Method, std::string_view> kMethodNames[] = {
    {Method::PruneThenMerge, "prune_then_merge"},
    {Method::DocPruner, "docpruner"},
    {Method::Random, "random"},
    {Method::AttentionRatio, "attention_ratio"},
    {Method::AttentionThreshold, "attention_threshold"},
    {Method::AttentionPlusSimilarity, "attention_plus_similarity"},
    {Method::PivotThreshold, "pivot_threshold"},
    {Method::SemCluster, "sem_cluster"},
    {Method::Pool1D, "pool_1d"},
    {Method::Pool2D, "pool_2d"},
    {Method::None, "none"},
};

constexpr std::string_view method_name(Method m) noexcept {
    for (const auto& [method, name] : kMethodNames) {
        if (method == m) return name;
    }
    return "none";
}

/// Accepts both `prune_then_merge` and `prune-then-merge` spellings.
inline Method parse_method(std::string_view text) {
    std::string normalized(text);
    for (char& c : normalized) {
        if (c == '-') c = '_';
    }
    for (const auto& [method, name] : kMethodNames) {
        if (name == normalized) return method;
    }
    throw Error(Errc::InvalidArgument, "unknown compression method '" + std::string(text) + "'");
}

constexpr bool is_prune_only(Method m) noexcept {
    switch (m) {
        case Method::DocPruner:
        case Method::Random:
        case Method::AttentionRatio:
        case Method::AttentionThreshold:
        case Method::AttentionPlusSimilarity:
        case Method::PivotThreshold:
            return true;
        default:
            return false;
    }
}

constexpr bool is_merge_only(Method m) noexcept {
    return m == Method::SemCluster || m == Method::Pool1D || m == Method::Pool2D;
}

/// Method selector plus every hyperparameter any method reads. Defaults are the
/// k = -0.75, m = 4 operating point.
struct CompressionConfig {
    Method method = Method::PruneThenMerge;
    double k = -0.75;
    std::uint32_t m = 4;
    double ratio = 0.5;
    double tau_global = 0.0;
    double alpha = 0.5;
    double k_dup = 0.0;
    std::uint32_t num_pivots = 10;
    std::uint64_t seed = 0;

    friend bool operator==(const CompressionConfig&, const CompressionConfig&) = default;
};

inline bool is_perfect_square(std::uint32_t m) noexcept {
    auto s = static_cast<std::uint32_t>(std::lround(std::sqrt(static_cast<double>(m))));
    return s * s == m;
}

/// Checks only the fields `config.method` consults.
inline void validate_config(const CompressionConfig& config) {
    auto bad = [](const std::string& what) { throw Error(Errc::MethodConfigMismatch, what); };
    switch (config.method) {
        case Method::PruneThenMerge:
        case Method::SemCluster:
        case Method::Pool1D:
            if (config.m < 1) bad("merging factor m must be >= 1");
            break;
        case Method::Pool2D:
            if (config.m < 1) bad("merging factor m must be >= 1");
            if (!is_perfect_square(config.m)) {
                throw Error(Errc::NotPerfectSquare, "pool_2d merging factor " + std::to_string(config.m) +
                                                        " is not a perfect square");
            }
            break;
        case Method::Random:
        case Method::AttentionRatio:
            if (!(config.ratio >= 0.0 && config.ratio < 1.0)) bad("ratio must lie in [0, 1)");
            break;
        case Method::AttentionPlusSimilarity:
            if (!(config.alpha >= 0.0 && config.alpha <= 1.0)) bad("alpha must lie in [0, 1]");
            if (!std::isfinite(config.k)) bad("k must be finite");
            break;
        case Method::PivotThreshold:
            if (config.num_pivots < 1) bad("num_pivots must be >= 1");
            if (!std::isfinite(config.k) || !std::isfinite(config.k_dup)) bad("k and k_dup must be finite");
            break;
        case Method::DocPruner:
            if (!std::isfinite(config.k)) bad("k must be finite");
            break;
        case Method::AttentionThreshold:
            if (std::isnan(config.tau_global)) bad("tau_global must not be NaN");
            break;
        case Method::None:
            break;
    }
}

/// Final vectors for one document plus provenance.
struct CompressedEmbeddingSet {
    std::string doc_id;
    Matrix embeddings;
    std::vector<std::size_t> kept_indices;    // empty for merge-only and identity methods
    std::vector<std::uint32_t> cluster_labels;  // empty for prune-only and identity methods
    std::size_t original_count = 0;
    std::size_t pruned_count = 0;  // N_p'

    std::size_t size() const noexcept { return embeddings.rows(); }

    friend bool operator==(const CompressedEmbeddingSet&, const CompressedEmbeddingSet&) = default;
};

struct CorpusStats {
    std::uint64_t total_original_vectors = 0;
    std::uint64_t total_compressed_vectors = 0;
    double pruning_rate = 0.0;
    std::uint64_t original_bytes = 0;
    std::uint64_t compressed_bytes = 0;
    std::uint64_t dim = 0;

    friend bool operator==(const CorpusStats&, const CorpusStats&) = default;
};

/// query_id -> doc_id -> grade. Ordered maps keep every consumer deterministic.
using QrelsRow = std::map<std::string, int, std::less<>>;
using Qrels = std::map<std::string, QrelsRow, std::less<>>;

namespace detail {

inline bool all_finite(std::span<const float> values) noexcept {
    for (float v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace detail

inline void validate(const PatchEmbeddingSet& doc) {
    const std::size_t n = doc.size();
    if (n == 0 || doc.dim() == 0) {
        throw Error(Errc::Empty, "document '" + doc.doc_id + "' has no patches or zero dimension");
    }
    if (!detail::all_finite(doc.embeddings.data())) {
        throw Error(Errc::NonFinite, "document '" + doc.doc_id + "' embeddings contain NaN/Inf");
    }
    if (doc.importance) {
        if (doc.importance->size() != n) {
            throw Error(Errc::DimensionMismatch, "document '" + doc.doc_id + "' has " + std::to_string(n) +
                                                     " patches but " + std::to_string(doc.importance->size()) +
                                                     " importance scores");
        }
        if (!detail::all_finite(*doc.importance)) {
            throw Error(Errc::NonFinite, "document '" + doc.doc_id + "' importance contains NaN/Inf");
        }
    }
    if (doc.eos_embedding) {
        if (doc.eos_embedding->size() != doc.dim()) {
            throw Error(Errc::DimensionMismatch, "document '" + doc.doc_id + "' eos embedding has wrong dimension");
        }
        if (!detail::all_finite(*doc.eos_embedding)) {
            throw Error(Errc::NonFinite, "document '" + doc.doc_id + "' eos embedding contains NaN/Inf");
        }
    }
    if (doc.grid_shape) {
        const auto cells = static_cast<std::uint64_t>(doc.grid_shape->rows) * doc.grid_shape->cols;
        if (cells != n) {
            throw Error(Errc::DimensionMismatch, "document '" + doc.doc_id + "' grid " +
                                                     std::to_string(doc.grid_shape->rows) + "x" +
                                                     std::to_string(doc.grid_shape->cols) + " does not cover " +
                                                     std::to_string(n) + " patches");
        }
    }
}

inline void validate(const QueryEmbeddingSet& query) {
    if (query.embeddings.rows() == 0 || query.embeddings.cols() == 0) {
        throw Error(Errc::Empty, "query '" + query.query_id + "' has no tokens");
    }
    if (!detail::all_finite(query.embeddings.data())) {
        throw Error(Errc::NonFinite, "query '" + query.query_id + "' contains NaN/Inf");
    }
}

inline CorpusStats corpus_stats(std::span<const CompressedEmbeddingSet> docs, std::size_t dim) {
    if (docs.empty()) throw Error(Errc::Empty, "corpus_stats on an empty corpus");
    CorpusStats stats;
    stats.dim = dim;
    for (const auto& doc : docs) {
        if (doc.embeddings.cols() != dim) {
            throw Error(Errc::DimensionMismatch, "document '" + doc.doc_id + "' has dimension " +
                                                     std::to_string(doc.embeddings.cols()) + ", expected " +
                                                     std::to_string(dim));
        }
        stats.total_original_vectors += doc.original_count;
        stats.total_compressed_vectors += doc.size();
    }
    if (stats.total_original_vectors == 0) throw Error(Errc::Empty, "corpus has no original vectors");
    stats.pruning_rate = 1.0 - static_cast<double>(stats.total_compressed_vectors) /
                                   static_cast<double>(stats.total_original_vectors);
    stats.original_bytes = stats.total_original_vectors * dim * sizeof(float);
    stats.compressed_bytes = stats.total_compressed_vectors * dim * sizeof(float);
    return stats;
}

}  // namespace mvpress
