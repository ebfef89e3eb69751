#pragma once

// Late-interaction (MaxSim) scoring and exact top-k search over a compressed index.

#include <algorithm>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mvpress/error.hpp"
#include "mvpress/model.hpp"
#include "mvpress/parallel.hpp"

namespace mvpress {

struct SearchHit {
    std::string doc_id;
    double score = 0.0;

    friend bool operator==(const SearchHit&, const SearchHit&) = default;
};

/// Hits ordered by descending score, ties by ascending doc_id.
struct SearchResult {
    std::string query_id;
    std::vector<SearchHit> hits;

    friend bool operator==(const SearchResult&, const SearchResult&) = default;
};

/// sum_i max_j q_i . d_j over raw (unnormalized) dot products, accumulated in double.
inline double maxsim(const Matrix& query, const Matrix& doc) {
    if (query.cols() != doc.cols()) {
        throw Error(Errc::DimensionMismatch, "query dimension " + std::to_string(query.cols()) +
                                                 " vs document dimension " + std::to_string(doc.cols()));
    }
    if (doc.rows() == 0) throw Error(Errc::Empty, "maxsim against an empty document");
    const std::size_t d = doc.cols();
    double total = 0.0;
    for (std::size_t i = 0; i < query.rows(); ++i) {
        const float* q = query.row(i).data();
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < doc.rows(); ++j) {
            const float* v = doc.row(j).data();
            double sim = 0.0;
            for (std::size_t c = 0; c < d; ++c) sim += static_cast<double>(q[c]) * v[c];
            if (sim > best) best = sim;
        }
        total += best;
    }
    return total;
}

inline double maxsim(const QueryEmbeddingSet& query, const Matrix& doc) { return maxsim(query.embeddings, doc); }

inline bool ranks_before(const SearchHit& a, const SearchHit& b) noexcept {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
}

/// Exhaustive scoring of every document; no shortlist.
inline SearchResult search(std::span<const CompressedEmbeddingSet> index, const QueryEmbeddingSet& query,
                           std::size_t top_k) {
    if (index.empty()) throw Error(Errc::EmptyIndex, "search over an empty index");
    if (top_k < 1) throw Error(Errc::InvalidArgument, "top_k must be >= 1");

    std::vector<SearchHit> hits;
    hits.reserve(index.size());
    for (const auto& doc : index) hits.push_back({doc.doc_id, maxsim(query.embeddings, doc.embeddings)});

    const std::size_t keep = std::min(top_k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), ranks_before);
    hits.resize(keep);
    return {query.query_id, std::move(hits)};
}

/// One SearchResult per query, in query order, identical for any `parallelism`.
inline std::vector<SearchResult> batch_search(std::span<const CompressedEmbeddingSet> index,
                                              std::span<const QueryEmbeddingSet> queries, std::size_t top_k,
                                              std::size_t parallelism = 1) {
    if (index.empty()) throw Error(Errc::EmptyIndex, "search over an empty index");
    std::vector<SearchResult> results(queries.size());
    parallel_for(queries.size(), parallelism, [&](std::size_t i) { results[i] = search(index, queries[i], top_k); });
    return results;
}

}  // namespace mvpress
