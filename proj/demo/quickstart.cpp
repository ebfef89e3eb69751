// Compress a small synthetic corpus a few ways and compare retrieval quality.

#include <cstdio>

#include "mvpress/mvpress.hpp"

int main() {
    using namespace mvpress;

    SynthParams params;
    params.num_docs = 40;
    const SynthCorpus corpus = synth_corpus(params);

    std::printf("%-18s %12s %10s\n", "method", "pruning_rate", "ndcg@5");
    for (Method method : {Method::None, Method::DocPruner, Method::SemCluster, Method::PruneThenMerge}) {
        CompressionConfig config;
        config.method = method;
        const auto compressed = compress_corpus(corpus.docs, config);
        const auto report = evaluate_run(compressed.docs, corpus.queries, corpus.qrels, 5);
        std::printf("%-18s %12.4f %10.4f\n", std::string(method_name(method)).c_str(), report.stats.pruning_rate,
                    report.mean_ndcg);
    }

    // single document, step by step
    const PatchEmbeddingSet& doc = corpus.docs.front();
    const auto kept = prune_adaptive(doc, -0.75);
    const auto merged = merge_sem_cluster(doc.embeddings.select_rows(kept.kept_indices), 4);
    std::printf("\n%s: %zu patches, %zu kept (threshold %.4f), %zu after merging\n", doc.doc_id.c_str(), doc.size(),
                kept.kept_indices.size(), kept.threshold_used.value_or(0.0), merged.vectors.rows());

    const auto hits = search(compress_corpus(corpus.docs, CompressionConfig{}).docs, corpus.queries.front(), 3);
    std::printf("top hits for %s:", hits.query_id.c_str());
    for (const auto& h : hits.hits) std::printf(" %s (%.3f)", h.doc_id.c_str(), h.score);
    std::printf("\n");
}
