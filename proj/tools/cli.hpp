#pragma once

// mvpress command-line front end. run() is kept separate from main() so tests can
// drive it with in-memory streams.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mvpress/mvpress.hpp"
#include "mvpress/report.hpp"

namespace mvpress::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2 };

namespace detail {

inline std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::Io, "cannot open '" + path + "' for reading");
    return in;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot open '" + path + "' for writing");
    return out;
}

inline json load_json(const std::string& path) {
    auto in = open_in(path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(Errc::ParseError, "'" + path + "': " + e.what());
    }
}

inline std::vector<PatchEmbeddingSet> load_bundle(const std::string& path) {
    auto in = open_in(path);
    return read_bundle(in);
}

inline std::vector<QueryEmbeddingSet> load_queries(const std::string& path) {
    auto in = open_in(path);
    return read_queries(in);
}

inline Qrels load_qrels(const std::string& path) {
    auto in = open_in(path);
    return read_qrels(in);
}

inline void print_json(std::ostream& out, const json& j) { out << j.dump(2) << '\n'; }

/// Compression flags shared by compress and eval. Values given on the command line
/// override those from --config.
struct ConfigFlags {
    std::string config_file;
    std::string method;
    CompressionConfig values;
    std::vector<std::pair<CLI::Option*, void (*)(CompressionConfig&, const CompressionConfig&)>> options;
    CLI::Option* method_opt = nullptr;

    void attach(CLI::App& app) {
        app.add_option("--config", config_file, "JSON compression config; flags override its fields")
            ->check(CLI::ExistingFile);
        method_opt = app.add_option("--method", method, "Compression method")
                         ->check([](const std::string& text) {
                             try {
                                 parse_method(text);
                                 return std::string();
                             } catch (const Error& e) {
                                 return e.message();
                             }
                         });
        auto bind = [&](CLI::Option* opt, void (*apply)(CompressionConfig&, const CompressionConfig&)) {
            options.emplace_back(opt, apply);
        };
        bind(app.add_option("-k,--adaptation", values.k, "Adaptation factor k (default -0.75)"),
             [](CompressionConfig& c, const CompressionConfig& v) { c.k = v.k; });
        bind(app.add_option("-m,--merging", values.m, "Merging factor m (default 4)"),
             [](CompressionConfig& c, const CompressionConfig& v) { c.m = v.m; });
        bind(app.add_option("--ratio", values.ratio, "Pruning ratio for random / attention_ratio"),
             [](CompressionConfig& c, const CompressionConfig& v) { c.ratio = v.ratio; });
        bind(app.add_option("--tau-global", values.tau_global, "Global threshold for attention_threshold"),
             [](CompressionConfig& c, const CompressionConfig& v) { c.tau_global = v.tau_global; });
        bind(app.add_option("--alpha", values.alpha, "Attention weight for attention_plus_similarity"),
             [](CompressionConfig& c, const CompressionConfig& v) { c.alpha = v.alpha; });
        bind(app.add_option("--k-dup", values.k_dup, "De-duplication factor for pivot_threshold"),
             [](CompressionConfig& c, const CompressionConfig& v) { c.k_dup = v.k_dup; });
        bind(app.add_option("--num-pivots", values.num_pivots, "Pivot count for pivot_threshold"),
             [](CompressionConfig& c, const CompressionConfig& v) { c.num_pivots = v.num_pivots; });
        bind(app.add_option("--seed", values.seed, "Seed for the random method"),
             [](CompressionConfig& c, const CompressionConfig& v) { c.seed = v.seed; });
    }

    CompressionConfig resolve() const {
        CompressionConfig c;
        if (!config_file.empty()) c = config_from_json(load_json(config_file));
        if (method_opt->count() > 0) c.method = parse_method(method);
        for (const auto& [opt, apply] : options) {
            if (opt->count() > 0) apply(c, values);
        }
        validate_config(c);
        return c;
    }
};

struct SynthFlags {
    SynthParams params;

    void attach(CLI::App& app) {
        app.add_option("--docs", params.num_docs, "Number of documents")->check(CLI::PositiveNumber);
        app.add_option("--seed", params.seed, "Generator seed");
        app.add_option("--concepts", params.concepts_per_doc, "Concepts per document");
        app.add_option("--signal-per-concept", params.signal_per_concept, "Signal patches per concept");
        app.add_option("--noise", params.noise_per_doc, "Noise patches per document");
        app.add_option("--dim", params.dim, "Embedding dimension");
        app.add_option("--signal-sigma", params.signal_sigma, "Spread of signal patches around their center");
        app.add_option("--noise-scale", params.noise_scale, "Scale of noise patches");
        app.add_option("--importance-band", params.importance_band, "Width of each importance band");
        app.add_option("--importance-gap", params.importance_gap, "Gap between noise and signal importance");
        app.add_option("--queries-per-doc", params.queries_per_doc, "Queries generated per document");
    }
};

inline json to_json(const SynthParams& p) {
    return json{{"num_docs", p.num_docs},
                {"concepts_per_doc", p.concepts_per_doc},
                {"signal_per_concept", p.signal_per_concept},
                {"noise_per_doc", p.noise_per_doc},
                {"dim", p.dim},
                {"signal_sigma", p.signal_sigma},
                {"noise_scale", p.noise_scale},
                {"importance_band", p.importance_band},
                {"importance_gap", p.importance_gap},
                {"queries_per_doc", p.queries_per_doc},
                {"seed", p.seed}};
}

}  // namespace detail

/// Parses argv and runs one subcommand. Data goes to `out`, diagnostics to `err`.
/// Returns 0 on success, 1 on a usage error and 2 on a data or I/O error.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-vector embedding compression, late-interaction search and evaluation"};
    app.name("mvpress");
    app.require_subcommand(1);

    std::size_t parallelism = 1;
    bool timings = false;
    std::string format;
    std::map<const CLI::App*, std::string> default_format;
    auto add_common = [&](CLI::App* cmd, const char* fallback) {
        cmd->add_option("--parallelism,-j", parallelism, "Worker threads")->check(CLI::PositiveNumber);
        cmd->add_flag("--timings", timings, "Include wall-clock timings in the output");
        cmd->add_option("--format", format, std::string("Output format, json or tsv (default ") + fallback + ")")
            ->check(CLI::IsMember({"json", "tsv"}));
        default_format[cmd] = fallback;
    };

    // compress
    auto* compress_cmd = app.add_subcommand("compress", "Compress a document bundle into an index bundle");
    std::string in_path, out_path;
    std::size_t batch_size = 256;
    bool verbose = false;
    detail::ConfigFlags compress_flags;
    compress_cmd->add_option("--in", in_path, "Input document bundle")->required()->check(CLI::ExistingFile);
    compress_cmd->add_option("--out", out_path, "Output index bundle")->required();
    compress_cmd->add_option("--batch-size", batch_size, "Documents held in memory at once")->check(CLI::PositiveNumber);
    compress_cmd->add_flag("--verbose,-v", verbose, "One line per document on stderr");
    compress_flags.attach(*compress_cmd);
    add_common(compress_cmd, "json");

    // search
    auto* search_cmd = app.add_subcommand("search", "Rank an index against a query bundle");
    std::string index_path, queries_path;
    std::size_t top_k = 5;
    search_cmd->add_option("--index", index_path, "Index bundle")->required()->check(CLI::ExistingFile);
    search_cmd->add_option("--queries", queries_path, "Query bundle")->required()->check(CLI::ExistingFile);
    search_cmd->add_option("--top-k", top_k, "Results per query")->check(CLI::PositiveNumber);
    add_common(search_cmd, "tsv");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Compress a corpus in memory and report nDCG and storage");
    std::string corpus_path, qrels_path;
    std::size_t cutoff = 5;
    detail::ConfigFlags eval_flags;
    eval_cmd->add_option("--corpus", corpus_path, "Uncompressed document bundle")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--queries", queries_path, "Query bundle")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--qrels", qrels_path, "Relevance judgments (TSV)")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--ndcg-k", cutoff, "nDCG cutoff")->check(CLI::PositiveNumber);
    eval_flags.attach(*eval_cmd);
    add_common(eval_cmd, "json");

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "Evaluate a list of compression configs");
    std::string configs_path;
    double match_rate = 0.0;
    double tolerance = 0.03;
    sweep_cmd->add_option("--corpus", corpus_path, "Uncompressed document bundle")->required()->check(CLI::ExistingFile);
    sweep_cmd->add_option("--queries", queries_path, "Query bundle")->required()->check(CLI::ExistingFile);
    sweep_cmd->add_option("--qrels", qrels_path, "Relevance judgments (TSV)")->required()->check(CLI::ExistingFile);
    sweep_cmd->add_option("--configs", configs_path, "JSON array of configs")->required()->check(CLI::ExistingFile);
    auto* match_opt = sweep_cmd->add_option("--match-rate", match_rate, "Tune each config to this pruning rate")
                          ->check(CLI::Range(0.0, 1.0));
    sweep_cmd->add_option("--tolerance", tolerance, "Accepted distance from --match-rate")->check(CLI::Range(0.0, 1.0));
    sweep_cmd->add_option("--ndcg-k", cutoff, "nDCG cutoff")->check(CLI::PositiveNumber);
    add_common(sweep_cmd, "tsv");

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic signal/noise corpus");
    std::string prefix;
    detail::SynthFlags synth_flags;
    synth_cmd->add_option("--out-prefix", prefix, "Prefix for corpus.mveb, queries.mveb and qrels.tsv")->required();
    synth_flags.attach(*synth_cmd);

    // synergy
    auto* synergy_cmd = app.add_subcommand("synergy", "Signal distortion of prune-then-merge vs a single-stage merge");
    detail::SynthFlags synergy_flags;
    double synergy_k = -0.75;
    std::uint32_t synergy_m = 4;
    synergy_flags.attach(*synergy_cmd);
    synergy_cmd->add_option("-k,--adaptation", synergy_k, "Adaptation factor k");
    synergy_cmd->add_option("-m,--merging", synergy_m, "Merging factor m")->check(CLI::PositiveNumber);
    add_common(synergy_cmd, "json");

    // inspect
    auto* inspect_cmd = app.add_subcommand("inspect", "Print bundle header and per-document shapes");
    inspect_cmd->add_option("--in", in_path, "Bundle to inspect")->required()->check(CLI::ExistingFile);
    add_common(inspect_cmd, "tsv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }
    for (const auto& [cmd, fallback] : default_format) {
        if (cmd->parsed() && format.empty()) format = fallback;
    }

    try {
        if (compress_cmd->parsed()) {
            const CompressionConfig config = compress_flags.resolve();
            auto in = detail::open_in(in_path);
            BundleReader reader(in);
            auto sink = detail::open_out(out_path);
            const CompressionJobReport report = compress_stream(reader, sink, config, parallelism, batch_size);
            sink.close();
            if (!sink) throw Error(Errc::Io, "failed to finish writing '" + out_path + "'");
            if (verbose) {
                for (const auto& d : report.per_doc) {
                    err << d.doc_id << '\t' << d.original_count << '\t' << d.pruned_count << '\t' << d.final_count << '\n';
                }
            }
            if (format == "tsv") {
                out << "doc_id\toriginal_count\tpruned_count\tfinal_count\n";
                for (const auto& d : report.per_doc) {
                    out << d.doc_id << '\t' << d.original_count << '\t' << d.pruned_count << '\t' << d.final_count << '\n';
                }
            } else {
                json j;
                j["config"] = to_json(config);
                for (const json body = to_json(report, timings); auto& [key, value] : body.items()) j[key] = value;
                detail::print_json(out, j);
            }
        } else if (search_cmd->parsed()) {
            const auto docs = detail::load_bundle(index_path);
            std::vector<CompressedEmbeddingSet> index;
            index.reserve(docs.size());
            for (const auto& d : docs) index.push_back({d.doc_id, d.embeddings, {}, {}, d.size(), d.size()});
            const auto queries = detail::load_queries(queries_path);
            const auto results = batch_search(index, queries, top_k, parallelism);
            if (format == "json") {
                json j = json::array();
                for (const auto& r : results) {
                    json hits = json::array();
                    for (const auto& h : r.hits) hits.push_back(json{{"doc_id", h.doc_id}, {"score", h.score}});
                    j.push_back(json{{"query_id", r.query_id}, {"hits", std::move(hits)}});
                }
                detail::print_json(out, j);
            } else {
                write_results_tsv(results, out);
            }
        } else if (eval_cmd->parsed()) {
            const CompressionConfig config = eval_flags.resolve();
            const auto docs = detail::load_bundle(corpus_path);
            const auto queries = detail::load_queries(queries_path);
            const Qrels qrels = detail::load_qrels(qrels_path);
            const auto start = std::chrono::steady_clock::now();
            const CompressionResult compressed = compress_corpus(docs, config, parallelism);
            const double compress_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            EvalReport report = evaluate_run(compressed.docs, queries, qrels, cutoff, parallelism);
            report.compress_seconds = compress_seconds;
            if (format == "tsv") {
                out << "query_id\tndcg\n";
                for (const auto& q : report.per_query) out << q.query_id << '\t' << format_double(q.ndcg) << '\n';
                out << "mean\t" << format_double(report.mean_ndcg) << '\n';
            } else {
                json j;
                j["config"] = to_json(config);
                for (const json body = to_json(report, timings); auto& [key, value] : body.items()) j[key] = value;
                detail::print_json(out, j);
            }
        } else if (sweep_cmd->parsed()) {
            auto configs = configs_from_json(detail::load_json(configs_path));
            const auto docs = detail::load_bundle(corpus_path);
            const auto queries = detail::load_queries(queries_path);
            const Qrels qrels = detail::load_qrels(qrels_path);
            if (match_opt->count() > 0) {
                for (auto& c : configs) {
                    try {
                        c = calibrate_to_rate(docs, c, match_rate, tolerance).config;
                    } catch (const Error&) {
                        // left as given; the sweep row reports the error
                    }
                }
            }
            const auto rows = sweep(docs, queries, qrels, configs, cutoff, parallelism);
            if (format == "json") {
                detail::print_json(out, to_json(rows, timings));
            } else {
                write_sweep_tsv(rows, out);
            }
        } else if (synth_cmd->parsed()) {
            const SynthCorpus corpus = synth_corpus(synth_flags.params);
            if (const auto parent = std::filesystem::path(prefix + "x").parent_path(); !parent.empty()) {
                std::error_code ec;
                std::filesystem::create_directories(parent, ec);
                if (ec) throw Error(Errc::Io, "cannot create '" + parent.string() + "': " + ec.message());
            }
            {
                auto f = detail::open_out(prefix + "corpus.mveb");
                write_bundle(corpus.docs, f);
            }
            {
                auto f = detail::open_out(prefix + "queries.mveb");
                write_queries(corpus.queries, f);
            }
            {
                auto f = detail::open_out(prefix + "qrels.tsv");
                write_qrels(corpus.qrels, f);
            }
            json j;
            j["params"] = detail::to_json(synth_flags.params);
            j["files"] = json{prefix + "corpus.mveb", prefix + "queries.mveb", prefix + "qrels.tsv"};
            detail::print_json(out, j);
        } else if (synergy_cmd->parsed()) {
            const SynergyReport r = synergy_experiment(synergy_flags.params, synergy_k, synergy_m, parallelism);
            if (format == "tsv") {
                out << "distortion_ours\tdistortion_naive\tcodebook_size\tsignal_vectors\n"
                    << format_double(r.distortion_ours) << '\t' << format_double(r.distortion_naive) << '\t'
                    << r.codebook_size << '\t' << r.signal_vectors << '\n';
            } else {
                detail::print_json(out, json{{"params", detail::to_json(synergy_flags.params)},
                                             {"k", synergy_k},
                                             {"m", synergy_m},
                                             {"distortion_ours", r.distortion_ours},
                                             {"distortion_naive", r.distortion_naive},
                                             {"codebook_size", r.codebook_size},
                                             {"signal_vectors", r.signal_vectors}});
            }
        } else if (inspect_cmd->parsed()) {
            auto in = detail::open_in(in_path);
            BundleReader reader(in);
            json docs = json::array();
            if (format == "tsv") {
                out << "# version " << kBundleVersion << ", " << reader.doc_count() << " documents\n";
                out << "doc_id\tn\td\timportance\teos\tgrid\n";
            }
            while (auto doc = reader.next()) {
                const std::string grid = doc->grid_shape ? std::to_string(doc->grid_shape->rows) + "x" +
                                                               std::to_string(doc->grid_shape->cols)
                                                         : "-";
                if (format == "tsv") {
                    out << doc->doc_id << '\t' << doc->size() << '\t' << doc->dim() << '\t'
                        << (doc->importance ? "yes" : "no") << '\t' << (doc->eos_embedding ? "yes" : "no") << '\t' << grid
                        << '\n';
                } else {
                    docs.push_back(json{{"doc_id", doc->doc_id},
                                        {"n", doc->size()},
                                        {"d", doc->dim()},
                                        {"importance", doc->importance.has_value()},
                                        {"eos", doc->eos_embedding.has_value()},
                                        {"grid", grid}});
                }
            }
            if (format == "json") {
                detail::print_json(out, json{{"version", kBundleVersion}, {"doc_count", reader.doc_count()}, {"docs", docs}});
            }
        }
    } catch (const Error& e) {
        err << "mvpress: " << e.what() << '\n';
        return kData;
    } catch (const std::exception& e) {
        err << "mvpress: " << e.what() << '\n';
        return kData;
    }
    return kOk;
}

}  // namespace mvpress::cli
