#pragma once

// JSON and TSV serialization for configs, compression reports, evaluation reports
// and sweep tables. Schemas are documented in README.md.

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mvpress/eval.hpp"
#include "mvpress/model.hpp"
#include "mvpress/pipeline.hpp"

namespace mvpress {

using json = nlohmann::ordered_json;

/// Round-trippable text for a double (17 significant digits).
inline std::string format_double(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

inline json to_json(const CompressionConfig& c) {
    json j;
    j["method"] = std::string(method_name(c.method));
    switch (c.method) {
        case Method::PruneThenMerge:
            j["k"] = c.k;
            j["m"] = c.m;
            break;
        case Method::DocPruner:
            j["k"] = c.k;
            break;
        case Method::Random:
            j["ratio"] = c.ratio;
            j["seed"] = c.seed;
            break;
        case Method::AttentionRatio:
            j["ratio"] = c.ratio;
            break;
        case Method::AttentionThreshold:
            j["tau_global"] = c.tau_global;
            break;
        case Method::AttentionPlusSimilarity:
            j["k"] = c.k;
            j["alpha"] = c.alpha;
            break;
        case Method::PivotThreshold:
            j["k"] = c.k;
            j["k_dup"] = c.k_dup;
            j["num_pivots"] = c.num_pivots;
            break;
        case Method::SemCluster:
        case Method::Pool1D:
        case Method::Pool2D:
            j["m"] = c.m;
            break;
        case Method::None:
            break;
    }
    return j;
}

/// Fields absent from `j` keep the values already in `base`. Unknown keys are rejected.
inline CompressionConfig config_from_json(const json& j, CompressionConfig base = {}) {
    if (!j.is_object()) throw Error(Errc::ParseError, "compression config must be a JSON object");
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "method") base.method = parse_method(value.get<std::string>());
            else if (key == "k") base.k = value.get<double>();
            else if (key == "m") base.m = value.get<std::uint32_t>();
            else if (key == "ratio") base.ratio = value.get<double>();
            else if (key == "tau_global") base.tau_global = value.get<double>();
            else if (key == "alpha") base.alpha = value.get<double>();
            else if (key == "k_dup") base.k_dup = value.get<double>();
            else if (key == "num_pivots") base.num_pivots = value.get<std::uint32_t>();
            else if (key == "seed") base.seed = value.get<std::uint64_t>();
            else throw Error(Errc::ParseError, "unknown config key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw Error(Errc::ParseError, std::string("bad config value: ") + e.what());
    }
    return base;
}

/// A sweep file is either a JSON array of configs or {"configs": [...]}.
inline std::vector<CompressionConfig> configs_from_json(const json& j) {
    const json& list = j.is_object() && j.contains("configs") ? j.at("configs") : j;
    if (!list.is_array()) throw Error(Errc::ParseError, "sweep file must hold an array of configs");
    std::vector<CompressionConfig> configs;
    for (const auto& item : list) configs.push_back(config_from_json(item));
    return configs;
}

/// Compact "key=value;..." form of the method-relevant parameters.
inline std::string config_params(const CompressionConfig& c) {
    std::string out;
    const json j = to_json(c);
    for (const auto& [key, value] : j.items()) {
        if (key == "method") continue;
        if (!out.empty()) out += ';';
        out += key + '=' + (value.is_number_float() ? format_double(value.get<double>()) : value.dump());
    }
    return out.empty() ? "-" : out;
}

inline json to_json(const CorpusStats& s) {
    return json{{"total_original_vectors", s.total_original_vectors},
                {"total_compressed_vectors", s.total_compressed_vectors},
                {"pruning_rate", s.pruning_rate},
                {"original_bytes", s.original_bytes},
                {"compressed_bytes", s.compressed_bytes},
                {"dim", s.dim}};
}

inline json to_json(const CompressionJobReport& r, bool include_timings) {
    json j;
    j["stats"] = r.stats ? to_json(*r.stats) : json(nullptr);
    json docs = json::array();
    for (const auto& d : r.per_doc) {
        json row{{"doc_id", d.doc_id},
                 {"original_count", d.original_count},
                 {"pruned_count", d.pruned_count},
                 {"final_count", d.final_count}};
        if (include_timings) row["seconds"] = d.seconds;
        docs.push_back(std::move(row));
    }
    j["per_doc"] = std::move(docs);
    return j;
}

inline json to_json(const EvalReport& r, bool include_timings) {
    json j;
    j["k"] = r.k;
    j["mean_ndcg"] = r.mean_ndcg;
    j["stats"] = to_json(r.stats);
    json per_query = json::array();
    for (const auto& q : r.per_query) per_query.push_back(json{{"query_id", q.query_id}, {"ndcg", q.ndcg}});
    j["per_query"] = std::move(per_query);
    if (include_timings) j["timings"] = json{{"compress_seconds", r.compress_seconds}, {"search_seconds", r.search_seconds}};
    return j;
}

inline json to_json(const std::vector<SweepRow>& rows, bool include_timings) {
    json out = json::array();
    for (const auto& row : rows) {
        json j;
        j["config"] = to_json(row.config);
        if (row.error) {
            j["error"] = *row.error;
        } else {
            j["pruning_rate"] = row.pruning_rate;
            j["ndcg_mean"] = row.ndcg_mean;
            if (include_timings) j["timings"] = json{{"compress_seconds", row.compress_seconds}, {"search_seconds", row.search_seconds}};
        }
        out.push_back(std::move(j));
    }
    return out;
}

/// Columns: method, params, pruning_rate, ndcg_mean. Failed rows print "error" in both numeric columns.
inline void write_sweep_tsv(const std::vector<SweepRow>& rows, std::ostream& out) {
    out << "method\tparams\tpruning_rate\tndcg_mean\n";
    for (const auto& row : rows) {
        out << method_name(row.config.method) << '\t' << config_params(row.config) << '\t';
        if (row.error) {
            out << "error\terror\n";
        } else {
            out << format_double(row.pruning_rate) << '\t' << format_double(row.ndcg_mean) << '\n';
        }
    }
}

/// Columns: query_id, rank (1-based), doc_id, score.
inline void write_results_tsv(const std::vector<SearchResult>& results, std::ostream& out) {
    for (const auto& result : results) {
        for (std::size_t r = 0; r < result.hits.size(); ++r) {
            out << result.query_id << '\t' << (r + 1) << '\t' << result.hits[r].doc_id << '\t'
                << format_double(result.hits[r].score) << '\n';
        }
    }
}

}  // namespace mvpress
