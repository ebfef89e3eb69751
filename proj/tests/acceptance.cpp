// Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero if
// any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "generators.hpp"
#include "mvpress/mvpress.hpp"
#include "oracles.hpp"

using namespace mvpress;

namespace {

// Pruning rate of prune-then-merge (k = -0.75, m = 4) on the default synthetic corpus
// (seed 0), recorded from the first run.
constexpr double kPinnedRate = 0.875;

struct Verdict {
    bool pass;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

// 1 -------------------------------------------------------------------------
Verdict pruning_oracle() {
    const auto start = std::chrono::steady_clock::now();
    SplitMix64 rng(0xC1);
    int equal = 0, empty = 0;
    const int trials = 1000;
    for (int t = 0; t < trials; ++t) {
        const std::size_t n = 1 + rng.below(512);
        PatchEmbeddingSet doc;
        doc.doc_id = "p" + std::to_string(t);
        doc.embeddings = Matrix(n, 1);
        doc.importance = gen::importance(rng, n);
        const double k = rng.uniform(-3.0, 3.0);
        const auto kept = prune_adaptive(doc, k).kept_indices;
        equal += kept == oracle::prune_adaptive(*doc.importance, k);
        empty += kept.empty();
    }
    const double secs = seconds_since(start);
    return {equal == trials && empty == 0 && secs < 10.0,
            fmt("%d/%d kept sets equal the reference, %d empty, %.2f s", equal, trials, empty, secs)};
}

// 2 -------------------------------------------------------------------------
Verdict centroid_optimality() {
    const auto start = std::chrono::steady_clock::now();
    SplitMix64 rng(0xC2);
    int reductions = 0;
    double worst_fd = 0.0, worst_center_grad = 0.0;
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = 1 + rng.below(50), d = 1 + rng.below(32);
        const Matrix pts = gen::gaussian_matrix(rng, n, d, rng.uniform(0.1, 10.0));
        Partition one;
        one.labels.assign(n, 0);
        one.n_clusters = 1;
        const Matrix c = centroids(pts, one);
        std::vector<double> center(c.row(0).begin(), c.row(0).end());

        double scale = 1.0;
        for (float x : pts.data()) scale = std::max(scale, static_cast<double>(std::abs(x)));
        auto sse = [&](const std::vector<double>& v) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t k = 0; k < d; ++k) s += (pts(i, k) - v[k]) * (pts(i, k) - v[k]);
            }
            return s;
        };
        auto gradient = [&](const std::vector<double>& v) {
            std::vector<double> g(d, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t k = 0; k < d; ++k) g[k] += 2.0 * (v[k] - pts(i, k));
            }
            return g;
        };
        auto finite_difference = [&](std::vector<double> v) {
            std::vector<double> g(d);
            const double h = 1e-3 * scale;
            for (std::size_t k = 0; k < d; ++k) {
                const double x = v[k];
                v[k] = x + h;
                const double up = sse(v);
                v[k] = x - h;
                const double down = sse(v);
                v[k] = x;
                g[k] = (up - down) / (2.0 * h);
            }
            return g;
        };
        auto norm = [](const std::vector<double>& v) {
            double s = 0.0;
            for (double x : v) s += x * x;
            return std::sqrt(s);
        };

        const double base = sse(center);
        for (int p = 0; p < 100; ++p) {
            auto v = center;
            const double mag = scale * std::pow(10.0, -rng.uniform(0.0, 3.0));
            for (auto& x : v) x += mag * rng.normal();
            reductions += sse(v) < base;
        }

        // Stationarity at the centroid, relative to the gradient scale n * |d|.
        const double grad_scale = 2.0 * static_cast<double>(n) * scale;
        worst_center_grad = std::max(worst_center_grad, norm(gradient(center)) / grad_scale);
        // Analytic vs finite-difference gradient at the centroid and at a displaced point.
        for (int probe = 0; probe < 2; ++probe) {
            auto v = center;
            if (probe == 1) {
                for (auto& x : v) x += scale * rng.normal();
            }
            const auto ga = gradient(v);
            const auto gf = finite_difference(v);
            std::vector<double> diff(d);
            for (std::size_t k = 0; k < d; ++k) diff[k] = ga[k] - gf[k];
            worst_fd = std::max(worst_fd, norm(diff) / std::max(norm(gf), grad_scale));
        }
    }
    const double secs = seconds_since(start);
    return {reductions == 0 && worst_fd <= 1e-4 && worst_center_grad <= 1e-5 && secs < 5.0,
            fmt("%d/20000 perturbations reduced the error, max gradient relative error %.2e, max centroid gradient "
                "%.2e, %.2f s",
                reductions, worst_fd, worst_center_grad, secs)};
}

// 3 -------------------------------------------------------------------------
std::vector<double> unit_vector(SplitMix64& rng, std::size_t d) {
    std::vector<double> v(d);
    double s = 0.0;
    for (auto& x : v) {
        x = rng.normal();
        s += x * x;
    }
    for (auto& x : v) x /= std::sqrt(s);
    return v;
}

Verdict ward_recovery() {
    const auto start = std::chrono::steady_clock::now();
    SplitMix64 rng(0xC3);
    const double min_center_cos = std::cos(60.0 * M_PI / 180.0);
    const double max_spread = 5.0 * M_PI / 180.0;
    const std::size_t d = 16;
    int recovered = 0, tie_failures = 0, hard_failures = 0;
    const int trials = 500;
    for (int t = 0; t < trials; ++t) {
        const std::size_t c = 2 + rng.below(5);
        std::vector<std::vector<double>> centers;
        while (centers.size() < c) {
            auto v = unit_vector(rng, d);
            bool far = true;
            for (const auto& u : centers) {
                double dot = 0.0;
                for (std::size_t k = 0; k < d; ++k) dot += u[k] * v[k];
                far = far && dot <= min_center_cos;
            }
            if (far) centers.push_back(std::move(v));
        }
        std::vector<std::vector<float>> rows;
        std::vector<std::uint32_t> truth;
        for (std::size_t b = 0; b < c; ++b) {
            for (std::size_t i = 0, size = 1 + rng.below(12); i < size; ++i) {
                // rotate the center by an angle <= 5 degrees toward a random orthogonal direction
                auto w = unit_vector(rng, d);
                double dot = 0.0;
                for (std::size_t k = 0; k < d; ++k) dot += w[k] * centers[b][k];
                double s = 0.0;
                for (std::size_t k = 0; k < d; ++k) {
                    w[k] -= dot * centers[b][k];
                    s += w[k] * w[k];
                }
                const double angle = rng.uniform(0.0, max_spread);
                const double length = rng.uniform(0.5, 2.0);
                std::vector<float> row(d);
                for (std::size_t k = 0; k < d; ++k) {
                    row[k] = static_cast<float>(length * (std::cos(angle) * centers[b][k] + std::sin(angle) * w[k] / std::sqrt(s)));
                }
                rows.push_back(std::move(row));
                truth.push_back(static_cast<std::uint32_t>(b));
            }
        }
        // interleave blob members so slot order carries no hint
        std::vector<std::size_t> order(rows.size());
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        std::vector<std::vector<float>> shuffled;
        std::vector<std::uint32_t> shuffled_truth;
        for (auto i : order) {
            shuffled.push_back(rows[i]);
            shuffled_truth.push_back(truth[i]);
        }
        const Matrix vectors = Matrix::from_rows(shuffled);
        const auto partition = ward_linkage_partition(cosine_distance_matrix(vectors), c);
        if (oracle::same_partition(partition.labels, shuffled_truth)) {
            ++recovered;
        } else if (std::abs(oracle::ward_objective(vectors, partition.labels) -
                            oracle::ward_objective(vectors, shuffled_truth)) <= 1e-9) {
            ++tie_failures;
        } else {
            ++hard_failures;
        }
    }
    const double secs = seconds_since(start);
    return {recovered >= 495 && hard_failures == 0 && secs < 30.0,
            fmt("%d/%d blob partitions recovered, %d failures at objective ties, %d other failures, %.2f s", recovered,
                trials, tie_failures, hard_failures, secs)};
}

// 4 -------------------------------------------------------------------------
Verdict compression_arithmetic() {
    SplitMix64 rng(0xC4);
    int mismatches = 0, cases = 0;
    for (std::size_t n = 1; n <= 100; ++n) {
        const Matrix vectors = gen::gaussian_matrix(rng, n, 8);
        for (std::uint32_t m = 1; m <= 10; ++m) {
            ++cases;
            const std::size_t expected = (n < m || m <= 1) ? n : std::max<std::size_t>(1, n / m);
            const auto out = merge_sem_cluster(vectors, m);
            mismatches += out.vectors.rows() != expected || out.partition.n_clusters != expected;
        }
    }
    return {mismatches == 0, fmt("%d/%d (n, m) pairs produce the expected row count", cases - mismatches, cases)};
}

// 5 -------------------------------------------------------------------------
Verdict maxsim_correctness() {
    SplitMix64 rng(0xC5);
    int equal = 0, bound_violations = 0, token_checks = 0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t d = 1 + rng.below(64);
        const Matrix q = gen::gaussian_matrix(rng, 1 + rng.below(32), d);
        const Matrix doc = gen::gaussian_matrix(rng, 1 + rng.below(128), d);
        equal += maxsim(q, doc) == oracle::maxsim(q, doc);
    }
    for (int t = 0; t < 1000; ++t) {
        const std::size_t d = 1 + rng.below(32);
        const auto doc = gen::document(rng, 1 + rng.below(128), d, "s" + std::to_string(t));
        const Matrix q = gen::gaussian_matrix(rng, 1 + rng.below(16), d);
        const auto kept = prune_adaptive(doc, rng.uniform(-2.0, 2.0)).kept_indices;
        const Matrix pruned = doc.embeddings.select_rows(kept);
        for (std::size_t i = 0; i < q.rows(); ++i) {
            const std::size_t row[] = {i};
            const Matrix token = q.select_rows(row);
            ++token_checks;
            bound_violations += maxsim(token, pruned) > maxsim(token, doc.embeddings);
        }
        bound_violations += maxsim(q, pruned) > maxsim(q, doc.embeddings);
    }
    return {equal == 1000 && bound_violations == 0,
            fmt("%d/1000 scores equal the double loop exactly, %d subset-bound violations over %d token maxima", equal,
                bound_violations, token_checks)};
}

// 6 -------------------------------------------------------------------------
Verdict ndcg_oracle() {
    SplitMix64 rng(0xC6);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t pool = 1 + rng.below(15);
        QrelsRow qrels;
        for (std::size_t i = 0, judged = rng.below(8); i < judged; ++i) {
            qrels["d" + std::to_string(rng.below(pool))] = static_cast<int>(rng.below(4));
        }
        std::vector<std::string> ranking;
        for (std::size_t i = 0; i < pool; ++i) ranking.push_back("d" + std::to_string(i));
        for (std::size_t i = ranking.size(); i > 1; --i) std::swap(ranking[i - 1], ranking[rng.below(i)]);
        ranking.resize(rng.below(pool + 1));
        const std::size_t k = 1 + rng.below(10);
        worst = std::max(worst, std::abs(ndcg_at_k(ranking, qrels, k) - oracle::ndcg_brute_force(ranking, qrels, k)));
    }
    const QrelsRow one{{"rel", 1}};
    const std::vector<std::string> first{"rel", "x"}, second{"x", "rel"}, none{"x", "y"};
    const bool hand = ndcg_at_k(first, one, 5) == 1.0 && ndcg_at_k(second, one, 5) == 1.0 / std::log2(3.0) &&
                      ndcg_at_k(none, QrelsRow{}, 5) == 0.0;
    return {worst <= 1e-12 && hand,
            fmt("max |error| %.2e over 1000 random cases, hand examples %s", worst, hand ? "exact" : "differ")};
}

// 7 -------------------------------------------------------------------------
Verdict synergy() {
    const auto start = std::chrono::steady_clock::now();
    const SynthParams defaults;
    const bool separated = defaults.importance_gap >= 10.0 * defaults.importance_band &&
                           defaults.noise_scale >= 3.0 * defaults.signal_sigma;
    int wins = 0;
    double gap_sum = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        SynthParams p;
        p.seed = seed;
        const auto r = synergy_experiment(p, -0.75, 4);
        wins += r.distortion_ours < r.distortion_naive;
        gap_sum += r.distortion_naive - r.distortion_ours;
    }
    const double secs = seconds_since(start);
    return {separated && wins >= 95 && gap_sum > 0.0 && secs < 60.0,
            fmt("ours < naive in %d/100 seeds, mean gap %.4g, %.2f s", wins, gap_sum / 100.0, secs)};
}

// 8 -------------------------------------------------------------------------
Verdict high_compression_ordering() {
    const auto start = std::chrono::steady_clock::now();
    const double target = 0.85, tolerance = 0.03;
    int beat_docpruner = 0, beat_sem = 0, off_band = 0;
    double sum_ptm = 0.0, sum_doc = 0.0, sum_sem = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        SynthParams p;
        p.seed = seed;
        const auto corpus = synth_corpus(p);
        auto run = [&](Method method) {
            CompressionConfig base;
            base.method = method;
            const auto cal = calibrate_to_rate(corpus.docs, base, target, tolerance);
            const auto compressed = compress_corpus(corpus.docs, cal.config);
            const auto report = evaluate_run(compressed.docs, corpus.queries, corpus.qrels, 5);
            off_band += std::abs(report.stats.pruning_rate - target) > tolerance;
            return report.mean_ndcg;
        };
        const double ptm = run(Method::PruneThenMerge);
        const double doc = run(Method::DocPruner);
        const double sem = run(Method::SemCluster);
        beat_docpruner += ptm >= doc;
        beat_sem += ptm >= sem;
        sum_ptm += ptm;
        sum_doc += doc;
        sum_sem += sem;
    }
    const double secs = seconds_since(start);
    return {beat_docpruner >= 90 && beat_sem >= 60 && off_band == 0 && secs < 300.0,
            fmt("prune_then_merge >= docpruner in %d/100, >= sem_cluster in %d/100 (mean nDCG@5 %.4f / %.4f / %.4f), "
                "%d runs outside the rate band, %.1f s",
                beat_docpruner, beat_sem, sum_ptm / 100, sum_doc / 100, sum_sem / 100, off_band, secs)};
}

// 9 -------------------------------------------------------------------------
Verdict storage_accounting() {
    const auto corpus = synth_corpus(SynthParams{});
    const auto result = compress_corpus(corpus.docs, CompressionConfig{});
    const CorpusStats& s = *result.report.stats;
    const bool counts = s.compressed_bytes * s.total_original_vectors == s.original_bytes * s.total_compressed_vectors &&
                        s.original_bytes == s.total_original_vectors * s.dim * 4 &&
                        s.compressed_bytes == s.total_compressed_vectors * s.dim * 4;
    const double byte_ratio = static_cast<double>(s.compressed_bytes) / static_cast<double>(s.original_bytes);
    const double count_ratio =
        static_cast<double>(s.total_compressed_vectors) / static_cast<double>(s.total_original_vectors);
    const bool ratio = byte_ratio == count_ratio && 1.0 - s.pruning_rate == 1.0 - (1.0 - count_ratio);
    const bool pinned = s.pruning_rate == kPinnedRate;
    return {counts && ratio && pinned,
            fmt("bytes %llu -> %llu, ratio %.17g, pruning_rate %.17g (pinned %.17g)",
                static_cast<unsigned long long>(s.original_bytes), static_cast<unsigned long long>(s.compressed_bytes),
                byte_ratio, s.pruning_rate, kPinnedRate)};
}

// 10 ------------------------------------------------------------------------
std::string serialize(const CompressionResult& r) {
    std::ostringstream out;
    std::vector<PatchEmbeddingSet> records;
    for (const auto& d : r.docs) {
        out << d.doc_id << ' ' << d.original_count << ' ' << d.pruned_count << ' ';
        for (auto i : d.kept_indices) out << i << ',';
        for (auto l : d.cluster_labels) out << l << ';';
        PatchEmbeddingSet rec;
        rec.doc_id = d.doc_id;
        rec.embeddings = d.embeddings;
        records.push_back(std::move(rec));
    }
    write_bundle(records, out);
    return out.str();
}

std::string serialize(const std::vector<SearchResult>& results) {
    std::ostringstream out;
    for (const auto& r : results) {
        for (const auto& h : r.hits) {
            out << r.query_id << '\t' << h.doc_id << '\t';
            out.write(reinterpret_cast<const char*>(&h.score), sizeof h.score);
        }
    }
    return out.str();
}

Verdict determinism() {
    const auto corpus = synth_corpus(SynthParams{});
    int mismatches = 0, comparisons = 0;
    for (const auto& [method, name] : kMethodNames) {
        CompressionConfig c;
        c.method = method;
        c.seed = 1;
        std::string ref_index, ref_results;
        for (std::size_t p : {1, 2, 8}) {
            const auto compressed = compress_corpus(corpus.docs, c, p);
            const std::string index = serialize(compressed);
            const std::string results = serialize(batch_search(compressed.docs, corpus.queries, 5, p));
            if (p == 1) {
                ref_index = index;
                ref_results = results;
            } else {
                comparisons += 2;
                mismatches += (index != ref_index) + (results != ref_results);
            }
        }
    }
    return {mismatches == 0,
            fmt("%d/%d index and result comparisons byte-identical across parallelism 1, 2, 8 for all methods",
                comparisons - mismatches, comparisons)};
}

// 11 ------------------------------------------------------------------------
Verdict format_round_trip() {
    SplitMix64 rng(0xCB);
    int ok = 0;
    std::vector<int> combos(8, 0);
    for (int t = 0; t < 500; ++t) {
        std::vector<PatchEmbeddingSet> docs;
        for (std::size_t i = 0, n = 1 + rng.below(6); i < n; ++i) {
            const unsigned mask = i == 0 ? static_cast<unsigned>(t % 8) : static_cast<unsigned>(rng.below(8));
            ++combos[mask];
            auto doc = gen::document(rng, 1 + rng.below(64), 1 + rng.below(24), "b" + std::to_string(t) + "/" + std::to_string(i),
                                     mask & 1u, mask & 2u, mask & 4u);
            // exercise awkward float bit patterns
            doc.embeddings.data()[0] = (t % 3 == 0) ? -0.0f : std::numeric_limits<float>::denorm_min();
            docs.push_back(std::move(doc));
        }
        std::ostringstream out;
        write_bundle(docs, out);
        std::istringstream in(out.str());
        const auto back = read_bundle(in);
        bool same = back.size() == docs.size();
        for (std::size_t i = 0; same && i < docs.size(); ++i) {
            auto bits = [](const std::optional<std::vector<float>>& v) {
                return v ? std::string(reinterpret_cast<const char*>(v->data()), v->size() * sizeof(float)) : std::string("-");
            };
            same = back[i].doc_id == docs[i].doc_id && back[i].embeddings == docs[i].embeddings &&
                   bits(back[i].importance) == bits(docs[i].importance) &&
                   bits(back[i].eos_embedding) == bits(docs[i].eos_embedding) && back[i].grid_shape == docs[i].grid_shape;
        }
        ok += same;
    }
    const bool all_combos = std::all_of(combos.begin(), combos.end(), [](int c) { return c > 0; });
    return {ok == 500 && all_combos,
            fmt("%d/500 bundles round-trip bit-exactly, all 8 optional-field combinations covered: %s", ok,
                all_combos ? "yes" : "no")};
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<Verdict()> check;
    };
    const std::vector<Criterion> criteria{
        {"pruning oracle equivalence", pruning_oracle},
        {"centroid optimality", centroid_optimality},
        {"ward blob recovery", ward_recovery},
        {"compression arithmetic", compression_arithmetic},
        {"maxsim correctness", maxsim_correctness},
        {"ndcg oracle equivalence", ndcg_oracle},
        {"synergy inequality", synergy},
        {"high-compression ordering", high_compression_ordering},
        {"storage accounting", storage_accounting},
        {"determinism", determinism},
        {"format round-trip", format_round_trip},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        try {
            v = criteria[i].check();
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        failed += !v.pass;
        std::printf("%s [%zu] %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].name, v.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
