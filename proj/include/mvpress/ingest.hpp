#pragma once

// Binary embedding bundles ("MVEB"), qrels TSV, and importance extraction from
// final-layer attention.
//
// Bundle layout, all integers and floats little-endian:
//   "MVEB" | version u32 = 1 | doc_count u64 | doc_count records
// record:
//   id_len u32 | id bytes | n u32 | d u32 | flags u32 (bit0 importance, bit1 eos, bit2 grid)
//   [grid_rows u32 | grid_cols u32] | embeddings n*d f32 row-major | [importance n f32] | [eos d f32]

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mvpress/error.hpp"
#include "mvpress/model.hpp"

namespace mvpress {

inline constexpr std::array<char, 4> kBundleMagic = {'M', 'V', 'E', 'B'};
inline constexpr std::uint32_t kBundleVersion = 1;

enum BundleFlags : std::uint32_t {
    kHasImportance = 1u << 0,
    kHasEos = 1u << 1,
    kHasGrid = 1u << 2,
};

/// Final-layer attention A with shape heads x seq x seq, flattened row-major.
struct AttentionTensor {
    std::size_t heads = 0;
    std::size_t seq_len = 0;
    std::vector<float> weights;
    std::size_t eos_index = 0;
    std::vector<std::size_t> patch_indices;

    float at(std::size_t h, std::size_t from, std::size_t to) const noexcept {
        return weights[(h * seq_len + from) * seq_len + to];
    }
    float& at(std::size_t h, std::size_t from, std::size_t to) noexcept {
        return weights[(h * seq_len + from) * seq_len + to];
    }
};

/// Head-averaged attention that the EOS position pays to each patch, in patch_indices order.
inline std::vector<float> importance_from_attention(const AttentionTensor& attn) {
    if (attn.heads == 0) throw Error(Errc::Empty, "attention tensor has no heads");
    if (attn.weights.size() != attn.heads * attn.seq_len * attn.seq_len) {
        throw Error(Errc::DimensionMismatch, "attention buffer does not match H x S x S");
    }
    if (attn.eos_index >= attn.seq_len) {
        throw Error(Errc::IndexOutOfRange, "eos_index " + std::to_string(attn.eos_index) + " outside sequence");
    }
    std::set<std::size_t> seen;
    for (std::size_t p : attn.patch_indices) {
        if (p >= attn.seq_len) throw Error(Errc::IndexOutOfRange, "patch index " + std::to_string(p) + " outside sequence");
        if (p == attn.eos_index) throw Error(Errc::IndexOutOfRange, "patch index collides with eos_index");
        if (!seen.insert(p).second) throw Error(Errc::IndexOutOfRange, "duplicate patch index " + std::to_string(p));
    }

    std::vector<float> importance;
    importance.reserve(attn.patch_indices.size());
    for (std::size_t p : attn.patch_indices) {
        double sum = 0.0;
        for (std::size_t h = 0; h < attn.heads; ++h) sum += attn.at(h, attn.eos_index, p);
        importance.push_back(static_cast<float>(sum / static_cast<double>(attn.heads)));
    }
    return importance;
}

namespace detail {

template <typename T>
void put_le(std::ostream& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.write(bytes.data(), bytes.size());
}

inline void put_floats(std::ostream& out, std::span<const float> values) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
    } else {
        for (float v : values) put_le(out, v);
    }
}

inline void read_exact(std::istream& in, char* dst, std::size_t count, const char* what) {
    in.read(dst, static_cast<std::streamsize>(count));
    if (static_cast<std::size_t>(in.gcount()) != count) {
        throw Error(Errc::Truncated, std::string("stream ended while reading ") + what);
    }
}

template <typename T>
T get_le(std::istream& in, const char* what) {
    std::array<char, sizeof(T)> bytes;
    read_exact(in, bytes.data(), bytes.size(), what);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

// Reads in bounded chunks so a corrupt length field cannot trigger a huge allocation
// before the stream runs dry.
inline std::vector<float> get_floats(std::istream& in, std::uint64_t count, const char* what) {
    constexpr std::uint64_t kChunk = 1u << 16;
    std::vector<float> values;
    values.reserve(static_cast<std::size_t>(std::min(count, kChunk)));
    std::uint64_t remaining = count;
    while (remaining > 0) {
        const auto take = static_cast<std::size_t>(std::min(remaining, kChunk));
        const std::size_t offset = values.size();
        values.resize(offset + take);
        read_exact(in, reinterpret_cast<char*>(values.data() + offset), take * sizeof(float), what);
        remaining -= take;
    }
    if constexpr (std::endian::native == std::endian::big) {
        for (float& v : values) {
            auto bits = std::bit_cast<std::uint32_t>(v);
            v = std::bit_cast<float>(__builtin_bswap32(bits));
        }
    }
    return values;
}

}  // namespace detail

/// Streaming writer. The document count is part of the header, so it is fixed up front.
class BundleWriter {
public:
    BundleWriter(std::ostream& out, std::uint64_t doc_count) : out_(out), expected_(doc_count) {
        out_.write(kBundleMagic.data(), kBundleMagic.size());
        detail::put_le(out_, kBundleVersion);
        detail::put_le(out_, doc_count);
    }

    void write(const PatchEmbeddingSet& doc) {
        if (written_ == expected_) throw Error(Errc::InvalidArgument, "bundle writer received more documents than declared");
        validate(doc);
        if (doc.size() > UINT32_MAX || doc.dim() > UINT32_MAX || doc.doc_id.size() > UINT32_MAX) {
            throw Error(Errc::InvalidArgument, "document '" + doc.doc_id + "' exceeds u32 format limits");
        }
        std::uint32_t flags = 0;
        if (doc.importance) flags |= kHasImportance;
        if (doc.eos_embedding) flags |= kHasEos;
        if (doc.grid_shape) flags |= kHasGrid;

        detail::put_le(out_, static_cast<std::uint32_t>(doc.doc_id.size()));
        out_.write(doc.doc_id.data(), static_cast<std::streamsize>(doc.doc_id.size()));
        detail::put_le(out_, static_cast<std::uint32_t>(doc.size()));
        detail::put_le(out_, static_cast<std::uint32_t>(doc.dim()));
        detail::put_le(out_, flags);
        if (doc.grid_shape) {
            detail::put_le(out_, doc.grid_shape->rows);
            detail::put_le(out_, doc.grid_shape->cols);
        }
        detail::put_floats(out_, doc.embeddings.data());
        if (doc.importance) detail::put_floats(out_, *doc.importance);
        if (doc.eos_embedding) detail::put_floats(out_, *doc.eos_embedding);
        if (!out_) throw Error(Errc::Io, "write failed for document '" + doc.doc_id + "'");
        ++written_;
    }

    /// Throws unless exactly the declared number of documents was written.
    void finish() {
        if (written_ != expected_) {
            throw Error(Errc::InvalidArgument, "bundle declared " + std::to_string(expected_) + " documents, wrote " +
                                                   std::to_string(written_));
        }
        out_.flush();
    }

private:
    std::ostream& out_;
    std::uint64_t expected_;
    std::uint64_t written_ = 0;
};

/// Streaming reader: header on construction, then one record per `next()`.
class BundleReader {
public:
    explicit BundleReader(std::istream& in) : in_(in) {
        std::array<char, 4> magic{};
        in_.read(magic.data(), magic.size());
        if (in_.gcount() != static_cast<std::streamsize>(magic.size()) || magic != kBundleMagic) {
            throw Error(Errc::BadMagic, "stream does not start with MVEB magic");
        }
        const auto version = detail::get_le<std::uint32_t>(in_, "version");
        if (version != kBundleVersion) {
            throw Error(Errc::UnsupportedVersion, "bundle version " + std::to_string(version));
        }
        count_ = detail::get_le<std::uint64_t>(in_, "doc_count");
    }

    std::uint64_t doc_count() const noexcept { return count_; }
    std::uint64_t remaining() const noexcept { return count_ - read_; }

    std::optional<PatchEmbeddingSet> next() {
        if (read_ == count_) return std::nullopt;
        PatchEmbeddingSet doc;
        const auto id_len = detail::get_le<std::uint32_t>(in_, "id length");
        doc.doc_id.resize(id_len);
        detail::read_exact(in_, doc.doc_id.data(), id_len, "document id");
        const auto n = detail::get_le<std::uint32_t>(in_, "patch count");
        const auto d = detail::get_le<std::uint32_t>(in_, "dimension");
        const auto flags = detail::get_le<std::uint32_t>(in_, "flags");
        if (n == 0 || d == 0) {
            throw Error(Errc::DimensionMismatch, "document '" + doc.doc_id + "' declares an empty matrix");
        }
        if ((flags & ~(kHasImportance | kHasEos | kHasGrid)) != 0) {
            throw Error(Errc::UnsupportedVersion, "unknown flag bits in document '" + doc.doc_id + "'");
        }
        if (flags & kHasGrid) {
            GridShape grid;
            grid.rows = detail::get_le<std::uint32_t>(in_, "grid rows");
            grid.cols = detail::get_le<std::uint32_t>(in_, "grid cols");
            if (static_cast<std::uint64_t>(grid.rows) * grid.cols != n) {
                throw Error(Errc::DimensionMismatch, "document '" + doc.doc_id + "' grid does not cover its patches");
            }
            doc.grid_shape = grid;
        }
        doc.embeddings = Matrix(n, d, detail::get_floats(in_, static_cast<std::uint64_t>(n) * d, "embeddings"));
        if (flags & kHasImportance) doc.importance = detail::get_floats(in_, n, "importance");
        if (flags & kHasEos) doc.eos_embedding = detail::get_floats(in_, d, "eos embedding");
        ++read_;
        return doc;
    }

private:
    std::istream& in_;
    std::uint64_t count_ = 0;
    std::uint64_t read_ = 0;
};

inline void write_bundle(std::span<const PatchEmbeddingSet> docs, std::ostream& out) {
    BundleWriter writer(out, docs.size());
    for (const auto& doc : docs) writer.write(doc);
    writer.finish();
}

inline std::vector<PatchEmbeddingSet> read_bundle(std::istream& in) {
    BundleReader reader(in);
    std::vector<PatchEmbeddingSet> docs;
    while (auto doc = reader.next()) docs.push_back(std::move(*doc));
    return docs;
}

/// Queries share the bundle container; optional document fields are ignored on read.
inline void write_queries(std::span<const QueryEmbeddingSet> queries, std::ostream& out) {
    BundleWriter writer(out, queries.size());
    for (const auto& q : queries) {
        PatchEmbeddingSet record;
        record.doc_id = q.query_id;
        record.embeddings = q.embeddings;
        writer.write(record);
    }
    writer.finish();
}

inline std::vector<QueryEmbeddingSet> read_queries(std::istream& in) {
    BundleReader reader(in);
    std::vector<QueryEmbeddingSet> queries;
    while (auto record = reader.next()) {
        QueryEmbeddingSet q{std::move(record->doc_id), std::move(record->embeddings)};
        validate(q);
        queries.push_back(std::move(q));
    }
    return queries;
}

/// TSV "query_id<TAB>doc_id<TAB>grade"; blank and '#' lines are skipped.
inline Qrels read_qrels(std::istream& in) {
    Qrels qrels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;

        const auto tab1 = line.find('\t');
        const auto tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
        if (tab2 == std::string::npos || line.find('\t', tab2 + 1) != std::string::npos) {
            throw Error(Errc::ParseError, "line " + std::to_string(line_no) + ": expected 3 tab-separated fields", line_no);
        }
        std::string query_id = line.substr(0, tab1);
        std::string doc_id = line.substr(tab1 + 1, tab2 - tab1 - 1);
        const std::string_view grade_text(line.data() + tab2 + 1, line.size() - tab2 - 1);
        if (query_id.empty() || doc_id.empty()) {
            throw Error(Errc::ParseError, "line " + std::to_string(line_no) + ": empty identifier", line_no);
        }
        int grade = -1;
        const auto [ptr, ec] = std::from_chars(grade_text.data(), grade_text.data() + grade_text.size(), grade);
        if (ec != std::errc{} || ptr != grade_text.data() + grade_text.size() || grade < 0) {
            throw Error(Errc::ParseError,
                        "line " + std::to_string(line_no) + ": grade must be a non-negative integer", line_no);
        }
        auto& row = qrels[query_id];
        if (!row.emplace(doc_id, grade).second) {
            throw Error(Errc::DuplicateJudgment,
                        "line " + std::to_string(line_no) + ": duplicate judgment for (" + query_id + ", " + doc_id + ")",
                        line_no);
        }
    }
    return qrels;
}

inline void write_qrels(const Qrels& qrels, std::ostream& out) {
    for (const auto& [query_id, row] : qrels) {
        for (const auto& [doc_id, grade] : row) out << query_id << '\t' << doc_id << '\t' << grade << '\n';
    }
}

}  // namespace mvpress
