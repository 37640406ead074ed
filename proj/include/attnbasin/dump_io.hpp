#pragma once

// The .atnb attention-dump interchange format.
//
// Layout (all integers little-endian):
//   "ATNB" | u32 version | u64 header length | header JSON (UTF-8, sorted keys) | f32 tensor
//
// The tensor holds only the query-span rows: [L, R, T] in mean head mode or
// [L, H, R, T] in per_head mode, row-major with the layer index slowest.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace attnbasin {

inline constexpr std::uint32_t kDumpFormatVersion = 1;
inline constexpr char kDumpMagic[4] = {'A', 'T', 'N', 'B'};

struct BlockSpan {
    std::string label;
    std::int64_t start = 0;  // inclusive token index
    std::int64_t end = 0;    // exclusive token index

    std::int64_t length() const { return end - start; }
    bool contains(std::int64_t token) const { return token >= start && token < end; }
    bool operator==(const BlockSpan&) const = default;
};

enum class HeadMode { mean, per_head };

// Spans are stored in token order. Labels starting with "doc" are document
// blocks, "query" is the query block, anything else (normally "template")
// is context that the profile never consumes.
struct DumpHeader {
    std::uint32_t format_version = kDumpFormatVersion;
    std::string model_id;
    std::size_t num_layers = 0;
    std::size_t num_heads = 1;
    std::size_t num_tokens = 0;
    HeadMode head_mode = HeadMode::mean;
    std::vector<std::int64_t> stored_rows;
    std::vector<BlockSpan> spans;
    std::string sample_id;
    // permutation[slot] = original document index presented at that slot.
    std::vector<std::size_t> permutation;
    bool disrupted = false;

    std::size_t num_rows() const { return stored_rows.size(); }
    // Heads present in the tensor: 1 for mean mode.
    std::size_t stored_heads() const { return head_mode == HeadMode::mean ? 1 : num_heads; }
    std::size_t tensor_size() const { return num_layers * stored_heads() * num_rows() * num_tokens; }

    std::vector<std::size_t> doc_span_indices() const;
    std::optional<std::size_t> query_span_index() const;
    std::size_t num_docs() const { return doc_span_indices().size(); }

    bool operator==(const DumpHeader&) const = default;
};

bool is_doc_label(const std::string& label);

using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct AttentionDump {
    DumpHeader header;
    std::vector<float> tensor;

    // [R, T] view of one (layer, head) slab. head must be 0 in mean mode.
    Eigen::Map<const RowMatrixXf> rows(std::size_t layer, std::size_t head = 0) const;
    Eigen::Map<RowMatrixXf> rows(std::size_t layer, std::size_t head = 0);

    float at(std::size_t layer, std::size_t head, std::size_t row, std::size_t key) const;

    bool operator==(const AttentionDump&) const = default;
};

struct ValidationReport {
    bool pass = true;
    double tolerance = 0.0;
    double max_row_residual = 0.0;       // max |row_sum - 1|
    std::size_t out_of_range_values = 0;  // outside [0, 1] or non-finite
    std::size_t causal_violations = 0;    // non-zero keys after the row's own position
    bool shape_ok = true;
    bool spans_in_range = true;
    bool spans_disjoint = true;
    bool docs_ordered = true;
    bool rows_in_query = true;
    bool permutation_ok = true;
    std::vector<std::string> messages;
};

// Never throws; every problem is recorded in the report.
ValidationReport validate_dump(const AttentionDump& dump, double tolerance = 1e-3);

// Validates first (tolerance 1e-3) and throws ValidationError before writing anything.
std::size_t write_dump(const AttentionDump& dump, std::ostream& sink);
AttentionDump read_dump(std::istream& source);

// Canonical header text, exactly as embedded in the file.
std::string header_to_json(const DumpHeader& header);
DumpHeader header_from_json(const std::string& text);

std::vector<std::uint8_t> encode_dump(const AttentionDump& dump);
AttentionDump decode_dump(std::span<const std::uint8_t> bytes);

void save_dump(const AttentionDump& dump, const std::string& path);
AttentionDump load_dump(const std::string& path);

}  // namespace attnbasin
