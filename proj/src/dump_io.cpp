#include "attnbasin/dump_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "attnbasin/error.hpp"

namespace attnbasin {

namespace {

using nlohmann::json;

static_assert(sizeof(float) == 4);

template <typename T>
T to_little_endian(T value) {
    if constexpr (std::endian::native == std::endian::little) {
        return value;
    } else {
        auto bytes = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(value);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
}

template <typename T>
void put_le(std::ostream& out, T value) {
    const T le = to_little_endian(value);
    out.write(reinterpret_cast<const char*>(&le), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const char* what) {
    T raw{};
    in.read(reinterpret_cast<char*>(&raw), sizeof(T));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
        throw TruncationError(std::string("truncated dump: missing ") + what);
    }
    return to_little_endian(raw);
}

const char* head_mode_name(HeadMode mode) { return mode == HeadMode::mean ? "mean" : "per_head"; }

HeadMode parse_head_mode(const std::string& name) {
    if (name == "mean") return HeadMode::mean;
    if (name == "per_head") return HeadMode::per_head;
    throw FormatError("unknown head_mode '" + name + "'");
}

bool is_permutation_of_iota(const std::vector<std::size_t>& perm) {
    std::vector<bool> seen(perm.size(), false);
    for (std::size_t v : perm) {
        if (v >= perm.size() || seen[v]) return false;
        seen[v] = true;
    }
    return true;
}

}  // namespace

bool is_doc_label(const std::string& label) { return label.rfind("doc", 0) == 0; }

std::vector<std::size_t> DumpHeader::doc_span_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < spans.size(); ++i) {
        if (is_doc_label(spans[i].label)) out.push_back(i);
    }
    return out;
}

std::optional<std::size_t> DumpHeader::query_span_index() const {
    for (std::size_t i = 0; i < spans.size(); ++i) {
        if (spans[i].label == "query") return i;
    }
    return std::nullopt;
}

Eigen::Map<const RowMatrixXf> AttentionDump::rows(std::size_t layer, std::size_t head) const {
    const std::size_t slab = header.num_rows() * header.num_tokens;
    const std::size_t offset = (layer * header.stored_heads() + head) * slab;
    return {tensor.data() + offset, static_cast<Eigen::Index>(header.num_rows()),
            static_cast<Eigen::Index>(header.num_tokens)};
}

Eigen::Map<RowMatrixXf> AttentionDump::rows(std::size_t layer, std::size_t head) {
    const std::size_t slab = header.num_rows() * header.num_tokens;
    const std::size_t offset = (layer * header.stored_heads() + head) * slab;
    return {tensor.data() + offset, static_cast<Eigen::Index>(header.num_rows()),
            static_cast<Eigen::Index>(header.num_tokens)};
}

float AttentionDump::at(std::size_t layer, std::size_t head, std::size_t row, std::size_t key) const {
    const std::size_t idx =
        ((layer * header.stored_heads() + head) * header.num_rows() + row) * header.num_tokens + key;
    return tensor[idx];
}

ValidationReport validate_dump(const AttentionDump& dump, double tolerance) {
    ValidationReport report;
    report.tolerance = tolerance;
    const DumpHeader& h = dump.header;
    const auto T = static_cast<std::int64_t>(h.num_tokens);

    auto fail = [&report](bool& flag, std::string message) {
        flag = false;
        report.pass = false;
        report.messages.push_back(std::move(message));
    };

    if (h.format_version != kDumpFormatVersion) {
        fail(report.shape_ok, "unsupported format_version " + std::to_string(h.format_version));
    }
    if (h.num_layers == 0 || h.num_tokens == 0 || h.num_heads == 0) {
        fail(report.shape_ok, "num_layers, num_heads and num_tokens must be positive");
    }
    if (dump.tensor.size() != h.tensor_size()) {
        fail(report.shape_ok, "tensor holds " + std::to_string(dump.tensor.size()) + " values, header implies " +
                                  std::to_string(h.tensor_size()));
    }

    for (const BlockSpan& s : h.spans) {
        if (s.start < 0 || s.start >= s.end || s.end > T) {
            fail(report.spans_in_range, "span '" + s.label + "' [" + std::to_string(s.start) + "," +
                                            std::to_string(s.end) + ") outside [0," + std::to_string(T) + ")");
        }
    }
    {
        std::vector<BlockSpan> sorted = h.spans;
        std::sort(sorted.begin(), sorted.end(),
                  [](const BlockSpan& a, const BlockSpan& b) { return a.start < b.start; });
        for (std::size_t i = 1; i < sorted.size(); ++i) {
            if (sorted[i].start < sorted[i - 1].end) {
                fail(report.spans_disjoint, "spans '" + sorted[i - 1].label + "' and '" + sorted[i].label + "' overlap");
            }
        }
    }
    const auto docs = h.doc_span_indices();
    if (docs.empty()) fail(report.docs_ordered, "no doc spans");
    for (std::size_t i = 1; i < docs.size(); ++i) {
        if (h.spans[docs[i]].start <= h.spans[docs[i - 1]].start) {
            fail(report.docs_ordered, "doc spans not ordered by start at '" + h.spans[docs[i]].label + "'");
        }
    }

    const auto query = h.query_span_index();
    if (!query) {
        fail(report.rows_in_query, "no query span");
    } else {
        for (std::int64_t row : h.stored_rows) {
            if (row < 0 || row >= T || !h.spans[*query].contains(row)) {
                fail(report.rows_in_query, "stored row " + std::to_string(row) + " outside the query span");
                break;
            }
        }
    }

    if (h.permutation.size() != docs.size() || !is_permutation_of_iota(h.permutation)) {
        fail(report.permutation_ok, "permutation is not a permutation of 0..k-1");
    }

    if (!report.shape_ok) return report;

    const std::size_t R = h.num_rows();
    for (std::size_t l = 0; l < h.num_layers; ++l) {
        for (std::size_t hd = 0; hd < h.stored_heads(); ++hd) {
            for (std::size_t r = 0; r < R; ++r) {
                const std::int64_t pos = h.stored_rows[r];
                double row_sum = 0.0;
                for (std::size_t key = 0; key < h.num_tokens; ++key) {
                    const float v = dump.at(l, hd, r, key);
                    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) ++report.out_of_range_values;
                    if (static_cast<std::int64_t>(key) > pos && v != 0.0f) ++report.causal_violations;
                    row_sum += static_cast<double>(v);
                }
                const double residual = std::abs(row_sum - 1.0);
                if (!(residual <= report.max_row_residual)) report.max_row_residual = residual;
            }
        }
    }
    if (report.out_of_range_values > 0) {
        report.pass = false;
        report.messages.push_back(std::to_string(report.out_of_range_values) + " values outside [0,1]");
    }
    if (report.causal_violations > 0) {
        report.pass = false;
        report.messages.push_back(std::to_string(report.causal_violations) + " non-zero keys after the row position");
    }
    if (!(report.max_row_residual <= tolerance)) {
        report.pass = false;
        report.messages.push_back("row normalization residual " + std::to_string(report.max_row_residual) +
                                  " exceeds tolerance");
    }
    return report;
}

std::string header_to_json(const DumpHeader& h) {
    json spans = json::array();
    for (const BlockSpan& s : h.spans) {
        spans.push_back({{"label", s.label}, {"start", s.start}, {"end", s.end}});
    }
    json j = {
        {"format_version", h.format_version},
        {"model_id", h.model_id},
        {"num_layers", h.num_layers},
        {"num_heads", h.num_heads},
        {"num_tokens", h.num_tokens},
        {"head_mode", head_mode_name(h.head_mode)},
        {"stored_rows", h.stored_rows},
        {"spans", std::move(spans)},
        {"sample_id", h.sample_id},
        {"permutation", h.permutation},
        {"disrupted", h.disrupted},
    };
    return j.dump();
}

DumpHeader header_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        DumpHeader h;
        h.format_version = j.at("format_version").get<std::uint32_t>();
        h.model_id = j.at("model_id").get<std::string>();
        h.num_layers = j.at("num_layers").get<std::size_t>();
        h.num_heads = j.at("num_heads").get<std::size_t>();
        h.num_tokens = j.at("num_tokens").get<std::size_t>();
        h.head_mode = parse_head_mode(j.at("head_mode").get<std::string>());
        h.stored_rows = j.at("stored_rows").get<std::vector<std::int64_t>>();
        for (const json& s : j.at("spans")) {
            h.spans.push_back({s.at("label").get<std::string>(), s.at("start").get<std::int64_t>(),
                               s.at("end").get<std::int64_t>()});
        }
        h.sample_id = j.at("sample_id").get<std::string>();
        h.permutation = j.at("permutation").get<std::vector<std::size_t>>();
        h.disrupted = j.value("disrupted", false);
        return h;
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad dump header: ") + e.what());
    }
}

std::size_t write_dump(const AttentionDump& dump, std::ostream& sink) {
    const ValidationReport report = validate_dump(dump, 1e-3);
    if (!report.pass) {
        std::string why = report.messages.empty() ? "invalid dump" : report.messages.front();
        throw ValidationError("refusing to write dump '" + dump.header.sample_id + "': " + why);
    }
    const std::string header = header_to_json(dump.header);

    sink.write(kDumpMagic, 4);
    put_le<std::uint32_t>(sink, dump.header.format_version);
    put_le<std::uint64_t>(sink, header.size());
    sink.write(header.data(), static_cast<std::streamsize>(header.size()));
    if constexpr (std::endian::native == std::endian::little) {
        sink.write(reinterpret_cast<const char*>(dump.tensor.data()),
                   static_cast<std::streamsize>(dump.tensor.size() * sizeof(float)));
    } else {
        for (float v : dump.tensor) put_le<float>(sink, v);
    }
    if (!sink) throw Error("write failed for dump '" + dump.header.sample_id + "'");
    return 4 + 4 + 8 + header.size() + dump.tensor.size() * sizeof(float);
}

AttentionDump read_dump(std::istream& source) {
    char magic[4] = {};
    source.read(magic, 4);
    if (source.gcount() != 4 || std::memcmp(magic, kDumpMagic, 4) != 0) {
        throw FormatError("not an .atnb dump: bad magic");
    }
    const auto version = get_le<std::uint32_t>(source, "version");
    if (version != kDumpFormatVersion) {
        throw VersionError("unsupported .atnb version " + std::to_string(version));
    }
    const auto header_len = get_le<std::uint64_t>(source, "header length");
    // Guard against absurd lengths before allocating.
    if (header_len > (std::uint64_t{1} << 31)) throw FormatError("implausible header length");
    std::string header_text(header_len, '\0');
    source.read(header_text.data(), static_cast<std::streamsize>(header_len));
    if (static_cast<std::uint64_t>(source.gcount()) != header_len) {
        throw TruncationError("truncated dump: header shorter than declared length");
    }

    AttentionDump dump;
    dump.header = header_from_json(header_text);
    if (dump.header.format_version != version) {
        throw FormatError("header format_version disagrees with the file preamble");
    }
    const std::size_t n = dump.header.tensor_size();
    dump.tensor.resize(n);
    const auto want = static_cast<std::streamsize>(n * sizeof(float));
    source.read(reinterpret_cast<char*>(dump.tensor.data()), want);
    if (source.gcount() != want) {
        throw TruncationError("truncated dump: expected " + std::to_string(want) + " tensor bytes, got " +
                              std::to_string(source.gcount()));
    }
    if constexpr (std::endian::native != std::endian::little) {
        for (float& v : dump.tensor) v = to_little_endian(v);
    }
    if (source.peek() != std::char_traits<char>::eof()) {
        throw FormatError("trailing bytes after tensor");
    }
    return dump;
}

std::vector<std::uint8_t> encode_dump(const AttentionDump& dump) {
    std::ostringstream out(std::ios::binary);
    write_dump(dump, out);
    const std::string s = std::move(out).str();
    return {s.begin(), s.end()};
}

AttentionDump decode_dump(std::span<const std::uint8_t> bytes) {
    std::istringstream in(std::string(bytes.begin(), bytes.end()), std::ios::binary);
    return read_dump(in);
}

void save_dump(const AttentionDump& dump, const std::string& path) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    try {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open " + tmp.string() + " for writing");
        write_dump(dump, out);
    } catch (...) {
        std::error_code ignored;
        fs::remove(tmp, ignored);
        throw;
    }
    fs::rename(tmp, target);
}

AttentionDump load_dump(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    return read_dump(in);
}

}  // namespace attnbasin
