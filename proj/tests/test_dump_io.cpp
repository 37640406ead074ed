#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>
#include <json.hpp>

#include "attnbasin/dump_io.hpp"
#include "attnbasin/error.hpp"
#include "oracles.hpp"

using namespace attnbasin;

namespace {

AttentionDump tiny_dump() {
    // template [0,2), doc:1 [2,4), doc:0 [4,6), query [6,8); rows 6 and 7.
    AttentionDump d;
    auto& h = d.header;
    h.model_id = "tiny";
    h.num_layers = 1;
    h.num_tokens = 8;
    h.stored_rows = {6, 7};
    h.spans = {{"template", 0, 2}, {"doc:1", 2, 4}, {"doc:0", 4, 6}, {"query", 6, 8}};
    h.permutation = {1, 0};
    h.sample_id = "tiny-0";
    d.tensor = {0.25f, 0.25f, 0.125f, 0.125f, 0.0625f, 0.0625f, 0.125f, 0.0f,
                0.125f, 0.125f, 0.125f, 0.125f, 0.125f, 0.125f, 0.125f, 0.125f};
    return d;
}

std::string bytes_of(const AttentionDump& d) {
    const auto b = encode_dump(d);
    return {b.begin(), b.end()};
}

AttentionDump read_string(const std::string& s) {
    std::istringstream in(s, std::ios::binary);
    return read_dump(in);
}

}  // namespace

TEST_CASE("randomized dumps round-trip bit-exactly") {
    Rng rng(20240501);
    for (int i = 0; i < 300; ++i) {
        const AttentionDump d = oracle::random_dump(rng);
        REQUIRE(validate_dump(d).pass);
        const auto bytes = encode_dump(d);
        const AttentionDump back = decode_dump(bytes);
        CHECK(back.header == d.header);
        REQUIRE(back.tensor.size() == d.tensor.size());
        CHECK(std::memcmp(back.tensor.data(), d.tensor.data(), d.tensor.size() * sizeof(float)) == 0);
        CHECK(encode_dump(back) == bytes);
    }
}

TEST_CASE("preamble is little-endian magic, version and header length") {
    const std::string b = bytes_of(tiny_dump());
    CHECK(b.substr(0, 4) == "ATNB");
    CHECK(static_cast<unsigned char>(b[4]) == 1);
    CHECK(b[5] == 0);
    CHECK(b[6] == 0);
    CHECK(b[7] == 0);
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i) len |= std::uint64_t(static_cast<unsigned char>(b[8 + i])) << (8 * i);
    const std::string header = b.substr(16, len);
    CHECK(header == header_to_json(tiny_dump().header));
    CHECK(b.size() == 16 + len + 16 * sizeof(float));
    // The float 0.25 = 0x3E800000 stored little-endian.
    CHECK(static_cast<unsigned char>(b[16 + len + 3]) == 0x3E);
    CHECK(static_cast<unsigned char>(b[16 + len + 2]) == 0x80);
}

TEST_CASE("header JSON is canonical with sorted keys") {
    const std::string text = header_to_json(tiny_dump().header);
    const auto j = nlohmann::json::parse(text);
    CHECK(j.dump() == text);
    std::vector<std::string> keys;
    for (const auto& [k, v] : j.items()) keys.push_back(k);
    CHECK(std::is_sorted(keys.begin(), keys.end()));
    CHECK(text.find("\"head_mode\":\"mean\"") != std::string::npos);
    CHECK(header_from_json(text) == tiny_dump().header);
}

TEST_CASE("malformed inputs raise the matching error class") {
    const std::string good = bytes_of(tiny_dump());

    SUBCASE("bad magic") {
        std::string b = good;
        b[0] = 'X';
        CHECK_THROWS_AS(read_string(b), FormatError);
    }
    SUBCASE("unsupported version") {
        std::string b = good;
        b[4] = 2;
        CHECK_THROWS_AS(read_string(b), VersionError);
    }
    SUBCASE("header shorter than declared") {
        CHECK_THROWS_AS(read_string(good.substr(0, 30)), TruncationError);
    }
    SUBCASE("tensor truncated") {
        CHECK_THROWS_AS(read_string(good.substr(0, good.size() - 3)), TruncationError);
    }
    SUBCASE("preamble truncated") {
        CHECK_THROWS_AS(read_string(good.substr(0, 6)), TruncationError);
    }
    SUBCASE("trailing bytes") {
        CHECK_THROWS_AS(read_string(good + "x"), FormatError);
    }
    SUBCASE("header is not JSON") {
        std::string b = good;
        b[16] = '#';
        CHECK_THROWS_AS(read_string(b), FormatError);
    }
    SUBCASE("empty input") {
        CHECK_THROWS_AS(read_string(""), FormatError);
    }
}

TEST_CASE("truncation and version errors are format errors") {
    CHECK_THROWS_AS(throw TruncationError("x"), FormatError);
    CHECK_THROWS_AS(throw VersionError("x"), FormatError);
}

TEST_CASE("validator catches each kind of defect") {
    SUBCASE("clean") {
        const auto r = validate_dump(tiny_dump());
        CHECK(r.pass);
        CHECK(r.max_row_residual == doctest::Approx(0.0));
    }
    SUBCASE("row does not sum to one") {
        auto d = tiny_dump();
        d.tensor[0] = 0.5f;
        const auto r = validate_dump(d);
        CHECK_FALSE(r.pass);
        CHECK(r.max_row_residual == doctest::Approx(0.25));
        CHECK(validate_dump(d, 0.3).pass);
    }
    SUBCASE("causal violation") {
        auto d = tiny_dump();
        d.tensor[6] = 0.0625f;
        d.tensor[7] = 0.0625f;  // row 6 may not see key 7
        const auto r = validate_dump(d);
        CHECK_FALSE(r.pass);
        CHECK(r.causal_violations == 1);
    }
    SUBCASE("value out of range") {
        auto d = tiny_dump();
        d.tensor[0] = -0.25f;
        d.tensor[1] = 0.75f;
        const auto r = validate_dump(d);
        CHECK_FALSE(r.pass);
        CHECK(r.out_of_range_values == 1);
    }
    SUBCASE("overlapping spans") {
        auto d = tiny_dump();
        d.header.spans[1].end = 5;
        CHECK_FALSE(validate_dump(d).spans_disjoint);
    }
    SUBCASE("span past the end") {
        auto d = tiny_dump();
        d.header.spans[3].end = 9;
        CHECK_FALSE(validate_dump(d).spans_in_range);
    }
    SUBCASE("row outside the query") {
        auto d = tiny_dump();
        d.header.stored_rows = {5, 7};
        CHECK_FALSE(validate_dump(d).rows_in_query);
    }
    SUBCASE("bad permutation") {
        auto d = tiny_dump();
        d.header.permutation = {0, 0};
        CHECK_FALSE(validate_dump(d).permutation_ok);
    }
    SUBCASE("tensor size") {
        auto d = tiny_dump();
        d.tensor.pop_back();
        CHECK_FALSE(validate_dump(d).shape_ok);
    }
}

TEST_CASE("write refuses an invalid dump and writes nothing") {
    auto d = tiny_dump();
    d.tensor[0] = 0.9f;
    std::ostringstream out;
    CHECK_THROWS_AS(write_dump(d, out), ValidationError);
    CHECK(out.str().empty());
}

TEST_CASE("row view follows the layer, head, row, key layout") {
    Rng rng(7);
    for (int i = 0; i < 20; ++i) {
        const auto d = oracle::random_dump(rng);
        const auto& h = d.header;
        for (std::size_t l = 0; l < h.num_layers; ++l) {
            for (std::size_t hd = 0; hd < h.stored_heads(); ++hd) {
                const auto m = d.rows(l, hd);
                REQUIRE(m.rows() == static_cast<Eigen::Index>(h.num_rows()));
                for (std::size_t r = 0; r < h.num_rows(); ++r) {
                    for (std::size_t t = 0; t < h.num_tokens; t += 7) {
                        CHECK(m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t)) ==
                              oracle::element(d, l, hd, r, t));
                        CHECK(d.at(l, hd, r, t) == oracle::element(d, l, hd, r, t));
                    }
                }
            }
        }
    }
}

TEST_CASE("doc and query span lookups") {
    const auto h = tiny_dump().header;
    CHECK(h.doc_span_indices() == std::vector<std::size_t>{1, 2});
    CHECK(h.query_span_index() == std::optional<std::size_t>{3});
    CHECK(h.num_docs() == 2);
    CHECK(is_doc_label("doc:3"));
    CHECK_FALSE(is_doc_label("query"));
}

TEST_CASE("save and load through the filesystem") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "attnbasin_test_dump_io";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string path = (dir / "a.atnb").string();
    save_dump(tiny_dump(), path);
    CHECK(load_dump(path) == tiny_dump());
    CHECK_FALSE(fs::exists(path + ".tmp"));

    auto bad = tiny_dump();
    bad.tensor[0] = 0.9f;
    CHECK_THROWS_AS(save_dump(bad, (dir / "b.atnb").string()), ValidationError);
    CHECK_FALSE(fs::exists(dir / "b.atnb"));
    CHECK_FALSE(fs::exists(dir / "b.atnb.tmp"));
    CHECK_THROWS_AS(load_dump((dir / "missing.atnb").string()), Error);
    fs::remove_all(dir);
}
