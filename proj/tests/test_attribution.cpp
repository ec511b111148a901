#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "iprop/attribution.hpp"
#include "iprop/error.hpp"
#include "support.hpp"

using namespace iprop;
using namespace iprop::testing;

namespace {

// Written by hand, independent of encode_ipam.
std::vector<std::uint8_t> ipam_bytes(std::uint32_t h, std::uint32_t w, std::uint16_t channels,
                                     const std::vector<float>& values, std::uint16_t version = 1) {
    std::vector<std::uint8_t> out = {'I', 'P', 'A', 'M'};
    auto put = [&](std::uint64_t v, int bytes) {
        for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    };
    put(version, 2);
    put(h, 4);
    put(w, 4);
    put(channels, 2);
    for (const float f : values) put(std::bit_cast<std::uint32_t>(f), 4);
    return out;
}

std::filesystem::path write_bytes(const std::string& name, const std::vector<std::uint8_t>& bytes) {
    const auto path = scratch_dir("attribution") / name;
    write_file(path, bytes);
    return path;
}

std::filesystem::path write_text(const std::string& name, const std::string& text) {
    return write_bytes(name, std::vector<std::uint8_t>(text.begin(), text.end()));
}

ErrorKind load_kind(const std::filesystem::path& path, std::optional<GridShape> expected = std::nullopt) {
    try {
        load_attribution(path, expected);
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected load to fail");
    return ErrorKind::argument;
}

// float-representable random map so binary round-trips can be bit-exact
AttributionMap random_float_map(std::mt19937_64& rng, GridShape shape) {
    std::uniform_real_distribution<float> u(-1e3f, 1e3f);
    std::vector<double> v(shape.size());
    for (auto& x : v) x = u(rng);
    return AttributionMap(shape, v);
}

}  // namespace

TEST_CASE("load binary examples") {
    const auto am = load_attribution(write_bytes("one.ipam", ipam_bytes(2, 2, 1, {1, 0, 0, 0})));
    CHECK(am == AttributionMap(2, 2, {1, 0, 0, 0}));

    const auto three = load_attribution(write_bytes("three.ipam", ipam_bytes(2, 2, 3, std::vector<float>(12, 1.0f))));
    CHECK(three == AttributionMap::constant({2, 2}, 3.0));

    const auto file = parse_attribution(ipam_bytes(1, 2, 3, {1, 2, 3, 4, 5, 6}));
    CHECK(file.format == AttributionFormat::binary);
    CHECK(file.channels == 3);
    CHECK(file.reduce() == AttributionMap(1, 2, {6, 15}));
}

TEST_CASE("load CSV examples") {
    const auto am = load_attribution(write_text("a.csv", "1.0,2.0\n3.0,4.0"));
    CHECK(am == AttributionMap(2, 2, {1, 2, 3, 4}));
    CHECK(load_attribution(write_text("b.csv", "1,2\n3,4\n")) == am);
    CHECK(load_attribution(write_text("c.csv", "-1.5e2,0.25,3\n")) == AttributionMap(1, 3, {-150, 0.25, 3}));
    CHECK(load_kind(write_text("ragged.csv", "1,2\n3\n")) == ErrorKind::format);
    CHECK(load_kind(write_text("word.csv", "1,two\n3,4\n")) == ErrorKind::format);
}

TEST_CASE("load errors") {
    CHECK(load_kind(write_bytes("magic.bin", {0x89, 'X', 'Y', 'Z', 0, 0, 0, 0})) == ErrorKind::format);
    CHECK(load_kind(write_bytes("empty.bin", {})) == ErrorKind::format);
    CHECK(load_kind(write_bytes("nan.ipam", ipam_bytes(1, 2, 1, {1.0f, std::numeric_limits<float>::quiet_NaN()}))) ==
          ErrorKind::validation);
    CHECK(load_kind(write_bytes("inf.ipam", ipam_bytes(1, 2, 1, {std::numeric_limits<float>::infinity(), 0.0f}))) ==
          ErrorKind::validation);
    CHECK(load_kind(write_text("nan.csv", "1,nan\n")) == ErrorKind::validation);
    CHECK(load_kind(write_bytes("dims.ipam", ipam_bytes(2, 2, 1, {1, 2, 3, 4})), GridShape{3, 3}) ==
          ErrorKind::argument);
    CHECK(load_kind(write_bytes("short.ipam", ipam_bytes(2, 2, 1, {1, 2, 3}))) == ErrorKind::format);
    CHECK(load_kind(write_bytes("chan.ipam", ipam_bytes(1, 1, 2, {1, 2}))) == ErrorKind::format);
    CHECK(load_kind(write_bytes("version.ipam", ipam_bytes(1, 1, 1, {1}, 2))) == ErrorKind::format);
    CHECK_THROWS_AS(load_attribution(write_bytes("zero.ipam", ipam_bytes(0, 2, 1, {}))), Error);
    CHECK(load_kind(scratch_dir("attribution") / "missing.ipam") == ErrorKind::io);
    CHECK_THROWS_AS(AttributionMap(0, 0, {}), Error);
}

TEST_CASE("binary encoding matches the documented layout") {
    const AttributionMap am(1, 2, {0.5, -2.0});
    CHECK(encode_ipam(am) == ipam_bytes(1, 2, 1, {0.5f, -2.0f}));
    CHECK(encode_ipam(am).size() == kIpamHeaderSize + 8);
}

TEST_CASE("round trips") {
    std::mt19937_64 rng(21);
    const auto dir = scratch_dir("attribution");
    for (int trial = 0; trial < 20; ++trial) {
        const GridShape shape{1 + rng() % 9, 1 + rng() % 9};
        const auto am = random_float_map(rng, shape);
        save_attribution(am, dir / "rt.ipam", AttributionFormat::binary);
        const auto back = load_attribution(dir / "rt.ipam", shape);
        CHECK(std::memcmp(back.values().data(), am.values().data(), am.size() * sizeof(double)) == 0);

        const auto doubles = random_map(rng, shape, -1e3, 1e3);
        save_attribution(doubles, dir / "rt.csv", AttributionFormat::csv);
        CHECK(max_abs_diff(load_attribution(dir / "rt.csv", shape), doubles) <= 1e-6);
    }
    CHECK_THROWS_AS(save_attribution(AttributionMap(1, 1, {1.0}), dir / "no" / "such" / "dir.ipam",
                                     AttributionFormat::binary),
                    Error);
}

TEST_CASE("channel reduction commutes with scaling") {
    std::mt19937_64 rng(22);
    std::uniform_real_distribution<double> u(-10, 10);
    std::vector<double> m(3 * 20);
    for (auto& v : m) v = u(rng);
    std::vector<double> scaled = m;
    for (auto& v : scaled) v *= -2.5;
    const auto a = reduce_channels({4, 5}, 3, m);
    const auto b = reduce_channels({4, 5}, 3, scaled);
    for (std::size_t i = 0; i < 20; ++i) CHECK(std::abs(b[i] + 2.5 * a[i]) <= 1e-12 * std::max(1.0, std::abs(b[i])));
}

TEST_CASE("minmax normalization") {
    CHECK(minmax_normalize(AttributionMap(1, 2, {0, 10})) == AttributionMap(1, 2, {0, 1}));
    CHECK(minmax_normalize(AttributionMap(1, 3, {-1, 0, 1})) == AttributionMap(1, 3, {0, 0.5, 1}));
    CHECK(minmax_normalize(AttributionMap::constant({3, 2}, 7.0)) == AttributionMap::constant({3, 2}, 0.0));

    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const auto once = minmax_normalize(random_map(rng, {6, 6}, -50, 50));
        CHECK(once.min() == 0.0);
        CHECK(once.max() == 1.0);
        CHECK(max_abs_diff(minmax_normalize(once), once) <= 1e-15);
    }
}

TEST_CASE("heatmap quantization and PNG export") {
    CHECK(quantize_heatmap(AttributionMap(1, 3, {0.0, 0.5, 1.0})) == std::vector<std::uint16_t>{0, 32768, 65535});
    CHECK(quantize_heatmap(AttributionMap::constant({2, 2}, -4.0)) == std::vector<std::uint16_t>(4, 0));

    const auto path = scratch_dir("attribution") / "const.png";
    export_heatmap(AttributionMap::constant({3, 4}, 1.0), path);
    const auto gray = read_gray16(read_file(path));
    CHECK(gray.height == 3);
    CHECK(gray.width == 4);
    CHECK(gray.bit_depth == 16);
    CHECK(gray.color_type == PNG_COLOR_TYPE_GRAY);
    CHECK(gray.samples == std::vector<std::uint16_t>(12, 0));

    std::mt19937_64 rng(24);
    for (int trial = 0; trial < 20; ++trial) {
        const auto am = random_map(rng, {7, 9});
        const auto bytes = encode_heatmap(am);
        CHECK(bytes == encode_heatmap(am));
        const auto decoded = read_gray16(bytes);
        REQUIRE(decoded.samples.size() == am.size());
        std::size_t argmax = 0;
        for (std::size_t i = 1; i < am.size(); ++i)
            if (decoded.samples[i] > decoded.samples[argmax]) argmax = i;
        CHECK(argmax == am.argmax());
        for (std::size_t i = 0; i < am.size(); ++i)
            for (std::size_t j = 0; j < am.size(); ++j)
                if (am[i] < am[j]) CHECK(decoded.samples[i] <= decoded.samples[j]);
    }
}
