#pragma once

// Shared fixtures and independent oracles for the test suites. Nothing here
// calls into the code paths it is used to check.

#include <png.h>
#include <unistd.h>

#include <cmath>
#include <cstring>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "iprop/imaging.hpp"
#include "iprop/metrics.hpp"
#include "iprop/types.hpp"

namespace iprop::testing {

inline RgbImage random_image(std::mt19937_64& rng, std::size_t height, std::size_t width) {
    std::uniform_int_distribution<int> channel(0, 255);
    std::vector<Rgb> pixels(height * width);
    for (auto& p : pixels)
        p = Rgb{static_cast<std::uint8_t>(channel(rng)), static_cast<std::uint8_t>(channel(rng)),
                static_cast<std::uint8_t>(channel(rng))};
    return RgbImage(height, width, std::move(pixels));
}

inline AttributionMap random_map(std::mt19937_64& rng, GridShape shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> value(lo, hi);
    std::vector<double> values(shape.size());
    for (auto& v : values) v = value(rng);
    return AttributionMap(shape, std::move(values));
}

inline double max_abs_diff(const AttributionMap& a, const AttributionMap& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("iprop_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    return dir;
}

// ---------------------------------------------------------------------------
// Brute-force oracles

/// O(N^2) adjacency: every ordered pair within Chebyshev distance k.
inline std::vector<std::vector<std::size_t>> brute_adjacency(GridShape shape, int k) {
    std::vector<std::vector<std::size_t>> adj(shape.size());
    for (std::size_t i = 0; i < shape.size(); ++i) {
        for (std::size_t j = 0; j < shape.size(); ++j) {
            if (i == j) continue;
            const long dr = static_cast<long>(i / shape.width) - static_cast<long>(j / shape.width);
            const long dc = static_cast<long>(i % shape.width) - static_cast<long>(j % shape.width);
            if (std::max(std::labs(dr), std::labs(dc)) <= k) adj[i].push_back(j);
        }
    }
    return adj;
}

/// -(d_s + d_c) straight from coordinates and Lab triples.
inline double brute_weight(const LabImage& lab, std::size_t i, std::size_t j) {
    const double ri = static_cast<double>(i / lab.width()), ci = static_cast<double>(i % lab.width());
    const double rj = static_cast<double>(j / lab.width()), cj = static_cast<double>(j % lab.width());
    const double ds = std::hypot(ri - rj, ci - cj);
    const Lab& a = lab[i];
    const Lab& b = lab[j];
    const double dc = std::sqrt(std::pow(a.l - b.l, 2) + std::pow(a.a - b.a, 2) + std::pow(a.b - b.b, 2));
    return -(ds + dc);
}

/// All unordered in-neighborhood pairs, grouped by rounded d_s.
inline std::map<long long, std::vector<double>> brute_profile_groups(const LabImage& lab, int k) {
    std::map<long long, std::vector<double>> groups;
    const auto adj = brute_adjacency(lab.shape(), k);
    for (std::size_t i = 0; i < adj.size(); ++i) {
        for (const std::size_t j : adj[i]) {
            if (j <= i) continue;
            const double ri = static_cast<double>(i / lab.width()), ci = static_cast<double>(i % lab.width());
            const double rj = static_cast<double>(j / lab.width()), cj = static_cast<double>(j % lab.width());
            const double ds = std::hypot(ri - rj, ci - cj);
            const double dc = -brute_weight(lab, i, j) - ds;
            groups[std::llround(ds * 1e9)].push_back(dc);
        }
    }
    return groups;
}

/// Pair-counting AUC: wins plus half ties over all positive-negative pairs.
inline double brute_roc_auc(const AttributionMap& am, const AnnotationMask& mask) {
    double credit = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < am.size(); ++i) {
        if (!mask[i]) continue;
        for (std::size_t j = 0; j < am.size(); ++j) {
            if (mask[j]) continue;
            pairs += 1.0;
            if (am[i] > am[j]) credit += 1.0;
            else if (am[i] == am[j]) credit += 0.5;
        }
    }
    return credit / pairs;
}

/// 1 - 6 sum d^2 / (n (n^2 - 1)) for tie-free data.
inline double closed_form_spearman(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    auto ranks = [n](const std::vector<double>& v) {
        std::vector<double> r(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t below = 0;
            for (std::size_t j = 0; j < n; ++j) below += v[j] < v[i] ? 1 : 0;
            r[i] = static_cast<double>(below + 1);
        }
        return r;
    };
    const auto rx = ranks(x);
    const auto ry = ranks(y);
    double d2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
    const double nn = static_cast<double>(n);
    return 1.0 - 6.0 * d2 / (nn * (nn * nn - 1.0));
}

// ---------------------------------------------------------------------------
// PNG fixtures written with libpng directly, independent of the encoder under test.

struct PngBuffer {
    std::vector<std::uint8_t> bytes;
};

inline void png_append(png_structp png, png_bytep data, png_size_t n) {
    auto* out = static_cast<PngBuffer*>(png_get_io_ptr(png));
    out->bytes.insert(out->bytes.end(), data, data + n);
}

inline void png_noflush(png_structp) {}

/// Encodes raw 8-bit samples with the given libpng color type.
inline std::vector<std::uint8_t> make_png(std::size_t height, std::size_t width, int color_type, int channels,
                                          const std::vector<std::uint8_t>& samples) {
    PngBuffer buffer;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        return {};
    }
    png_set_write_fn(png, &buffer, png_append, png_noflush);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < height; ++y)
        png_write_row(png, const_cast<png_bytep>(samples.data() + y * width * channels));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return buffer.bytes;
}

struct Gray16 {
    std::size_t height = 0, width = 0;
    int bit_depth = 0;
    int color_type = 0;
    std::vector<std::uint16_t> samples;
};

struct PngReader {
    const std::vector<std::uint8_t>* bytes;
    std::size_t offset;
};

inline void png_take(png_structp png, png_bytep out, png_size_t n) {
    auto* r = static_cast<PngReader*>(png_get_io_ptr(png));
    std::memcpy(out, r->bytes->data() + r->offset, n);
    r->offset += n;
}

/// Reads a 16-bit grayscale PNG without any transforms.
inline Gray16 read_gray16(const std::vector<std::uint8_t>& bytes) {
    Gray16 out;
    PngReader reader{&bytes, 0};
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        return Gray16{};
    }
    png_set_read_fn(png, &reader, png_take);
    png_read_info(png, info);
    out.width = png_get_image_width(png, info);
    out.height = png_get_image_height(png, info);
    out.bit_depth = png_get_bit_depth(png, info);
    out.color_type = png_get_color_type(png, info);
    std::vector<std::uint8_t> row(png_get_rowbytes(png, info));
    for (std::size_t y = 0; y < out.height; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (std::size_t x = 0; x < out.width; ++x)
            out.samples.push_back(static_cast<std::uint16_t>((row[2 * x] << 8) | row[2 * x + 1]));
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

}  // namespace iprop::testing
