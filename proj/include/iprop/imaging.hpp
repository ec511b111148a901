#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "iprop/types.hpp"

namespace iprop {

struct Rgb {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;

    friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Decoded 8-bit RGB image, at least 2x2.
class RgbImage {
public:
    RgbImage(std::size_t height, std::size_t width, std::vector<Rgb> pixels);
    RgbImage(std::size_t height, std::size_t width, Rgb fill = {});

    GridShape shape() const noexcept { return shape_; }
    std::size_t height() const noexcept { return shape_.height; }
    std::size_t width() const noexcept { return shape_.width; }
    std::size_t size() const noexcept { return pixels_.size(); }

    std::span<const Rgb> pixels() const noexcept { return pixels_; }
    std::span<Rgb> pixels() noexcept { return pixels_; }
    const Rgb& operator[](std::size_t index) const { return pixels_[index]; }
    Rgb& operator[](std::size_t index) { return pixels_[index]; }
    const Rgb& at(std::size_t row, std::size_t col) const { return pixels_[shape_.index(row, col)]; }
    Rgb& at(std::size_t row, std::size_t col) { return pixels_[shape_.index(row, col)]; }

    friend bool operator==(const RgbImage&, const RgbImage&) = default;

private:
    GridShape shape_;
    std::vector<Rgb> pixels_;
};

struct Lab {
    double l = 0.0;
    double a = 0.0;
    double b = 0.0;
};

class LabImage {
public:
    LabImage(std::size_t height, std::size_t width, std::vector<Lab> pixels);

    GridShape shape() const noexcept { return shape_; }
    std::size_t height() const noexcept { return shape_.height; }
    std::size_t width() const noexcept { return shape_.width; }
    std::size_t size() const noexcept { return pixels_.size(); }

    std::span<const Lab> pixels() const noexcept { return pixels_; }
    const Lab& operator[](std::size_t index) const { return pixels_[index]; }
    const Lab& at(std::size_t row, std::size_t col) const { return pixels_[shape_.index(row, col)]; }

private:
    GridShape shape_;
    std::vector<Lab> pixels_;
};

/// Decodes a PNG or JPEG payload. Gray is replicated to three channels, alpha is dropped.
RgbImage decode_image(std::span<const std::uint8_t> bytes);
RgbImage read_image(const std::filesystem::path& path);

/// 8-bit RGB PNG, no ancillary chunks.
std::vector<std::uint8_t> encode_png(const RgbImage& image);
void write_png(const RgbImage& image, const std::filesystem::path& path);

/// 16-bit grayscale PNG from row-major samples.
std::vector<std::uint8_t> encode_png_gray16(GridShape shape, std::span<const std::uint16_t> samples);

// sRGB (D65) -> CIE 1976 L*a*b*, computed in double precision.
Lab srgb_to_lab(Rgb pixel);
LabImage rgb_to_lab(const RgbImage& image);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace iprop
