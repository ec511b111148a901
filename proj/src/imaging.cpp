#include "iprop/imaging.hpp"

#include <png.h>
#include <stdio.h>  // jpeglib.h needs FILE
#include <jpeglib.h>

#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>

#include "iprop/error.hpp"

namespace iprop {

namespace {

void require_min_dims(std::size_t height, std::size_t width) {
    if (height < 2 || width < 2)
        fail(ErrorKind::dimension, "images must be at least 2x2 (got " + std::to_string(height) + "x" +
                                       std::to_string(width) + ")");
}

// ---------------------------------------------------------------------------
// PNG (libpng, classic API). Everything between setjmp and a possible longjmp
// lives in caller-owned buffers so no destructor is skipped.

struct PngReadState {
    const std::uint8_t* data = nullptr;
    std::size_t size = 0;
    std::size_t offset = 0;
    char message[256] = {};
};

void png_read_from_memory(png_structp png, png_bytep out, png_size_t count) {
    auto* state = static_cast<PngReadState*>(png_get_io_ptr(png));
    if (count > state->size - state->offset) png_error(png, "unexpected end of data");
    std::memcpy(out, state->data + state->offset, count);
    state->offset += count;
}

void png_read_error(png_structp png, png_const_charp message) {
    auto* state = static_cast<PngReadState*>(png_get_error_ptr(png));
    std::snprintf(state->message, sizeof state->message, "%s", message);
    png_longjmp(png, 1);
}

void png_quiet_warning(png_structp, png_const_charp) {}

struct PngDecoded {
    png_uint_32 width = 0;
    png_uint_32 height = 0;
};

bool png_read_header(png_structp png, png_infop info, PngDecoded& out) {
    if (setjmp(png_jmpbuf(png))) return false;
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_set_interlace_handling(png);
    png_read_update_info(png, info);
    out.width = png_get_image_width(png, info);
    out.height = png_get_image_height(png, info);
    return true;
}

bool png_read_pixels(png_structp png, png_infop info, png_bytepp rows) {
    if (setjmp(png_jmpbuf(png))) return false;
    png_read_image(png, rows);
    png_read_end(png, info);
    return true;
}

RgbImage decode_png(std::span<const std::uint8_t> bytes) {
    PngReadState state{bytes.data(), bytes.size(), 0, {}};
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &state, png_read_error, png_quiet_warning);
    if (png == nullptr) fail(ErrorKind::decode, "cannot allocate PNG reader");
    png_infop info = png_create_info_struct(png);
    if (info == nullptr) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail(ErrorKind::decode, "cannot allocate PNG info");
    }
    png_set_read_fn(png, &state, png_read_from_memory);

    auto failure = [&](const char* stage) {
        std::string message = std::string("PNG ") + stage + " failed at byte offset " +
                              std::to_string(state.offset) + ": " + state.message;
        png_destroy_read_struct(&png, &info, nullptr);
        return Error(ErrorKind::decode, message);
    };

    PngDecoded header;
    if (!png_read_header(png, info, header)) throw failure("header");
    if (png_get_channels(png, info) != 3 || png_get_bit_depth(png, info) != 8) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorKind::decode, "PNG pixel layout could not be normalized to 8-bit RGB");
    }
    if (header.height < 2 || header.width < 2) {
        png_destroy_read_struct(&png, &info, nullptr);
        require_min_dims(header.height, header.width);
    }

    std::vector<std::uint8_t> buffer(static_cast<std::size_t>(header.width) * header.height * 3);
    std::vector<png_bytep> rows(header.height);
    for (png_uint_32 y = 0; y < header.height; ++y)
        rows[y] = buffer.data() + static_cast<std::size_t>(y) * header.width * 3;
    if (!png_read_pixels(png, info, rows.data())) throw failure("pixel data");
    png_destroy_read_struct(&png, &info, nullptr);

    std::vector<Rgb> pixels(static_cast<std::size_t>(header.width) * header.height);
    for (std::size_t i = 0; i < pixels.size(); ++i)
        pixels[i] = Rgb{buffer[3 * i], buffer[3 * i + 1], buffer[3 * i + 2]};
    return RgbImage(header.height, header.width, std::move(pixels));
}

struct PngWriteState {
    std::vector<std::uint8_t>* out = nullptr;
    char message[256] = {};
};

void png_write_to_memory(png_structp png, png_bytep data, png_size_t count) {
    auto* state = static_cast<PngWriteState*>(png_get_io_ptr(png));
    state->out->insert(state->out->end(), data, data + count);
}

void png_flush_noop(png_structp) {}

void png_write_error(png_structp png, png_const_charp message) {
    auto* state = static_cast<PngWriteState*>(png_get_error_ptr(png));
    std::snprintf(state->message, sizeof state->message, "%s", message);
    png_longjmp(png, 1);
}

bool png_write_rows(png_structp png, png_infop info, png_uint_32 width, png_uint_32 height, int bit_depth,
                    int color_type, png_bytepp rows) {
    if (setjmp(png_jmpbuf(png))) return false;
    png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    png_write_image(png, rows);
    png_write_end(png, nullptr);
    return true;
}

std::vector<std::uint8_t> encode_png_raw(std::size_t height, std::size_t width, int bit_depth, int color_type,
                                         std::size_t bytes_per_pixel, std::span<const std::uint8_t> packed) {
    std::vector<std::uint8_t> out;
    PngWriteState state{&out, {}};
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &state, png_write_error, png_quiet_warning);
    if (png == nullptr) fail(ErrorKind::io, "cannot allocate PNG writer");
    png_infop info = png_create_info_struct(png);
    if (info == nullptr) {
        png_destroy_write_struct(&png, nullptr);
        fail(ErrorKind::io, "cannot allocate PNG info");
    }
    png_set_write_fn(png, &state, png_write_to_memory, png_flush_noop);

    std::vector<png_bytep> rows(height);
    for (std::size_t y = 0; y < height; ++y)
        rows[y] = const_cast<png_bytep>(packed.data() + y * width * bytes_per_pixel);
    const bool ok = png_write_rows(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                                   bit_depth, color_type, rows.data());
    png_destroy_write_struct(&png, &info);
    if (!ok) fail(ErrorKind::io, std::string("PNG encoding failed: ") + state.message);
    return out;
}

// ---------------------------------------------------------------------------
// JPEG (libjpeg)

struct JpegErrorManager {
    jpeg_error_mgr base;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX] = {};
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* manager = reinterpret_cast<JpegErrorManager*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, manager->message);
    std::longjmp(manager->jump, 1);
}

void jpeg_quiet_output(j_common_ptr) {}

bool jpeg_decode_into(jpeg_decompress_struct& cinfo, JpegErrorManager& errors, std::span<const std::uint8_t> bytes,
                      std::vector<std::uint8_t>& buffer, std::size_t& consumed) {
    if (setjmp(errors.jump)) {
        if (cinfo.src != nullptr) consumed = bytes.size() - cinfo.src->bytes_in_buffer;
        return false;
    }
    jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    if (cinfo.output_components != 3) {
        std::snprintf(errors.message, sizeof errors.message, "unsupported JPEG component count %d",
                      cinfo.output_components);
        return false;
    }
    buffer.resize(static_cast<std::size_t>(cinfo.output_width) * cinfo.output_height * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = buffer.data() + static_cast<std::size_t>(cinfo.output_scanline) * cinfo.output_width * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    consumed = bytes.size() - cinfo.src->bytes_in_buffer;
    return true;
}

RgbImage decode_jpeg(std::span<const std::uint8_t> bytes) {
    jpeg_decompress_struct cinfo{};
    JpegErrorManager errors{};
    cinfo.err = jpeg_std_error(&errors.base);
    errors.base.error_exit = jpeg_error_exit;
    errors.base.output_message = jpeg_quiet_output;
    jpeg_create_decompress(&cinfo);

    std::vector<std::uint8_t> buffer;
    std::size_t consumed = 0;
    const bool ok = jpeg_decode_into(cinfo, errors, bytes, buffer, consumed);
    const std::size_t width = cinfo.output_width;
    const std::size_t height = cinfo.output_height;
    jpeg_destroy_decompress(&cinfo);
    if (!ok)
        fail(ErrorKind::decode,
             "JPEG decode failed at byte offset " + std::to_string(consumed) + ": " + errors.message);

    require_min_dims(height, width);
    std::vector<Rgb> pixels(width * height);
    for (std::size_t i = 0; i < pixels.size(); ++i)
        pixels[i] = Rgb{buffer[3 * i], buffer[3 * i + 1], buffer[3 * i + 2]};
    return RgbImage(height, width, std::move(pixels));
}

// ---------------------------------------------------------------------------
// Colorimetry

// sRGB primaries to XYZ (D65). The reference white is the image of RGB (1,1,1)
// under the same matrix so that neutral grays land exactly on a* = b* = 0.
constexpr double kRgbToXyz[3][3] = {
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041},
};

constexpr double kWhiteX = kRgbToXyz[0][0] + kRgbToXyz[0][1] + kRgbToXyz[0][2];
constexpr double kWhiteY = kRgbToXyz[1][0] + kRgbToXyz[1][1] + kRgbToXyz[1][2];
constexpr double kWhiteZ = kRgbToXyz[2][0] + kRgbToXyz[2][1] + kRgbToXyz[2][2];

double srgb_to_linear(std::uint8_t value) {
    const double c = value / 255.0;
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

const std::array<double, 256>& linear_table() {
    static const std::array<double, 256> table = [] {
        std::array<double, 256> t{};
        for (int v = 0; v < 256; ++v) t[v] = srgb_to_linear(static_cast<std::uint8_t>(v));
        return t;
    }();
    return table;
}

double lab_f(double t) {
    constexpr double delta = 6.0 / 29.0;
    constexpr double delta3 = delta * delta * delta;
    return t > delta3 ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

}  // namespace

RgbImage::RgbImage(std::size_t height, std::size_t width, std::vector<Rgb> pixels)
    : shape_{height, width}, pixels_(std::move(pixels)) {
    require_min_dims(height, width);
    if (pixels_.size() != shape_.size())
        fail(ErrorKind::dimension, "RGB image " + to_string(shape_) + " expects " + std::to_string(shape_.size()) +
                                       " pixels, got " + std::to_string(pixels_.size()));
}

RgbImage::RgbImage(std::size_t height, std::size_t width, Rgb fill)
    : RgbImage(height, width, std::vector<Rgb>(height * width, fill)) {}

LabImage::LabImage(std::size_t height, std::size_t width, std::vector<Lab> pixels)
    : shape_{height, width}, pixels_(std::move(pixels)) {
    if (height == 0 || width == 0) fail(ErrorKind::dimension, "Lab image must not be empty");
    if (pixels_.size() != shape_.size())
        fail(ErrorKind::dimension, "Lab image " + to_string(shape_) + " expects " + std::to_string(shape_.size()) +
                                       " pixels, got " + std::to_string(pixels_.size()));
}

RgbImage decode_image(std::span<const std::uint8_t> bytes) {
    static constexpr std::uint8_t png_signature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), png_signature, 8) == 0) return decode_png(bytes);
    if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) return decode_jpeg(bytes);
    fail(ErrorKind::decode, "unrecognized image signature at byte offset 0 (expected PNG or JPEG)");
}

RgbImage read_image(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    try {
        return decode_image(bytes);
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_png(const RgbImage& image) {
    std::vector<std::uint8_t> packed(image.size() * 3);
    for (std::size_t i = 0; i < image.size(); ++i) {
        packed[3 * i] = image[i].r;
        packed[3 * i + 1] = image[i].g;
        packed[3 * i + 2] = image[i].b;
    }
    return encode_png_raw(image.height(), image.width(), 8, PNG_COLOR_TYPE_RGB, 3, packed);
}

void write_png(const RgbImage& image, const std::filesystem::path& path) { write_file(path, encode_png(image)); }

std::vector<std::uint8_t> encode_png_gray16(GridShape shape, std::span<const std::uint16_t> samples) {
    if (samples.size() != shape.size() || shape.size() == 0)
        fail(ErrorKind::dimension, "gray16 sample count does not match " + to_string(shape));
    std::vector<std::uint8_t> packed(samples.size() * 2);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        packed[2 * i] = static_cast<std::uint8_t>(samples[i] >> 8);
        packed[2 * i + 1] = static_cast<std::uint8_t>(samples[i] & 0xFF);
    }
    return encode_png_raw(shape.height, shape.width, 16, PNG_COLOR_TYPE_GRAY, 2, packed);
}

Lab srgb_to_lab(Rgb pixel) {
    const auto& lin = linear_table();
    const double r = lin[pixel.r];
    const double g = lin[pixel.g];
    const double b = lin[pixel.b];
    const double x = kRgbToXyz[0][0] * r + kRgbToXyz[0][1] * g + kRgbToXyz[0][2] * b;
    const double y = kRgbToXyz[1][0] * r + kRgbToXyz[1][1] * g + kRgbToXyz[1][2] * b;
    const double z = kRgbToXyz[2][0] * r + kRgbToXyz[2][1] * g + kRgbToXyz[2][2] * b;
    const double fx = lab_f(x / kWhiteX);
    const double fy = lab_f(y / kWhiteY);
    const double fz = lab_f(z / kWhiteZ);
    return Lab{116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

LabImage rgb_to_lab(const RgbImage& image) {
    std::vector<Lab> out(image.size());
    for (std::size_t i = 0; i < image.size(); ++i) out[i] = srgb_to_lab(image[i]);
    return LabImage(image.height(), image.width(), std::move(out));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string() + " for reading");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) fail(ErrorKind::io, "read failed for " + path.string());
    return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.close();
    if (!out) fail(ErrorKind::io, "write failed for " + path.string());
}

}  // namespace iprop
