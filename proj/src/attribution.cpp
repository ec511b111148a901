#include "iprop/attribution.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <string>
#include <string_view>

#include "iprop/error.hpp"
#include "iprop/imaging.hpp"

namespace iprop {

namespace {

constexpr char kMagic[4] = {'I', 'P', 'A', 'M'};

template <typename T>
T read_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
    std::make_unsigned_t<T> value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        value |= static_cast<std::make_unsigned_t<T>>(bytes[offset + i]) << (8 * i);
    return static_cast<T>(value);
}

template <typename T>
void write_le(std::vector<std::uint8_t>& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

void require_finite(std::span<const double> values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i]))
            fail(ErrorKind::validation, "payload value " + std::to_string(i) + " is not finite");
    }
}

AttributionFile parse_ipam(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kIpamHeaderSize)
        fail(ErrorKind::format, "IPAM header truncated (" + std::to_string(bytes.size()) + " bytes)");
    AttributionFile file;
    file.format = AttributionFormat::binary;
    file.version = read_le<std::uint16_t>(bytes, 4);
    if (file.version != kIpamVersion)
        fail(ErrorKind::format, "unsupported IPAM version " + std::to_string(file.version));
    file.shape = GridShape{read_le<std::uint32_t>(bytes, 6), read_le<std::uint32_t>(bytes, 10)};
    file.channels = read_le<std::uint16_t>(bytes, 14);
    if (file.channels != 1 && file.channels != 3)
        fail(ErrorKind::format, "IPAM channel count must be 1 or 3 (got " + std::to_string(file.channels) + ")");
    if (file.shape.size() == 0) fail(ErrorKind::format, "IPAM declares an empty map");

    const std::size_t count = file.shape.size() * file.channels;
    if (bytes.size() - kIpamHeaderSize != count * 4)
        fail(ErrorKind::format, "IPAM declares " + to_string(file.shape) + "x" + std::to_string(file.channels) +
                                    " (" + std::to_string(count * 4) + " payload bytes) but carries " +
                                    std::to_string(bytes.size() - kIpamHeaderSize));
    file.payload.resize(count);
    for (std::size_t i = 0; i < count; ++i)
        file.payload[i] = std::bit_cast<float>(read_le<std::uint32_t>(bytes, kIpamHeaderSize + 4 * i));
    require_finite(file.payload);
    return file;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

AttributionFile parse_csv(std::string_view text) {
    AttributionFile file;
    file.format = AttributionFormat::csv;
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t line_number = 0;
    while (!text.empty()) {
        const std::size_t eol = text.find('\n');
        const std::string_view line = trim(text.substr(0, eol));
        text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
        ++line_number;
        if (line.empty()) {
            if (!trim(text).empty()) fail(ErrorKind::format, "CSV line " + std::to_string(line_number) + " is empty");
            break;
        }
        std::size_t fields = 0;
        std::string_view rest = line;
        while (true) {
            const std::size_t comma = rest.find(',');
            const std::string_view field = trim(rest.substr(0, comma));
            double value = 0.0;
            const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
            if (field.empty() || ec != std::errc{} || end != field.data() + field.size())
                fail(ErrorKind::format, "CSV line " + std::to_string(line_number) + ": cannot parse '" +
                                            std::string(field) + "'");
            file.payload.push_back(value);
            ++fields;
            if (comma == std::string_view::npos) break;
            rest = rest.substr(comma + 1);
        }
        if (height == 0) width = fields;
        if (fields != width)
            fail(ErrorKind::format, "CSV line " + std::to_string(line_number) + " has " + std::to_string(fields) +
                                        " values, expected " + std::to_string(width));
        ++height;
    }
    if (height == 0) fail(ErrorKind::format, "CSV attribution file is empty");
    file.shape = GridShape{height, width};
    file.channels = 1;
    require_finite(file.payload);
    return file;
}

bool looks_like_text(std::span<const std::uint8_t> bytes) {
    return std::all_of(bytes.begin(), bytes.end(), [](std::uint8_t c) {
        return (c >= 0x20 && c < 0x7F) || c == '\n' || c == '\r' || c == '\t';
    });
}

}  // namespace

AttributionMap AttributionFile::reduce() const { return reduce_channels(shape, channels, payload); }

AttributionMap reduce_channels(GridShape shape, std::size_t channels, std::span<const double> interleaved) {
    if (channels == 0) fail(ErrorKind::argument, "channel count must be positive");
    if (interleaved.size() != shape.size() * channels)
        fail(ErrorKind::dimension, "payload of " + std::to_string(interleaved.size()) + " values does not match " +
                                       to_string(shape) + "x" + std::to_string(channels));
    std::vector<double> out(shape.size(), 0.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        double sum = 0.0;
        for (std::size_t c = 0; c < channels; ++c) sum += interleaved[i * channels + c];
        out[i] = sum;
    }
    return AttributionMap(shape, std::move(out));
}

AttributionFile parse_attribution(std::span<const std::uint8_t> bytes) {
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) == 0) return parse_ipam(bytes);
    if (!bytes.empty() && looks_like_text(bytes))
        return parse_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    fail(ErrorKind::format, "unknown attribution file magic (expected \"IPAM\" or CSV text)");
}

AttributionFile read_attribution_file(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    try {
        return parse_attribution(bytes);
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

AttributionMap load_attribution(const std::filesystem::path& path, std::optional<GridShape> expected) {
    AttributionMap am = read_attribution_file(path).reduce();
    if (expected && am.shape() != *expected)
        fail(ErrorKind::argument, path.string() + ": attribution map is " + to_string(am.shape()) +
                                      " but " + to_string(*expected) + " was expected");
    return am;
}

std::vector<std::uint8_t> encode_ipam(GridShape shape, std::size_t channels, std::span<const double> interleaved) {
    if (channels != 1 && channels != 3) fail(ErrorKind::argument, "IPAM supports 1 or 3 channels");
    if (shape.size() == 0 || interleaved.size() != shape.size() * channels)
        fail(ErrorKind::dimension, "payload does not match " + to_string(shape) + "x" + std::to_string(channels));
    std::vector<std::uint8_t> out;
    out.reserve(kIpamHeaderSize + 4 * interleaved.size());
    out.insert(out.end(), kMagic, kMagic + 4);
    write_le<std::uint16_t>(out, kIpamVersion);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(shape.height));
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(shape.width));
    write_le<std::uint16_t>(out, static_cast<std::uint16_t>(channels));
    for (const double v : interleaved) write_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    return out;
}

std::vector<std::uint8_t> encode_ipam(const AttributionMap& am) { return encode_ipam(am.shape(), 1, am.values()); }

std::string encode_csv(const AttributionMap& am) {
    std::string out;
    char buffer[64];
    for (std::size_t r = 0; r < am.height(); ++r) {
        for (std::size_t c = 0; c < am.width(); ++c) {
            if (c != 0) out.push_back(',');
            const auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, am.at(r, c));
            out.append(buffer, end);
        }
        out.push_back('\n');
    }
    return out;
}

void save_attribution(const AttributionMap& am, const std::filesystem::path& path, AttributionFormat format) {
    if (format == AttributionFormat::binary) {
        write_file(path, encode_ipam(am));
    } else {
        const std::string text = encode_csv(am);
        write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    }
}

AttributionMap minmax_normalize(const AttributionMap& am) {
    const double lo = am.min();
    const double hi = am.max();
    std::vector<double> out(am.size(), 0.0);
    if (hi > lo) {
        const double range = hi - lo;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = (am[i] - lo) / range;
    }
    return AttributionMap(am.shape(), std::move(out));
}

std::vector<std::uint16_t> quantize_heatmap(const AttributionMap& am) {
    const AttributionMap normalized = minmax_normalize(am);
    std::vector<std::uint16_t> samples(normalized.size());
    for (std::size_t i = 0; i < samples.size(); ++i)
        samples[i] = static_cast<std::uint16_t>(std::floor(normalized[i] * 65535.0 + 0.5));
    return samples;
}

std::vector<std::uint8_t> encode_heatmap(const AttributionMap& am) {
    return encode_png_gray16(am.shape(), quantize_heatmap(am));
}

void export_heatmap(const AttributionMap& am, const std::filesystem::path& path) {
    write_file(path, encode_heatmap(am));
}

}  // namespace iprop
