#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "iprop/types.hpp"

namespace iprop {

enum class AttributionFormat { binary, csv };

inline constexpr std::uint16_t kIpamVersion = 1;

// IPAM layout, little-endian:
//   "IPAM" | u16 version | u32 height | u32 width | u16 channels (1 or 3)
//   | height*width*channels f32, row-major, channels interleaved
inline constexpr std::size_t kIpamHeaderSize = 4 + 2 + 4 + 4 + 2;

/// A parsed attribution file before channel reduction.
struct AttributionFile {
    AttributionFormat format = AttributionFormat::binary;
    std::uint16_t version = kIpamVersion;
    GridShape shape;
    std::size_t channels = 1;
    std::vector<double> payload;

    AttributionMap reduce() const;
};

/// Sniffs the format: "IPAM" magic selects binary, printable text selects CSV.
AttributionFile parse_attribution(std::span<const std::uint8_t> bytes);
AttributionFile read_attribution_file(const std::filesystem::path& path);

/// Per-pixel channel sum.
AttributionMap reduce_channels(GridShape shape, std::size_t channels, std::span<const double> interleaved);

AttributionMap load_attribution(const std::filesystem::path& path, std::optional<GridShape> expected = std::nullopt);

std::vector<std::uint8_t> encode_ipam(GridShape shape, std::size_t channels, std::span<const double> interleaved);
std::vector<std::uint8_t> encode_ipam(const AttributionMap& am);
std::string encode_csv(const AttributionMap& am);
void save_attribution(const AttributionMap& am, const std::filesystem::path& path, AttributionFormat format);

/// Affine rescale to [0, 1]; a constant map becomes all zeros.
AttributionMap minmax_normalize(const AttributionMap& am);

/// round-half-up of v * 65535 over the normalized map.
std::vector<std::uint16_t> quantize_heatmap(const AttributionMap& am);
std::vector<std::uint8_t> encode_heatmap(const AttributionMap& am);
void export_heatmap(const AttributionMap& am, const std::filesystem::path& path);

}  // namespace iprop
