#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace iprop {

/// Height and width of a pixel grid. Nodes are numbered row-major.
struct GridShape {
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t size() const noexcept { return height * width; }
    std::size_t index(std::size_t row, std::size_t col) const noexcept { return row * width + col; }
    std::size_t row_of(std::size_t index) const noexcept { return index / width; }
    std::size_t col_of(std::size_t index) const noexcept { return index % width; }

    friend bool operator==(const GridShape&, const GridShape&) = default;
};

std::string to_string(GridShape shape);

/// Per-pixel attribution scores for one image. Never empty, always finite.
class AttributionMap {
public:
    AttributionMap(std::size_t height, std::size_t width, std::vector<double> values);
    AttributionMap(GridShape shape, std::vector<double> values)
        : AttributionMap(shape.height, shape.width, std::move(values)) {}

    static AttributionMap constant(GridShape shape, double value);

    GridShape shape() const noexcept { return shape_; }
    std::size_t height() const noexcept { return shape_.height; }
    std::size_t width() const noexcept { return shape_.width; }
    std::size_t size() const noexcept { return values_.size(); }

    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t index) const { return values_[index]; }
    double at(std::size_t row, std::size_t col) const { return values_[shape_.index(row, col)]; }

    /// First maximum in row-major order.
    std::size_t argmax() const noexcept;
    double min() const noexcept;
    double max() const noexcept;
    double mean() const noexcept;

    friend bool operator==(const AttributionMap&, const AttributionMap&) = default;

private:
    GridShape shape_;
    std::vector<double> values_;
};

}  // namespace iprop
