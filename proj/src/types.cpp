#include "iprop/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "iprop/error.hpp"

namespace iprop {

std::string to_string(GridShape shape) {
    return std::to_string(shape.height) + "x" + std::to_string(shape.width);
}

AttributionMap::AttributionMap(std::size_t height, std::size_t width, std::vector<double> values)
    : shape_{height, width}, values_(std::move(values)) {
    if (height == 0 || width == 0)
        fail(ErrorKind::dimension, "attribution map must not be empty (got " + to_string(shape_) + ")");
    if (values_.size() != shape_.size())
        fail(ErrorKind::dimension, "attribution map " + to_string(shape_) + " expects " +
                                       std::to_string(shape_.size()) + " values, got " +
                                       std::to_string(values_.size()));
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i]))
            fail(ErrorKind::validation, "attribution value at index " + std::to_string(i) + " is not finite");
    }
}

AttributionMap AttributionMap::constant(GridShape shape, double value) {
    return AttributionMap(shape, std::vector<double>(shape.size(), value));
}

std::size_t AttributionMap::argmax() const noexcept {
    return static_cast<std::size_t>(std::max_element(values_.begin(), values_.end()) - values_.begin());
}

double AttributionMap::min() const noexcept { return *std::min_element(values_.begin(), values_.end()); }

double AttributionMap::max() const noexcept { return *std::max_element(values_.begin(), values_.end()); }

double AttributionMap::mean() const noexcept {
    return std::accumulate(values_.begin(), values_.end(), 0.0) / static_cast<double>(values_.size());
}

}  // namespace iprop
