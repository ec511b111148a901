#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "iprop/imaging.hpp"
#include "iprop/predictor.hpp"
#include "iprop/types.hpp"

namespace iprop {

/// Human annotation: true cells lie inside the annotated object.
class AnnotationMask {
public:
    AnnotationMask(GridShape shape, std::vector<std::uint8_t> inside);

    /// Nonzero pixels (any channel) are inside.
    static AnnotationMask from_image(const RgbImage& image);

    GridShape shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return inside_.size(); }
    bool operator[](std::size_t index) const { return inside_[index] != 0; }
    bool at(std::size_t row, std::size_t col) const { return inside_[shape_.index(row, col)] != 0; }
    std::size_t positives() const noexcept { return positives_; }
    std::span<const std::uint8_t> cells() const noexcept { return inside_; }

private:
    GridShape shape_;
    std::vector<std::uint8_t> inside_;
    std::size_t positives_ = 0;
};

AnnotationMask load_mask(const std::filesystem::path& path);

/// Ordered (fraction, score) samples and their trapezoidal area.
struct MetricCurve {
    std::vector<double> fractions;
    std::vector<double> scores;
    double auc = 0.0;
};

double trapezoid_auc(std::span<const double> xs, std::span<const double> ys);

/// True iff the first row-major maximum of `am` lies inside the mask.
bool pointing_game(const AttributionMap& am, const AnnotationMask& mask);

/// Mann-Whitney AUC: P(random positive outranks random negative), ties count 1/2.
double roc_auc(const AttributionMap& am, const AnnotationMask& mask);

/// Pixel indices by descending attribution; ties keep row-major order.
std::vector<std::size_t> rank_pixels(const AttributionMap& am);

inline constexpr std::size_t kDefaultCurveSteps = 100;

/// Number of pixels revealed (or removed) at step s of `steps`:
/// round-half-up of s * N / (steps - 1).
std::size_t pixels_at_step(std::size_t step, std::size_t steps, std::size_t pixel_count);

/// Starting from black, reveal the highest-ranked pixels first.
MetricCurve insertion_curve(const RgbImage& image, const AttributionMap& am, ImageScorer& predictor,
                            std::uint32_t class_index, std::size_t steps = kDefaultCurveSteps);
/// Starting from the original, zero the highest-ranked pixels first.
MetricCurve deletion_curve(const RgbImage& image, const AttributionMap& am, ImageScorer& predictor,
                           std::uint32_t class_index, std::size_t steps = kDefaultCurveSteps);

/// deletion AUC / insertion AUC; lower is better.
double deletion_insertion_ratio(double insertion_auc, double deletion_auc);

/// Spearman correlation of |am1| and |am2| (average ranks for ties).
double spearman_abs(const AttributionMap& am1, const AttributionMap& am2);

}  // namespace iprop
