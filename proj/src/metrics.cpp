#include "iprop/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "iprop/error.hpp"

namespace iprop {

namespace {

void require_same_shape(GridShape a, GridShape b, const char* what) {
    if (a != b) fail(ErrorKind::argument, std::string(what) + ": shapes differ (" + to_string(a) + " vs " + to_string(b) + ")");
}

// 1-based ranks, tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i + 1;
        while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of i+1 .. j
        for (std::size_t t = i; t < j; ++t) ranks[order[t]] = rank;
        i = j;
    }
    return ranks;
}

enum class CurveKind { insertion, deletion };

MetricCurve perturbation_curve(CurveKind kind, const RgbImage& image, const AttributionMap& am,
                               ImageScorer& predictor, std::uint32_t class_index, std::size_t steps) {
    require_same_shape(image.shape(), am.shape(), kind == CurveKind::insertion ? "insertion_curve" : "deletion_curve");
    if (steps < 2) fail(ErrorKind::argument, "curves need at least 2 steps (got " + std::to_string(steps) + ")");

    const std::vector<std::size_t> order = rank_pixels(am);
    const std::size_t n = image.size();
    RgbImage canvas = kind == CurveKind::insertion ? RgbImage(image.height(), image.width()) : image;

    MetricCurve curve;
    curve.fractions.reserve(steps);
    curve.scores.reserve(steps);
    std::size_t done = 0;
    for (std::size_t s = 0; s < steps; ++s) {
        const std::size_t target = pixels_at_step(s, steps, n);
        for (; done < target; ++done) {
            const std::size_t p = order[done];
            canvas[p] = kind == CurveKind::insertion ? image[p] : Rgb{};
        }
        curve.fractions.push_back(static_cast<double>(s) / static_cast<double>(steps - 1));
        curve.scores.push_back(predictor.score(canvas, class_index));
    }
    curve.auc = trapezoid_auc(curve.fractions, curve.scores);
    return curve;
}

}  // namespace

AnnotationMask::AnnotationMask(GridShape shape, std::vector<std::uint8_t> inside)
    : shape_(shape), inside_(std::move(inside)) {
    if (shape_.size() == 0) fail(ErrorKind::dimension, "annotation mask must not be empty");
    if (inside_.size() != shape_.size())
        fail(ErrorKind::dimension, "annotation mask " + to_string(shape_) + " expects " +
                                       std::to_string(shape_.size()) + " cells, got " + std::to_string(inside_.size()));
    for (auto& cell : inside_) {
        cell = cell != 0 ? 1 : 0;
        positives_ += cell;
    }
}

AnnotationMask AnnotationMask::from_image(const RgbImage& image) {
    std::vector<std::uint8_t> inside(image.size());
    for (std::size_t i = 0; i < image.size(); ++i) {
        const Rgb& p = image[i];
        inside[i] = (p.r | p.g | p.b) != 0 ? 1 : 0;
    }
    return AnnotationMask(image.shape(), std::move(inside));
}

AnnotationMask load_mask(const std::filesystem::path& path) { return AnnotationMask::from_image(read_image(path)); }

double trapezoid_auc(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) fail(ErrorKind::argument, "curve coordinates differ in length");
    double area = 0.0;
    for (std::size_t i = 1; i < xs.size(); ++i) area += 0.5 * (xs[i] - xs[i - 1]) * (ys[i] + ys[i - 1]);
    return area;
}

bool pointing_game(const AttributionMap& am, const AnnotationMask& mask) {
    require_same_shape(am.shape(), mask.shape(), "pointing_game");
    if (mask.positives() == 0) fail(ErrorKind::argument, "pointing_game needs a non-empty annotation mask");
    return mask[am.argmax()];
}

double roc_auc(const AttributionMap& am, const AnnotationMask& mask) {
    require_same_shape(am.shape(), mask.shape(), "roc_auc");
    const std::size_t positives = mask.positives();
    const std::size_t negatives = mask.size() - positives;
    if (positives == 0 || negatives == 0)
        fail(ErrorKind::argument, "roc_auc needs at least one positive and one negative pixel");

    const std::vector<double> ranks = average_ranks(am.values());
    double positive_rank_sum = 0.0;
    for (std::size_t i = 0; i < ranks.size(); ++i)
        if (mask[i]) positive_rank_sum += ranks[i];
    const double p = static_cast<double>(positives);
    const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
    return u / (p * static_cast<double>(negatives));
}

std::vector<std::size_t> rank_pixels(const AttributionMap& am) {
    std::vector<std::size_t> order(am.size());
    std::iota(order.begin(), order.end(), 0);
    const auto values = am.values();
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
    return order;
}

std::size_t pixels_at_step(std::size_t step, std::size_t steps, std::size_t pixel_count) {
    if (steps < 2 || step >= steps) fail(ErrorKind::argument, "step out of range");
    const std::size_t denominator = steps - 1;
    return (2 * step * pixel_count + denominator) / (2 * denominator);
}

MetricCurve insertion_curve(const RgbImage& image, const AttributionMap& am, ImageScorer& predictor,
                            std::uint32_t class_index, std::size_t steps) {
    return perturbation_curve(CurveKind::insertion, image, am, predictor, class_index, steps);
}

MetricCurve deletion_curve(const RgbImage& image, const AttributionMap& am, ImageScorer& predictor,
                           std::uint32_t class_index, std::size_t steps) {
    return perturbation_curve(CurveKind::deletion, image, am, predictor, class_index, steps);
}

double deletion_insertion_ratio(double insertion_auc, double deletion_auc) {
    if (!(insertion_auc > 0.0))
        fail(ErrorKind::argument, "deletion-insertion ratio is undefined for insertion AUC " + std::to_string(insertion_auc));
    return deletion_auc / insertion_auc;
}

double spearman_abs(const AttributionMap& am1, const AttributionMap& am2) {
    require_same_shape(am1.shape(), am2.shape(), "spearman_abs");
    const std::size_t n = am1.size();
    if (n < 2) fail(ErrorKind::argument, "spearman_abs needs at least 2 pixels");

    std::vector<double> abs1(n), abs2(n);
    for (std::size_t i = 0; i < n; ++i) {
        abs1[i] = std::abs(am1[i]);
        abs2[i] = std::abs(am2[i]);
    }
    const std::vector<double> r1 = average_ranks(abs1);
    const std::vector<double> r2 = average_ranks(abs2);
    const double mean = 0.5 * static_cast<double>(n + 1);  // rank mean, ties included
    double cov = 0.0, var1 = 0.0, var2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = r1[i] - mean;
        const double b = r2[i] - mean;
        cov += a * b;
        var1 += a * a;
        var2 += b * b;
    }
    if (var1 == 0.0 || var2 == 0.0)
        fail(ErrorKind::argument, "spearman_abs is undefined when one map has constant magnitude");
    return cov / std::sqrt(var1 * var2);
}

}  // namespace iprop
