#include "iprop/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "iprop/error.hpp"
#include "iprop/runtime.hpp"

namespace iprop {

namespace {

constexpr double kRowSumTolerance = 1e-9;

struct ChebyshevWindow {
    std::size_t row_begin, row_end, col_begin, col_end;  // half-open
};

ChebyshevWindow window_of(std::size_t index, int k, GridShape shape) {
    const std::size_t row = shape.row_of(index);
    const std::size_t col = shape.col_of(index);
    const auto radius = static_cast<std::size_t>(k);
    return {row >= radius ? row - radius : 0, std::min(shape.height, row + radius + 1),
            col >= radius ? col - radius : 0, std::min(shape.width, col + radius + 1)};
}

void check_node(std::size_t index, GridShape shape) {
    if (index >= shape.size())
        fail(ErrorKind::argument, "node index " + std::to_string(index) + " out of range for " + to_string(shape));
}

void check_k(int k) {
    if (k < 1) fail(ErrorKind::argument, "neighborhood order k must be >= 1 (got " + std::to_string(k) + ")");
}

// d_s and d_c are formed from squared differences, so (i, j) and (j, i)
// produce bit-identical results.
PixelDistance edge_distance(const LabImage& lab, std::size_t i, std::size_t j, DistanceMode mode) {
    const GridShape shape = lab.shape();
    const double dr = static_cast<double>(shape.row_of(i)) - static_cast<double>(shape.row_of(j));
    const double dc = static_cast<double>(shape.col_of(i)) - static_cast<double>(shape.col_of(j));
    PixelDistance d;
    d.spatial = std::sqrt(dr * dr + dc * dc);
    if (mode == DistanceMode::combined) {
        const Lab& a = lab[i];
        const Lab& b = lab[j];
        const double dl = a.l - b.l;
        const double da = a.a - b.a;
        const double db = a.b - b.b;
        d.color = std::sqrt(dl * dl + da * da + db * db);
    }
    d.total = d.spatial + d.color;
    return d;
}

}  // namespace

void PropagationConfig::validate() const {
    if (k < 1) fail(ErrorKind::argument, "k must be >= 1 (got " + std::to_string(k) + ")");
    if (!(gamma >= 0.0 && gamma < 1.0))
        fail(ErrorKind::argument, "gamma must lie in [0, 1) (got " + std::to_string(gamma) + ")");
    if (!(tol > 0.0) || !std::isfinite(tol))
        fail(ErrorKind::argument, "tol must be a positive finite number (got " + std::to_string(tol) + ")");
    if (max_iters < 1) fail(ErrorKind::argument, "max_iters must be >= 1");
}

int default_k(GridShape shape) {
    const std::size_t side = std::min(shape.height, shape.width);
    return static_cast<int>(std::max<std::size_t>(1, side / 32));
}

std::size_t neighborhood_size(std::size_t index, int k, GridShape shape) {
    check_k(k);
    check_node(index, shape);
    const auto w = window_of(index, k, shape);
    return (w.row_end - w.row_begin) * (w.col_end - w.col_begin) - 1;
}

std::vector<std::size_t> neighborhood(std::size_t index, int k, GridShape shape) {
    check_k(k);
    check_node(index, shape);
    const auto w = window_of(index, k, shape);
    std::vector<std::size_t> out;
    out.reserve((w.row_end - w.row_begin) * (w.col_end - w.col_begin) - 1);
    for (std::size_t r = w.row_begin; r < w.row_end; ++r) {
        for (std::size_t c = w.col_begin; c < w.col_end; ++c) {
            const std::size_t j = shape.index(r, c);
            if (j != index) out.push_back(j);
        }
    }
    return out;
}

PixelDistance pixel_distance(const LabImage& lab, std::size_t i, std::size_t j) {
    check_node(i, lab.shape());
    check_node(j, lab.shape());
    if (i == j) fail(ErrorKind::argument, "pixel_distance requires two distinct pixels (got " + std::to_string(i) + " twice)");
    return edge_distance(lab, i, j, DistanceMode::combined);
}

// ---------------------------------------------------------------------------

WeightedPixelGraph::WeightedPixelGraph(GridShape shape, std::shared_ptr<const CsrPattern> pattern,
                                       std::vector<double> weights)
    : shape_(shape), pattern_(std::move(pattern)), weights_(std::move(weights)) {
    if (!pattern_) fail(ErrorKind::argument, "graph pattern is null");
    if (pattern_->rows != shape_.size() || pattern_->offsets.size() != pattern_->rows + 1)
        fail(ErrorKind::dimension, "graph pattern has " + std::to_string(pattern_->rows) + " rows, grid " +
                                       to_string(shape_) + " needs " + std::to_string(shape_.size()));
    if (weights_.size() != pattern_->nnz())
        fail(ErrorKind::dimension, "graph has " + std::to_string(pattern_->nnz()) + " edges but " +
                                       std::to_string(weights_.size()) + " weights");
}

double WeightedPixelGraph::weight(std::size_t i, std::size_t j) const {
    const auto cols = neighbors(i);
    const auto it = std::lower_bound(cols.begin(), cols.end(), static_cast<std::uint32_t>(j));
    if (it == cols.end() || *it != j) return std::numeric_limits<double>::quiet_NaN();
    return weights(i)[static_cast<std::size_t>(it - cols.begin())];
}

SparseStochasticMatrix::SparseStochasticMatrix(std::shared_ptr<const CsrPattern> pattern,
                                               std::vector<double> probabilities)
    : pattern_(std::move(pattern)), values_(std::move(probabilities)) {
    if (!pattern_) fail(ErrorKind::argument, "matrix pattern is null");
    if (values_.size() != pattern_->nnz())
        fail(ErrorKind::dimension, "matrix has " + std::to_string(pattern_->nnz()) + " entries but " +
                                       std::to_string(values_.size()) + " values");
    for (std::size_t row = 0; row < pattern_->rows; ++row) {
        const auto vals = row_values(row);
        if (vals.empty()) fail(ErrorKind::structural, "row " + std::to_string(row) + " has no entries");
        double sum = 0.0;
        for (const double v : vals) {
            if (!(v >= 0.0 && v <= 1.0))
                fail(ErrorKind::validation, "row " + std::to_string(row) + " has a probability outside [0, 1]");
            sum += v;
        }
        if (std::abs(sum - 1.0) > kRowSumTolerance)
            fail(ErrorKind::validation, "row " + std::to_string(row) + " sums to " + std::to_string(sum));
    }
}

double SparseStochasticMatrix::at(std::size_t i, std::size_t j) const {
    const auto cols = row_columns(i);
    const auto it = std::lower_bound(cols.begin(), cols.end(), static_cast<std::uint32_t>(j));
    if (it == cols.end() || *it != j) return 0.0;
    return row_values(i)[static_cast<std::size_t>(it - cols.begin())];
}

void SparseStochasticMatrix::multiply(std::span<const double> in, std::span<double> out, int threads) const {
    const std::size_t n = dimension();
    if (in.size() != n || out.size() != n)
        fail(ErrorKind::dimension, "matvec operand sizes do not match dimension " + std::to_string(n));
    const std::size_t* offsets = pattern_->offsets.data();
    const std::uint32_t* cols = pattern_->columns.data();
    const double* vals = values_.data();
    const double* x = in.data();
    double* y = out.data();
    const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) num_threads(threads)
    for (std::ptrdiff_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t e = offsets[r]; e < offsets[r + 1]; ++e) acc += vals[e] * x[cols[e]];
        y[r] = acc;
    }
}

std::vector<double> SparseStochasticMatrix::to_dense() const {
    const std::size_t n = dimension();
    std::vector<double> dense(n * n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        const auto cols = row_columns(r);
        const auto vals = row_values(r);
        for (std::size_t e = 0; e < cols.size(); ++e) dense[r * n + cols[e]] = vals[e];
    }
    return dense;
}

// ---------------------------------------------------------------------------

std::shared_ptr<const CsrPattern> build_pattern(GridShape shape, int k) {
    check_k(k);
    if (shape.size() == 0) fail(ErrorKind::dimension, "cannot build a graph on an empty grid");
    if (shape.size() > std::numeric_limits<std::uint32_t>::max())
        fail(ErrorKind::dimension, "grid " + to_string(shape) + " exceeds 32-bit node indexing");

    auto pattern = std::make_shared<CsrPattern>();
    const std::size_t n = shape.size();
    pattern->rows = n;
    pattern->offsets.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) pattern->offsets[i + 1] = pattern->offsets[i] + neighborhood_size(i, k, shape);
    pattern->columns.resize(pattern->offsets[n]);

    std::uint32_t* columns = pattern->columns.data();
    const std::size_t* offsets = pattern->offsets.data();
    const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) num_threads(thread_cap())
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        const auto node = static_cast<std::size_t>(i);
        const auto w = window_of(node, k, shape);
        std::size_t e = offsets[node];
        for (std::size_t r = w.row_begin; r < w.row_end; ++r) {
            for (std::size_t c = w.col_begin; c < w.col_end; ++c) {
                const std::size_t j = shape.index(r, c);
                if (j != node) columns[e++] = static_cast<std::uint32_t>(j);
            }
        }
    }
    return pattern;
}

WeightedPixelGraph build_weighted_graph(const LabImage& lab, int k, DistanceMode mode) {
    check_k(k);
    const GridShape shape = lab.shape();
    const auto span = static_cast<std::size_t>(2) * static_cast<std::size_t>(k) + 1;
    if (span > shape.height && span > shape.width)
        warn("k=" + std::to_string(k) + " covers the whole " + to_string(shape) +
             " image; the graph is (near-)complete and construction cost grows as N^2");

    auto pattern = build_pattern(shape, k);
    std::vector<double> weights(pattern->nnz());
    const std::size_t* offsets = pattern->offsets.data();
    const std::uint32_t* columns = pattern->columns.data();
    double* out = weights.data();
    const auto rows = static_cast<std::ptrdiff_t>(shape.size());
#pragma omp parallel for schedule(static) num_threads(thread_cap())
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        const auto node = static_cast<std::size_t>(i);
        for (std::size_t e = offsets[node]; e < offsets[node + 1]; ++e)
            out[e] = -edge_distance(lab, node, columns[e], mode).total;
    }
    return WeightedPixelGraph(shape, std::move(pattern), std::move(weights));
}

void softmax_in_place(std::span<double> values) {
    if (values.empty()) fail(ErrorKind::structural, "softmax over an empty row");
    const double peak = *std::max_element(values.begin(), values.end());
    double sum = 0.0;
    for (double& v : values) {
        v = std::exp(v - peak);
        sum += v;
    }
    for (double& v : values) v /= sum;
}

SparseStochasticMatrix build_transition(const WeightedPixelGraph& graph) {
    const auto& pattern = graph.pattern();
    const std::size_t n = graph.node_count();
    for (std::size_t i = 0; i < n; ++i) {
        if (pattern->degree(i) == 0)
            fail(ErrorKind::structural, "node " + std::to_string(i) + " is isolated; its transition row cannot be normalized");
    }

    std::vector<double> probabilities(pattern->nnz());
    const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) num_threads(thread_cap())
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        const auto node = static_cast<std::size_t>(i);
        const auto w = graph.weights(node);
        std::span<double> row(probabilities.data() + pattern->offsets[node], w.size());
        std::copy(w.begin(), w.end(), row.begin());
        softmax_in_place(row);
    }
    return SparseStochasticMatrix(pattern, std::move(probabilities));
}

SparseRow transition_row(const LabImage& lab, std::size_t node, int k, DistanceMode mode) {
    const auto neighbors = neighborhood(node, k, lab.shape());
    if (neighbors.empty()) fail(ErrorKind::structural, "node " + std::to_string(node) + " has no neighbors");
    SparseRow row;
    row.columns.reserve(neighbors.size());
    row.probabilities.reserve(neighbors.size());
    for (const std::size_t j : neighbors) {
        row.columns.push_back(static_cast<std::uint32_t>(j));
        row.probabilities.push_back(-edge_distance(lab, node, j, mode).total);
    }
    softmax_in_place(row.probabilities);
    return row;
}

double transition_row_kl(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size())
        fail(ErrorKind::argument, "KL operands differ in length (" + std::to_string(p.size()) + " vs " +
                                      std::to_string(q.size()) + ")");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        if (q[i] <= 0.0)
            fail(ErrorKind::divergence, "p has mass at entry " + std::to_string(i) + " where q is zero (KL is infinite)");
        kl += p[i] * std::log(p[i] / q[i]);
    }
    // Gibbs' inequality; negative values are rounding noise.
    return std::max(kl, 0.0);
}

double transition_row_kl(const SparseRow& p, const SparseRow& q) {
    if (p.columns.size() != p.probabilities.size() || q.columns.size() != q.probabilities.size())
        fail(ErrorKind::argument, "sparse row has mismatched column and probability counts");
    double kl = 0.0;
    std::size_t qi = 0;
    for (std::size_t pi = 0; pi < p.columns.size(); ++pi) {
        const double mass = p.probabilities[pi];
        if (mass <= 0.0) continue;
        const std::uint32_t col = p.columns[pi];
        while (qi < q.columns.size() && q.columns[qi] < col) ++qi;
        if (qi == q.columns.size() || q.columns[qi] != col || q.probabilities[qi] <= 0.0)
            fail(ErrorKind::divergence, "p has mass at node " + std::to_string(col) + " where q is zero (KL is infinite)");
        kl += mass * std::log(mass / q.probabilities[qi]);
    }
    return std::max(kl, 0.0);
}

std::map<double, double> distance_profile(const LabImage& lab, int k) {
    check_k(k);
    const GridShape shape = lab.shape();
    // Keyed by squared spatial offset so that grouping is exact.
    std::map<std::size_t, std::vector<double>> groups;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        const std::size_t ri = shape.row_of(i);
        const std::size_t ci = shape.col_of(i);
        for (const std::size_t j : neighborhood(i, k, shape)) {
            if (j < i) continue;
            const std::size_t dr = shape.row_of(j) - ri;  // j > i, so row_of(j) >= ri
            const std::size_t cj = shape.col_of(j);
            const std::size_t dc = cj > ci ? cj - ci : ci - cj;
            groups[dr * dr + dc * dc].push_back(edge_distance(lab, i, j, DistanceMode::combined).color);
        }
    }

    std::map<double, double> profile;
    for (auto& [squared, colors] : groups) {
        const std::size_t mid = colors.size() / 2;
        std::nth_element(colors.begin(), colors.begin() + static_cast<std::ptrdiff_t>(mid), colors.end());
        double median = colors[mid];
        if (colors.size() % 2 == 0) {
            const double lower = *std::max_element(colors.begin(), colors.begin() + static_cast<std::ptrdiff_t>(mid));
            median = 0.5 * (lower + median);
        }
        profile.emplace(std::sqrt(static_cast<double>(squared)), median);
    }
    return profile;
}

}  // namespace iprop
