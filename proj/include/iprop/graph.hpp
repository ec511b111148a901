#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "iprop/imaging.hpp"
#include "iprop/types.hpp"

namespace iprop {

struct PropagationConfig {
    int k = 1;                     // neighborhood order (Chebyshev radius)
    double gamma = 0.99;           // discount, 0 <= gamma < 1
    double tol = 1e-7;             // stop once the MSE of consecutive iterates drops below this
    std::size_t max_iters = 10000;

    /// Throws ErrorKind::argument when a field is out of range.
    void validate() const;
};

/// floor(min(H, W) / 32), at least 1.
int default_k(GridShape shape);

/// How edge distances are formed. spatial_only drops the color term and is
/// used by the neighborhood-size (KL) analysis.
enum class DistanceMode { combined, spatial_only };

/// All pixels within Chebyshev distance k of `index`, excluding itself, in
/// row-major order.
std::vector<std::size_t> neighborhood(std::size_t index, int k, GridShape shape);

/// Number of neighbors `neighborhood` would return, without materializing them.
std::size_t neighborhood_size(std::size_t index, int k, GridShape shape);

struct PixelDistance {
    double spatial = 0.0;
    double color = 0.0;
    double total = 0.0;
};

PixelDistance pixel_distance(const LabImage& lab, std::size_t i, std::size_t j);

/// Compressed sparse row adjacency. Shared between a graph and the transition
/// matrix built from it.
struct CsrPattern {
    std::size_t rows = 0;
    std::vector<std::size_t> offsets;     // rows + 1 entries
    std::vector<std::uint32_t> columns;   // ascending within each row

    std::size_t nnz() const noexcept { return columns.size(); }
    std::size_t degree(std::size_t row) const { return offsets[row + 1] - offsets[row]; }
    std::span<const std::uint32_t> row(std::size_t r) const {
        return {columns.data() + offsets[r], offsets[r + 1] - offsets[r]};
    }
};

/// K-order pixel graph with weights -(d_s + d_c). Symmetric, no self-loops.
class WeightedPixelGraph {
public:
    WeightedPixelGraph(GridShape shape, std::shared_ptr<const CsrPattern> pattern, std::vector<double> weights);

    GridShape shape() const noexcept { return shape_; }
    std::size_t node_count() const noexcept { return shape_.size(); }
    std::size_t edge_count() const noexcept { return pattern_->nnz() / 2; }
    std::size_t degree(std::size_t node) const { return pattern_->degree(node); }

    std::span<const std::uint32_t> neighbors(std::size_t node) const { return pattern_->row(node); }
    std::span<const double> weights(std::size_t node) const {
        return {weights_.data() + pattern_->offsets[node], pattern_->degree(node)};
    }
    /// Weight of edge (i, j); NaN when the nodes are not adjacent.
    double weight(std::size_t i, std::size_t j) const;

    const std::shared_ptr<const CsrPattern>& pattern() const noexcept { return pattern_; }

private:
    GridShape shape_;
    std::shared_ptr<const CsrPattern> pattern_;
    std::vector<double> weights_;
};

/// Row-stochastic transition matrix in CSR form.
class SparseStochasticMatrix {
public:
    /// Validates shape, probability range [0, 1] and row sums within 1e-9.
    /// Entries are strictly positive unless exp() underflowed for an extremely
    /// distant neighbor.
    SparseStochasticMatrix(std::shared_ptr<const CsrPattern> pattern, std::vector<double> probabilities);

    std::size_t dimension() const noexcept { return pattern_->rows; }
    std::size_t nnz() const noexcept { return pattern_->nnz(); }

    std::span<const std::uint32_t> row_columns(std::size_t row) const { return pattern_->row(row); }
    std::span<const double> row_values(std::size_t row) const {
        return {values_.data() + pattern_->offsets[row], pattern_->degree(row)};
    }
    /// P[i, j]; zero off the sparsity pattern.
    double at(std::size_t i, std::size_t j) const;

    /// out = P * in. Each output element is accumulated in ascending column
    /// order, so results do not depend on the thread count.
    void multiply(std::span<const double> in, std::span<double> out, int threads) const;

    /// Dense row-major copy (N*N entries).
    std::vector<double> to_dense() const;

    const std::shared_ptr<const CsrPattern>& pattern() const noexcept { return pattern_; }
    std::span<const double> values() const noexcept { return values_; }

private:
    std::shared_ptr<const CsrPattern> pattern_;
    std::vector<double> values_;
};

/// Adjacency of every pixel to its K-order neighborhood.
std::shared_ptr<const CsrPattern> build_pattern(GridShape shape, int k);

/// Emits a performance warning when the neighborhood covers the whole image.
WeightedPixelGraph build_weighted_graph(const LabImage& lab, int k, DistanceMode mode = DistanceMode::combined);

/// Row-wise softmax restricted to each node's neighbors.
SparseStochasticMatrix build_transition(const WeightedPixelGraph& graph);

/// Max-subtracted softmax in place. The span must be non-empty.
void softmax_in_place(std::span<double> values);

struct SparseRow {
    std::vector<std::uint32_t> columns;  // ascending
    std::vector<double> probabilities;
};

/// One transition row computed directly, without building the whole matrix.
SparseRow transition_row(const LabImage& lab, std::size_t node, int k, DistanceMode mode = DistanceMode::combined);

/// KL(p || q) over p's support. Throws ErrorKind::divergence when p has mass
/// where q has none.
double transition_row_kl(std::span<const double> p, std::span<const double> q);
/// Sparse variant: entries missing from a row are exact zeros.
double transition_row_kl(const SparseRow& p, const SparseRow& q);

/// Median color distance for each distinct spatial distance among neighbor pairs.
std::map<double, double> distance_profile(const LabImage& lab, int k);

}  // namespace iprop
