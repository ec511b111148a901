#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cstdint>
#include <functional>
#include <span>

#include "iprop/graph.hpp"
#include "iprop/imaging.hpp"
#include "iprop/types.hpp"

namespace iprop {

using Seconds = std::chrono::duration<double>;

struct PropagationResult {
    AttributionMap refined;
    std::size_t iterations = 0;
    double final_mse = 0.0;
    bool converged = false;
    Seconds wall_time{0.0};
};

/// Reported after every iteration k -> k+1.
struct IterationStats {
    std::size_t iteration = 0;  // 1-based
    double mse = 0.0;           // mean of (V[k+1] - V[k])^2
    double sup_norm = 0.0;      // max |V[k+1] - V[k]|
};

struct ValueIterationOptions {
    /// Starting iterate; empty means start from the attribution map itself.
    std::span<const double> initial;
    std::function<void(const IterationStats&)> observer;
};

/// Iterates V <- AM + gamma * P * V until the mean squared change between
/// consecutive iterates drops below cfg.tol, or cfg.max_iters is reached
/// (converged = false, not an error). Non-finite values throw
/// ErrorKind::numerical naming the iteration.
PropagationResult value_iterate(const SparseStochasticMatrix& p, const AttributionMap& am,
                                const PropagationConfig& cfg, const ValueIterationOptions& options = {});

inline constexpr std::size_t kDefaultOracleNodeCap = 4096;

using DenseMatrix = Eigen::MatrixXd;

/// Dense copy of P for the closed-form oracle. Refuses above `node_cap`.
DenseMatrix to_dense_matrix(const SparseStochasticMatrix& p, std::size_t node_cap = kDefaultOracleNodeCap);

/// Solves (I - gamma P) x = AM by LU with partial pivoting. Verification
/// only: refuses (ErrorKind::refused) when N exceeds `node_cap`.
AttributionMap closed_form_solve(const DenseMatrix& p, const AttributionMap& am, double gamma,
                                 std::size_t node_cap = kDefaultOracleNodeCap);

struct PipelineTimings {
    Seconds decode{0.0};
    Seconds lab{0.0};
    Seconds graph_build{0.0};
    Seconds transition_build{0.0};
    Seconds iterate{0.0};
};

struct PipelineDiagnostics {
    PipelineTimings timings;
    std::size_t nodes = 0;
    std::size_t nonzeros = 0;
    std::size_t matvec_count = 0;
    int threads = 1;
};

struct IpropRun {
    PropagationResult result;
    PipelineDiagnostics diagnostics;
};

/// decode -> CIELAB -> weighted graph -> transition matrix -> value iteration.
IpropRun run_iprop(std::span<const std::uint8_t> image_bytes, const AttributionMap& base_am,
                   const PropagationConfig& cfg);
IpropRun run_iprop(const RgbImage& image, const AttributionMap& base_am, const PropagationConfig& cfg);

}  // namespace iprop
