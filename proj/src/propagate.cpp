#include "iprop/propagate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "iprop/error.hpp"
#include "iprop/runtime.hpp"

namespace iprop {

namespace {

using Clock = std::chrono::steady_clock;

void check_gamma(double gamma) {
    if (!(gamma >= 0.0 && gamma < 1.0))
        fail(ErrorKind::argument, "gamma must lie in [0, 1) (got " + std::to_string(gamma) + ")");
}

}  // namespace

PropagationResult value_iterate(const SparseStochasticMatrix& p, const AttributionMap& am,
                                const PropagationConfig& cfg, const ValueIterationOptions& options) {
    cfg.validate();
    const std::size_t n = am.size();
    if (p.dimension() != n)
        fail(ErrorKind::dimension, "transition matrix has dimension " + std::to_string(p.dimension()) +
                                       " but the attribution map " + to_string(am.shape()) + " has " +
                                       std::to_string(n) + " pixels");
    if (!options.initial.empty() && options.initial.size() != n)
        fail(ErrorKind::dimension, "initial iterate has " + std::to_string(options.initial.size()) +
                                       " values, expected " + std::to_string(n));

    const auto start = Clock::now();
    const int threads = thread_cap();
    const std::span<const double> reward = am.values();

    std::vector<double> current = options.initial.empty()
                                      ? std::vector<double>(reward.begin(), reward.end())
                                      : std::vector<double>(options.initial.begin(), options.initial.end());
    // The iteration is carried in increment form: delta[k+1] = gamma * P * delta[k],
    // V[k+1] = V[k] + delta[k+1]. This is the same sequence as V <- AM + gamma * P * V,
    // but the increments are never formed by subtracting two nearly equal iterates,
    // so late-iteration differences keep full relative precision.
    std::vector<double> delta(n);
    std::vector<double> propagated(n);

    PropagationResult result{am, 0, std::numeric_limits<double>::infinity(), false, {}};
    for (std::size_t iteration = 1; iteration <= cfg.max_iters; ++iteration) {
        if (cfg.gamma == 0.0) {
            // The update degenerates to V = AM; copying keeps signed zeros intact.
            for (std::size_t i = 0; i < n; ++i) delta[i] = reward[i] - current[i];
        } else if (iteration == 1) {
            p.multiply(current, propagated, threads);
            for (std::size_t i = 0; i < n; ++i) delta[i] = (reward[i] + cfg.gamma * propagated[i]) - current[i];
        } else {
            p.multiply(delta, propagated, threads);
            for (std::size_t i = 0; i < n; ++i) delta[i] = cfg.gamma * propagated[i];
        }

        // Sequential reduction: the stopping decision must not depend on threads.
        double squared = 0.0;
        double sup = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = delta[i];
            if (!std::isfinite(d) || !std::isfinite(current[i] + d))
                fail(ErrorKind::numerical, "non-finite value at pixel " + std::to_string(i) + " in iteration " +
                                               std::to_string(iteration));
            squared += d * d;
            sup = std::max(sup, std::abs(d));
        }
        const double mse = squared / static_cast<double>(n);
        if (!std::isfinite(mse))
            fail(ErrorKind::numerical, "iterate change overflowed in iteration " + std::to_string(iteration));

        if (cfg.gamma == 0.0)
            std::copy(reward.begin(), reward.end(), current.begin());
        else
            for (std::size_t i = 0; i < n; ++i) current[i] += delta[i];
        result.iterations = iteration;
        result.final_mse = mse;
        if (options.observer) options.observer(IterationStats{iteration, mse, sup});
        if (mse < cfg.tol) {
            result.converged = true;
            break;
        }
    }

    result.refined = AttributionMap(am.shape(), std::move(current));
    result.wall_time = Clock::now() - start;
    return result;
}

DenseMatrix to_dense_matrix(const SparseStochasticMatrix& p, std::size_t node_cap) {
    const std::size_t n = p.dimension();
    if (n > node_cap)
        fail(ErrorKind::refused, "dense oracle is capped at " + std::to_string(node_cap) + " nodes (got " +
                                     std::to_string(n) + ")");
    DenseMatrix dense = DenseMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < n; ++r) {
        const auto cols = p.row_columns(r);
        const auto vals = p.row_values(r);
        for (std::size_t e = 0; e < cols.size(); ++e)
            dense(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(cols[e])) = vals[e];
    }
    return dense;
}

AttributionMap closed_form_solve(const DenseMatrix& p, const AttributionMap& am, double gamma,
                                 std::size_t node_cap) {
    check_gamma(gamma);
    const auto n = static_cast<Eigen::Index>(am.size());
    if (am.size() > node_cap)
        fail(ErrorKind::refused, "dense oracle is capped at " + std::to_string(node_cap) + " nodes (got " +
                                     std::to_string(am.size()) + ")");
    if (p.rows() != n || p.cols() != n)
        fail(ErrorKind::dimension, "dense matrix is " + std::to_string(p.rows()) + "x" + std::to_string(p.cols()) +
                                       ", expected " + std::to_string(n) + "x" + std::to_string(n));

    const DenseMatrix system = DenseMatrix::Identity(n, n) - gamma * p;
    const Eigen::PartialPivLU<DenseMatrix> lu(system);
    const double rcond = lu.rcond();
    if (!(rcond > std::numeric_limits<double>::epsilon()))
        fail(ErrorKind::numerical, "I - gamma*P is numerically singular (rcond " + std::to_string(rcond) + ")");

    const Eigen::Map<const Eigen::VectorXd> rhs(am.values().data(), n);
    const Eigen::VectorXd solution = lu.solve(rhs);
    return AttributionMap(am.shape(), std::vector<double>(solution.data(), solution.data() + n));
}

IpropRun run_iprop(std::span<const std::uint8_t> image_bytes, const AttributionMap& base_am,
                   const PropagationConfig& cfg) {
    const auto start = Clock::now();
    const RgbImage image = decode_image(image_bytes);
    const Seconds decode_time = Clock::now() - start;
    IpropRun run = run_iprop(image, base_am, cfg);
    run.diagnostics.timings.decode = decode_time;
    return run;
}

IpropRun run_iprop(const RgbImage& image, const AttributionMap& base_am, const PropagationConfig& cfg) {
    cfg.validate();
    if (image.shape() != base_am.shape())
        fail(ErrorKind::argument, "attribution map is " + to_string(base_am.shape()) + " but the image is " +
                                      to_string(image.shape()));

    PipelineDiagnostics diagnostics;
    diagnostics.threads = thread_cap();
    diagnostics.nodes = image.size();

    auto t0 = Clock::now();
    const LabImage lab = rgb_to_lab(image);
    auto t1 = Clock::now();
    diagnostics.timings.lab = t1 - t0;

    std::optional<SparseStochasticMatrix> transition;
    {
        const WeightedPixelGraph graph = build_weighted_graph(lab, cfg.k);
        auto t2 = Clock::now();
        diagnostics.timings.graph_build = t2 - t1;
        transition.emplace(build_transition(graph));
        diagnostics.timings.transition_build = Clock::now() - t2;
    }
    diagnostics.nonzeros = transition->nnz();

    PropagationResult result = value_iterate(*transition, base_am, cfg);
    diagnostics.timings.iterate = result.wall_time;
    diagnostics.matvec_count = cfg.gamma == 0.0 ? 0 : result.iterations;
    return IpropRun{std::move(result), diagnostics};
}

}  // namespace iprop
