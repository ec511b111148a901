// iprop: refine attribution maps by propagation over a pixel-similarity graph,
// evaluate them, and inspect the artifacts.
//
// Exit codes:
//   0 success
//   1 usage error
//   2 I/O or validation error
//   3 propagation hit --max-iters without converging (output still written)
//   4 predictor/protocol error
//   5 numerical error

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "iprop/attribution.hpp"
#include "iprop/encoding.hpp"
#include "iprop/error.hpp"
#include "iprop/graph.hpp"
#include "iprop/imaging.hpp"
#include "iprop/metrics.hpp"
#include "iprop/predictor.hpp"
#include "iprop/propagate.hpp"
#include "iprop/runtime.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitNotConverged = 3;
constexpr int kExitPredictor = 4;
constexpr int kExitNumerical = 5;

constexpr const char* kVersion = "0.1.0";

class UsageError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

int exit_code_for(iprop::ErrorKind kind) {
    using iprop::ErrorKind;
    switch (kind) {
        case ErrorKind::spawn:
        case ErrorKind::timeout:
        case ErrorKind::protocol:
        case ErrorKind::session_dead:
            return kExitPredictor;
        case ErrorKind::numerical:
        case ErrorKind::structural:
        case ErrorKind::divergence:
            return kExitNumerical;
        default:
            return kExitIo;
    }
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
    char buffer[64];
    const auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, v);
    return std::string(buffer, end);
}

std::string short_double(double v) {
    char buffer[64];
    std::snprintf(buffer, sizeof buffer, "%.10g", v);
    return buffer;
}

std::string digest_of(const std::vector<std::uint8_t>& bytes) { return iprop::sha256_hex(bytes); }

// ---------------------------------------------------------------------------
// propagate

struct PropagateArgs {
    std::string image;
    std::string am;
    std::string out;
    std::optional<int> k;
    double gamma = 0.99;
    double tol = 1e-7;
    std::size_t max_iters = 10000;
    bool oracle = false;
    std::size_t oracle_cap = iprop::kDefaultOracleNodeCap;
    std::string heatmap;
    std::string manifest;
};

int cmd_propagate(const PropagateArgs& args) {
    using Clock = std::chrono::steady_clock;
    const auto t_start = Clock::now();

    const auto image_bytes = iprop::read_file(args.image);
    const auto am_bytes = iprop::read_file(args.am);
    const auto decode_start = Clock::now();
    const iprop::RgbImage image = [&] {
        try {
            return iprop::decode_image(image_bytes);
        } catch (const iprop::Error& e) {
            throw iprop::Error(e.kind(), args.image + ": " + e.what());
        }
    }();
    const iprop::Seconds decode_time = Clock::now() - decode_start;

    const iprop::AttributionMap base = [&] {
        try {
            return iprop::parse_attribution(am_bytes).reduce();
        } catch (const iprop::Error& e) {
            throw iprop::Error(e.kind(), args.am + ": " + e.what());
        }
    }();
    if (base.shape() != image.shape())
        iprop::fail(iprop::ErrorKind::argument, "attribution map " + args.am + " is " + iprop::to_string(base.shape()) +
                                                    " but image " + args.image + " is " +
                                                    iprop::to_string(image.shape()));

    iprop::PropagationConfig cfg;
    cfg.k = args.k.value_or(iprop::default_k(image.shape()));
    cfg.gamma = args.gamma;
    cfg.tol = args.tol;
    cfg.max_iters = args.max_iters;
    try {
        cfg.validate();
    } catch (const iprop::Error& e) {
        throw UsageError(e.what());
    }

    iprop::IpropRun run = iprop::run_iprop(image, base, cfg);
    run.diagnostics.timings.decode = decode_time;
    const iprop::PropagationResult& result = run.result;

    const fs::path out_path(args.out);
    const auto out_bytes = iprop::encode_ipam(result.refined);
    iprop::write_file(out_path, out_bytes);
    if (!args.heatmap.empty()) iprop::export_heatmap(result.refined, args.heatmap);

    ordered_json manifest;
    manifest["tool"] = "iprop";
    manifest["version"] = kVersion;
    manifest["command"] = "propagate";
    manifest["config"] = {{"k", cfg.k},
                          {"k_source", args.k ? "flag" : "default"},
                          {"gamma", cfg.gamma},
                          {"tol", cfg.tol},
                          {"max_iters", cfg.max_iters},
                          {"threads", run.diagnostics.threads}};
    manifest["inputs"] = {{"image", args.image},
                          {"image_sha256", digest_of(image_bytes)},
                          {"am", args.am},
                          {"am_sha256", digest_of(am_bytes)},
                          {"height", image.height()},
                          {"width", image.width()}};
    manifest["outputs"] = {{"am", args.out}, {"am_sha256", digest_of(out_bytes)}};
    if (!args.heatmap.empty()) manifest["outputs"]["heatmap"] = args.heatmap;
    manifest["graph"] = {{"nodes", run.diagnostics.nodes}, {"nonzeros", run.diagnostics.nonzeros}};
    manifest["result"] = {{"iterations", result.iterations},
                          {"matvec_count", run.diagnostics.matvec_count},
                          {"final_mse", result.final_mse},
                          {"converged", result.converged}};

    if (args.oracle) {
        try {
            const auto transition =
                iprop::build_transition(iprop::build_weighted_graph(iprop::rgb_to_lab(image), cfg.k));
            const auto exact =
                iprop::closed_form_solve(iprop::to_dense_matrix(transition, args.oracle_cap), base, cfg.gamma,
                                         args.oracle_cap);
            double deviation = 0.0;
            for (std::size_t i = 0; i < exact.size(); ++i)
                deviation = std::max(deviation, std::abs(exact[i] - result.refined[i]));
            manifest["oracle"] = {{"max_abs_deviation", deviation}};
            std::cout << "oracle max-abs deviation: " << format_double(deviation) << '\n';
        } catch (const iprop::Error& e) {
            if (e.kind() != iprop::ErrorKind::refused) throw;
            manifest["oracle"] = {{"refused", e.what()}};
            std::cerr << "iprop: oracle skipped: " << e.what() << '\n';
        }
    }

    const auto& t = run.diagnostics.timings;
    const double per_iteration =
        result.iterations > 0 ? t.iterate.count() / static_cast<double>(result.iterations) : 0.0;
    manifest["timing"] = {{"decode_s", t.decode.count()},
                          {"lab_s", t.lab.count()},
                          {"graph_build_s", t.graph_build.count()},
                          {"transition_build_s", t.transition_build.count()},
                          {"iterations_s", t.iterate.count()},
                          {"per_iteration_mean_s", per_iteration},
                          {"total_s", iprop::Seconds(Clock::now() - t_start).count()}};

    const fs::path manifest_path = args.manifest.empty() ? fs::path(args.out + ".manifest.json") : fs::path(args.manifest);
    const std::string text = manifest.dump(2) + "\n";
    iprop::write_file(manifest_path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));

    std::cout << "refined " << iprop::to_string(image.shape()) << " map with k=" << cfg.k << " gamma=" << cfg.gamma
              << ": " << result.iterations << " iterations, final MSE " << short_double(result.final_mse)
              << (result.converged ? "" : " (NOT converged)") << '\n';
    std::cout << "wrote " << args.out << " and " << manifest_path.string() << '\n';
    return result.converged ? kExitOk : kExitNotConverged;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    std::string metric;
    std::vector<std::string> ams;
    std::vector<std::string> ams2;
    std::vector<std::string> masks;
    std::vector<std::string> images;
    std::string predictor;
    std::uint32_t class_index = 0;
    std::size_t steps = iprop::kDefaultCurveSteps;
    std::string curves;
};

template <typename T>
const T& paired(const std::vector<T>& items, std::size_t i, const char* flag, std::size_t count) {
    if (items.size() == 1) return items.front();
    if (items.size() != count)
        throw UsageError(std::string(flag) + " must be given once or once per --am (" + std::to_string(count) + ")");
    return items[i];
}

void write_curve(const fs::path& path, const iprop::MetricCurve& curve) {
    std::string text = "fraction,score\n";
    for (std::size_t i = 0; i < curve.fractions.size(); ++i)
        text += format_double(curve.fractions[i]) + "," + format_double(curve.scores[i]) + "\n";
    iprop::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

int cmd_eval(const EvalArgs& args) {
    const std::size_t count = args.ams.size();
    const std::string& metric = args.metric;

    if (metric == "pointing" || metric == "rocauc") {
        if (args.masks.empty()) throw UsageError("--metric " + metric + " requires --mask");
        double total = 0.0;
        for (std::size_t i = 0; i < count; ++i) {
            const auto mask = iprop::load_mask(paired(args.masks, i, "--mask", count));
            const auto am = iprop::load_attribution(args.ams[i], mask.shape());
            if (metric == "pointing") {
                const bool hit = iprop::pointing_game(am, mask);
                total += hit ? 1.0 : 0.0;
                std::cout << args.ams[i] << "," << (hit ? "hit" : "miss") << '\n';
            } else {
                const double auc = iprop::roc_auc(am, mask);
                total += auc;
                std::cout << args.ams[i] << "," << format_double(auc) << '\n';
            }
        }
        std::cout << "mean," << format_double(total / static_cast<double>(count)) << '\n';
        return kExitOk;
    }

    if (metric == "spearman") {
        if (args.ams2.size() != count) throw UsageError("--metric spearman requires one --am2 per --am");
        double total = 0.0;
        for (std::size_t i = 0; i < count; ++i) {
            const auto a = iprop::load_attribution(args.ams[i]);
            const auto b = iprop::load_attribution(args.ams2[i], a.shape());
            const double rho = iprop::spearman_abs(a, b);
            total += rho;
            std::cout << args.ams[i] << "," << format_double(rho) << '\n';
        }
        std::cout << "mean," << format_double(total / static_cast<double>(count)) << '\n';
        return kExitOk;
    }

    // insdel
    if (args.images.empty()) throw UsageError("--metric insdel requires --image");
    if (args.predictor.empty()) throw UsageError("--metric insdel requires --predictor");
    if (args.steps < 2) throw UsageError("--steps must be at least 2");
    if (!args.curves.empty()) fs::create_directories(args.curves);

    auto session = iprop::PredictorSession::open(iprop::split_command(args.predictor));
    double sum_ins = 0.0, sum_del = 0.0, sum_dir = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const auto image = iprop::read_image(paired(args.images, i, "--image", count));
        const auto am = iprop::load_attribution(args.ams[i], image.shape());
        const auto ins = iprop::insertion_curve(image, am, session, args.class_index, args.steps);
        const auto del = iprop::deletion_curve(image, am, session, args.class_index, args.steps);
        const double dir = iprop::deletion_insertion_ratio(ins.auc, del.auc);
        sum_ins += ins.auc;
        sum_del += del.auc;
        sum_dir += dir;
        std::cout << args.ams[i] << ",insertion_auc=" << format_double(ins.auc)
                  << ",deletion_auc=" << format_double(del.auc) << ",dir=" << format_double(dir) << '\n';
        if (!args.curves.empty()) {
            const std::string stem = std::to_string(i) + "_" + fs::path(args.ams[i]).stem().string();
            write_curve(fs::path(args.curves) / (stem + "_insertion.csv"), ins);
            write_curve(fs::path(args.curves) / (stem + "_deletion.csv"), del);
        }
    }
    const double n = static_cast<double>(count);
    std::cout << "mean,insertion_auc=" << format_double(sum_ins / n) << ",deletion_auc=" << format_double(sum_del / n)
              << ",dir=" << format_double(sum_dir / n) << '\n';
    session.close();
    return kExitOk;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeArgs {
    std::string image;
    std::vector<int> kl;
    int ref_k = 50;
    std::vector<std::size_t> rows;
    bool spatial_only = false;
    bool distance_profile = false;
    std::optional<int> k;
    std::vector<std::string> convergence;
    std::string out;
};

int cmd_analyze(const AnalyzeArgs& args) {
    const int modes = (args.kl.empty() ? 0 : 1) + (args.distance_profile ? 1 : 0) + (args.convergence.empty() ? 0 : 1);
    if (modes != 1) throw UsageError("choose exactly one of --kl, --distance-profile, --convergence");

    std::ostringstream csv;
    csv.precision(17);
    if (!args.convergence.empty()) {
        // Aggregates value-iteration timings recorded by `propagate` manifests.
        csv << "manifest,iterations,iterations_s,converged\n";
        std::vector<double> times;
        for (const auto& path : args.convergence) {
            const auto bytes = iprop::read_file(path);
            const auto j = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, false);
            if (j.is_discarded() || !j.contains("timing") || !j.contains("result"))
                iprop::fail(iprop::ErrorKind::format, path + " is not an iprop run manifest");
            const double seconds = j["timing"].value("iterations_s", 0.0);
            times.push_back(seconds);
            csv << path << "," << j["result"].value("iterations", 0) << "," << seconds << ","
                << (j["result"].value("converged", false) ? "true" : "false") << "\n";
        }
        std::sort(times.begin(), times.end());
        double mean = 0.0;
        for (double t : times) mean += t;
        mean /= static_cast<double>(times.size());
        const std::size_t mid = times.size() / 2;
        const double median = times.size() % 2 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
        csv << "# mean_s=" << mean << " median_s=" << median << " max_s=" << times.back() << "\n";
    } else {
        if (args.image.empty()) throw UsageError("--image is required");
        const auto lab = iprop::rgb_to_lab(iprop::read_image(args.image));
        const auto shape = lab.shape();
        if (!args.kl.empty()) {
            if (args.ref_k < 1) throw UsageError("--ref-k must be >= 1");
            for (const int k : args.kl) {
                if (k < 1) throw UsageError("--kl values must be >= 1");
                if (k > args.ref_k)
                    iprop::fail(iprop::ErrorKind::divergence,
                                "k=" + std::to_string(k) + " exceeds the reference k=" + std::to_string(args.ref_k) +
                                    "; its rows put mass where the reference row is zero (KL is infinite)");
            }
            std::vector<std::size_t> rows = args.rows;
            if (rows.empty()) rows.push_back(shape.index(shape.height / 2, shape.width / 2));
            const auto mode = args.spatial_only ? iprop::DistanceMode::spatial_only : iprop::DistanceMode::combined;
            csv << "row,k,kl\n";
            for (const std::size_t row : rows) {
                const auto reference = iprop::transition_row(lab, row, args.ref_k, mode);
                for (const int k : args.kl) {
                    const auto compared = iprop::transition_row(lab, row, k, mode);
                    csv << row << "," << k << "," << iprop::transition_row_kl(compared, reference) << "\n";
                }
            }
        } else {
            const int k = args.k.value_or(iprop::default_k(shape));
            if (k < 1) throw UsageError("--k must be >= 1");
            csv << "d_s,median_d_c\n";
            for (const auto& [spatial, median] : iprop::distance_profile(lab, k))
                csv << spatial << "," << median << "\n";
        }
    }

    const std::string text = csv.str();
    if (args.out.empty()) {
        std::cout << text;
    } else {
        iprop::write_file(args.out, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// inspect

int cmd_inspect(const std::string& path) {
    const auto bytes = iprop::read_file(path);
    if (!bytes.empty() && bytes.front() == '{') {
        const auto j = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, false);
        if (j.is_discarded()) iprop::fail(iprop::ErrorKind::format, path + " is not valid JSON");
        std::cout << "manifest: " << path << '\n';
        if (j.contains("inputs"))
            std::cout << "dimensions: " << j["inputs"].value("height", 0) << "x" << j["inputs"].value("width", 0) << '\n';
        if (j.contains("config")) std::cout << "config: " << j["config"].dump() << '\n';
        if (j.contains("result")) std::cout << "result: " << j["result"].dump() << '\n';
        if (j.contains("oracle")) std::cout << "oracle: " << j["oracle"].dump() << '\n';
        if (j.contains("timing")) std::cout << "timing: " << j["timing"].dump() << '\n';
        return kExitOk;
    }

    const iprop::AttributionFile file = [&] {
        try {
            return iprop::parse_attribution(bytes);
        } catch (const iprop::Error& e) {
            throw iprop::Error(e.kind(), path + ": " + e.what());
        }
    }();
    const iprop::AttributionMap am = file.reduce();
    const std::size_t peak = am.argmax();
    if (file.format == iprop::AttributionFormat::binary) {
        std::cout << "format: IPAM v" << file.version << '\n';
    } else {
        std::cout << "format: CSV\n";
    }
    std::cout << "dimensions: " << iprop::to_string(am.shape()) << '\n'
              << "channels: " << file.channels << '\n'
              << "min: " << format_double(am.min()) << '\n'
              << "max: " << format_double(am.max()) << '\n'
              << "mean: " << format_double(am.mean()) << '\n'
              << "argmax: row " << am.shape().row_of(peak) << ", col " << am.shape().col_of(peak) << " (index " << peak
              << ", value " << format_double(am[peak]) << ")\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"iprop: attribution-map refinement by Markov reward propagation"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    PropagateArgs prop;
    auto* propagate = app.add_subcommand("propagate", "Refine an attribution map over the image's pixel graph");
    propagate->add_option("--image", prop.image, "PNG or JPEG image")->required();
    propagate->add_option("--am", prop.am, "attribution map (IPAM or CSV; 3 channels are summed)")->required();
    propagate->add_option("--out", prop.out, "refined map output (IPAM)")->required();
    propagate->add_option("--k", prop.k, "neighborhood order (default floor(min(H,W)/32), at least 1)");
    propagate->add_option("--gamma", prop.gamma, "discount factor in [0,1)")->capture_default_str();
    propagate->add_option("--tol", prop.tol,
                          "stop when the MSE of consecutive iterates drops below this; MSE is on raw map "
                          "values, so rescaling the map rescales the effective precision")
        ->capture_default_str();
    propagate->add_option("--max-iters", prop.max_iters, "iteration safeguard")->capture_default_str();
    propagate->add_flag("--oracle", prop.oracle, "also solve the dense closed form and report the deviation");
    propagate->add_option("--oracle-cap", prop.oracle_cap, "largest node count the oracle accepts")
        ->capture_default_str();
    propagate->add_option("--heatmap", prop.heatmap, "also write a 16-bit grayscale PNG of the refined map");
    propagate->add_option("--manifest", prop.manifest, "manifest path (default <out>.manifest.json)");

    EvalArgs ev;
    auto* eval = app.add_subcommand("eval", "Evaluate attribution maps");
    eval->add_option("--metric", ev.metric, "metric")
        ->required()
        ->check(CLI::IsMember({"pointing", "rocauc", "insdel", "spearman"}));
    eval->add_option("--am", ev.ams, "attribution map(s)")->required();
    eval->add_option("--am2", ev.ams2, "second map per --am (spearman)");
    eval->add_option("--mask", ev.masks, "annotation PNG(s), nonzero = inside (pointing, rocauc)");
    eval->add_option("--image", ev.images, "image(s) explained by the maps (insdel)");
    eval->add_option("--predictor", ev.predictor, "predictor command line speaking iprop-predict (insdel)");
    eval->add_option("--class-index", ev.class_index, "target class")->capture_default_str();
    eval->add_option("--steps", ev.steps, "curve samples including both endpoints")->capture_default_str();
    eval->add_option("--curves", ev.curves, "directory for fraction,score CSV curves (insdel)");

    AnalyzeArgs an;
    auto* analyze = app.add_subcommand("analyze", "Graph and runtime analyses");
    analyze->add_option("--image", an.image, "PNG or JPEG image");
    analyze->add_option("--kl", an.kl, "neighborhood orders compared against --ref-k")->delimiter(',');
    analyze->add_option("--ref-k", an.ref_k, "reference neighborhood order for --kl")->capture_default_str();
    analyze->add_option("--rows", an.rows, "node indices for --kl (default: center pixel)")->delimiter(',');
    analyze->add_flag("--spatial-only", an.spatial_only, "use only the spatial distance for --kl rows");
    analyze->add_flag("--distance-profile", an.distance_profile, "median d_c per distinct d_s");
    analyze->add_option("--k", an.k, "neighborhood order for --distance-profile");
    analyze->add_option("--convergence", an.convergence, "propagate manifests to aggregate timings from");
    analyze->add_option("--out", an.out, "CSV output path (default stdout)");

    std::string inspect_path;
    auto* inspect = app.add_subcommand("inspect", "Summarize an attribution file or run manifest");
    inspect->add_option("path", inspect_path, "IPAM/CSV map or manifest JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*propagate) return cmd_propagate(prop);
        if (*eval) return cmd_eval(ev);
        if (*analyze) return cmd_analyze(an);
        if (*inspect) return cmd_inspect(inspect_path);
    } catch (const UsageError& e) {
        std::cerr << "iprop: usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const iprop::Error& e) {
        std::cerr << "iprop: " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "iprop: " << e.what() << '\n';
        return kExitIo;
    }
    return kExitUsage;
}
