#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <optional>

#include "iprop/attribution.hpp"
#include "iprop/error.hpp"
#include "iprop/graph.hpp"
#include "iprop/imaging.hpp"
#include "iprop/metrics.hpp"
#include "iprop/predictor.hpp"
#include "iprop/propagate.hpp"

namespace py = pybind11;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

iprop::RgbImage to_image(const ByteArray& array) {
    if (array.ndim() != 3 || array.shape(2) != 3)
        throw iprop::Error(iprop::ErrorKind::dimension, "image must be an HxWx3 uint8 array");
    const auto h = static_cast<std::size_t>(array.shape(0)), w = static_cast<std::size_t>(array.shape(1));
    std::vector<iprop::Rgb> pixels(h * w);
    const std::uint8_t* src = array.data();
    for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = {src[3 * i], src[3 * i + 1], src[3 * i + 2]};
    return iprop::RgbImage(h, w, std::move(pixels));
}

py::array_t<std::uint8_t> from_image(const iprop::RgbImage& image) {
    py::array_t<std::uint8_t> out({image.height(), image.width(), std::size_t{3}});
    std::uint8_t* dst = out.mutable_data();
    for (const iprop::Rgb& p : image.pixels()) {
        *dst++ = p.r;
        *dst++ = p.g;
        *dst++ = p.b;
    }
    return out;
}

iprop::AttributionMap to_map(const DoubleArray& array) {
    if (array.ndim() != 2) throw iprop::Error(iprop::ErrorKind::dimension, "attribution map must be a 2-D array");
    return iprop::AttributionMap(static_cast<std::size_t>(array.shape(0)), static_cast<std::size_t>(array.shape(1)),
                                 std::vector<double>(array.data(), array.data() + array.size()));
}

py::array_t<double> from_map(const iprop::AttributionMap& am) {
    py::array_t<double> out({am.height(), am.width()});
    std::memcpy(out.mutable_data(), am.values().data(), am.size() * sizeof(double));
    return out;
}

// Nonzero entries are inside.
iprop::AnnotationMask to_mask(const DoubleArray& array) {
    if (array.ndim() != 2) throw iprop::Error(iprop::ErrorKind::dimension, "mask must be a 2-D array");
    std::vector<std::uint8_t> cells(static_cast<std::size_t>(array.size()));
    for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = array.data()[i] != 0.0;
    return iprop::AnnotationMask({static_cast<std::size_t>(array.shape(0)), static_cast<std::size_t>(array.shape(1))},
                                 std::move(cells));
}

iprop::PropagationConfig make_config(std::optional<int> k, iprop::GridShape shape, double gamma, double tol,
                                     std::size_t max_iters) {
    iprop::PropagationConfig cfg;
    cfg.k = k.value_or(iprop::default_k(shape));
    cfg.gamma = gamma;
    cfg.tol = tol;
    cfg.max_iters = max_iters;
    cfg.validate();
    return cfg;
}

// Adapts a Python callable (image array, class index) -> probability.
class CallableScorer final : public iprop::ImageScorer {
public:
    explicit CallableScorer(py::function fn) : fn_(std::move(fn)) {}
    double score(const iprop::RgbImage& image, std::uint32_t class_index) override {
        return fn_(from_image(image), class_index).cast<double>();
    }

private:
    py::function fn_;
};

py::dict curve_dict(const iprop::MetricCurve& curve) {
    py::dict d;
    d["fractions"] = py::array_t<double>(curve.fractions.size(), curve.fractions.data());
    d["scores"] = py::array_t<double>(curve.scores.size(), curve.scores.data());
    d["auc"] = curve.auc;
    return d;
}

template <typename CurveFn>
py::dict run_curve(CurveFn fn, const ByteArray& image, const DoubleArray& am, py::object predictor,
                   std::uint32_t class_index, std::size_t steps) {
    const auto img = to_image(image);
    const auto map = to_map(am);
    if (py::isinstance<iprop::PredictorSession>(predictor))
        return curve_dict(fn(img, map, predictor.cast<iprop::PredictorSession&>(), class_index, steps));
    CallableScorer scorer(predictor.cast<py::function>());
    return curve_dict(fn(img, map, scorer, class_index, steps));
}

iprop::SparseStochasticMatrix matrix_from_csr(const py::array_t<std::int64_t, py::array::forcecast>& indptr,
                                              const py::array_t<std::int64_t, py::array::forcecast>& indices,
                                              const DoubleArray& data) {
    auto pattern = std::make_shared<iprop::CsrPattern>();
    if (indptr.ndim() != 1 || indptr.size() < 2)
        throw iprop::Error(iprop::ErrorKind::dimension, "indptr must be 1-D with at least two entries");
    pattern->rows = static_cast<std::size_t>(indptr.size() - 1);
    for (py::ssize_t i = 0; i < indptr.size(); ++i) pattern->offsets.push_back(static_cast<std::size_t>(indptr.at(i)));
    if (pattern->offsets.back() != static_cast<std::size_t>(indices.size()) || indices.size() != data.size())
        throw iprop::Error(iprop::ErrorKind::dimension, "indptr, indices and data disagree on the number of entries");
    for (py::ssize_t i = 0; i < indices.size(); ++i) {
        const auto col = indices.at(i);
        if (col < 0 || static_cast<std::size_t>(col) >= pattern->rows)
            throw iprop::Error(iprop::ErrorKind::dimension, "column index out of range");
        pattern->columns.push_back(static_cast<std::uint32_t>(col));
    }
    return iprop::SparseStochasticMatrix(pattern, std::vector<double>(data.data(), data.data() + data.size()));
}

}  // namespace

PYBIND11_MODULE(_iprop, m) {
    m.doc() = "Attribution-map refinement by Markov reward propagation over a pixel graph.";

    py::register_exception<iprop::Error>(m, "Error", PyExc_RuntimeError);

    py::class_<iprop::PropagationResult>(m, "PropagationResult")
        .def_property_readonly("refined", [](const iprop::PropagationResult& r) { return from_map(r.refined); })
        .def_readonly("iterations", &iprop::PropagationResult::iterations)
        .def_readonly("final_mse", &iprop::PropagationResult::final_mse)
        .def_readonly("converged", &iprop::PropagationResult::converged)
        .def_property_readonly("wall_time", [](const iprop::PropagationResult& r) { return r.wall_time.count(); })
        .def("__repr__", [](const iprop::PropagationResult& r) {
            return "<PropagationResult iterations=" + std::to_string(r.iterations) +
                   " converged=" + (r.converged ? "True" : "False") + ">";
        });

    m.def("default_k", [](std::size_t h, std::size_t w) { return iprop::default_k({h, w}); }, py::arg("height"),
          py::arg("width"), "floor(min(H, W) / 32), at least 1.");

    m.def("decode_image",
          [](py::bytes data) {
              const std::string_view view = data;
              return from_image(iprop::decode_image(
                  std::span(reinterpret_cast<const std::uint8_t*>(view.data()), view.size())));
          },
          py::arg("data"), "Decode PNG or JPEG bytes to an HxWx3 uint8 array.");

    m.def("rgb_to_lab",
          [](const ByteArray& image) {
              const auto lab = iprop::rgb_to_lab(to_image(image));
              py::array_t<double> out({lab.height(), lab.width(), std::size_t{3}});
              double* dst = out.mutable_data();
              for (const iprop::Lab& p : lab.pixels()) {
                  *dst++ = p.l;
                  *dst++ = p.a;
                  *dst++ = p.b;
              }
              return out;
          },
          py::arg("image"), "sRGB (D65) to CIELAB.");

    m.def("transition_matrix",
          [](const ByteArray& image, std::optional<int> k, bool spatial_only) {
              const auto img = to_image(image);
              const auto mode = spatial_only ? iprop::DistanceMode::spatial_only : iprop::DistanceMode::combined;
              const auto p = iprop::build_transition(
                  iprop::build_weighted_graph(iprop::rgb_to_lab(img), k.value_or(iprop::default_k(img.shape())), mode));
              const auto& pattern = *p.pattern();
              py::array_t<std::int64_t> indptr(pattern.offsets.size());
              std::copy(pattern.offsets.begin(), pattern.offsets.end(), indptr.mutable_data());
              py::array_t<std::int64_t> indices(pattern.columns.size());
              std::copy(pattern.columns.begin(), pattern.columns.end(), indices.mutable_data());
              py::array_t<double> data(p.values().size(), p.values().data());
              return py::make_tuple(indptr, indices, data);
          },
          py::arg("image"), py::arg("k") = py::none(), py::arg("spatial_only") = false,
          "Row-stochastic transition matrix as CSR arrays (indptr, indices, data).");

    m.def("value_iterate",
          [](const py::array_t<std::int64_t, py::array::forcecast>& indptr,
             const py::array_t<std::int64_t, py::array::forcecast>& indices, const DoubleArray& data,
             const DoubleArray& am, double gamma, double tol, std::size_t max_iters) {
              const auto p = matrix_from_csr(indptr, indices, data);
              const auto map = to_map(am);
              iprop::PropagationConfig cfg;
              cfg.gamma = gamma;
              cfg.tol = tol;
              cfg.max_iters = max_iters;
              py::gil_scoped_release release;
              return iprop::value_iterate(p, map, cfg);
          },
          py::arg("indptr"), py::arg("indices"), py::arg("data"), py::arg("am"), py::arg("gamma") = 0.99,
          py::arg("tol") = 1e-7, py::arg("max_iters") = 10000,
          "Iterate V <- AM + gamma * P * V for a CSR transition matrix.");

    m.def("refine",
          [](const ByteArray& image, const DoubleArray& am, std::optional<int> k, double gamma, double tol,
             std::size_t max_iters) {
              const auto img = to_image(image);
              const auto map = to_map(am);
              const auto cfg = make_config(k, img.shape(), gamma, tol, max_iters);
              py::gil_scoped_release release;
              return iprop::run_iprop(img, map, cfg).result;
          },
          py::arg("image"), py::arg("am"), py::arg("k") = py::none(), py::arg("gamma") = 0.99, py::arg("tol") = 1e-7,
          py::arg("max_iters") = 10000, "Refine an attribution map over the image's pixel graph.");

    m.def("closed_form",
          [](const ByteArray& image, const DoubleArray& am, std::optional<int> k, double gamma, std::size_t node_cap) {
              const auto img = to_image(image);
              const auto map = to_map(am);
              const auto cfg = make_config(k, img.shape(), gamma, 1e-7, 1);
              const auto p = iprop::build_transition(iprop::build_weighted_graph(iprop::rgb_to_lab(img), cfg.k));
              return from_map(iprop::closed_form_solve(iprop::to_dense_matrix(p, node_cap), map, gamma, node_cap));
          },
          py::arg("image"), py::arg("am"), py::arg("k") = py::none(), py::arg("gamma") = 0.99,
          py::arg("node_cap") = iprop::kDefaultOracleNodeCap, "Dense solve of (I - gamma P) V = AM (small inputs only).");

    m.def("load_attribution",
          [](const std::filesystem::path& path) { return from_map(iprop::load_attribution(path)); }, py::arg("path"));
    m.def("save_attribution",
          [](const DoubleArray& am, const std::filesystem::path& path, const std::string& format) {
              if (format != "ipam" && format != "csv")
                  throw iprop::Error(iprop::ErrorKind::argument, "format must be 'ipam' or 'csv'");
              iprop::save_attribution(to_map(am), path,
                                      format == "csv" ? iprop::AttributionFormat::csv : iprop::AttributionFormat::binary);
          },
          py::arg("am"), py::arg("path"), py::arg("format") = "ipam");

    m.def("pointing_game",
          [](const DoubleArray& am, const DoubleArray& mask) { return iprop::pointing_game(to_map(am), to_mask(mask)); },
          py::arg("am"), py::arg("mask"));
    m.def("roc_auc", [](const DoubleArray& am, const DoubleArray& mask) { return iprop::roc_auc(to_map(am), to_mask(mask)); },
          py::arg("am"), py::arg("mask"));
    m.def("spearman_abs",
          [](const DoubleArray& a, const DoubleArray& b) { return iprop::spearman_abs(to_map(a), to_map(b)); },
          py::arg("am1"), py::arg("am2"));
    m.def("deletion_insertion_ratio", &iprop::deletion_insertion_ratio, py::arg("insertion_auc"),
          py::arg("deletion_auc"));

    py::class_<iprop::PredictorSession>(m, "Predictor")
        .def(py::init([](const std::vector<std::string>& argv) { return iprop::PredictorSession::open(argv); }),
             py::arg("argv"), "Spawn a predictor speaking the iprop-predict protocol.")
        .def("score",
             [](iprop::PredictorSession& s, const ByteArray& image, std::uint32_t class_index) {
                 return s.score(to_image(image), class_index);
             },
             py::arg("image"), py::arg("class_index") = 0)
        .def_property_readonly("alive", &iprop::PredictorSession::alive)
        .def("close", &iprop::PredictorSession::close)
        .def("__enter__", [](iprop::PredictorSession& s) -> iprop::PredictorSession& { return s; },
             py::return_value_policy::reference)
        .def("__exit__", [](iprop::PredictorSession& s, py::args) { s.close(); });

    m.def("insertion_curve",
          [](const ByteArray& image, const DoubleArray& am, py::object predictor, std::uint32_t class_index,
             std::size_t steps) {
              return run_curve([](auto&&... a) { return iprop::insertion_curve(a...); }, image, am, predictor,
                               class_index, steps);
          },
          py::arg("image"), py::arg("am"), py::arg("predictor"), py::arg("class_index") = 0,
          py::arg("steps") = iprop::kDefaultCurveSteps,
          "predictor is a Predictor or a callable (image, class_index) -> probability.");
    m.def("deletion_curve",
          [](const ByteArray& image, const DoubleArray& am, py::object predictor, std::uint32_t class_index,
             std::size_t steps) {
              return run_curve([](auto&&... a) { return iprop::deletion_curve(a...); }, image, am, predictor,
                               class_index, steps);
          },
          py::arg("image"), py::arg("am"), py::arg("predictor"), py::arg("class_index") = 0,
          py::arg("steps") = iprop::kDefaultCurveSteps);
}
