// Reference predictor for the iprop-predict protocol. Scores images without a
// model so insertion/deletion metrics can be exercised end to end.

#include <iostream>

#include <CLI11.hpp>

#include "iprop/error.hpp"
#include "iprop/metrics.hpp"
#include "iprop/predictor.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Synthetic predictor speaking the iprop-predict protocol on stdin/stdout"};
    std::string mode = "region-mean";
    std::string region_path;
    double value = 0.5;
    app.add_option("--mode", mode, "region-mean or constant")
        ->check(CLI::IsMember({"region-mean", "constant"}));
    app.add_option("--region", region_path, "PNG mask; nonzero pixels form the scored region");
    app.add_option("--value", value, "probability returned in constant mode")->check(CLI::Range(0.0, 1.0));
    CLI11_PARSE(app, argc, argv);

    try {
        iprop::SyntheticModel model = iprop::SyntheticModel::constant(value);
        if (mode == "region-mean") {
            if (region_path.empty()) {
                std::cerr << "synthetic predictor: --region is required in region-mean mode\n";
                return 2;
            }
            const iprop::AnnotationMask region = iprop::load_mask(region_path);
            model = iprop::SyntheticModel::region_mean(
                region.shape(), std::vector<std::uint8_t>(region.cells().begin(), region.cells().end()));
        }
        return iprop::serve_predictor(model, std::cin, std::cout, std::cerr);
    } catch (const iprop::Error& e) {
        std::cerr << "synthetic predictor: " << e.what() << '\n';
        return 2;
    }
}
