#include <iostream>

#include <CLI11.hpp>

#include "stylefp/synth.hpp"

// Generates the two procedural texture families (a warm-palette target artist
// and a cool-palette counterexample pool) with a manifest, for demos and CI.
int main(int argc, char** argv) {
    CLI::App app{"synthetic two-artist dataset generator"};

    stylefp::SynthDatasetSpec spec;
    app.add_option("--out", spec.directory, "output dataset directory")->required();
    app.add_option("--size", spec.image_size, "image side length");
    app.add_option("--per-family", spec.per_family, "images per family");
    app.add_option("--train", spec.train_per_family, "train images per family");
    app.add_option("--val", spec.val_per_family, "val images per family");
    app.add_option("--test", spec.test_per_family, "test images per family");
    app.add_option("--seed", spec.seed, "generation seed");

    CLI11_PARSE(app, argc, argv);

    try {
        const auto manifest = stylefp::generate_synth_dataset(spec);
        std::cout << "wrote " << manifest.entries.size() << " images under " << spec.directory << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
