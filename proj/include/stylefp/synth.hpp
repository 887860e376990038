#pragma once

#include <array>
#include <string>

#include "stylefp/datamodel.hpp"

namespace stylefp {

// Procedural stand-in for an artist: a color palette plus brushstroke-like
// oriented noise with a characteristic stroke direction.
struct TextureFamily {
    std::string name;
    std::array<std::array<double, 3>, 4> palette;
    double orientation_deg = 0.0;
    double orientation_jitter_deg = 12.0;
    int strokes = 90;
    double stroke_len_frac = 0.45;
    double stroke_width_frac = 0.02;
};

TextureFamily warm_family();  // rust/ochre palette, strokes around 30 degrees
TextureFamily cool_family();  // blue/teal palette, strokes around 120 degrees

ImageTensor synth_texture(const TextureFamily& family, int size, std::uint64_t seed);

struct SynthDatasetSpec {
    int image_size = 64;
    int per_family = 100;
    int train_per_family = 70;
    int val_per_family = 10;
    int test_per_family = 20;
    std::uint64_t seed = 1234;
    std::string directory;  // images land in <directory>/images
    std::string target_artist_id = "artist_warm";
};

// Writes PNGs plus a manifest (<directory>/manifest.json): warm family as the
// target artist's works, cool family as the negative pool. Returns the
// manifest it wrote.
DatasetManifest generate_synth_dataset(const SynthDatasetSpec& spec);

}  // namespace stylefp
