#include "stylefp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "stylefp/image_io.hpp"

namespace stylefp {

TextureFamily warm_family() {
    TextureFamily f;
    f.name = "warm";
    f.palette = {{{0.72, 0.35, 0.20}, {0.85, 0.65, 0.30}, {0.93, 0.88, 0.76}, {0.45, 0.28, 0.18}}};
    f.orientation_deg = 30.0;
    return f;
}

TextureFamily cool_family() {
    TextureFamily f;
    f.name = "cool";
    f.palette = {{{0.15, 0.25, 0.50}, {0.20, 0.55, 0.55}, {0.80, 0.88, 0.93}, {0.35, 0.30, 0.60}}};
    f.orientation_deg = 120.0;
    return f;
}

ImageTensor synth_texture(const TextureFamily& family, int size, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "texture:" + family.name));
    ImageTensor img = ImageTensor::zeros(size, size);

    // background: smooth wash between two palette colors
    const auto& c0 = family.palette[rng.uniform_int(4)];
    const auto& c1 = family.palette[rng.uniform_int(4)];
    const double fx = rng.uniform(0.5, 2.0) / size;
    const double fy = rng.uniform(0.5, 2.0) / size;
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double t = 0.5 + 0.5 * std::sin(2.0 * M_PI * (fx * x + fy * y) + phase);
            for (int c = 0; c < 3; ++c) {
                img.at(y, x, c) = c0[c] * (1.0 - t) + c1[c] * t;
            }
        }
    }

    // brushstroke-like oriented segments with soft falloff
    const double len = family.stroke_len_frac * size;
    const double width = std::max(0.8, family.stroke_width_frac * size);
    for (int s = 0; s < family.strokes; ++s) {
        const double cx = rng.uniform(0.0, size);
        const double cy = rng.uniform(0.0, size);
        const double theta =
            (family.orientation_deg + rng.normal() * family.orientation_jitter_deg) * M_PI / 180.0;
        const double half = 0.5 * len * rng.uniform(0.5, 1.0);
        const double w = width * rng.uniform(0.6, 1.4);
        const auto& base = family.palette[rng.uniform_int(4)];
        const double value_jitter = rng.uniform(-0.12, 0.12);
        std::array<double, 3> color;
        for (int c = 0; c < 3; ++c) color[c] = std::clamp(base[c] + value_jitter, 0.0, 1.0);
        const double dirx = std::cos(theta), diry = std::sin(theta);

        const int x0 = std::max(0, static_cast<int>(cx - half - w - 1));
        const int x1 = std::min(size - 1, static_cast<int>(cx + half + w + 1));
        const int y0 = std::max(0, static_cast<int>(cy - half - w - 1));
        const int y1 = std::min(size - 1, static_cast<int>(cy + half + w + 1));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double rx = x - cx, ry = y - cy;
                const double along = rx * dirx + ry * diry;
                const double across = -rx * diry + ry * dirx;
                if (std::abs(along) > half) continue;
                const double dist = std::abs(across);
                if (dist > w) continue;
                const double alpha = 0.85 * (1.0 - dist / w);
                for (int c = 0; c < 3; ++c) {
                    img.at(y, x, c) = img.at(y, x, c) * (1.0 - alpha) + color[c] * alpha;
                }
            }
        }
    }

    // light grain
    for (auto& v : img.pixels) {
        v = std::clamp(v + rng.normal() * 0.01, 0.0, 1.0);
    }
    return img;
}

DatasetManifest generate_synth_dataset(const SynthDatasetSpec& spec) {
    namespace fs = std::filesystem;
    if (spec.train_per_family + spec.val_per_family + spec.test_per_family != spec.per_family) {
        throw ConfigError("synth dataset: split sizes must sum to per_family");
    }
    const fs::path dir(spec.directory);
    fs::create_directories(dir / "images");

    DatasetManifest manifest;
    manifest.version = 1;
    manifest.target_artist_id = spec.target_artist_id;

    const TextureFamily families[2] = {warm_family(), cool_family()};
    const char* prefixes[2] = {"warm", "cool"};
    for (int f = 0; f < 2; ++f) {
        const std::string artist = f == 0 ? spec.target_artist_id : "artist_cool";
        for (int i = 0; i < spec.per_family; ++i) {
            char idbuf[64];
            std::snprintf(idbuf, sizeof(idbuf), "%s_%03d", prefixes[f], i);
            const std::string id = idbuf;
            const std::string rel = "images/" + id + ".png";
            const ImageTensor img =
                synth_texture(families[f], spec.image_size,
                              derive_seed(spec.seed, prefixes[f], static_cast<std::uint64_t>(i)));
            save_image(img, (dir / rel).string());

            ManifestEntry e;
            e.id = id;
            e.path = rel;
            e.label = f == 0 ? Label::positive : Label::negative;
            e.artist_id = artist;
            e.origin = Origin::original;
            if (i < spec.train_per_family) {
                e.split = Split::train;
            } else if (i < spec.train_per_family + spec.val_per_family) {
                e.split = Split::val;
            } else {
                e.split = Split::test;
            }
            manifest.entries.push_back(std::move(e));
        }
    }
    save_manifest(manifest, (dir / "manifest.json").string());
    return manifest;
}

}  // namespace stylefp
