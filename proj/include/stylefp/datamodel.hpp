#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stylefp/common.hpp"

namespace stylefp {

// RGB raster in normalized float form, row-major (H, W, C). The single pixel
// domain every provider, transform, and the extractor consume.
struct ImageTensor {
    int height = 0;
    int width = 0;
    int channels = 3;
    std::vector<double> pixels;

    static ImageTensor filled(int height, int width, double value);
    static ImageTensor zeros(int height, int width) { return filled(height, width, 0.0); }

    double& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    double at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
    std::size_t pixel_count() const { return pixels.size(); }

    // Throws SpecError unless: channels == 3, every value finite in [0,1],
    // and h*w*c matches the buffer length.
    void validate() const;
};

enum class Label { positive, negative };
enum class Split { train, val, test };
enum class Origin { original, self_reconstructed, traditional_aug };

std::string to_string(Label v);
std::string to_string(Split v);
std::string to_string(Origin v);
Label label_from_string(const std::string& s);
Split split_from_string(const std::string& s);
Origin origin_from_string(const std::string& s);

struct ManifestEntry {
    std::string id;
    std::string path;
    Label label = Label::positive;
    std::string artist_id;
    Split split = Split::train;
    Origin origin = Origin::original;
    std::optional<std::string> parent_id;
    std::optional<std::int64_t> seed;

    bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
    int version = 1;
    std::string target_artist_id;
    std::vector<ManifestEntry> entries;

    bool operator==(const DatasetManifest&) const = default;

    const ManifestEntry* find(const std::string& id) const;
};

struct Violation {
    std::string entry_id;  // empty for manifest-level rules
    std::string rule;
    std::string message;
};

// Returns an empty list iff all manifest invariants hold. Total on
// structurally valid input: reports violations, never throws for them.
std::vector<Violation> validate_manifest(const DatasetManifest& manifest);

// Strict structured-text (JSON) manifest format. Unknown keys are rejected.
DatasetManifest manifest_from_json(const std::string& text, const std::string& origin_name = "<string>");
std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& manifest, const std::string& path);

enum class Level { low, mid, high };
inline constexpr int kNumLevels = 3;

std::string to_string(Level level);
Level level_from_string(const std::string& s);

// Pooled, convolved feature vector from one backbone tap.
struct LevelEncoding {
    Level level = Level::low;
    std::vector<double> vector;
    std::string source_layer;
};

// The fused style vector plus the attention weights that produced it.
struct StyleFingerprint {
    std::vector<double> vector;
    std::vector<double> attention;
    std::string extractor_version;
    std::string image_id;

    // attention must be a probability vector (sum 1 within 1e-6, entries >= 0)
    // and vector length must match the declared embedding width.
    void validate(int embed_dim) const;
};

std::string fingerprint_to_json(const StyleFingerprint& fp);
StyleFingerprint fingerprint_from_json(const std::string& text);

// Single-image decision. `inside` uses the closed ball: d == R verifies.
struct Verdict {
    std::string image_id;
    double distance = 0.0;
    double radius = 0.0;
    bool inside = false;
    double boundary_margin = 0.0;

    static Verdict make(std::string image_id, double distance, double radius);
};

}  // namespace stylefp
