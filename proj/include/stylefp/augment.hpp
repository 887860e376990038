#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "stylefp/datamodel.hpp"

namespace stylefp {

// Produces the textual description used as an image's intrinsic semantics.
// Implementations must be deterministic for a fixed image and internal seed,
// and must never return an empty caption for a valid image.
class CaptionProvider {
public:
    virtual ~CaptionProvider() = default;
    virtual std::string name() const = 0;
    virtual std::string describe(const ImageTensor& image) = 0;
};

// Regenerates an image from a style reference plus a caption. Identical
// (style_ref, caption, seed) triples must yield identical output.
class ReconstructionProvider {
public:
    virtual ~ReconstructionProvider() = default;
    virtual std::string name() const = 0;
    virtual ImageTensor reconstruct(const ImageTensor& style_ref, const std::string& caption,
                                    std::uint64_t seed) = 0;
};

// Offline reference stubs. The generative captioner / style-transfer models
// are external adapters behind the same interfaces; everything in the test
// suite runs on these.
std::unique_ptr<CaptionProvider> make_caption_provider(const std::string& name);
std::unique_ptr<ReconstructionProvider> make_reconstruction_provider(const std::string& name,
                                                                     double noise_sigma = 0.05);

struct TraditionalAugConfig {
    double flip_prob = 0.5;
    int jpeg_quality = 90;          // [1, 100]
    double gaussian_noise_sigma = 0.01;
    double color_jitter_hue = 0.05;  // [0, 0.5], fraction of the hue circle
    std::uint64_t seed = 0;

    void validate() const;
};

struct AugmentationRecord {
    std::string caption;
    std::uint64_t seed = 0;
    std::string caption_provider;
    std::string reconstruction_provider;
};

// --- operations ---

std::string caption(const ImageTensor& image, CaptionProvider& provider);

// k images, seeds base_seed..base_seed+k-1. 1 <= k <= 8.
std::vector<std::pair<ImageTensor, AugmentationRecord>> self_reconstruct(const ImageTensor& image,
                                                                         CaptionProvider& caption_provider,
                                                                         ReconstructionProvider& recon_provider,
                                                                         int k, std::uint64_t base_seed);

// flip -> hue jitter -> gaussian noise -> JPEG round-trip, each gated or
// parameterized by one seeded generator.
ImageTensor traditional_augment(const ImageTensor& image, const TraditionalAugConfig& config);

// --- raster transforms (shared with the robustness battery) ---

ImageTensor flip_horizontal(const ImageTensor& image);
// delta is a fraction of the hue circle, wrap-around
ImageTensor hue_shift(const ImageTensor& image, double delta);
ImageTensor add_gaussian_noise(const ImageTensor& image, double sigma, Rng& rng);
// real encode/decode cycle at the given quality
ImageTensor jpeg_roundtrip(const ImageTensor& image, int quality);
ImageTensor rotate_degrees(const ImageTensor& image, double degrees);
ImageTensor gaussian_blur_3x3(const ImageTensor& image);
// factor 1 is identity; blends against the mean luminance like common
// photo-editing contrast controls
ImageTensor adjust_contrast(const ImageTensor& image, double factor);

}  // namespace stylefp
