#pragma once

#include <array>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stylefp/datamodel.hpp"
#include "stylefp/nn.hpp"

namespace stylefp {

// Conv-block layout of the 19-layer backbone family. Variants share the
// block structure and differ only in channel widths, so tap layer names are
// valid across all of them.
struct BackboneLayout {
    std::string architecture;
    std::array<int, 5> convs_per_block{2, 2, 4, 4, 4};
    std::array<int, 5> widths{};

    static BackboneLayout from_architecture(const std::string& tag);

    int num_layers() const;
    std::string layer_name(int index) const;           // conv<block>_<i>
    int layer_index(const std::string& name) const;    // -1 if unknown
    int block_of_layer(int index) const;               // 1-based
    int out_channels_of_layer(int index) const;
    int in_channels_of_layer(int index) const;
};

struct BackboneSpec {
    std::string architecture = "vgg19";
    std::string tap_low = "conv2_2";
    std::string tap_mid = "conv4_4";
    std::string tap_high = "conv5_4";
    // "random(<seed>)" or a weights file path (see checkpoint format)
    std::string weights_source = "random(0)";
    int input_size = 224;
    std::array<double, 3> norm_mean{0.485, 0.456, 0.406};
    std::array<double, 3> norm_std{0.229, 0.224, 0.225};

    const std::string& tap(Level level) const;
    // throws SpecError unless taps exist and are strictly ordered by depth
    void validate() const;
};

inline const std::set<std::string> kExtractorGroups = {
    "backbone_block1", "backbone_block2", "backbone_block3",
    "backbone_block4", "backbone_block5", "level_convs", "projections", "attn"};

struct ExtractorParams {
    BackboneSpec spec;
    std::vector<nn::Conv3x3> backbone;         // in layer order
    std::array<nn::Linear, kNumLevels> level_conv;   // 2C_l -> C_l, linear
    std::array<nn::Linear, kNumLevels> projection;   // C_l -> embed_dim
    nn::Linear attn_hidden;                    // kNumLevels*embed_dim -> hidden, tanh
    nn::Linear attn_out;                       // hidden -> kNumLevels
    int embed_dim = 512;
    int attn_hidden_dim = 256;
    std::set<std::string> trainable = {"backbone_block5", "level_convs", "projections", "attn"};
    std::string version;

    // Builds a fully initialized extractor. Backbone weights come from
    // spec.weights_source (seeded random or file); head weights are seeded
    // from head_seed.
    static ExtractorParams create(const BackboneSpec& spec, int embed_dim, int attn_hidden_dim,
                                  std::uint64_t head_seed);

    // Correctly shaped zero weights, no weight-source access (checkpoint
    // loading fills the arrays afterwards).
    static ExtractorParams create_shaped(const BackboneSpec& spec, int embed_dim, int attn_hidden_dim);

    void validate() const;
    int tap_layer_index(Level level) const;
    int tap_channels(Level level) const;
    BackboneLayout layout() const { return BackboneLayout::from_architecture(spec.architecture); }

    // Stable, named enumeration of parameter arrays (for optimizer/checkpoint).
    std::vector<nn::ParamRef> all_params();
    std::vector<nn::ParamRef> trainable_params();
    void zero_grads();
};

// Standalone backbone weights file (CBOR, versioned). Loading honors the
// $STYLEFP_WEIGHTS_DIR cache directory for relative paths.
void save_backbone_weights(const ExtractorParams& params, const std::string& path);

// Resolves a weights_source: returns "" for random(<seed>) sources, else the
// existing file path (checking $STYLEFP_WEIGHTS_DIR for relative paths);
// throws IoError when the file cannot be found.
std::string resolve_backbone_weights_path(const std::string& source);

// Shorter side scaled to spec.input_size, center crop, per-channel
// normalization; returns the CHW backbone input.
nn::FeatureMap preprocess_image(const ImageTensor& image, const BackboneSpec& spec);

// Bilinear resize in normalized double space (used by preprocess and tests).
ImageTensor resize_bilinear(const ImageTensor& image, int out_height, int out_width);

using TapMaps = std::array<nn::FeatureMap, kNumLevels>;

// --- spec operations ---

// Post-activation feature maps at the three tap layers. Deterministic.
TapMaps tap_features(const ImageTensor& image, const ExtractorParams& params);

// Global avg+max pooling (avg first), level 1x1 convolution, flatten.
LevelEncoding pool_encode(const nn::FeatureMap& map, const nn::Linear& level_conv, Level level,
                          const std::string& source_layer);

// Projections + attention MLP + softmax fusion (Eq. style: alpha = softmax of
// scores, v = sum alpha_i p_i).
StyleFingerprint attention_fuse(const std::array<LevelEncoding, kNumLevels>& encodings,
                                const ExtractorParams& params);

StyleFingerprint extract_fingerprint(const ImageTensor& image, const ExtractorParams& params,
                                     const std::string& image_id = "");

// Generic scored fusion over N >= 1 projected vectors; softmax(scores) and
// the weighted sum. Exposed so degenerate/stubbed fusions are testable.
struct FusedResult {
    nn::Vec alpha;
    nn::Vec v;
};
FusedResult fuse_projected(const std::vector<nn::Vec>& projected, const nn::Vec& scores);

// --- training-time forward/backward ---

// Per-image state whose upstream parameters are frozen: pooled tap vectors
// for taps inside the frozen block prefix, plus the activation map feeding
// the first trainable block. Valid as long as frozen groups stay untouched.
struct FrozenPrefixState {
    std::array<nn::Vec, kNumLevels> pooled;
    std::array<bool, kNumLevels> pooled_valid{false, false, false};
    nn::FeatureMap resume;  // input to the first recorded block
    bool has_resume = false;
};

struct ExtractorTape;  // opaque; defined in extractor.cpp

class ExtractorAutograd {
public:
    explicit ExtractorAutograd(ExtractorParams& params);
    ~ExtractorAutograd();

    int frozen_prefix_blocks() const { return frozen_prefix_; }

    FrozenPrefixState compute_frozen_state(const ImageTensor& image) const;

    // Forward from the frozen state; records intermediates and returns v.
    nn::Vec forward(const FrozenPrefixState& state, ExtractorTape& tape) const;

    // Accumulates parameter gradients for all trainable groups given dL/dv.
    void backward(const FrozenPrefixState& state, const ExtractorTape& tape, const nn::Vec& d_v);

    ExtractorTape* make_tape() const;
    void free_tape(ExtractorTape*) const;

private:
    ExtractorParams& params_;
    int frozen_prefix_ = 0;
};

}  // namespace stylefp
