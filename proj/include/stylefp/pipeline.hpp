#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "stylefp/augment.hpp"
#include "stylefp/checkpoint.hpp"
#include "stylefp/datamodel.hpp"
#include "stylefp/evalkit.hpp"
#include "stylefp/extractor.hpp"
#include "stylefp/verifier.hpp"

namespace stylefp {

struct ProviderBindings {
    std::string caption = "stub-hash";
    std::string reconstruction = "noise";
    double noise_sigma = 0.05;
};

struct AugmentSettings {
    // 0 means: sample k uniformly from {1,2,3} per positive
    int k_per_positive = 0;
    bool apply_traditional = false;
    int traditional_per_positive = 1;
    TraditionalAugConfig traditional;
};

// One config file drives every command; CLI flags override config keys.
// Relative paths are resolved against the config file's directory.
struct PipelineConfig {
    std::string manifest_path;
    std::string output_dir;
    std::uint64_t seed = 0;
    ProviderBindings providers;
    AugmentSettings augment;
    BackboneSpec backbone;
    int embed_dim = 512;
    int attn_hidden_dim = 256;
    int projection_dim = 256;
    std::set<std::string> trainable = {"backbone_block5", "level_convs", "projections", "attn"};
    TrainConfig train;
    GridSpec calibration;
    RobustnessSpec robustness;

    static PipelineConfig load(const std::string& path);

    std::string artist_dir(const std::string& artist_id) const;
    std::string default_checkpoint_path(const std::string& artist_id) const;
};

struct AugmentOutcome {
    int entries_added = 0;
    int failures = 0;
    std::string manifest_path;
};

// augment: derive self-reconstructed (plus optional traditional) variants for
// every original train-split positive; write images beside the originals and
// rewrite the manifest with provenance entries. Re-runs are byte-identical.
AugmentOutcome cli_augment(const PipelineConfig& config, bool keep_going = false);

// train: joint extractor+verifier training; writes the checkpoint and returns
// its path. With resume=true continues from the stored epoch count.
std::string cli_train(const PipelineConfig& config, bool resume = false,
                      const std::string& checkpoint_override = "", std::ostream* progress = nullptr);

// calibrate: line-search radius on the validation split, stored in the
// checkpoint. Returns the selected radius.
double cli_calibrate(const PipelineConfig& config, const std::string& checkpoint_override = "");

// verify: one verdict line per image; returns the exit code contract
// (0 all inside, 2 any outside, 1 error).
int cli_verify(const PipelineConfig& config, const std::string& input_path, std::ostream& out,
               const std::string& checkpoint_override = "");

// evaluate: clean metrics plus the optional robustness battery; emits the
// report files and returns the results path.
std::string cli_evaluate(const PipelineConfig& config, bool run_robustness = false,
                         const std::string& checkpoint_override = "");

}  // namespace stylefp
