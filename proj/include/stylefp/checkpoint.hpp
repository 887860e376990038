#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stylefp/extractor.hpp"
#include "stylefp/verifier.hpp"

namespace stylefp {

// Versioned single-file training record: extractor + verifier parameters,
// train config, optimizer state, loss history, and the calibration result.
// A checkpoint without a radius is uncalibrated and refuses verification.
struct Checkpoint {
    static constexpr int kFormatVersion = 1;

    std::string target_artist_id;
    ExtractorParams extractor;
    VerifierParams verifier;
    TrainConfig train_config;
    int epochs_completed = 0;
    std::vector<EpochStats> history;
    std::optional<CalibrationResult> calibration;
    nn::AdamW optimizer;

    bool calibrated() const { return verifier.radius.has_value(); }
};

void save_checkpoint(Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace stylefp
