#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stylefp/datamodel.hpp"
#include "stylefp/extractor.hpp"
#include "stylefp/verifier.hpp"

namespace stylefp {

// Verification scores: score = -distance, so larger means more likely the
// target artist.
struct ScoreSet {
    std::vector<double> positive_scores;
    std::vector<double> negative_scores;

    void validate() const;  // both classes non-empty, all finite
};

// Exact Mann-Whitney AUC: P(pos > neg) + 0.5 P(pos == neg) over all pairs.
double roc_auc(const ScoreSet& scores);

// TPR at the loosest threshold whose empirical FPR stays within fpr_target
// (decision rule: score >= threshold; no interpolation).
double tpr_at_fpr(const ScoreSet& scores, double fpr_target = 1e-2);

struct RobustnessSpec {
    double rotation_degrees = 15.0;
    int jpeg_quality = 50;
    int gaussian_blur_kernel = 3;   // only 3 supported (3x3 kernel)
    double color_jitter_hue = 0.2;  // applied as a deterministic +hue shift
    double contrast_factor = 2.0;
    bool finetune_second_stage = false;
    bool prompt_attack = false;
};

struct EvalSetting {
    std::string name;
    std::string status;  // "ok" or "skipped: <reason>"
    double auc = 0.0;
    double tpr = 0.0;
    int n_pos = 0;
    int n_neg = 0;
};

struct EvalReport {
    int schema_version = 1;
    double fpr_target = 1e-2;
    RobustnessSpec robustness;
    std::vector<EvalSetting> settings;
    std::optional<CalibrationResult> calibration;
};

// Applies each transform of the battery to every test image, re-verifies,
// and reports AUC and TPR@FPR per transform. The "clean" row is the identity
// transform. Provider-dependent attack rows are emitted as skipped.
std::vector<EvalSetting> robustness_battery(const std::vector<std::pair<ImageTensor, Label>>& test_images,
                                            const RobustnessSpec& spec, const ExtractorParams& extractor,
                                            const VerifierParams& verifier, double fpr_target = 1e-2);

// Machine-readable results file plus a fixed-width text summary table.
void emit_report(const EvalReport& report, const std::string& results_json_path,
                 const std::string& summary_text_path);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
std::string report_summary_table(const EvalReport& report);

}  // namespace stylefp
