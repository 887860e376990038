#include "stylefp/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "stylefp/augment.hpp"

namespace stylefp {

using ordered_json = nlohmann::ordered_json;

void ScoreSet::validate() const {
    if (positive_scores.empty() || negative_scores.empty()) {
        throw SpecError("score set needs at least one score in each class");
    }
    for (double s : positive_scores) {
        if (!std::isfinite(s)) throw NumericError("non-finite positive score");
    }
    for (double s : negative_scores) {
        if (!std::isfinite(s)) throw NumericError("non-finite negative score");
    }
}

double roc_auc(const ScoreSet& scores) {
    scores.validate();
    std::vector<double> pos = scores.positive_scores;
    std::vector<double> neg = scores.negative_scores;
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());

    // merge-count wins and ties as exact integers
    std::uint64_t wins = 0, ties = 0;
    std::size_t below = 0, equal = 0;  // negatives strictly below / equal to current positive
    std::size_t j_below = 0, j_equal = 0;
    for (const double p : pos) {
        while (j_below < neg.size() && neg[j_below] < p) ++j_below;
        if (j_equal < j_below) j_equal = j_below;
        while (j_equal < neg.size() && neg[j_equal] <= p) ++j_equal;
        below = j_below;
        equal = j_equal - j_below;
        wins += below;
        ties += equal;
    }
    const std::uint64_t n = pos.size(), m = neg.size();
    return static_cast<double>(2 * wins + ties) / (2.0 * static_cast<double>(n) * static_cast<double>(m));
}

double tpr_at_fpr(const ScoreSet& scores, double fpr_target) {
    scores.validate();
    if (!(fpr_target > 0.0 && fpr_target < 1.0)) {
        throw SpecError("fpr_target must be in (0,1)");
    }
    std::vector<double> neg = scores.negative_scores;
    std::sort(neg.begin(), neg.end(), std::greater<double>());
    const std::size_t m = neg.size();

    // largest number of false positives whose empirical rate stays in budget
    std::size_t k = 0;
    while (k < m && static_cast<double>(k + 1) / static_cast<double>(m) <= fpr_target) ++k;
    if (k >= m) return 1.0;

    // admissible thresholds sit strictly above the (k+1)-th largest negative
    const double bound = neg[k];
    std::size_t tp = 0;
    for (double p : scores.positive_scores) {
        if (p > bound) ++tp;
    }
    return static_cast<double>(tp) / static_cast<double>(scores.positive_scores.size());
}

namespace {

EvalSetting score_setting(const std::string& name,
                          const std::vector<std::pair<ImageTensor, Label>>& images,
                          const std::function<ImageTensor(const ImageTensor&)>& transform,
                          const ExtractorParams& extractor, const VerifierParams& verifier,
                          double fpr_target) {
    ScoreSet scores;
    for (const auto& [image, label] : images) {
        const ImageTensor transformed = transform ? transform(image) : image;
        const StyleFingerprint fp = extract_fingerprint(transformed, extractor);
        const double d = distance(project_embed(fp, verifier), verifier.center);
        (label == Label::positive ? scores.positive_scores : scores.negative_scores).push_back(-d);
    }
    EvalSetting s;
    s.name = name;
    s.status = "ok";
    s.auc = roc_auc(scores);
    s.tpr = tpr_at_fpr(scores, fpr_target);
    s.n_pos = static_cast<int>(scores.positive_scores.size());
    s.n_neg = static_cast<int>(scores.negative_scores.size());
    return s;
}

}  // namespace

std::vector<EvalSetting> robustness_battery(const std::vector<std::pair<ImageTensor, Label>>& test_images,
                                            const RobustnessSpec& spec, const ExtractorParams& extractor,
                                            const VerifierParams& verifier, double fpr_target) {
    if (!verifier.radius) {
        throw ConfigError("robustness battery requires a calibrated verifier");
    }
    if (spec.gaussian_blur_kernel != 3) {
        throw ConfigError("gaussian_blur_kernel: only the 3x3 kernel is supported");
    }
    std::vector<EvalSetting> out;
    out.push_back(score_setting("clean", test_images, nullptr, extractor, verifier, fpr_target));
    out.push_back(score_setting(
        "rotation", test_images,
        [&](const ImageTensor& img) { return rotate_degrees(img, spec.rotation_degrees); }, extractor,
        verifier, fpr_target));
    out.push_back(score_setting(
        "jpeg_q" + std::to_string(spec.jpeg_quality), test_images,
        [&](const ImageTensor& img) { return jpeg_roundtrip(img, spec.jpeg_quality); }, extractor, verifier,
        fpr_target));
    out.push_back(score_setting(
        "blur_3x3", test_images, [&](const ImageTensor& img) { return gaussian_blur_3x3(img); }, extractor,
        verifier, fpr_target));
    out.push_back(score_setting(
        "hue_jitter", test_images,
        [&](const ImageTensor& img) { return hue_shift(img, spec.color_jitter_hue); }, extractor, verifier,
        fpr_target));
    out.push_back(score_setting(
        "contrast", test_images,
        [&](const ImageTensor& img) { return adjust_contrast(img, spec.contrast_factor); }, extractor,
        verifier, fpr_target));
    if (spec.finetune_second_stage) {
        EvalSetting s;
        s.name = "finetune_second_stage";
        s.status = "skipped: provider unavailable";
        out.push_back(s);
    }
    if (spec.prompt_attack) {
        EvalSetting s;
        s.name = "prompt_attack";
        s.status = "skipped: provider unavailable";
        out.push_back(s);
    }
    return out;
}

namespace {

ordered_json robustness_to_json(const RobustnessSpec& r) {
    ordered_json j;
    j["rotation_degrees"] = r.rotation_degrees;
    j["jpeg_quality"] = r.jpeg_quality;
    j["gaussian_blur_kernel"] = r.gaussian_blur_kernel;
    j["color_jitter_hue"] = r.color_jitter_hue;
    j["contrast_factor"] = r.contrast_factor;
    j["finetune_second_stage"] = r.finetune_second_stage;
    j["prompt_attack"] = r.prompt_attack;
    return j;
}

RobustnessSpec robustness_from_json(const ordered_json& j) {
    RobustnessSpec r;
    r.rotation_degrees = j.at("rotation_degrees").get<double>();
    r.jpeg_quality = j.at("jpeg_quality").get<int>();
    r.gaussian_blur_kernel = j.at("gaussian_blur_kernel").get<int>();
    r.color_jitter_hue = j.at("color_jitter_hue").get<double>();
    r.contrast_factor = j.at("contrast_factor").get<double>();
    r.finetune_second_stage = j.at("finetune_second_stage").get<bool>();
    r.prompt_attack = j.at("prompt_attack").get<bool>();
    return r;
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
    if (report.settings.empty()) {
        throw SpecError("refusing to emit an empty report");
    }
    ordered_json j;
    j["schema_version"] = report.schema_version;
    j["fpr_target"] = report.fpr_target;
    j["robustness_params"] = robustness_to_json(report.robustness);
    j["settings"] = ordered_json::array();
    for (const auto& s : report.settings) {
        ordered_json js;
        js["name"] = s.name;
        js["status"] = s.status;
        if (s.status == "ok") {
            js["auc"] = s.auc;
            js["tpr_at_fpr"] = s.tpr;
            js["n_pos"] = s.n_pos;
            js["n_neg"] = s.n_neg;
        }
        j["settings"].push_back(std::move(js));
    }
    if (report.calibration) {
        ordered_json jc;
        jc["radius"] = report.calibration->radius;
        jc["criterion"] = report.calibration->criterion;
        jc["grid"] = report.calibration->grid;
        jc["objective_per_candidate"] = report.calibration->objective_per_candidate;
        j["calibration"] = std::move(jc);
    } else {
        j["calibration"] = nullptr;
    }
    return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("report: ") + e.what());
    }
    EvalReport report;
    report.schema_version = j.at("schema_version").get<int>();
    if (report.schema_version != 1) {
        throw ConfigError("unsupported report schema version");
    }
    report.fpr_target = j.at("fpr_target").get<double>();
    report.robustness = robustness_from_json(j.at("robustness_params"));
    for (const auto& js : j.at("settings")) {
        EvalSetting s;
        s.name = js.at("name").get<std::string>();
        s.status = js.at("status").get<std::string>();
        if (s.status == "ok") {
            s.auc = js.at("auc").get<double>();
            s.tpr = js.at("tpr_at_fpr").get<double>();
            s.n_pos = js.at("n_pos").get<int>();
            s.n_neg = js.at("n_neg").get<int>();
        }
        report.settings.push_back(std::move(s));
    }
    if (!j.at("calibration").is_null()) {
        CalibrationResult c;
        const auto& jc = j.at("calibration");
        c.radius = jc.at("radius").get<double>();
        c.criterion = jc.at("criterion").get<std::string>();
        c.grid = jc.at("grid").get<std::vector<double>>();
        c.objective_per_candidate = jc.at("objective_per_candidate").get<std::vector<double>>();
        report.calibration = std::move(c);
    }
    return report;
}

std::string report_summary_table(const EvalReport& report) {
    if (report.settings.empty()) {
        throw SpecError("refusing to emit an empty report");
    }
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof(line), "fpr_target = %.4g\n", report.fpr_target);
    out << line;
    std::snprintf(line, sizeof(line), "%-24s %10s %14s   %s\n", "setting", "AUC", "TPR@FPR", "status");
    out << line;
    out << "----------------------------------------------------------------\n";
    for (const auto& s : report.settings) {
        if (s.status == "ok") {
            std::snprintf(line, sizeof(line), "%-24s %10.4f %14.4f   %s\n", s.name.c_str(), s.auc, s.tpr,
                          s.status.c_str());
        } else {
            std::snprintf(line, sizeof(line), "%-24s %10s %14s   %s\n", s.name.c_str(), "-", "-",
                          s.status.c_str());
        }
        out << line;
    }
    return out.str();
}

void emit_report(const EvalReport& report, const std::string& results_json_path,
                 const std::string& summary_text_path) {
    const std::string json_text = report_to_json(report);
    const std::string table = report_summary_table(report);
    std::ofstream jf(results_json_path, std::ios::binary | std::ios::trunc);
    if (!jf) throw IoError("cannot write results file '" + results_json_path + "'");
    jf << json_text;
    std::ofstream tf(summary_text_path, std::ios::binary | std::ios::trunc);
    if (!tf) throw IoError("cannot write summary file '" + summary_text_path + "'");
    tf << table;
}

}  // namespace stylefp
