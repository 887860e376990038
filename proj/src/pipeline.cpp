#include "stylefp/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "stylefp/image_io.hpp"

namespace stylefp {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

void reject_unknown(const ordered_json& obj, const std::set<std::string>& allowed, const std::string& ctx) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw ConfigError(ctx + ": unknown key '" + it.key() + "'");
        }
    }
}

std::string resolve_path(const fs::path& base, const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    return (base / p).lexically_normal().string();
}

// timestamps live only in this sidecar log; every other artifact must be
// byte-stable across identical runs
void sidecar_log(const PipelineConfig& config, const std::string& command, const std::string& message) {
    try {
        const fs::path dir = fs::path(config.output_dir) / "logs";
        fs::create_directories(dir);
        std::ofstream log(dir / (command + ".log"), std::ios::app);
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char stamp[64];
        std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%S", std::gmtime(&now));
        log << stamp << "Z " << message << "\n";
    } catch (...) {
        // logging must never take a command down
    }
}

}  // namespace

PipelineConfig PipelineConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    ordered_json j;
    try {
        j = ordered_json::parse(ss.str());
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    const fs::path base = fs::absolute(fs::path(path)).parent_path();

    reject_unknown(j,
                   {"manifest", "output_dir", "seed", "providers", "augment", "extractor", "verifier",
                    "train", "calibration", "robustness"},
                   path);

    PipelineConfig c;
    if (!j.contains("manifest")) throw ConfigError(path + ": missing key 'manifest'");
    if (!j.contains("output_dir")) throw ConfigError(path + ": missing key 'output_dir'");
    if (!j.contains("seed")) throw ConfigError(path + ": missing key 'seed' (unseeded runs are not allowed)");
    c.manifest_path = resolve_path(base, j.at("manifest").get<std::string>());
    c.output_dir = resolve_path(base, j.at("output_dir").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();

    if (j.contains("providers")) {
        const auto& jp = j["providers"];
        reject_unknown(jp, {"caption", "reconstruction", "noise_sigma"}, "providers");
        c.providers.caption = jp.value("caption", c.providers.caption);
        c.providers.reconstruction = jp.value("reconstruction", c.providers.reconstruction);
        c.providers.noise_sigma = jp.value("noise_sigma", c.providers.noise_sigma);
    }

    if (j.contains("augment")) {
        const auto& ja = j["augment"];
        reject_unknown(ja, {"k_per_positive", "apply_traditional", "traditional_per_positive", "traditional"},
                       "augment");
        c.augment.k_per_positive = ja.value("k_per_positive", c.augment.k_per_positive);
        c.augment.apply_traditional = ja.value("apply_traditional", c.augment.apply_traditional);
        c.augment.traditional_per_positive =
            ja.value("traditional_per_positive", c.augment.traditional_per_positive);
        if (ja.contains("traditional")) {
            const auto& jt = ja["traditional"];
            reject_unknown(jt, {"flip_prob", "jpeg_quality", "gaussian_noise_sigma", "color_jitter_hue"},
                           "augment.traditional");
            c.augment.traditional.flip_prob = jt.value("flip_prob", c.augment.traditional.flip_prob);
            c.augment.traditional.jpeg_quality = jt.value("jpeg_quality", c.augment.traditional.jpeg_quality);
            c.augment.traditional.gaussian_noise_sigma =
                jt.value("gaussian_noise_sigma", c.augment.traditional.gaussian_noise_sigma);
            c.augment.traditional.color_jitter_hue =
                jt.value("color_jitter_hue", c.augment.traditional.color_jitter_hue);
        }
        if (c.augment.k_per_positive < 0 || c.augment.k_per_positive > 8) {
            throw ConfigError("augment.k_per_positive must be in [0,8] (0 samples from {1,2,3})");
        }
        if (c.augment.traditional_per_positive < 0 || c.augment.traditional_per_positive > 8) {
            throw ConfigError("augment.traditional_per_positive must be in [0,8]");
        }
        c.augment.traditional.validate();
    }

    if (j.contains("extractor")) {
        const auto& je = j["extractor"];
        reject_unknown(je,
                       {"architecture", "taps", "weights", "input_size", "normalization", "embed_dim",
                        "attn_hidden_dim", "trainable"},
                       "extractor");
        c.backbone.architecture = je.value("architecture", c.backbone.architecture);
        if (je.contains("taps")) {
            const auto& jt = je["taps"];
            reject_unknown(jt, {"low", "mid", "high"}, "extractor.taps");
            c.backbone.tap_low = jt.value("low", c.backbone.tap_low);
            c.backbone.tap_mid = jt.value("mid", c.backbone.tap_mid);
            c.backbone.tap_high = jt.value("high", c.backbone.tap_high);
        }
        if (je.contains("weights")) {
            const std::string w = je["weights"].get<std::string>();
            c.backbone.weights_source = w.rfind("random(", 0) == 0 ? w : resolve_path(base, w);
        }
        c.backbone.input_size = je.value("input_size", c.backbone.input_size);
        if (je.contains("normalization")) {
            const auto& jn = je["normalization"];
            reject_unknown(jn, {"mean", "std"}, "extractor.normalization");
            if (jn.contains("mean")) c.backbone.norm_mean = jn["mean"].get<std::array<double, 3>>();
            if (jn.contains("std")) c.backbone.norm_std = jn["std"].get<std::array<double, 3>>();
        }
        c.embed_dim = je.value("embed_dim", c.embed_dim);
        c.attn_hidden_dim = je.value("attn_hidden_dim", c.attn_hidden_dim);
        if (je.contains("trainable")) {
            const auto groups = je["trainable"].get<std::vector<std::string>>();
            c.trainable = std::set<std::string>(groups.begin(), groups.end());
            for (const auto& g : c.trainable) {
                if (!kExtractorGroups.count(g)) {
                    throw ConfigError("extractor.trainable: unknown group '" + g + "'");
                }
            }
        }
        c.backbone.validate();
    }

    if (j.contains("verifier")) {
        const auto& jv = j["verifier"];
        reject_unknown(jv, {"projection_dim"}, "verifier");
        c.projection_dim = jv.value("projection_dim", c.projection_dim);
        if (c.projection_dim <= 0) throw ConfigError("verifier.projection_dim must be positive");
    }

    if (j.contains("train")) {
        const auto& jt = j["train"];
        reject_unknown(jt,
                       {"learning_rate", "optimizer", "epochs", "batch_size", "lambda_pos", "lambda_neg",
                        "beta", "margin", "epsilon", "weight_decay", "adam_epsilon", "weighted_sampling", "deterministic",
                        "lr_schedule", "center_learning_rate"},
                       "train");
        c.train.learning_rate = jt.value("learning_rate", c.train.learning_rate);
        c.train.optimizer = jt.value("optimizer", c.train.optimizer);
        c.train.epochs = jt.value("epochs", c.train.epochs);
        c.train.batch_size = jt.value("batch_size", c.train.batch_size);
        c.train.lambda_pos = jt.value("lambda_pos", c.train.lambda_pos);
        c.train.lambda_neg = jt.value("lambda_neg", c.train.lambda_neg);
        c.train.beta = jt.value("beta", c.train.beta);
        c.train.margin = jt.value("margin", c.train.margin);
        c.train.epsilon = jt.value("epsilon", c.train.epsilon);
        c.train.weight_decay = jt.value("weight_decay", c.train.weight_decay);
        c.train.adam_epsilon = jt.value("adam_epsilon", c.train.adam_epsilon);
        c.train.weighted_sampling = jt.value("weighted_sampling", c.train.weighted_sampling);
        c.train.deterministic = jt.value("deterministic", c.train.deterministic);
        c.train.lr_schedule = jt.value("lr_schedule", c.train.lr_schedule);
        c.train.center_learning_rate = jt.value("center_learning_rate", c.train.center_learning_rate);
    }
    c.train.seed = c.seed;
    c.train.validate();

    if (j.contains("calibration")) {
        const auto& jc = j["calibration"];
        reject_unknown(jc, {"grid_size", "criterion", "fpr_target"}, "calibration");
        c.calibration.size = jc.value("grid_size", c.calibration.size);
        c.calibration.criterion = jc.value("criterion", c.calibration.criterion);
        c.calibration.fpr_target = jc.value("fpr_target", c.calibration.fpr_target);
    }

    if (j.contains("robustness")) {
        const auto& jr = j["robustness"];
        reject_unknown(jr,
                       {"rotation_degrees", "jpeg_quality", "gaussian_blur_kernel", "color_jitter_hue",
                        "contrast_factor", "finetune_second_stage", "prompt_attack"},
                       "robustness");
        c.robustness.rotation_degrees = jr.value("rotation_degrees", c.robustness.rotation_degrees);
        c.robustness.jpeg_quality = jr.value("jpeg_quality", c.robustness.jpeg_quality);
        c.robustness.gaussian_blur_kernel = jr.value("gaussian_blur_kernel", c.robustness.gaussian_blur_kernel);
        c.robustness.color_jitter_hue = jr.value("color_jitter_hue", c.robustness.color_jitter_hue);
        c.robustness.contrast_factor = jr.value("contrast_factor", c.robustness.contrast_factor);
        c.robustness.finetune_second_stage =
            jr.value("finetune_second_stage", c.robustness.finetune_second_stage);
        c.robustness.prompt_attack = jr.value("prompt_attack", c.robustness.prompt_attack);
    }

    // referenced inputs must exist at load time
    if (!fs::exists(c.manifest_path)) {
        throw ConfigError("manifest path '" + c.manifest_path + "' does not exist");
    }
    resolve_backbone_weights_path(c.backbone.weights_source);
    return c;
}

std::string PipelineConfig::artist_dir(const std::string& artist_id) const {
    return (fs::path(output_dir) / artist_id).string();
}

std::string PipelineConfig::default_checkpoint_path(const std::string& artist_id) const {
    return (fs::path(artist_dir(artist_id)) / "checkpoint.sfc").string();
}

namespace {

void require_valid_manifest(const DatasetManifest& manifest) {
    const auto violations = validate_manifest(manifest);
    if (!violations.empty()) {
        std::string msg = "manifest is invalid:";
        for (std::size_t i = 0; i < violations.size() && i < 5; ++i) {
            msg += "\n  [" + violations[i].rule + "] " + violations[i].message;
        }
        if (violations.size() > 5) msg += "\n  ... and " + std::to_string(violations.size() - 5) + " more";
        throw ConfigError(msg);
    }
}

std::string aug_path_for(const std::string& parent_path, int index) {
    const fs::path p(parent_path);
    fs::path out = p.parent_path() / (p.stem().string() + ".aug" + std::to_string(index) + ".png");
    return out.generic_string();
}

class ManifestImageSource final : public ImageSource {
public:
    explicit ManifestImageSource(std::string manifest_dir) : dir_(std::move(manifest_dir)) {}

    ImageTensor load(const ManifestEntry& entry) override {
        auto it = cache_.find(entry.id);
        if (it != cache_.end()) return it->second;
        ImageTensor img = load_image(resolve_path(dir_, entry.path));
        cache_.emplace(entry.id, img);
        return img;
    }

private:
    fs::path dir_;
    std::unordered_map<std::string, ImageTensor> cache_;
};

}  // namespace

AugmentOutcome cli_augment(const PipelineConfig& config, bool keep_going) {
    DatasetManifest manifest = load_manifest(config.manifest_path);
    require_valid_manifest(manifest);

    const fs::path manifest_dir = fs::absolute(fs::path(config.manifest_path)).parent_path();
    auto caption_provider = make_caption_provider(config.providers.caption);
    auto recon_provider =
        make_reconstruction_provider(config.providers.reconstruction, config.providers.noise_sigma);

    // originals to augment: train-split positives, in manifest order
    std::vector<const ManifestEntry*> parents;
    for (const auto& e : manifest.entries) {
        if (e.origin == Origin::original && e.split == Split::train && e.label == Label::positive) {
            parents.push_back(&e);
        }
    }
    if (parents.empty()) {
        throw ConfigError("manifest has no original train-split positives to augment");
    }

    // derived entries are owned by this command: regenerate them from scratch
    DatasetManifest out;
    out.version = manifest.version;
    out.target_artist_id = manifest.target_artist_id;
    for (const auto& e : manifest.entries) {
        if (e.origin == Origin::original) out.entries.push_back(e);
    }

    AugmentOutcome outcome;
    std::vector<ManifestEntry> derived;
    for (const ManifestEntry* parent : parents) {
        try {
            const ImageTensor image = load_image(resolve_path(manifest_dir, parent->path));
            int k = config.augment.k_per_positive;
            if (k == 0) {
                Rng krng(derive_seed(config.seed, "aug-k:" + parent->id));
                k = 1 + static_cast<int>(krng.uniform_int(3));
            }
            const std::uint64_t base_seed = derive_seed(config.seed, "self-recon:" + parent->id);
            auto results = self_reconstruct(image, *caption_provider, *recon_provider, k, base_seed);

            int index = 0;
            for (const auto& [aug_image, record] : results) {
                const std::string rel = aug_path_for(parent->path, index);
                save_image(aug_image, resolve_path(manifest_dir, rel));
                ManifestEntry e;
                e.id = parent->id + ".aug" + std::to_string(index);
                e.path = rel;
                e.label = parent->label;
                e.artist_id = parent->artist_id;
                e.split = parent->split;
                e.origin = Origin::self_reconstructed;
                e.parent_id = parent->id;
                e.seed = static_cast<std::int64_t>(record.seed);
                derived.push_back(std::move(e));
                ++index;
            }
            if (config.augment.apply_traditional) {
                for (int t = 0; t < config.augment.traditional_per_positive; ++t, ++index) {
                    TraditionalAugConfig tcfg = config.augment.traditional;
                    tcfg.seed = derive_seed(config.seed, "trad-aug:" + parent->id,
                                            static_cast<std::uint64_t>(t));
                    const ImageTensor aug_image = traditional_augment(image, tcfg);
                    const std::string rel = aug_path_for(parent->path, index);
                    save_image(aug_image, resolve_path(manifest_dir, rel));
                    ManifestEntry e;
                    e.id = parent->id + ".aug" + std::to_string(index);
                    e.path = rel;
                    e.label = parent->label;
                    e.artist_id = parent->artist_id;
                    e.split = parent->split;
                    e.origin = Origin::traditional_aug;
                    e.parent_id = parent->id;
                    e.seed = static_cast<std::int64_t>(tcfg.seed);
                    derived.push_back(std::move(e));
                }
            }
        } catch (const Error& e) {
            ++outcome.failures;
            std::cerr << "augment: " << parent->id << ": " << e.what() << "\n";
            if (!keep_going) throw;
        }
    }

    out.entries.insert(out.entries.end(), derived.begin(), derived.end());
    require_valid_manifest(out);
    save_manifest(out, config.manifest_path);
    outcome.entries_added = static_cast<int>(derived.size());
    outcome.manifest_path = config.manifest_path;
    sidecar_log(config, "augment",
                "added " + std::to_string(outcome.entries_added) + " entries, " +
                    std::to_string(outcome.failures) + " failures");
    return outcome;
}

std::string cli_train(const PipelineConfig& config, bool resume, const std::string& checkpoint_override,
                      std::ostream* progress) {
    DatasetManifest manifest = load_manifest(config.manifest_path);
    require_valid_manifest(manifest);

    const std::string artist = manifest.target_artist_id;
    const std::string ckpt_path =
        checkpoint_override.empty() ? config.default_checkpoint_path(artist) : checkpoint_override;
    fs::create_directories(fs::path(ckpt_path).parent_path());

    Checkpoint ckpt;
    int start_epoch = 0;
    if (resume) {
        ckpt = load_checkpoint(ckpt_path);
        if (ckpt.target_artist_id != artist) {
            throw ConfigError("checkpoint belongs to artist '" + ckpt.target_artist_id +
                              "', manifest targets '" + artist + "'");
        }
        start_epoch = ckpt.epochs_completed;
        ckpt.train_config.epochs = config.train.epochs;
        if (start_epoch >= config.train.epochs) {
            if (progress) {
                *progress << "checkpoint already has " << start_epoch << " epochs; nothing to do\n";
            }
            return ckpt_path;
        }
    } else {
        ckpt.target_artist_id = artist;
        ckpt.extractor = ExtractorParams::create(config.backbone, config.embed_dim, config.attn_hidden_dim,
                                                 derive_seed(config.seed, "extractor-head"));
        ckpt.extractor.trainable = config.trainable;
        ckpt.verifier = VerifierParams::create(config.embed_dim, config.projection_dim,
                                               derive_seed(config.seed, "verifier"), config.train);
        ckpt.train_config = config.train;
    }

    ManifestImageSource images(fs::absolute(fs::path(config.manifest_path)).parent_path().string());
    const EpochCallback on_epoch = [&](int epoch, const EpochStats& s) {
        if (progress) {
            char line[160];
            std::snprintf(line, sizeof(line),
                          "epoch %3d/%d  total %.6f  pos %.6f  neg %.6f  d+ %.4f  d- %.4f", epoch + 1,
                          config.train.epochs, s.total, s.pos, s.neg, s.mean_pos_distance,
                          s.mean_neg_distance);
            *progress << line << "\n";
        }
    };

    TrainResult result = train(manifest, ckpt.extractor, ckpt.verifier, ckpt.train_config, images,
                               ckpt.optimizer, start_epoch, on_epoch);
    ckpt.history.insert(ckpt.history.end(), result.history.begin(), result.history.end());
    ckpt.epochs_completed = config.train.epochs;
    // further training invalidates any previously calibrated radius
    ckpt.verifier.radius.reset();
    ckpt.calibration.reset();
    save_checkpoint(ckpt, ckpt_path);
    sidecar_log(config, "train",
                "trained to epoch " + std::to_string(ckpt.epochs_completed) + " -> " + ckpt_path);
    return ckpt_path;
}

double cli_calibrate(const PipelineConfig& config, const std::string& checkpoint_override) {
    DatasetManifest manifest = load_manifest(config.manifest_path);
    require_valid_manifest(manifest);
    const std::string ckpt_path = checkpoint_override.empty()
                                      ? config.default_checkpoint_path(manifest.target_artist_id)
                                      : checkpoint_override;
    Checkpoint ckpt = load_checkpoint(ckpt_path);

    ManifestImageSource images(fs::absolute(fs::path(config.manifest_path)).parent_path().string());
    std::vector<StyleFingerprint> fps;
    std::vector<Label> labels;
    for (const auto& e : manifest.entries) {
        if (e.split != Split::val) continue;
        fps.push_back(extract_fingerprint(images.load(e), ckpt.extractor, e.id));
        labels.push_back(e.label);
    }
    bool has_pos = false, has_neg = false;
    for (Label l : labels) (l == Label::positive ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) {
        throw ConfigError(std::string("val split is missing the ") + (has_pos ? "negative" : "positive") +
                          " class; cannot calibrate");
    }

    const CalibrationResult result = calibrate_radius(fps, labels, ckpt.verifier, config.calibration);
    ckpt.verifier.radius = result.radius;
    ckpt.calibration = result;
    save_checkpoint(ckpt, ckpt_path);
    sidecar_log(config, "calibrate", "radius " + std::to_string(result.radius) + " -> " + ckpt_path);
    return result.radius;
}

int cli_verify(const PipelineConfig& config, const std::string& input_path, std::ostream& out,
               const std::string& checkpoint_override) {
    DatasetManifest manifest = load_manifest(config.manifest_path);
    const std::string ckpt_path = checkpoint_override.empty()
                                      ? config.default_checkpoint_path(manifest.target_artist_id)
                                      : checkpoint_override;
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    if (!ckpt.calibrated()) {
        out << "error: checkpoint '" << ckpt_path << "' is uncalibrated; run `stylefp calibrate` first\n";
        return 1;
    }

    std::vector<std::string> files;
    if (fs::is_directory(input_path)) {
        for (const auto& entry : fs::directory_iterator(input_path)) {
            if (entry.is_regular_file() && is_supported_image_file(entry.path().string())) {
                files.push_back(entry.path().string());
            }
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) {
            out << "error: no supported image files in directory '" << input_path << "'\n";
            return 1;
        }
    } else {
        files.push_back(input_path);
    }

    bool any_error = false, any_outside = false;
    for (const auto& file : files) {
        try {
            const ImageTensor image = load_image(file);
            const Verdict v = verify(image, ckpt.extractor, ckpt.verifier, fs::path(file).stem().string());
            char line[256];
            std::snprintf(line, sizeof(line), "%s  d=%.6f  R=%.6f  %s  margin=%.6f", v.image_id.c_str(),
                          v.distance, v.radius, v.inside ? "INSIDE" : "OUTSIDE", v.boundary_margin);
            out << line << "\n";
            any_outside = any_outside || !v.inside;
        } catch (const Error& e) {
            out << "error: " << file << ": " << e.what() << "\n";
            any_error = true;
        }
    }
    return any_error ? 1 : (any_outside ? 2 : 0);
}

std::string cli_evaluate(const PipelineConfig& config, bool run_robustness,
                         const std::string& checkpoint_override) {
    DatasetManifest manifest = load_manifest(config.manifest_path);
    require_valid_manifest(manifest);
    const std::string artist = manifest.target_artist_id;
    const std::string ckpt_path =
        checkpoint_override.empty() ? config.default_checkpoint_path(artist) : checkpoint_override;
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    if (!ckpt.calibrated()) {
        throw ConfigError("checkpoint is uncalibrated; run `stylefp calibrate` before evaluate");
    }

    ManifestImageSource images(fs::absolute(fs::path(config.manifest_path)).parent_path().string());
    std::vector<std::pair<ImageTensor, Label>> test_images;
    for (const auto& e : manifest.entries) {
        if (e.split != Split::test) continue;
        test_images.emplace_back(images.load(e), e.label);
    }
    if (test_images.empty()) throw ConfigError("manifest has no test split");

    EvalReport report;
    report.fpr_target = config.calibration.fpr_target;
    report.robustness = config.robustness;
    report.calibration = ckpt.calibration;
    if (run_robustness) {
        report.settings = robustness_battery(test_images, config.robustness, ckpt.extractor, ckpt.verifier,
                                             config.calibration.fpr_target);
    } else {
        ScoreSet scores;
        for (const auto& [image, label] : test_images) {
            const StyleFingerprint fp = extract_fingerprint(image, ckpt.extractor);
            const double d = distance(project_embed(fp, ckpt.verifier), ckpt.verifier.center);
            (label == Label::positive ? scores.positive_scores : scores.negative_scores).push_back(-d);
        }
        EvalSetting clean;
        clean.name = "clean";
        clean.status = "ok";
        clean.auc = roc_auc(scores);
        clean.tpr = tpr_at_fpr(scores, config.calibration.fpr_target);
        clean.n_pos = static_cast<int>(scores.positive_scores.size());
        clean.n_neg = static_cast<int>(scores.negative_scores.size());
        report.settings.push_back(clean);
    }

    const fs::path report_dir = fs::path(config.artist_dir(artist)) / "reports";
    fs::create_directories(report_dir);
    const std::string results_path = (report_dir / "results.json").string();
    emit_report(report, results_path, (report_dir / "summary.txt").string());
    sidecar_log(config, "evaluate", "report -> " + results_path);
    return results_path;
}

}  // namespace stylefp
