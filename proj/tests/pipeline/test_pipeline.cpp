#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "../support/oracles.hpp"
#include "stylefp/image_io.hpp"
#include "stylefp/pipeline.hpp"
#include "stylefp/synth.hpp"

using namespace stylefp;
namespace fs = std::filesystem;

namespace {

struct Fixture {
    fs::path root;
    fs::path dataset_dir;
    fs::path config_path;

    static Fixture& instance() {
        static Fixture f = make();
        return f;
    }

    static Fixture make() {
        Fixture f;
        f.root = fs::temp_directory_path() / "stylefp_pipeline_tests";
        fs::remove_all(f.root);
        fs::create_directories(f.root);
        f.dataset_dir = f.root / "dataset";

        SynthDatasetSpec spec;
        spec.directory = f.dataset_dir.string();
        spec.image_size = 32;
        spec.per_family = 16;
        spec.train_per_family = 10;
        spec.val_per_family = 3;
        spec.test_per_family = 3;
        spec.seed = 2024;
        generate_synth_dataset(spec);

        f.config_path = f.root / "config.json";
        write_config(f.config_path, f.dataset_dir / "manifest.json", f.root / "out", 10);
        return f;
    }

    static void write_config(const fs::path& path, const fs::path& manifest, const fs::path& out_dir,
                             int epochs, std::uint64_t seed = 7) {
        nlohmann::ordered_json j;
        j["manifest"] = manifest.string();
        j["output_dir"] = out_dir.string();
        j["seed"] = seed;
        j["providers"] = {{"reconstruction", "noise"}, {"noise_sigma", 0.04}};
        j["augment"] = {{"k_per_positive", 2}};
        j["extractor"] = {{"architecture", "vgg19_tiny"},
                          {"weights", "random(13)"},
                          {"input_size", 32},
                          {"embed_dim", 64},
                          {"attn_hidden_dim", 32}};
        j["verifier"] = {{"projection_dim", 32}};
        j["train"] = {{"epochs", epochs}, {"batch_size", 16}, {"learning_rate", 0.005}};
        std::ofstream f(path);
        f << j.dump(2);
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int count_lines(const std::string& s, const std::string& needle) {
    int n = 0;
    std::istringstream in(s);
    std::string line;
    while (std::getline(in, line)) {
        if (line.find(needle) != std::string::npos) ++n;
    }
    return n;
}

}  // namespace

TEST_CASE("augment adds k entries per train positive and is idempotent") {
    Fixture& f = Fixture::instance();
    const PipelineConfig config = PipelineConfig::load(f.config_path.string());

    const AugmentOutcome first = cli_augment(config);
    CHECK(first.entries_added == 10 * 2);  // 10 train positives, k=2
    CHECK(first.failures == 0);

    const DatasetManifest manifest = load_manifest(config.manifest_path);
    int self_recon = 0;
    for (const auto& e : manifest.entries) {
        if (e.origin != Origin::self_reconstructed) continue;
        ++self_recon;
        REQUIRE(e.parent_id.has_value());
        const ManifestEntry* parent = manifest.find(*e.parent_id);
        REQUIRE(parent != nullptr);
        CHECK(parent->label == Label::positive);
        CHECK(parent->split == Split::train);
        CHECK(e.label == parent->label);
        CHECK(e.artist_id == parent->artist_id);
        CHECK(e.split == parent->split);
        CHECK(fs::exists(fs::path(f.dataset_dir) / e.path));
    }
    CHECK(self_recon == 20);
    CHECK(validate_manifest(manifest).empty());

    const std::string before = slurp(config.manifest_path);
    cli_augment(config);
    CHECK(slurp(config.manifest_path) == before);
}

TEST_CASE("train writes a checkpoint with one history row per epoch and supports resume") {
    Fixture& f = Fixture::instance();
    const PipelineConfig config = PipelineConfig::load(f.config_path.string());

    std::ostringstream progress;
    const std::string ckpt_path = cli_train(config, false, "", &progress);
    CHECK(fs::exists(ckpt_path));
    CHECK(count_lines(progress.str(), "epoch") == 10);

    Checkpoint ckpt = load_checkpoint(ckpt_path);
    CHECK(ckpt.epochs_completed == 10);
    CHECK(ckpt.history.size() == 10);
    CHECK_FALSE(ckpt.calibrated());
    CHECK(ckpt.target_artist_id == "artist_warm");

    // resume onward to 12 epochs: history grows, counter continues
    Fixture::write_config(f.config_path, f.dataset_dir / "manifest.json", f.root / "out", 12);
    const PipelineConfig longer = PipelineConfig::load(f.config_path.string());
    const std::string ckpt2 = cli_train(longer, true, "", nullptr);
    CHECK(ckpt2 == ckpt_path);
    Checkpoint resumed = load_checkpoint(ckpt_path);
    CHECK(resumed.epochs_completed == 12);
    CHECK(resumed.history.size() == 12);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(resumed.history[i].total == ckpt.history[i].total);
    }

    // resuming when the target is already reached is a no-op
    const std::string ckpt3 = cli_train(longer, true, "", nullptr);
    CHECK(load_checkpoint(ckpt3).epochs_completed == 12);
}

TEST_CASE("calibrate stores a radius between the classes and is deterministic") {
    Fixture& f = Fixture::instance();
    const PipelineConfig config = PipelineConfig::load(f.config_path.string());

    const double radius = cli_calibrate(config);
    const std::string ckpt_path = config.default_checkpoint_path("artist_warm");
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    REQUIRE(ckpt.calibrated());
    CHECK(*ckpt.verifier.radius == radius);
    REQUIRE(ckpt.calibration.has_value());
    CHECK(ckpt.calibration->criterion == "tpr_at_fpr");

    // recompute val distances and place the radius against them
    const DatasetManifest manifest = load_manifest(config.manifest_path);
    std::vector<double> pos_d, neg_d;
    for (const auto& e : manifest.entries) {
        if (e.split != Split::val) continue;
        const ImageTensor img = load_image((f.dataset_dir / e.path).string());
        const StyleFingerprint fp = extract_fingerprint(img, ckpt.extractor, e.id);
        const double d = distance(project_embed(fp, ckpt.verifier), ckpt.verifier.center);
        (e.label == Label::positive ? pos_d : neg_d).push_back(d);
    }
    const double max_pos = *std::max_element(pos_d.begin(), pos_d.end());
    const double min_neg = *std::min_element(neg_d.begin(), neg_d.end());
    REQUIRE(max_pos < min_neg);  // fixture separates at this scale
    CHECK(radius >= max_pos);
    CHECK(radius < min_neg);

    const std::string bytes_before = slurp(ckpt_path);
    cli_calibrate(config);
    CHECK(slurp(ckpt_path) == bytes_before);
}

TEST_CASE("verify prints verdict lines with the documented exit codes") {
    Fixture& f = Fixture::instance();
    const PipelineConfig config = PipelineConfig::load(f.config_path.string());

    // single positive test image
    std::ostringstream out1;
    const int code1 = cli_verify(config, (f.dataset_dir / "images/warm_013.png").string(), out1);
    CHECK(code1 == 0);
    CHECK(out1.str().find("INSIDE") != std::string::npos);

    // directory with one positive and one negative
    const fs::path mixed = f.root / "mixed";
    fs::create_directories(mixed);
    fs::copy_file(f.dataset_dir / "images/warm_015.png", mixed / "a_pos.png",
                  fs::copy_options::overwrite_existing);
    fs::copy_file(f.dataset_dir / "images/cool_014.png", mixed / "b_neg.png",
                  fs::copy_options::overwrite_existing);
    std::ostringstream out2;
    const int code2 = cli_verify(config, mixed.string(), out2);
    CHECK(code2 == 2);
    CHECK(count_lines(out2.str(), "INSIDE") == 1);
    CHECK(count_lines(out2.str(), "OUTSIDE") == 1);

    // unreadable image file
    const fs::path junk = f.root / "junk.png";
    std::ofstream(junk) << "not an image";
    std::ostringstream out3;
    CHECK(cli_verify(config, junk.string(), out3) == 1);
    CHECK(out3.str().find("error") != std::string::npos);
}

TEST_CASE("evaluate emits a report whose AUC matches the brute-force oracle") {
    Fixture& f = Fixture::instance();
    const PipelineConfig config = PipelineConfig::load(f.config_path.string());

    const std::string results_path = cli_evaluate(config, false);
    const EvalReport report = report_from_json(slurp(results_path));
    REQUIRE(report.settings.size() == 1);
    CHECK(report.settings[0].name == "clean");
    CHECK(report.settings[0].auc >= 0.0);
    CHECK(report.settings[0].auc <= 1.0);
    CHECK(report.settings[0].tpr >= 0.0);
    CHECK(report.settings[0].tpr <= 1.0);
    CHECK(report.settings[0].n_pos == 3);
    CHECK(report.settings[0].n_neg == 3);
    REQUIRE(report.calibration.has_value());

    // oracle cross-check on independently recomputed scores
    const std::string ckpt_path = config.default_checkpoint_path("artist_warm");
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const DatasetManifest manifest = load_manifest(config.manifest_path);
    std::vector<double> pos_scores, neg_scores;
    for (const auto& e : manifest.entries) {
        if (e.split != Split::test) continue;
        const ImageTensor img = load_image((f.dataset_dir / e.path).string());
        const StyleFingerprint fp = extract_fingerprint(img, ckpt.extractor, e.id);
        const double d = distance(project_embed(fp, ckpt.verifier), ckpt.verifier.center);
        (e.label == Label::positive ? pos_scores : neg_scores).push_back(-d);
    }
    CHECK(report.settings[0].auc == oracles::auc_pairwise(pos_scores, neg_scores));

    const std::string with_battery = cli_evaluate(config, true);
    const EvalReport full = report_from_json(slurp(with_battery));
    REQUIRE(full.settings.size() >= 6);
    CHECK(full.settings[0].name == "clean");
    bool saw_jpeg = false, saw_blur = false, saw_hue = false, saw_rotation = false, saw_contrast = false;
    for (const auto& s : full.settings) {
        saw_jpeg = saw_jpeg || s.name == "jpeg_q50";
        saw_blur = saw_blur || s.name == "blur_3x3";
        saw_hue = saw_hue || s.name == "hue_jitter";
        saw_rotation = saw_rotation || s.name == "rotation";
        saw_contrast = saw_contrast || s.name == "contrast";
    }
    CHECK(saw_jpeg);
    CHECK(saw_blur);
    CHECK(saw_hue);
    CHECK(saw_rotation);
    CHECK(saw_contrast);
    CHECK(fs::exists(fs::path(results_path).parent_path() / "summary.txt"));
}

TEST_CASE("train and calibrate are byte-deterministic across runs") {
    Fixture& f = Fixture::instance();
    std::string bytes[2];
    for (int run = 0; run < 2; ++run) {
        const fs::path cfg = f.root / ("det_config_" + std::to_string(run) + ".json");
        const fs::path out = f.root / ("det_out_" + std::to_string(run));
        Fixture::write_config(cfg, f.dataset_dir / "manifest.json", out, 3);
        const PipelineConfig config = PipelineConfig::load(cfg.string());
        const std::string ckpt = cli_train(config, false, "", nullptr);
        cli_calibrate(config);
        bytes[run] = slurp(ckpt);
    }
    CHECK(bytes[0].size() > 0);
    CHECK(bytes[0] == bytes[1]);
}

TEST_CASE("augment refuses a manifest without train positives before touching providers") {
    Fixture& f = Fixture::instance();
    const fs::path dir = f.root / "no_pos";
    fs::create_directories(dir / "images");

    DatasetManifest m;
    m.target_artist_id = "artist_warm";
    ManifestEntry e;
    e.id = "n0";
    e.path = "images/n0.png";
    e.label = Label::negative;
    e.artist_id = "artist_cool";
    e.split = Split::train;
    m.entries.push_back(e);
    save_image(synth_texture(cool_family(), 32, 1), (dir / "images/n0.png").string());
    save_manifest(m, (dir / "manifest.json").string());

    const fs::path cfg = dir / "config.json";
    Fixture::write_config(cfg, dir / "manifest.json", dir / "out", 2);
    const PipelineConfig config = PipelineConfig::load(cfg.string());
    CHECK_THROWS_AS(cli_augment(config), ConfigError);
    // validation failed first: no augmented image was written
    int files = 0;
    for (const auto& p : fs::directory_iterator(dir / "images")) {
        (void)p;
        ++files;
    }
    CHECK(files == 1);
}

TEST_CASE("missing backbone weights file fails at config load") {
    Fixture& f = Fixture::instance();
    const fs::path cfg = f.root / "bad_weights.json";
    nlohmann::ordered_json j;
    j["manifest"] = (f.dataset_dir / "manifest.json").string();
    j["output_dir"] = (f.root / "out_bad").string();
    j["seed"] = 1;
    j["extractor"] = {{"architecture", "vgg19_tiny"}, {"weights", "no_such_weights.sfbw"}, {"input_size", 32}};
    std::ofstream(cfg) << j.dump(2);
    CHECK_THROWS_AS(PipelineConfig::load(cfg.string()), IoError);
}

TEST_CASE("weights cache directory is honored for relative paths") {
    Fixture& f = Fixture::instance();
    const fs::path cache = f.root / "weights_cache";
    fs::create_directories(cache);

    BackboneSpec spec;
    spec.architecture = "vgg19_tiny";
    spec.weights_source = "random(3)";
    spec.input_size = 32;
    ExtractorParams params = ExtractorParams::create(spec, 16, 8, 4);
    save_backbone_weights(params, (cache / "tiny.sfbw").string());

    setenv("STYLEFP_WEIGHTS_DIR", cache.string().c_str(), 1);
    BackboneSpec from_cache = spec;
    from_cache.weights_source = "tiny.sfbw";
    const ExtractorParams loaded = ExtractorParams::create(from_cache, 16, 8, 4);
    unsetenv("STYLEFP_WEIGHTS_DIR");
    CHECK(loaded.backbone[0].weight == params.backbone[0].weight);
    CHECK(loaded.backbone.back().bias == params.backbone.back().bias);
}

TEST_CASE("uncalibrated checkpoint refuses verification with exit 1") {
    Fixture& f = Fixture::instance();
    const fs::path cfg = f.root / "uncal_config.json";
    const fs::path out = f.root / "uncal_out";
    Fixture::write_config(cfg, f.dataset_dir / "manifest.json", out, 1);
    const PipelineConfig config = PipelineConfig::load(cfg.string());
    cli_train(config, false, "", nullptr);

    std::ostringstream os;
    const int code = cli_verify(config, (f.dataset_dir / "images/warm_014.png").string(), os);
    CHECK(code == 1);
    CHECK(os.str().find("calibrate") != std::string::npos);

    CHECK_THROWS_AS(cli_evaluate(config, false), ConfigError);
}

TEST_CASE("calibrate refuses a single-class validation split") {
    Fixture& f = Fixture::instance();
    const fs::path dir = f.root / "one_class_val";
    fs::create_directories(dir);

    DatasetManifest manifest = load_manifest((f.dataset_dir / "manifest.json").string());
    for (auto& e : manifest.entries) {
        if (e.split == Split::val && e.label == Label::negative) e.split = Split::test;
        e.path = (f.dataset_dir / e.path).string();
    }
    save_manifest(manifest, (dir / "manifest.json").string());

    const fs::path cfg = dir / "config.json";
    Fixture::write_config(cfg, dir / "manifest.json", dir / "out", 1);
    const PipelineConfig config = PipelineConfig::load(cfg.string());
    cli_train(config, false, "", nullptr);
    try {
        cli_calibrate(config);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("val split") != std::string::npos);
    }
}

TEST_CASE("checkpoint format version mismatch is refused") {
    Fixture& f = Fixture::instance();
    const fs::path good = f.root / "out" / "artist_warm" / "checkpoint.sfc";
    REQUIRE(fs::exists(good));
    std::ifstream in(good, std::ios::binary);
    auto j = nlohmann::json::from_cbor(in);
    j["format_version"] = 99;
    const auto bytes = nlohmann::json::to_cbor(j);
    const fs::path bad = f.root / "bad_version.sfc";
    std::ofstream(bad, std::ios::binary)
        .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    try {
        load_checkpoint(bad.string());
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
}

TEST_CASE("invalid manifest blocks training before any disk writes") {
    Fixture& f = Fixture::instance();
    const fs::path dir = f.root / "invalid_manifest";
    fs::create_directories(dir);

    DatasetManifest manifest = load_manifest((f.dataset_dir / "manifest.json").string());
    for (auto& e : manifest.entries) e.path = (f.dataset_dir / e.path).string();
    manifest.entries.push_back(manifest.entries.front());  // duplicate id
    save_manifest(manifest, (dir / "manifest.json").string());

    const fs::path cfg = dir / "config.json";
    const fs::path out = dir / "out";
    Fixture::write_config(cfg, dir / "manifest.json", out, 1);
    const PipelineConfig config = PipelineConfig::load(cfg.string());
    CHECK_THROWS_AS(cli_train(config, false, "", nullptr), ConfigError);
    CHECK_FALSE(fs::exists(out / "artist_warm" / "checkpoint.sfc"));
}
