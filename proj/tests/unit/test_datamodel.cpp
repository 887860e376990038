#include <doctest.h>

#include "stylefp/datamodel.hpp"

using namespace stylefp;

namespace {

ManifestEntry entry(const std::string& id, Label label, const std::string& artist, Split split,
                    Origin origin = Origin::original, const std::string& parent = "") {
    ManifestEntry e;
    e.id = id;
    e.path = "images/" + id + ".png";
    e.label = label;
    e.artist_id = artist;
    e.split = split;
    e.origin = origin;
    if (!parent.empty()) e.parent_id = parent;
    return e;
}

DatasetManifest small_valid_manifest() {
    DatasetManifest m;
    m.version = 1;
    m.target_artist_id = "monet";
    m.entries.push_back(entry("p0", Label::positive, "monet", Split::train));
    m.entries.push_back(entry("n0", Label::negative, "other", Split::train));
    m.entries.push_back(entry("p1", Label::positive, "monet", Split::val));
    m.entries.push_back(entry("n1", Label::negative, "other", Split::test));
    return m;
}

}  // namespace

TEST_CASE("valid manifest has no violations") {
    CHECK(validate_manifest(small_valid_manifest()).empty());
}

TEST_CASE("negative sharing the target artist id is flagged") {
    auto m = small_valid_manifest();
    m.entries.push_back(entry("n2", Label::negative, "monet", Split::train));
    const auto v = validate_manifest(m);
    REQUIRE(v.size() == 1);
    CHECK(v[0].entry_id == "n2");
    CHECK(v[0].rule == "negative-shares-target-artist");
}

TEST_CASE("augmented entry in a different split from its parent is flagged") {
    auto m = small_valid_manifest();
    auto aug = entry("p0.aug0", Label::positive, "monet", Split::val, Origin::self_reconstructed, "p0");
    m.entries.push_back(aug);
    const auto v = validate_manifest(m);
    REQUIRE(v.size() == 1);
    CHECK(v[0].rule == "split-lineage");
    CHECK(v[0].entry_id == "p0.aug0");
}

TEST_CASE("augmented entry must inherit label and artist and reference a real parent") {
    auto m = small_valid_manifest();
    m.entries.push_back(entry("x", Label::negative, "other", Split::train, Origin::traditional_aug, "p0"));
    m.entries.push_back(
        entry("y", Label::positive, "monet", Split::train, Origin::self_reconstructed, "ghost"));
    ManifestEntry no_parent = entry("z", Label::positive, "monet", Split::train, Origin::self_reconstructed);
    m.entries.push_back(no_parent);

    const auto v = validate_manifest(m);
    REQUIRE(v.size() == 4);  // x: label+artist mismatch, y: unknown parent, z: missing parent
    int label_mismatch = 0, artist_mismatch = 0, missing_parent = 0;
    for (const auto& viol : v) {
        if (viol.rule == "augmented-label-mismatch") ++label_mismatch;
        if (viol.rule == "augmented-artist-mismatch") ++artist_mismatch;
        if (viol.rule == "augmented-missing-parent") ++missing_parent;
    }
    CHECK(label_mismatch == 1);
    CHECK(artist_mismatch == 1);
    CHECK(missing_parent == 2);
}

TEST_CASE("train split must contain both classes") {
    DatasetManifest m;
    m.target_artist_id = "monet";
    m.entries.push_back(entry("p0", Label::positive, "monet", Split::train));
    const auto v = validate_manifest(m);
    REQUIRE(v.size() == 1);
    CHECK(v[0].rule == "train-missing-negative");
}

TEST_CASE("duplicate ids are flagged") {
    auto m = small_valid_manifest();
    m.entries.push_back(entry("p0", Label::positive, "monet", Split::train));
    const auto v = validate_manifest(m);
    REQUIRE(v.size() == 1);
    CHECK(v[0].rule == "duplicate-id");
}

TEST_CASE("manifest round-trips through its text form") {
    auto m = small_valid_manifest();
    m.entries.push_back(entry("p0.aug0", Label::positive, "monet", Split::train,
                              Origin::self_reconstructed, "p0"));
    m.entries.back().seed = 42;
    const std::string text = manifest_to_json(m);
    const DatasetManifest parsed = manifest_from_json(text);
    CHECK(parsed == m);
    CHECK(manifest_to_json(parsed) == text);
}

TEST_CASE("unknown manifest keys are rejected") {
    const char* text = R"({"version":1,"target_artist_id":"a","entries":[],"extra":1})";
    CHECK_THROWS_AS(manifest_from_json(text), ConfigError);

    const char* entry_text =
        R"({"version":1,"target_artist_id":"a","entries":[{"id":"x","path":"p","label":"positive",
            "artist_id":"a","split":"train","origin":"original","typo_key":3}]})";
    CHECK_THROWS_AS(manifest_from_json(entry_text), ConfigError);
}

TEST_CASE("malformed manifest text reports position") {
    try {
        manifest_from_json("{\"version\": 1,", "broken.json");
        FAIL("expected a parse error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("broken.json") != std::string::npos);
    }
}

TEST_CASE("verdict enforces the closed-ball rule") {
    const Verdict on_boundary = Verdict::make("img", 2.0, 2.0);
    CHECK(on_boundary.inside);
    CHECK(on_boundary.boundary_margin == 0.0);

    const Verdict inside = Verdict::make("img", 1.0, 2.0);
    CHECK(inside.inside);
    CHECK(inside.boundary_margin == doctest::Approx(1.0));

    const Verdict outside = Verdict::make("img", 3.0, 2.0);
    CHECK_FALSE(outside.inside);
    CHECK(outside.boundary_margin == doctest::Approx(-1.0));

    CHECK_THROWS_AS(Verdict::make("img", -1.0, 2.0), NumericError);
}

TEST_CASE("verdict rule holds across random distance/radius pairs") {
    Rng rng(7);
    for (int i = 0; i < 200; ++i) {
        const double d = rng.uniform(0.0, 10.0);
        const double r = rng.uniform(0.0, 10.0);
        const Verdict v = Verdict::make("x", d, r);
        CHECK(v.inside == (d <= r));
        CHECK(v.boundary_margin == r - d);
    }
}

TEST_CASE("image tensor invariants") {
    ImageTensor img = ImageTensor::filled(4, 5, 0.5);
    CHECK_NOTHROW(img.validate());

    img.pixels[3] = 1.5;
    CHECK_THROWS_AS(img.validate(), SpecError);
    img.pixels[3] = 0.5;

    img.channels = 4;
    CHECK_THROWS_AS(img.validate(), SpecError);
    img.channels = 3;

    img.pixels.pop_back();
    CHECK_THROWS_AS(img.validate(), SpecError);
}

TEST_CASE("fingerprint serialization round-trips") {
    StyleFingerprint fp;
    fp.vector = {0.25, -1.5, 3.0};
    fp.attention = {0.2, 0.3, 0.5};
    fp.extractor_version = "v-test";
    fp.image_id = "img-1";
    const StyleFingerprint back = fingerprint_from_json(fingerprint_to_json(fp));
    CHECK(back.vector == fp.vector);
    CHECK(back.attention == fp.attention);
    CHECK(back.extractor_version == fp.extractor_version);
    CHECK(back.image_id == fp.image_id);
    CHECK_NOTHROW(back.validate(3));
}
