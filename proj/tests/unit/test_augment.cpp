#include <cmath>

#include <doctest.h>

#include "stylefp/augment.hpp"

using namespace stylefp;

namespace {

ImageTensor checker_image(int size = 32) {
    ImageTensor img = ImageTensor::zeros(size, size);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double v = ((x / 4 + y / 4) % 2 == 0) ? 0.8 : 0.3;
            img.at(y, x, 0) = v;
            img.at(y, x, 1) = 0.5 * v;
            img.at(y, x, 2) = 1.0 - v;
        }
    }
    return img;
}

double max_abs_diff(const ImageTensor& a, const ImageTensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        m = std::max(m, std::abs(a.pixels[i] - b.pixels[i]));
    }
    return m;
}

}  // namespace

TEST_CASE("caption stub is deterministic and content-keyed") {
    auto provider = make_caption_provider("stub-hash");
    const ImageTensor img = checker_image();
    const std::string c1 = caption(img, *provider);
    const std::string c2 = caption(img, *provider);
    CHECK(c1 == c2);
    CHECK(c1.rfind("synthetic scene 0x", 0) == 0);

    ImageTensor other = img;
    other.pixels[0] = 0.1;
    CHECK(caption(other, *provider) != c1);
}

TEST_CASE("caption provider failures carry the provider name") {
    struct Failing final : CaptionProvider {
        std::string name() const override { return "flaky"; }
        std::string describe(const ImageTensor&) override { throw std::runtime_error("backend down"); }
    } failing;
    try {
        caption(checker_image(), failing);
        FAIL("expected ProviderError");
    } catch (const ProviderError& e) {
        CHECK(e.provider() == "flaky");
    }

    struct Empty final : CaptionProvider {
        std::string name() const override { return "empty"; }
        std::string describe(const ImageTensor&) override { return ""; }
    } empty;
    CHECK_THROWS_AS(caption(checker_image(), empty), ProviderError);
}

TEST_CASE("identity reconstruction with k=2 returns two copies with distinct seeds") {
    auto cap = make_caption_provider("stub-hash");
    auto recon = make_reconstruction_provider("identity");
    const ImageTensor img = checker_image();
    const auto out = self_reconstruct(img, *cap, *recon, 2, 100);
    REQUIRE(out.size() == 2);
    CHECK(out[0].first.pixels == img.pixels);
    CHECK(out[1].first.pixels == img.pixels);
    CHECK(out[0].second.seed == 100);
    CHECK(out[1].second.seed == 101);
    CHECK(out[0].second.caption == out[1].second.caption);
    CHECK(out[0].second.reconstruction_provider == "identity");
}

TEST_CASE("noise reconstruction is seeded and bit-exact across reruns") {
    auto cap = make_caption_provider("stub-hash");
    auto recon = make_reconstruction_provider("noise", 0.05);
    const ImageTensor img = checker_image();

    const auto a = self_reconstruct(img, *cap, *recon, 3, 7);
    const auto b = self_reconstruct(img, *cap, *recon, 3, 7);
    REQUIRE(a.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(a[i].first.pixels == b[i].first.pixels);
        CHECK_NOTHROW(a[i].first.validate());
    }
    // distinct seeds give distinct images
    CHECK(a[0].first.pixels != a[1].first.pixels);
    CHECK(a[1].first.pixels != a[2].first.pixels);
}

TEST_CASE("self_reconstruct rejects out-of-range k") {
    auto cap = make_caption_provider("stub-hash");
    auto recon = make_reconstruction_provider("identity");
    const ImageTensor img = checker_image();
    CHECK_THROWS_AS(self_reconstruct(img, *cap, *recon, 0, 1), SpecError);
    CHECK_THROWS_AS(self_reconstruct(img, *cap, *recon, 9, 1), SpecError);
}

TEST_CASE("reconstruction failure reports the index") {
    struct FailsOnSecond final : ReconstructionProvider {
        int calls = 0;
        std::string name() const override { return "fragile"; }
        ImageTensor reconstruct(const ImageTensor& ref, const std::string&, std::uint64_t) override {
            if (++calls == 2) throw std::runtime_error("oom");
            return ref;
        }
    } fragile;
    auto cap = make_caption_provider("stub-hash");
    try {
        self_reconstruct(checker_image(), *cap, fragile, 3, 0);
        FAIL("expected ProviderError");
    } catch (const ProviderError& e) {
        CHECK(std::string(e.what()).find("1 of 3") != std::string::npos);
    }
}

TEST_CASE("near-identity settings reduce to a q100 jpeg round-trip") {
    TraditionalAugConfig cfg;
    cfg.flip_prob = 0.0;
    cfg.jpeg_quality = 100;
    cfg.gaussian_noise_sigma = 0.0;
    cfg.color_jitter_hue = 0.0;
    cfg.seed = 5;
    const ImageTensor img = checker_image();
    const ImageTensor out = traditional_augment(img, cfg);
    CHECK(max_abs_diff(out, img) <= 0.02);
}

TEST_CASE("flip_prob=1 mirrors; applying twice restores the original") {
    TraditionalAugConfig cfg;
    cfg.flip_prob = 1.0;
    cfg.jpeg_quality = 100;
    cfg.gaussian_noise_sigma = 0.0;
    cfg.color_jitter_hue = 0.0;
    cfg.seed = 5;
    const ImageTensor img = checker_image();
    const ImageTensor once = traditional_augment(img, cfg);
    CHECK(max_abs_diff(once, flip_horizontal(img)) <= 0.02);
    const ImageTensor twice = traditional_augment(once, cfg);
    CHECK(max_abs_diff(twice, img) <= 0.04);

    // the flip stage itself is an exact involution
    CHECK(flip_horizontal(flip_horizontal(img)).pixels == img.pixels);
}

TEST_CASE("noise stage hits the requested sigma before clamping") {
    // mid-gray input keeps the clamp inactive at sigma=0.05
    const ImageTensor img = ImageTensor::filled(64, 64, 0.5);
    Rng rng(11);
    const ImageTensor noisy = add_gaussian_noise(img, 0.05, rng);
    REQUIRE(noisy.pixels.size() >= 10000);
    double mean = 0.0;
    for (std::size_t i = 0; i < noisy.pixels.size(); ++i) mean += noisy.pixels[i] - img.pixels[i];
    mean /= static_cast<double>(noisy.pixels.size());
    double var = 0.0;
    for (std::size_t i = 0; i < noisy.pixels.size(); ++i) {
        const double d = noisy.pixels[i] - img.pixels[i] - mean;
        var += d * d;
    }
    var /= static_cast<double>(noisy.pixels.size() - 1);
    const double stddev = std::sqrt(var);
    CHECK(stddev > 0.04);
    CHECK(stddev < 0.06);
}

TEST_CASE("traditional_augment with noise is deterministic per seed") {
    TraditionalAugConfig cfg;
    cfg.flip_prob = 0.5;
    cfg.jpeg_quality = 90;
    cfg.gaussian_noise_sigma = 0.05;
    cfg.color_jitter_hue = 0.1;
    cfg.seed = 77;
    const ImageTensor img = checker_image();
    const ImageTensor a = traditional_augment(img, cfg);
    const ImageTensor b = traditional_augment(img, cfg);
    CHECK(a.pixels == b.pixels);
    CHECK_NOTHROW(a.validate());

    cfg.seed = 78;
    const ImageTensor c = traditional_augment(img, cfg);
    CHECK(a.pixels != c.pixels);
}

TEST_CASE("all transforms keep pixels in range") {
    const ImageTensor img = checker_image();
    Rng rng(3);
    CHECK_NOTHROW(hue_shift(img, 0.3).validate());
    CHECK_NOTHROW(add_gaussian_noise(img, 0.2, rng).validate());
    CHECK_NOTHROW(jpeg_roundtrip(img, 50).validate());
    CHECK_NOTHROW(rotate_degrees(img, 15.0).validate());
    CHECK_NOTHROW(gaussian_blur_3x3(img).validate());
    CHECK_NOTHROW(adjust_contrast(img, 2.0).validate());
}

TEST_CASE("hue shift by a full turn is the identity") {
    const ImageTensor img = checker_image();
    const ImageTensor turned = hue_shift(img, 1.0);
    CHECK(max_abs_diff(turned, img) < 1e-9);
}

TEST_CASE("config validation rejects out-of-range fields") {
    TraditionalAugConfig cfg;
    cfg.flip_prob = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.flip_prob = 0.5;
    cfg.jpeg_quality = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.jpeg_quality = 80;
    cfg.color_jitter_hue = 0.6;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
