#include "stylefp/augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <opencv2/imgproc.hpp>

#include <csetjmp>
#include <cstdlib>
#include <jpeglib.h>

namespace stylefp {

namespace {

// caption stub: stable content hash over the 8-bit quantized raster
class HashCaptionStub final : public CaptionProvider {
public:
    std::string name() const override { return "stub-hash"; }

    std::string describe(const ImageTensor& image) override {
        image.validate();
        std::uint64_t h = 1469598103934665603ull;  // FNV-1a
        auto mix = [&h](std::uint64_t byte) {
            h ^= byte;
            h *= 1099511628211ull;
        };
        mix(static_cast<std::uint64_t>(image.height));
        mix(static_cast<std::uint64_t>(image.width));
        for (double v : image.pixels) {
            mix(static_cast<std::uint64_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
        }
        char buf[32];
        std::snprintf(buf, sizeof(buf), "synthetic scene 0x%08x", static_cast<unsigned>(h & 0xffffffffu));
        return buf;
    }
};

class IdentityReconstruction final : public ReconstructionProvider {
public:
    std::string name() const override { return "identity"; }

    ImageTensor reconstruct(const ImageTensor& style_ref, const std::string&, std::uint64_t) override {
        style_ref.validate();
        return style_ref;
    }
};

// seeded gaussian perturbation of the style reference; the caption hash is
// folded into the stream so different captions give different variants
class NoiseReconstruction final : public ReconstructionProvider {
public:
    explicit NoiseReconstruction(double sigma) : sigma_(sigma) {}

    std::string name() const override { return "noise"; }

    ImageTensor reconstruct(const ImageTensor& style_ref, const std::string& caption,
                            std::uint64_t seed) override {
        style_ref.validate();
        Rng rng(derive_seed(seed, "recon:" + caption));
        return add_gaussian_noise(style_ref, sigma_, rng);
    }

private:
    double sigma_;
};

}  // namespace

std::unique_ptr<CaptionProvider> make_caption_provider(const std::string& name) {
    if (name == "stub-hash") return std::make_unique<HashCaptionStub>();
    throw ConfigError("unknown caption provider '" + name + "' (available: stub-hash)");
}

std::unique_ptr<ReconstructionProvider> make_reconstruction_provider(const std::string& name,
                                                                     double noise_sigma) {
    if (name == "identity") return std::make_unique<IdentityReconstruction>();
    if (name == "noise") return std::make_unique<NoiseReconstruction>(noise_sigma);
    throw ConfigError("unknown reconstruction provider '" + name + "' (available: identity, noise)");
}

void TraditionalAugConfig::validate() const {
    if (flip_prob < 0.0 || flip_prob > 1.0) throw ConfigError("flip_prob must be in [0,1]");
    if (jpeg_quality < 1 || jpeg_quality > 100) throw ConfigError("jpeg_quality must be in [1,100]");
    if (gaussian_noise_sigma < 0.0) throw ConfigError("gaussian_noise_sigma must be >= 0");
    if (color_jitter_hue < 0.0 || color_jitter_hue > 0.5) throw ConfigError("color_jitter_hue must be in [0,0.5]");
}

std::string caption(const ImageTensor& image, CaptionProvider& provider) {
    image.validate();
    std::string text;
    try {
        text = provider.describe(image);
    } catch (const ProviderError&) {
        throw;
    } catch (const std::exception& e) {
        throw ProviderError(provider.name(), e.what());
    }
    if (text.empty()) {
        throw ProviderError(provider.name(), "returned an empty caption");
    }
    return text;
}

std::vector<std::pair<ImageTensor, AugmentationRecord>> self_reconstruct(const ImageTensor& image,
                                                                         CaptionProvider& caption_provider,
                                                                         ReconstructionProvider& recon_provider,
                                                                         int k, std::uint64_t base_seed) {
    if (k < 1 || k > 8) {
        throw SpecError("self_reconstruct: k must be in [1,8], got " + std::to_string(k));
    }
    image.validate();
    const std::string text = caption(image, caption_provider);

    std::vector<std::pair<ImageTensor, AugmentationRecord>> out;
    out.reserve(k);
    for (int i = 0; i < k; ++i) {
        const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(i);
        ImageTensor recon;
        try {
            recon = recon_provider.reconstruct(image, text, seed);
        } catch (const std::exception& e) {
            throw ProviderError(recon_provider.name(),
                                "reconstruction " + std::to_string(i) + " of " + std::to_string(k) +
                                    " failed: " + e.what());
        }
        recon.validate();
        AugmentationRecord rec;
        rec.caption = text;
        rec.seed = seed;
        rec.caption_provider = caption_provider.name();
        rec.reconstruction_provider = recon_provider.name();
        out.emplace_back(std::move(recon), std::move(rec));
    }
    return out;
}

ImageTensor traditional_augment(const ImageTensor& image, const TraditionalAugConfig& config) {
    image.validate();
    config.validate();
    Rng rng(derive_seed(config.seed, "traditional"));

    ImageTensor out = image;
    const bool do_flip = rng.bernoulli(config.flip_prob);
    const double hue_delta = rng.uniform(-config.color_jitter_hue, config.color_jitter_hue);
    if (do_flip) {
        out = flip_horizontal(out);
    }
    if (hue_delta != 0.0) {
        out = hue_shift(out, hue_delta);
    }
    if (config.gaussian_noise_sigma > 0.0) {
        out = add_gaussian_noise(out, config.gaussian_noise_sigma, rng);
    }
    out = jpeg_roundtrip(out, config.jpeg_quality);
    return out;
}

ImageTensor flip_horizontal(const ImageTensor& image) {
    ImageTensor out = image;
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                out.at(y, x, c) = image.at(y, image.width - 1 - x, c);
            }
        }
    }
    return out;
}

namespace {

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double c = mx - mn;
    v = mx;
    s = mx > 0.0 ? c / mx : 0.0;
    if (c <= 0.0) {
        h = 0.0;
        return;
    }
    double hp = 0.0;
    if (mx == r) {
        hp = std::fmod((g - b) / c, 6.0);
        if (hp < 0.0) hp += 6.0;
    } else if (mx == g) {
        hp = (b - r) / c + 2.0;
    } else {
        hp = (r - g) / c + 4.0;
    }
    h = hp / 6.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    const double hp = std::fmod(h, 1.0) * 6.0;
    const double c = v * s;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    const double m = v - c;
    double rp = 0.0, gp = 0.0, bp = 0.0;
    switch (static_cast<int>(hp)) {
        case 0: rp = c; gp = x; break;
        case 1: rp = x; gp = c; break;
        case 2: gp = c; bp = x; break;
        case 3: gp = x; bp = c; break;
        case 4: rp = x; bp = c; break;
        default: rp = c; bp = x; break;
    }
    r = rp + m;
    g = gp + m;
    b = bp + m;
}

cv::Mat to_bgr8(const ImageTensor& image) {
    cv::Mat bgr(image.height, image.width, CV_8UC3);
    for (int y = 0; y < image.height; ++y) {
        cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < image.width; ++x) {
            row[x][2] = static_cast<unsigned char>(std::lround(std::clamp(image.at(y, x, 0), 0.0, 1.0) * 255.0));
            row[x][1] = static_cast<unsigned char>(std::lround(std::clamp(image.at(y, x, 1), 0.0, 1.0) * 255.0));
            row[x][0] = static_cast<unsigned char>(std::lround(std::clamp(image.at(y, x, 2), 0.0, 1.0) * 255.0));
        }
    }
    return bgr;
}

ImageTensor from_bgr8(const cv::Mat& bgr) {
    ImageTensor out;
    out.height = bgr.rows;
    out.width = bgr.cols;
    out.channels = 3;
    out.pixels.resize(static_cast<std::size_t>(bgr.rows) * bgr.cols * 3);
    std::size_t i = 0;
    for (int y = 0; y < bgr.rows; ++y) {
        const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            out.pixels[i++] = row[x][2] / 255.0;
            out.pixels[i++] = row[x][1] / 255.0;
            out.pixels[i++] = row[x][0] / 255.0;
        }
    }
    return out;
}

}  // namespace

ImageTensor hue_shift(const ImageTensor& image, double delta) {
    ImageTensor out = image;
    for (std::size_t i = 0; i < image.pixels.size(); i += 3) {
        double h, s, v;
        rgb_to_hsv(image.pixels[i], image.pixels[i + 1], image.pixels[i + 2], h, s, v);
        h = std::fmod(h + delta + 1.0, 1.0);
        double r, g, b;
        hsv_to_rgb(h, s, v, r, g, b);
        out.pixels[i] = std::clamp(r, 0.0, 1.0);
        out.pixels[i + 1] = std::clamp(g, 0.0, 1.0);
        out.pixels[i + 2] = std::clamp(b, 0.0, 1.0);
    }
    return out;
}

ImageTensor add_gaussian_noise(const ImageTensor& image, double sigma, Rng& rng) {
    ImageTensor out = image;
    for (auto& v : out.pixels) {
        v = std::clamp(v + rng.normal() * sigma, 0.0, 1.0);
    }
    return out;
}

namespace {

struct JpegErrorTrap {
    jpeg_error_mgr mgr;
    jmp_buf env;
};

void jpeg_error_exit_trap(j_common_ptr cinfo) {
    longjmp(reinterpret_cast<JpegErrorTrap*>(cinfo->err)->env, 1);
}

std::vector<unsigned char> rgb8_of(const ImageTensor& image) {
    std::vector<unsigned char> rgb(image.pixels.size());
    for (std::size_t i = 0; i < image.pixels.size(); ++i) {
        rgb[i] = static_cast<unsigned char>(std::lround(std::clamp(image.pixels[i], 0.0, 1.0) * 255.0));
    }
    return rgb;
}

}  // namespace

ImageTensor jpeg_roundtrip(const ImageTensor& image, int quality) {
    if (quality < 1 || quality > 100) {
        throw ConfigError("jpeg quality must be in [1,100]");
    }
    std::vector<unsigned char> rgb = rgb8_of(image);

    // encode
    JpegErrorTrap trap;
    jpeg_compress_struct enc;
    enc.err = jpeg_std_error(&trap.mgr);
    trap.mgr.error_exit = jpeg_error_exit_trap;
    unsigned char* buffer = nullptr;
    unsigned long buffer_size = 0;
    if (setjmp(trap.env)) {
        jpeg_destroy_compress(&enc);
        free(buffer);
        throw NumericError("jpeg encode failed");
    }
    jpeg_create_compress(&enc);
    jpeg_mem_dest(&enc, &buffer, &buffer_size);
    enc.image_width = static_cast<JDIMENSION>(image.width);
    enc.image_height = static_cast<JDIMENSION>(image.height);
    enc.input_components = 3;
    enc.in_color_space = JCS_RGB;
    jpeg_set_defaults(&enc);
    jpeg_set_quality(&enc, quality, TRUE);
    if (quality >= 95) {
        // near-lossless settings keep full chroma; lower qualities use the
        // encoder's standard 4:2:0 pipeline
        for (int c = 0; c < enc.num_components; ++c) {
            enc.comp_info[c].h_samp_factor = 1;
            enc.comp_info[c].v_samp_factor = 1;
        }
    }
    jpeg_start_compress(&enc, TRUE);
    while (enc.next_scanline < enc.image_height) {
        JSAMPROW row = &rgb[static_cast<std::size_t>(enc.next_scanline) * image.width * 3];
        jpeg_write_scanlines(&enc, &row, 1);
    }
    jpeg_finish_compress(&enc);
    jpeg_destroy_compress(&enc);

    // decode
    jpeg_decompress_struct dec;
    JpegErrorTrap dtrap;
    dec.err = jpeg_std_error(&dtrap.mgr);
    dtrap.mgr.error_exit = jpeg_error_exit_trap;
    if (setjmp(dtrap.env)) {
        jpeg_destroy_decompress(&dec);
        free(buffer);
        throw NumericError("jpeg round-trip produced an undecodable buffer");
    }
    jpeg_create_decompress(&dec);
    jpeg_mem_src(&dec, buffer, buffer_size);
    jpeg_read_header(&dec, TRUE);
    dec.out_color_space = JCS_RGB;
    jpeg_start_decompress(&dec);

    ImageTensor out;
    out.height = static_cast<int>(dec.output_height);
    out.width = static_cast<int>(dec.output_width);
    out.channels = 3;
    out.pixels.resize(static_cast<std::size_t>(out.height) * out.width * 3);
    std::vector<unsigned char> rowbuf(static_cast<std::size_t>(out.width) * 3);
    while (dec.output_scanline < dec.output_height) {
        const std::size_t y = dec.output_scanline;
        JSAMPROW row = rowbuf.data();
        jpeg_read_scanlines(&dec, &row, 1);
        for (std::size_t i = 0; i < rowbuf.size(); ++i) {
            out.pixels[y * out.width * 3 + i] = rowbuf[i] / 255.0;
        }
    }
    jpeg_finish_decompress(&dec);
    jpeg_destroy_decompress(&dec);
    free(buffer);
    return out;
}

ImageTensor rotate_degrees(const ImageTensor& image, double degrees) {
    cv::Mat src = to_bgr8(image);
    const cv::Point2f center(src.cols / 2.0f, src.rows / 2.0f);
    cv::Mat rot = cv::getRotationMatrix2D(center, degrees, 1.0);
    cv::Mat dst;
    cv::warpAffine(src, dst, rot, src.size(), cv::INTER_LINEAR, cv::BORDER_REFLECT_101);
    return from_bgr8(dst);
}

ImageTensor gaussian_blur_3x3(const ImageTensor& image) {
    cv::Mat src = to_bgr8(image);
    cv::Mat dst;
    cv::GaussianBlur(src, dst, cv::Size(3, 3), 0.0);
    return from_bgr8(dst);
}

ImageTensor adjust_contrast(const ImageTensor& image, double factor) {
    double mean_luma = 0.0;
    for (std::size_t i = 0; i < image.pixels.size(); i += 3) {
        mean_luma += 0.299 * image.pixels[i] + 0.587 * image.pixels[i + 1] + 0.114 * image.pixels[i + 2];
    }
    mean_luma /= static_cast<double>(image.pixels.size() / 3);
    ImageTensor out = image;
    for (auto& v : out.pixels) {
        v = std::clamp(mean_luma + factor * (v - mean_luma), 0.0, 1.0);
    }
    return out;
}

}  // namespace stylefp
