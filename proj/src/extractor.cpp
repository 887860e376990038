#include "stylefp/extractor.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace stylefp {

using nn::FeatureMap;
using nn::Vec;

BackboneLayout BackboneLayout::from_architecture(const std::string& tag) {
    BackboneLayout layout;
    layout.architecture = tag;
    if (tag == "vgg19") {
        layout.widths = {64, 128, 256, 512, 512};
    } else if (tag == "vgg19_small") {
        layout.widths = {16, 32, 64, 96, 96};
    } else if (tag == "vgg19_tiny") {
        layout.widths = {8, 16, 24, 32, 32};
    } else {
        throw SpecError("unknown backbone architecture '" + tag +
                        "' (available: vgg19, vgg19_small, vgg19_tiny)");
    }
    return layout;
}

int BackboneLayout::num_layers() const {
    int n = 0;
    for (int c : convs_per_block) n += c;
    return n;
}

std::string BackboneLayout::layer_name(int index) const {
    int block = 1;
    for (int c : convs_per_block) {
        if (index < c) return "conv" + std::to_string(block) + "_" + std::to_string(index + 1);
        index -= c;
        ++block;
    }
    throw SpecError("layer index out of range");
}

int BackboneLayout::layer_index(const std::string& name) const {
    int idx = 0;
    for (int block = 1; block <= 5; ++block) {
        for (int j = 1; j <= convs_per_block[block - 1]; ++j, ++idx) {
            if (name == "conv" + std::to_string(block) + "_" + std::to_string(j)) return idx;
        }
    }
    return -1;
}

int BackboneLayout::block_of_layer(int index) const {
    int block = 1;
    for (int c : convs_per_block) {
        if (index < c) return block;
        index -= c;
        ++block;
    }
    throw SpecError("layer index out of range");
}

int BackboneLayout::out_channels_of_layer(int index) const { return widths[block_of_layer(index) - 1]; }

int BackboneLayout::in_channels_of_layer(int index) const {
    if (index == 0) return 3;
    const int block = block_of_layer(index);
    const int prev_block = block_of_layer(index - 1);
    return prev_block == block ? widths[block - 1] : widths[prev_block - 1];
}

const std::string& BackboneSpec::tap(Level level) const {
    switch (level) {
        case Level::low: return tap_low;
        case Level::mid: return tap_mid;
        default: return tap_high;
    }
}

void BackboneSpec::validate() const {
    const auto layout = BackboneLayout::from_architecture(architecture);
    const int lo = layout.layer_index(tap_low);
    const int mi = layout.layer_index(tap_mid);
    const int hi = layout.layer_index(tap_high);
    if (lo < 0) throw SpecError("unknown tap layer '" + tap_low + "'");
    if (mi < 0) throw SpecError("unknown tap layer '" + tap_mid + "'");
    if (hi < 0) throw SpecError("unknown tap layer '" + tap_high + "'");
    if (!(lo < mi && mi < hi)) {
        throw SpecError("tap layers must be strictly ordered by depth (low < mid < high)");
    }
    if (input_size < 32) {
        throw SpecError("input_size must be at least 32");
    }
    for (double s : norm_std) {
        if (s <= 0.0) throw SpecError("normalization std must be positive");
    }
}

namespace {

constexpr const char* kWeightsDirEnv = "STYLEFP_WEIGHTS_DIR";

bool parse_random_source(const std::string& source, std::uint64_t& seed_out) {
    if (source.rfind("random(", 0) != 0 || source.back() != ')') return false;
    const std::string inner = source.substr(7, source.size() - 8);
    if (inner.empty()) return false;
    for (char c : inner) {
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    }
    seed_out = std::stoull(inner);
    return true;
}

nlohmann::json::binary_t to_blob(const Vec& v) {
    nlohmann::json::binary_t blob;
    blob.resize(v.size() * sizeof(double));
    std::memcpy(blob.data(), v.data(), blob.size());
    return blob;
}

Vec from_blob(const nlohmann::json& j, std::size_t expected, const std::string& what) {
    if (!j.is_binary()) throw ConfigError(what + ": expected binary blob");
    const auto& blob = j.get_binary();
    if (blob.size() != expected * sizeof(double)) {
        throw ConfigError(what + ": blob size " + std::to_string(blob.size()) + " != expected " +
                          std::to_string(expected * sizeof(double)));
    }
    Vec v(expected);
    std::memcpy(v.data(), blob.data(), blob.size());
    return v;
}

void load_backbone_weights(ExtractorParams& params, const std::string& requested_path) {
    const std::string path = resolve_backbone_weights_path(requested_path);
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open backbone weights file '" + path + "'");
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    nlohmann::json j;
    try {
        j = nlohmann::json::from_cbor(bytes);
    } catch (const std::exception& e) {
        throw IoError("backbone weights file '" + path + "' is corrupt: " + e.what());
    }
    if (j.value("format", "") != "stylefp-backbone" || j.value("format_version", 0) != 1) {
        throw IoError("'" + path + "' is not a version-1 backbone weights file");
    }
    if (j.value("architecture", "") != params.spec.architecture) {
        throw IoError("backbone weights architecture '" + j.value("architecture", "") +
                      "' does not match spec '" + params.spec.architecture + "'");
    }
    if (!j.contains("layers")) {
        throw IoError("backbone weights file '" + path + "' has no layers section");
    }
    const auto layout = params.layout();
    for (int i = 0; i < layout.num_layers(); ++i) {
        const std::string name = layout.layer_name(i);
        if (!j["layers"].contains(name)) {
            throw IoError("backbone weights file missing layer '" + name + "'");
        }
        auto& conv = params.backbone[i];
        conv.weight = from_blob(j["layers"][name]["weight"], conv.weight.size(), name + "/weight");
        conv.bias = from_blob(j["layers"][name]["bias"], conv.bias.size(), name + "/bias");
    }
}

}  // namespace

std::string resolve_backbone_weights_path(const std::string& source) {
    namespace fs = std::filesystem;
    std::uint64_t seed = 0;
    if (parse_random_source(source, seed)) return "";
    if (fs::exists(source)) return source;
    const char* cache = std::getenv(kWeightsDirEnv);
    if (cache && !fs::path(source).is_absolute()) {
        const std::string alt = (fs::path(cache) / source).string();
        if (fs::exists(alt)) return alt;
    }
    throw IoError("cannot find backbone weights file '" + source + "' (also checked $" +
                  std::string(kWeightsDirEnv) + ")");
}

void save_backbone_weights(const ExtractorParams& params, const std::string& path) {
    nlohmann::json j;
    j["format"] = "stylefp-backbone";
    j["format_version"] = 1;
    j["architecture"] = params.spec.architecture;
    const auto layout = params.layout();
    for (int i = 0; i < layout.num_layers(); ++i) {
        const std::string name = layout.layer_name(i);
        j["layers"][name]["weight"] = to_blob(params.backbone[i].weight);
        j["layers"][name]["bias"] = to_blob(params.backbone[i].bias);
    }
    const auto bytes = nlohmann::json::to_cbor(j);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write backbone weights file '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ExtractorParams ExtractorParams::create_shaped(const BackboneSpec& spec, int embed_dim,
                                               int attn_hidden_dim) {
    spec.validate();
    if (embed_dim <= 0) throw SpecError("embed_dim must be positive");
    if (attn_hidden_dim <= 0) throw SpecError("attn_hidden_dim must be positive");

    ExtractorParams params;
    params.spec = spec;
    params.embed_dim = embed_dim;
    params.attn_hidden_dim = attn_hidden_dim;

    const auto layout = BackboneLayout::from_architecture(spec.architecture);
    params.backbone.reserve(layout.num_layers());
    for (int i = 0; i < layout.num_layers(); ++i) {
        params.backbone.emplace_back(layout.in_channels_of_layer(i), layout.out_channels_of_layer(i));
    }
    for (int l = 0; l < kNumLevels; ++l) {
        const int c = layout.widths[layout.block_of_layer(layout.layer_index(spec.tap(static_cast<Level>(l)))) - 1];
        params.level_conv[l] = nn::Linear(2 * c, c, true);
        params.projection[l] = nn::Linear(c, embed_dim, true);
    }
    params.attn_hidden = nn::Linear(kNumLevels * embed_dim, attn_hidden_dim, true);
    params.attn_out = nn::Linear(attn_hidden_dim, kNumLevels, true);
    params.version = "mlas1/" + spec.architecture + "/" + spec.tap_low + "-" + spec.tap_mid + "-" +
                     spec.tap_high + "/postact/e" + std::to_string(embed_dim);
    return params;
}

ExtractorParams ExtractorParams::create(const BackboneSpec& spec, int embed_dim, int attn_hidden_dim,
                                        std::uint64_t head_seed) {
    ExtractorParams params = create_shaped(spec, embed_dim, attn_hidden_dim);

    std::uint64_t backbone_seed = 0;
    if (parse_random_source(spec.weights_source, backbone_seed)) {
        Rng rng(derive_seed(backbone_seed, "backbone"));
        for (auto& conv : params.backbone) conv.init_he(rng);
    } else {
        load_backbone_weights(params, spec.weights_source);
    }

    for (int l = 0; l < kNumLevels; ++l) {
        Rng rng_lc(derive_seed(head_seed, "level_conv", static_cast<std::uint64_t>(l)));
        Rng rng_pr(derive_seed(head_seed, "projection", static_cast<std::uint64_t>(l)));
        params.level_conv[l].init_he(rng_lc);
        params.projection[l].init_he(rng_pr);
    }
    Rng rng_ah(derive_seed(head_seed, "attn_hidden"));
    Rng rng_ao(derive_seed(head_seed, "attn_out"));
    params.attn_hidden.init_he(rng_ah);
    params.attn_out.init_he(rng_ao);

    params.validate();
    return params;
}

void ExtractorParams::validate() const {
    spec.validate();
    const auto lay = layout();
    if (static_cast<int>(backbone.size()) != lay.num_layers()) {
        throw SpecError("backbone layer count mismatch");
    }
    for (int i = 0; i < lay.num_layers(); ++i) {
        if (backbone[i].in_ch != lay.in_channels_of_layer(i) || backbone[i].out_ch != lay.out_channels_of_layer(i)) {
            throw SpecError("backbone layer '" + lay.layer_name(i) + "' has wrong shape");
        }
    }
    for (int l = 0; l < kNumLevels; ++l) {
        const int c = tap_channels(static_cast<Level>(l));
        if (level_conv[l].in_dim != 2 * c || level_conv[l].out_dim != c) {
            throw SpecError("level conv for " + to_string(static_cast<Level>(l)) + " has wrong shape");
        }
        if (projection[l].in_dim != c || projection[l].out_dim != embed_dim) {
            throw SpecError("projection for " + to_string(static_cast<Level>(l)) +
                            " must map the level encoding to embed_dim");
        }
    }
    if (attn_hidden.in_dim != kNumLevels * embed_dim || attn_hidden.out_dim != attn_hidden_dim) {
        throw SpecError("attention hidden layer has wrong shape");
    }
    if (attn_out.in_dim != attn_hidden_dim || attn_out.out_dim != kNumLevels) {
        throw SpecError("attention output layer must emit one score per level");
    }
    for (const auto& g : trainable) {
        if (!kExtractorGroups.count(g)) throw SpecError("unknown trainable group '" + g + "'");
    }
}

int ExtractorParams::tap_layer_index(Level level) const {
    const auto lay = layout();
    return lay.layer_index(spec.tap(level));
}

int ExtractorParams::tap_channels(Level level) const {
    const auto lay = layout();
    return lay.widths[lay.block_of_layer(tap_layer_index(level)) - 1];
}

std::vector<nn::ParamRef> ExtractorParams::all_params() {
    std::vector<nn::ParamRef> refs;
    const auto lay = layout();
    for (int i = 0; i < lay.num_layers(); ++i) {
        const std::string base = "backbone/" + lay.layer_name(i);
        refs.push_back({base + "/weight", &backbone[i].weight, &backbone[i].grad_weight, true});
        refs.push_back({base + "/bias", &backbone[i].bias, &backbone[i].grad_bias, false});
    }
    for (int l = 0; l < kNumLevels; ++l) {
        const std::string lvl = to_string(static_cast<Level>(l));
        refs.push_back({"level_conv/" + lvl + "/weight", &level_conv[l].weight, &level_conv[l].grad_weight, true});
        refs.push_back({"level_conv/" + lvl + "/bias", &level_conv[l].bias, &level_conv[l].grad_bias, false});
        refs.push_back({"projection/" + lvl + "/weight", &projection[l].weight, &projection[l].grad_weight, true});
        refs.push_back({"projection/" + lvl + "/bias", &projection[l].bias, &projection[l].grad_bias, false});
    }
    refs.push_back({"attn/hidden/weight", &attn_hidden.weight, &attn_hidden.grad_weight, true});
    refs.push_back({"attn/hidden/bias", &attn_hidden.bias, &attn_hidden.grad_bias, false});
    refs.push_back({"attn/out/weight", &attn_out.weight, &attn_out.grad_weight, true});
    refs.push_back({"attn/out/bias", &attn_out.bias, &attn_out.grad_bias, false});
    return refs;
}

std::vector<nn::ParamRef> ExtractorParams::trainable_params() {
    std::vector<nn::ParamRef> refs;
    const auto lay = layout();
    for (int i = 0; i < lay.num_layers(); ++i) {
        const std::string group = "backbone_block" + std::to_string(lay.block_of_layer(i));
        if (!trainable.count(group)) continue;
        const std::string base = "backbone/" + lay.layer_name(i);
        refs.push_back({base + "/weight", &backbone[i].weight, &backbone[i].grad_weight, true});
        refs.push_back({base + "/bias", &backbone[i].bias, &backbone[i].grad_bias, false});
    }
    if (trainable.count("level_convs")) {
        for (int l = 0; l < kNumLevels; ++l) {
            const std::string lvl = to_string(static_cast<Level>(l));
            refs.push_back({"level_conv/" + lvl + "/weight", &level_conv[l].weight, &level_conv[l].grad_weight, true});
            refs.push_back({"level_conv/" + lvl + "/bias", &level_conv[l].bias, &level_conv[l].grad_bias, false});
        }
    }
    if (trainable.count("projections")) {
        for (int l = 0; l < kNumLevels; ++l) {
            const std::string lvl = to_string(static_cast<Level>(l));
            refs.push_back({"projection/" + lvl + "/weight", &projection[l].weight, &projection[l].grad_weight, true});
            refs.push_back({"projection/" + lvl + "/bias", &projection[l].bias, &projection[l].grad_bias, false});
        }
    }
    if (trainable.count("attn")) {
        refs.push_back({"attn/hidden/weight", &attn_hidden.weight, &attn_hidden.grad_weight, true});
        refs.push_back({"attn/hidden/bias", &attn_hidden.bias, &attn_hidden.grad_bias, false});
        refs.push_back({"attn/out/weight", &attn_out.weight, &attn_out.grad_weight, true});
        refs.push_back({"attn/out/bias", &attn_out.bias, &attn_out.grad_bias, false});
    }
    return refs;
}

void ExtractorParams::zero_grads() {
    for (auto& conv : backbone) conv.zero_grad();
    for (auto& lc : level_conv) lc.zero_grad();
    for (auto& pr : projection) pr.zero_grad();
    attn_hidden.zero_grad();
    attn_out.zero_grad();
}

ImageTensor resize_bilinear(const ImageTensor& image, int out_height, int out_width) {
    ImageTensor out;
    out.height = out_height;
    out.width = out_width;
    out.channels = 3;
    out.pixels.resize(static_cast<std::size_t>(out_height) * out_width * 3);
    const double sy = static_cast<double>(image.height) / out_height;
    const double sx = static_cast<double>(image.width) / out_width;
    for (int y = 0; y < out_height; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(image.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, image.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_width; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(image.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, image.width - 1);
            const double wx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = image.at(y0, x0, c) * (1.0 - wx) + image.at(y0, x1, c) * wx;
                const double bot = image.at(y1, x0, c) * (1.0 - wx) + image.at(y1, x1, c) * wx;
                out.at(y, x, c) = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    return out;
}

nn::FeatureMap preprocess_image(const ImageTensor& image, const BackboneSpec& spec) {
    image.validate();
    const int target = spec.input_size;
    int nh, nw;
    if (image.height <= image.width) {
        nh = target;
        nw = std::max(target, static_cast<int>(std::lround(static_cast<double>(image.width) * target / image.height)));
    } else {
        nw = target;
        nh = std::max(target, static_cast<int>(std::lround(static_cast<double>(image.height) * target / image.width)));
    }
    ImageTensor resized = (nh == image.height && nw == image.width) ? image : resize_bilinear(image, nh, nw);
    const int oy = (nh - target) / 2;
    const int ox = (nw - target) / 2;

    FeatureMap out(3, target, target);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < target; ++y) {
            for (int x = 0; x < target; ++x) {
                out.at(c, y, x) = (resized.at(oy + y, ox + x, c) - spec.norm_mean[c]) / spec.norm_std[c];
            }
        }
    }
    return out;
}

namespace {

struct TapIndexSet {
    std::array<int, kNumLevels> layer{-1, -1, -1};
    int high_layer = -1;
    int high_block = -1;

    static TapIndexSet from(const ExtractorParams& params) {
        TapIndexSet t;
        const auto lay = params.layout();
        for (int l = 0; l < kNumLevels; ++l) {
            t.layer[l] = params.tap_layer_index(static_cast<Level>(l));
        }
        t.high_layer = t.layer[2];
        t.high_block = lay.block_of_layer(t.high_layer);
        return t;
    }

    int level_at(int layer_index) const {
        for (int l = 0; l < kNumLevels; ++l) {
            if (layer[l] == layer_index) return l;
        }
        return -1;
    }
};

}  // namespace

TapMaps tap_features(const ImageTensor& image, const ExtractorParams& params) {
    params.validate();
    FeatureMap cur = preprocess_image(image, params.spec);
    const auto lay = params.layout();
    const auto taps = TapIndexSet::from(params);

    TapMaps out;
    int layer = 0;
    for (int block = 1; block <= taps.high_block; ++block) {
        for (int j = 0; j < lay.convs_per_block[block - 1]; ++j, ++layer) {
            cur = params.backbone[layer].forward(cur);
            nn::relu_inplace(cur);
            const int lvl = taps.level_at(layer);
            if (lvl >= 0) out[lvl] = cur;
            if (layer == taps.high_layer) return out;
        }
        cur = nn::maxpool2x2(cur);
    }
    return out;  // unreachable; high tap ends the loop
}

LevelEncoding pool_encode(const nn::FeatureMap& map, const nn::Linear& level_conv, Level level,
                          const std::string& source_layer) {
    for (double v : map.data) {
        if (!std::isfinite(v)) {
            throw NumericError("non-finite activation in " + to_string(level) + " level feature map");
        }
    }
    const Vec pooled = nn::global_avg_max_pool(map);
    LevelEncoding enc;
    enc.level = level;
    enc.source_layer = source_layer;
    enc.vector = level_conv.forward(pooled);
    for (double v : enc.vector) {
        if (!std::isfinite(v)) {
            throw NumericError("non-finite value in " + to_string(level) + " level encoding");
        }
    }
    return enc;
}

FusedResult fuse_projected(const std::vector<Vec>& projected, const Vec& scores) {
    if (projected.empty() || projected.size() != scores.size()) {
        throw SpecError("fuse_projected: need one score per projected vector");
    }
    const std::size_t dim = projected.front().size();
    for (const auto& p : projected) {
        if (p.size() != dim) throw SpecError("fuse_projected: projected vectors differ in dimension");
    }
    FusedResult res;
    res.alpha.resize(projected.size());
    const double mx = *std::max_element(scores.begin(), scores.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        res.alpha[i] = std::exp(scores[i] - mx);
        sum += res.alpha[i];
    }
    for (auto& a : res.alpha) a /= sum;
    res.v.assign(dim, 0.0);
    for (std::size_t i = 0; i < projected.size(); ++i) {
        for (std::size_t j = 0; j < dim; ++j) res.v[j] += res.alpha[i] * projected[i][j];
    }
    return res;
}

StyleFingerprint attention_fuse(const std::array<LevelEncoding, kNumLevels>& encodings,
                                const ExtractorParams& params) {
    std::vector<Vec> projected(kNumLevels);
    Vec flat;
    flat.reserve(static_cast<std::size_t>(kNumLevels) * params.embed_dim);
    for (int l = 0; l < kNumLevels; ++l) {
        if (encodings[l].level != static_cast<Level>(l)) {
            throw SpecError("attention_fuse: expected exactly one encoding per level, in level order");
        }
        if (static_cast<int>(encodings[l].vector.size()) != params.projection[l].in_dim) {
            throw SpecError("attention_fuse: " + to_string(encodings[l].level) + " encoding has dimension " +
                            std::to_string(encodings[l].vector.size()) + ", projection expects " +
                            std::to_string(params.projection[l].in_dim));
        }
        projected[l] = params.projection[l].forward(encodings[l].vector);
        flat.insert(flat.end(), projected[l].begin(), projected[l].end());
    }
    Vec hidden = params.attn_hidden.forward(flat);
    for (auto& h : hidden) h = std::tanh(h);
    const Vec scores = params.attn_out.forward(hidden);
    FusedResult fused = fuse_projected(projected, scores);

    StyleFingerprint fp;
    fp.vector = std::move(fused.v);
    fp.attention = std::move(fused.alpha);
    fp.extractor_version = params.version;
    return fp;
}

StyleFingerprint extract_fingerprint(const ImageTensor& image, const ExtractorParams& params,
                                     const std::string& image_id) {
    const TapMaps taps = tap_features(image, params);
    std::array<LevelEncoding, kNumLevels> encodings;
    for (int l = 0; l < kNumLevels; ++l) {
        encodings[l] = pool_encode(taps[l], params.level_conv[l], static_cast<Level>(l),
                                   params.spec.tap(static_cast<Level>(l)));
    }
    StyleFingerprint fp = attention_fuse(encodings, params);
    fp.image_id = image_id;
    fp.validate(params.embed_dim);
    return fp;
}

// ---------------------------------------------------------------------------
// training-time graph
// ---------------------------------------------------------------------------

struct ExtractorTape {
    struct Rec {
        bool is_pool = false;
        int layer_index = -1;       // conv only
        nn::PoolIndices pool_idx;   // pool only
        FeatureMap output;
    };
    std::vector<Rec> recs;
    std::array<int, kNumLevels> tap_rec{-1, -1, -1};
    std::array<nn::GlobalPoolTape, kNumLevels> pool_tape;

    std::array<Vec, kNumLevels> pooled;
    std::array<Vec, kNumLevels> c;
    std::array<Vec, kNumLevels> p;
    Vec flat;
    Vec hidden;  // post-tanh
    Vec scores;
    Vec alpha;
    Vec v;
};

ExtractorAutograd::ExtractorAutograd(ExtractorParams& params) : params_(params) {
    params.validate();
    const auto lay = params.layout();
    int first_trainable = 6;
    for (int b = 1; b <= 5; ++b) {
        if (params.trainable.count("backbone_block" + std::to_string(b))) {
            first_trainable = b;
            break;
        }
    }
    frozen_prefix_ = first_trainable - 1;
    (void)lay;
}

ExtractorAutograd::~ExtractorAutograd() = default;

ExtractorTape* ExtractorAutograd::make_tape() const { return new ExtractorTape(); }
void ExtractorAutograd::free_tape(ExtractorTape* t) const { delete t; }

FrozenPrefixState ExtractorAutograd::compute_frozen_state(const ImageTensor& image) const {
    const auto lay = params_.layout();
    const auto taps = TapIndexSet::from(params_);

    FrozenPrefixState state;
    FeatureMap cur = preprocess_image(image, params_.spec);
    const int prefix = std::min(frozen_prefix_, taps.high_block);
    const bool need_resume = taps.high_block > prefix;

    int layer = 0;
    for (int block = 1; block <= prefix; ++block) {
        for (int j = 0; j < lay.convs_per_block[block - 1]; ++j, ++layer) {
            cur = params_.backbone[layer].forward(cur);
            nn::relu_inplace(cur);
            const int lvl = taps.level_at(layer);
            if (lvl >= 0) {
                state.pooled[lvl] = nn::global_avg_max_pool(cur);
                state.pooled_valid[lvl] = true;
            }
            if (layer == taps.high_layer && !need_resume) {
                return state;  // everything cached, nothing to resume
            }
        }
        if (block < prefix || need_resume) {
            cur = nn::maxpool2x2(cur);
        }
    }
    if (need_resume) {
        state.resume = std::move(cur);
        state.has_resume = true;
    }
    return state;
}

nn::Vec ExtractorAutograd::forward(const FrozenPrefixState& state, ExtractorTape& tape) const {
    const auto lay = params_.layout();
    const auto taps = TapIndexSet::from(params_);

    tape.recs.clear();
    tape.tap_rec = {-1, -1, -1};
    for (int l = 0; l < kNumLevels; ++l) {
        if (state.pooled_valid[l]) tape.pooled[l] = state.pooled[l];
    }

    if (state.has_resume) {
        const int start_block = std::min(frozen_prefix_, taps.high_block) + 1;
        int layer = 0;
        for (int b = 1; b < start_block; ++b) layer += lay.convs_per_block[b - 1];
        const FeatureMap* cur = &state.resume;
        for (int block = start_block; block <= taps.high_block; ++block) {
            for (int j = 0; j < lay.convs_per_block[block - 1]; ++j, ++layer) {
                FeatureMap out = params_.backbone[layer].forward(*cur);
                nn::relu_inplace(out);
                tape.recs.push_back({false, layer, {}, std::move(out)});
                cur = &tape.recs.back().output;
                const int lvl = taps.level_at(layer);
                if (lvl >= 0) {
                    tape.pooled[lvl] = nn::global_avg_max_pool(*cur, &tape.pool_tape[lvl]);
                    tape.tap_rec[lvl] = static_cast<int>(tape.recs.size()) - 1;
                }
                if (layer == taps.high_layer) goto backbone_done;
            }
            {
                nn::PoolIndices pi;
                FeatureMap out = nn::maxpool2x2(*cur, &pi);
                tape.recs.push_back({true, -1, std::move(pi), std::move(out)});
                cur = &tape.recs.back().output;
            }
        }
    backbone_done:;
    }

    // fused head
    tape.flat.clear();
    tape.flat.reserve(static_cast<std::size_t>(kNumLevels) * params_.embed_dim);
    for (int l = 0; l < kNumLevels; ++l) {
        tape.c[l] = params_.level_conv[l].forward(tape.pooled[l]);
        tape.p[l] = params_.projection[l].forward(tape.c[l]);
        tape.flat.insert(tape.flat.end(), tape.p[l].begin(), tape.p[l].end());
    }
    tape.hidden = params_.attn_hidden.forward(tape.flat);
    for (auto& h : tape.hidden) h = std::tanh(h);
    tape.scores = params_.attn_out.forward(tape.hidden);

    std::vector<Vec> projected(tape.p.begin(), tape.p.end());
    FusedResult fused = fuse_projected(projected, tape.scores);
    tape.alpha = std::move(fused.alpha);
    tape.v = std::move(fused.v);
    return tape.v;
}

void ExtractorAutograd::backward(const FrozenPrefixState& state, const ExtractorTape& tape, const Vec& d_v) {
    const auto lay = params_.layout();

    // fusion: v = sum alpha_l p_l
    Vec d_alpha(kNumLevels, 0.0);
    std::array<Vec, kNumLevels> d_p;
    for (int l = 0; l < kNumLevels; ++l) {
        d_p[l].assign(params_.embed_dim, 0.0);
        double acc = 0.0;
        for (int j = 0; j < params_.embed_dim; ++j) {
            acc += d_v[j] * tape.p[l][j];
            d_p[l][j] = tape.alpha[l] * d_v[j];
        }
        d_alpha[l] = acc;
    }

    // softmax
    double dot = 0.0;
    for (int l = 0; l < kNumLevels; ++l) dot += d_alpha[l] * tape.alpha[l];
    Vec d_scores(kNumLevels, 0.0);
    for (int l = 0; l < kNumLevels; ++l) d_scores[l] = tape.alpha[l] * (d_alpha[l] - dot);

    // attention MLP
    Vec d_hidden = params_.attn_out.backward(tape.hidden, d_scores);
    for (std::size_t i = 0; i < d_hidden.size(); ++i) {
        d_hidden[i] *= 1.0 - tape.hidden[i] * tape.hidden[i];
    }
    const Vec d_flat = params_.attn_hidden.backward(tape.flat, d_hidden);
    for (int l = 0; l < kNumLevels; ++l) {
        const std::size_t off = static_cast<std::size_t>(l) * params_.embed_dim;
        for (int j = 0; j < params_.embed_dim; ++j) d_p[l][j] += d_flat[off + j];
    }

    // projections and level convs
    std::array<Vec, kNumLevels> d_pooled;
    for (int l = 0; l < kNumLevels; ++l) {
        const Vec d_c = params_.projection[l].backward(tape.c[l], d_p[l]);
        d_pooled[l] = params_.level_conv[l].backward(tape.pooled[l], d_c);
    }

    if (tape.recs.empty()) return;  // all taps cached; nothing flows into the backbone

    // gradients flowing into live tap maps
    std::array<FeatureMap, kNumLevels> d_tap;
    for (int l = 0; l < kNumLevels; ++l) {
        const int r = tape.tap_rec[l];
        if (r < 0) continue;
        d_tap[l] = nn::global_avg_max_pool_backward(tape.recs[r].output, d_pooled[l], tape.pool_tape[l]);
    }

    FeatureMap d_cur(tape.recs.back().output.channels, tape.recs.back().output.height,
                     tape.recs.back().output.width);
    for (int r = static_cast<int>(tape.recs.size()) - 1; r >= 0; --r) {
        const auto& rec = tape.recs[r];
        const FeatureMap& input = r > 0 ? tape.recs[r - 1].output : state.resume;
        if (rec.is_pool) {
            d_cur = nn::maxpool2x2_backward(input, d_cur, rec.pool_idx);
            continue;
        }
        for (int l = 0; l < kNumLevels; ++l) {
            if (tape.tap_rec[l] == r) {
                for (std::size_t i = 0; i < d_cur.data.size(); ++i) d_cur.data[i] += d_tap[l].data[i];
            }
        }
        nn::relu_backward_inplace(rec.output, d_cur);
        const bool train_layer =
            params_.trainable.count("backbone_block" + std::to_string(lay.block_of_layer(rec.layer_index))) > 0;
        d_cur = params_.backbone[rec.layer_index].backward(input, d_cur, train_layer);
    }
}

}  // namespace stylefp
