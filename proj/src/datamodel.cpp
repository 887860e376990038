#include "stylefp/datamodel.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace stylefp {

using ordered_json = nlohmann::ordered_json;

ImageTensor ImageTensor::filled(int height, int width, double value) {
    ImageTensor img;
    img.height = height;
    img.width = width;
    img.channels = 3;
    img.pixels.assign(static_cast<std::size_t>(height) * width * 3, value);
    return img;
}

void ImageTensor::validate() const {
    if (channels != 3) {
        throw SpecError("image must have exactly 3 channels, got " + std::to_string(channels));
    }
    if (height <= 0 || width <= 0) {
        throw SpecError("image dimensions must be positive, got " + std::to_string(height) + "x" +
                        std::to_string(width));
    }
    if (pixels.size() != static_cast<std::size_t>(height) * width * channels) {
        throw SpecError("pixel buffer length " + std::to_string(pixels.size()) +
                        " does not match h*w*c = " +
                        std::to_string(static_cast<std::size_t>(height) * width * channels));
    }
    for (double v : pixels) {
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
            throw SpecError("pixel value " + std::to_string(v) + " outside [0,1]");
        }
    }
}

std::string to_string(Label v) { return v == Label::positive ? "positive" : "negative"; }
std::string to_string(Split v) {
    switch (v) {
        case Split::train: return "train";
        case Split::val: return "val";
        default: return "test";
    }
}
std::string to_string(Origin v) {
    switch (v) {
        case Origin::original: return "original";
        case Origin::self_reconstructed: return "self_reconstructed";
        default: return "traditional_aug";
    }
}

Label label_from_string(const std::string& s) {
    if (s == "positive") return Label::positive;
    if (s == "negative") return Label::negative;
    throw ConfigError("unknown label '" + s + "' (expected positive|negative)");
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw ConfigError("unknown split '" + s + "' (expected train|val|test)");
}

Origin origin_from_string(const std::string& s) {
    if (s == "original") return Origin::original;
    if (s == "self_reconstructed") return Origin::self_reconstructed;
    if (s == "traditional_aug") return Origin::traditional_aug;
    throw ConfigError("unknown origin '" + s + "'");
}

std::string to_string(Level level) {
    switch (level) {
        case Level::low: return "low";
        case Level::mid: return "mid";
        default: return "high";
    }
}

Level level_from_string(const std::string& s) {
    if (s == "low") return Level::low;
    if (s == "mid") return Level::mid;
    if (s == "high") return Level::high;
    throw ConfigError("unknown level '" + s + "'");
}

const ManifestEntry* DatasetManifest::find(const std::string& id) const {
    for (const auto& e : entries) {
        if (e.id == id) return &e;
    }
    return nullptr;
}

std::vector<Violation> validate_manifest(const DatasetManifest& manifest) {
    std::vector<Violation> out;

    std::unordered_map<std::string, const ManifestEntry*> by_id;
    for (const auto& e : manifest.entries) {
        auto [it, inserted] = by_id.emplace(e.id, &e);
        if (!inserted) {
            out.push_back({e.id, "duplicate-id", "entry id '" + e.id + "' appears more than once"});
        }
    }

    bool train_pos = false;
    bool train_neg = false;
    for (const auto& e : manifest.entries) {
        if (e.split == Split::train) {
            train_pos = train_pos || e.label == Label::positive;
            train_neg = train_neg || e.label == Label::negative;
        }

        if (e.label == Label::negative && e.artist_id == manifest.target_artist_id) {
            out.push_back({e.id, "negative-shares-target-artist",
                           "negative entry '" + e.id + "' has the target artist id '" +
                               manifest.target_artist_id + "'; target works must be excluded from the negative pool"});
        }

        if (e.origin != Origin::original) {
            if (!e.parent_id) {
                out.push_back({e.id, "augmented-missing-parent",
                               "augmented entry '" + e.id + "' has no parent_id"});
                continue;
            }
            auto it = by_id.find(*e.parent_id);
            if (it == by_id.end()) {
                out.push_back({e.id, "augmented-missing-parent",
                               "augmented entry '" + e.id + "' references unknown parent '" + *e.parent_id + "'"});
                continue;
            }
            const ManifestEntry& parent = *it->second;
            if (e.label != parent.label) {
                out.push_back({e.id, "augmented-label-mismatch",
                               "augmented entry '" + e.id + "' does not inherit the label of parent '" +
                                   parent.id + "'"});
            }
            if (e.artist_id != parent.artist_id) {
                out.push_back({e.id, "augmented-artist-mismatch",
                               "augmented entry '" + e.id + "' does not inherit the artist of parent '" +
                                   parent.id + "'"});
            }
            if (e.split != parent.split) {
                out.push_back({e.id, "split-lineage",
                               "augmented entry '" + e.id + "' sits in split '" + to_string(e.split) +
                                   "' but its parent '" + parent.id + "' is in '" + to_string(parent.split) + "'"});
            }
        }
    }

    if (!train_pos) {
        out.push_back({"", "train-missing-positive", "train split contains no positive entry"});
    }
    if (!train_neg) {
        out.push_back({"", "train-missing-negative", "train split contains no negative entry"});
    }
    return out;
}

namespace {

void reject_unknown_keys(const ordered_json& obj, const std::set<std::string>& allowed,
                         const std::string& context) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw ConfigError(context + ": unknown key '" + it.key() + "'");
        }
    }
}

const ordered_json& require(const ordered_json& obj, const std::string& key, const std::string& context) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw ConfigError(context + ": missing key '" + key + "'");
    }
    return *it;
}

}  // namespace

DatasetManifest manifest_from_json(const std::string& text, const std::string& origin_name) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(origin_name + ": " + e.what());
    }
    if (!j.is_object()) {
        throw ConfigError(origin_name + ": manifest root must be an object");
    }
    reject_unknown_keys(j, {"version", "target_artist_id", "entries"}, origin_name);

    DatasetManifest m;
    m.version = require(j, "version", origin_name).get<int>();
    if (m.version != 1) {
        throw ConfigError(origin_name + ": unsupported manifest version " + std::to_string(m.version));
    }
    m.target_artist_id = require(j, "target_artist_id", origin_name).get<std::string>();
    const auto& entries = require(j, "entries", origin_name);
    if (!entries.is_array()) {
        throw ConfigError(origin_name + ": 'entries' must be an array");
    }
    for (const auto& je : entries) {
        const std::string ctx = origin_name + " entry " + std::to_string(m.entries.size());
        reject_unknown_keys(je, {"id", "path", "label", "artist_id", "split", "origin", "parent_id", "seed"},
                            ctx);
        ManifestEntry e;
        e.id = require(je, "id", ctx).get<std::string>();
        e.path = require(je, "path", ctx).get<std::string>();
        e.label = label_from_string(require(je, "label", ctx).get<std::string>());
        e.artist_id = require(je, "artist_id", ctx).get<std::string>();
        e.split = split_from_string(require(je, "split", ctx).get<std::string>());
        e.origin = origin_from_string(require(je, "origin", ctx).get<std::string>());
        if (je.contains("parent_id") && !je["parent_id"].is_null()) {
            e.parent_id = je["parent_id"].get<std::string>();
        }
        if (je.contains("seed") && !je["seed"].is_null()) {
            e.seed = je["seed"].get<std::int64_t>();
        }
        m.entries.push_back(std::move(e));
    }
    return m;
}

std::string manifest_to_json(const DatasetManifest& manifest) {
    ordered_json j;
    j["version"] = manifest.version;
    j["target_artist_id"] = manifest.target_artist_id;
    j["entries"] = ordered_json::array();
    for (const auto& e : manifest.entries) {
        ordered_json je;
        je["id"] = e.id;
        je["path"] = e.path;
        je["label"] = to_string(e.label);
        je["artist_id"] = e.artist_id;
        je["split"] = to_string(e.split);
        je["origin"] = to_string(e.origin);
        if (e.parent_id) je["parent_id"] = *e.parent_id;
        if (e.seed) je["seed"] = *e.seed;
        j["entries"].push_back(std::move(je));
    }
    return j.dump(2) + "\n";
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open manifest file '" + path + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return manifest_from_json(ss.str(), path);
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write manifest file '" + path + "'");
    }
    out << manifest_to_json(manifest);
}

void StyleFingerprint::validate(int embed_dim) const {
    if (static_cast<int>(vector.size()) != embed_dim) {
        throw SpecError("fingerprint vector length " + std::to_string(vector.size()) +
                        " does not match embed_dim " + std::to_string(embed_dim));
    }
    double sum = 0.0;
    for (double a : attention) {
        if (!(a >= 0.0)) {
            throw SpecError("attention weight " + std::to_string(a) + " is negative or NaN");
        }
        sum += a;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
        throw SpecError("attention weights sum to " + std::to_string(sum) + ", expected 1");
    }
    for (double v : vector) {
        if (!std::isfinite(v)) {
            throw SpecError("fingerprint contains a non-finite value");
        }
    }
}

std::string fingerprint_to_json(const StyleFingerprint& fp) {
    ordered_json j;
    j["extractor_version"] = fp.extractor_version;
    j["image_id"] = fp.image_id;
    j["embed_dim"] = fp.vector.size();
    j["vector"] = fp.vector;
    j["attention"] = fp.attention;
    return j.dump() + "\n";
}

StyleFingerprint fingerprint_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("fingerprint: ") + e.what());
    }
    reject_unknown_keys(j, {"extractor_version", "image_id", "embed_dim", "vector", "attention"}, "fingerprint");
    StyleFingerprint fp;
    fp.extractor_version = require(j, "extractor_version", "fingerprint").get<std::string>();
    fp.image_id = require(j, "image_id", "fingerprint").get<std::string>();
    fp.vector = require(j, "vector", "fingerprint").get<std::vector<double>>();
    fp.attention = require(j, "attention", "fingerprint").get<std::vector<double>>();
    const auto dim = require(j, "embed_dim", "fingerprint").get<std::size_t>();
    if (dim != fp.vector.size()) {
        throw ConfigError("fingerprint: embed_dim field disagrees with vector length");
    }
    return fp;
}

Verdict Verdict::make(std::string image_id, double distance, double radius) {
    if (!(distance >= 0.0) || !std::isfinite(distance)) {
        throw NumericError("verdict distance must be finite and >= 0");
    }
    if (!(radius >= 0.0) || !std::isfinite(radius)) {
        throw NumericError("verdict radius must be finite and >= 0");
    }
    Verdict v;
    v.image_id = std::move(image_id);
    v.distance = distance;
    v.radius = radius;
    v.inside = distance <= radius;
    v.boundary_margin = radius - distance;
    return v;
}

}  // namespace stylefp
