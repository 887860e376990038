#include "stylefp/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace stylefp {

namespace {

using nlohmann::json;

json::binary_t to_blob(const nn::Vec& v) {
    json::binary_t blob;
    blob.resize(v.size() * sizeof(double));
    std::memcpy(blob.data(), v.data(), blob.size());
    return blob;
}

nn::Vec vec_from_blob(const json& j, const std::string& what) {
    if (!j.is_binary()) throw IoError("checkpoint field '" + what + "' is not a binary blob");
    const auto& blob = j.get_binary();
    if (blob.size() % sizeof(double) != 0) {
        throw IoError("checkpoint field '" + what + "' has a truncated blob");
    }
    nn::Vec v(blob.size() / sizeof(double));
    std::memcpy(v.data(), blob.data(), blob.size());
    return v;
}

void fill_from_blob(nn::Vec& dst, const json& j, const std::string& what) {
    nn::Vec v = vec_from_blob(j, what);
    if (v.size() != dst.size()) {
        throw IoError("checkpoint field '" + what + "' has length " + std::to_string(v.size()) +
                      ", expected " + std::to_string(dst.size()));
    }
    dst = std::move(v);
}

json train_config_to_json(const TrainConfig& c) {
    json j;
    j["learning_rate"] = c.learning_rate;
    j["optimizer"] = c.optimizer;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["lambda_pos"] = c.lambda_pos;
    j["lambda_neg"] = c.lambda_neg;
    j["beta"] = c.beta;
    j["margin"] = c.margin;
    j["epsilon"] = c.epsilon;
    j["weight_decay"] = c.weight_decay;
    j["adam_epsilon"] = c.adam_epsilon;
    j["seed"] = c.seed;
    j["weighted_sampling"] = c.weighted_sampling;
    j["deterministic"] = c.deterministic;
    j["lr_schedule"] = c.lr_schedule;
    j["center_learning_rate"] = c.center_learning_rate;
    return j;
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    c.learning_rate = j.at("learning_rate").get<double>();
    c.optimizer = j.at("optimizer").get<std::string>();
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.lambda_pos = j.at("lambda_pos").get<double>();
    c.lambda_neg = j.at("lambda_neg").get<double>();
    c.beta = j.at("beta").get<double>();
    c.margin = j.at("margin").get<double>();
    c.epsilon = j.at("epsilon").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.adam_epsilon = j.at("adam_epsilon").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.weighted_sampling = j.at("weighted_sampling").get<bool>();
    c.deterministic = j.at("deterministic").get<bool>();
    c.lr_schedule = j.at("lr_schedule").get<std::string>();
    c.center_learning_rate = j.at("center_learning_rate").get<double>();
    return c;
}

}  // namespace

void save_checkpoint(Checkpoint& ckpt, const std::string& path) {
    json j;
    j["format"] = "stylefp-checkpoint";
    j["format_version"] = Checkpoint::kFormatVersion;
    j["target_artist_id"] = ckpt.target_artist_id;

    json je;
    je["architecture"] = ckpt.extractor.spec.architecture;
    je["tap_low"] = ckpt.extractor.spec.tap_low;
    je["tap_mid"] = ckpt.extractor.spec.tap_mid;
    je["tap_high"] = ckpt.extractor.spec.tap_high;
    je["weights_source"] = ckpt.extractor.spec.weights_source;
    je["input_size"] = ckpt.extractor.spec.input_size;
    je["norm_mean"] = ckpt.extractor.spec.norm_mean;
    je["norm_std"] = ckpt.extractor.spec.norm_std;
    je["embed_dim"] = ckpt.extractor.embed_dim;
    je["attn_hidden_dim"] = ckpt.extractor.attn_hidden_dim;
    je["trainable"] = std::vector<std::string>(ckpt.extractor.trainable.begin(), ckpt.extractor.trainable.end());
    je["version"] = ckpt.extractor.version;
    for (const auto& ref : ckpt.extractor.all_params()) {
        je["weights"][ref.name] = to_blob(*ref.value);
    }
    j["extractor"] = std::move(je);

    json jv;
    jv["embed_dim"] = ckpt.verifier.projection.in_dim;
    jv["proj_dim"] = ckpt.verifier.projection.out_dim;
    jv["phi_weight"] = to_blob(ckpt.verifier.projection.weight);
    jv["center"] = to_blob(ckpt.verifier.center);
    jv["margin"] = ckpt.verifier.margin;
    jv["beta"] = ckpt.verifier.beta;
    jv["epsilon"] = ckpt.verifier.epsilon;
    jv["lambda_pos"] = ckpt.verifier.lambda_pos;
    jv["lambda_neg"] = ckpt.verifier.lambda_neg;
    jv["version"] = ckpt.verifier.version;
    if (ckpt.verifier.radius) {
        jv["radius"] = *ckpt.verifier.radius;
    } else {
        jv["radius"] = nullptr;
    }
    j["verifier"] = std::move(jv);

    j["train_config"] = train_config_to_json(ckpt.train_config);
    j["epochs_completed"] = ckpt.epochs_completed;

    nn::Vec hist;
    hist.reserve(ckpt.history.size() * 5);
    for (const auto& h : ckpt.history) {
        hist.push_back(h.total);
        hist.push_back(h.pos);
        hist.push_back(h.neg);
        hist.push_back(h.mean_pos_distance);
        hist.push_back(h.mean_neg_distance);
    }
    j["history"] = to_blob(hist);

    if (ckpt.calibration) {
        json jc;
        jc["radius"] = ckpt.calibration->radius;
        jc["criterion"] = ckpt.calibration->criterion;
        jc["grid"] = to_blob(ckpt.calibration->grid);
        jc["objective_per_candidate"] = to_blob(ckpt.calibration->objective_per_candidate);
        j["calibration"] = std::move(jc);
    } else {
        j["calibration"] = nullptr;
    }

    json jo;
    jo["step_count"] = ckpt.optimizer.step_count;
    jo["weight_decay"] = ckpt.optimizer.weight_decay;
    jo["slots"] = json::array();
    for (std::size_t i = 0; i < ckpt.optimizer.m.size(); ++i) {
        json slot;
        slot["m"] = to_blob(ckpt.optimizer.m[i]);
        slot["v"] = to_blob(ckpt.optimizer.v[i]);
        jo["slots"].push_back(std::move(slot));
    }
    j["optimizer"] = std::move(jo);

    const auto bytes = json::to_cbor(j);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint file '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to checkpoint file '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint file '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    json j;
    try {
        j = json::from_cbor(bytes);
    } catch (const std::exception& e) {
        throw IoError("checkpoint file '" + path + "' is corrupt: " + e.what());
    }
    if (j.value("format", "") != "stylefp-checkpoint") {
        throw IoError("'" + path + "' is not a checkpoint file");
    }
    if (j.value("format_version", -1) != Checkpoint::kFormatVersion) {
        throw IoError("checkpoint '" + path + "' has format version " +
                      std::to_string(j.value("format_version", -1)) + "; this build reads version " +
                      std::to_string(Checkpoint::kFormatVersion) + " only");
    }

    Checkpoint ckpt;
    ckpt.target_artist_id = j.at("target_artist_id").get<std::string>();

    const json& je = j.at("extractor");
    BackboneSpec spec;
    spec.architecture = je.at("architecture").get<std::string>();
    spec.tap_low = je.at("tap_low").get<std::string>();
    spec.tap_mid = je.at("tap_mid").get<std::string>();
    spec.tap_high = je.at("tap_high").get<std::string>();
    spec.weights_source = je.at("weights_source").get<std::string>();
    spec.input_size = je.at("input_size").get<int>();
    spec.norm_mean = je.at("norm_mean").get<std::array<double, 3>>();
    spec.norm_std = je.at("norm_std").get<std::array<double, 3>>();
    ckpt.extractor = ExtractorParams::create_shaped(spec, je.at("embed_dim").get<int>(),
                                                    je.at("attn_hidden_dim").get<int>());
    const auto trainable = je.at("trainable").get<std::vector<std::string>>();
    ckpt.extractor.trainable = std::set<std::string>(trainable.begin(), trainable.end());
    ckpt.extractor.version = je.at("version").get<std::string>();
    for (auto& ref : ckpt.extractor.all_params()) {
        if (!je.at("weights").contains(ref.name)) {
            throw IoError("checkpoint is missing extractor weights '" + ref.name + "'");
        }
        fill_from_blob(*ref.value, je.at("weights").at(ref.name), ref.name);
    }
    ckpt.extractor.validate();

    const json& jv = j.at("verifier");
    ckpt.verifier.projection = nn::Linear(jv.at("embed_dim").get<int>(), jv.at("proj_dim").get<int>(),
                                          /*with_bias=*/false);
    fill_from_blob(ckpt.verifier.projection.weight, jv.at("phi_weight"), "phi_weight");
    ckpt.verifier.center = vec_from_blob(jv.at("center"), "center");
    ckpt.verifier.grad_center.assign(ckpt.verifier.center.size(), 0.0);
    ckpt.verifier.margin = jv.at("margin").get<double>();
    ckpt.verifier.beta = jv.at("beta").get<double>();
    ckpt.verifier.epsilon = jv.at("epsilon").get<double>();
    ckpt.verifier.lambda_pos = jv.at("lambda_pos").get<double>();
    ckpt.verifier.lambda_neg = jv.at("lambda_neg").get<double>();
    ckpt.verifier.version = jv.at("version").get<std::string>();
    if (!jv.at("radius").is_null()) {
        ckpt.verifier.radius = jv.at("radius").get<double>();
    }
    ckpt.verifier.validate();

    ckpt.train_config = train_config_from_json(j.at("train_config"));
    ckpt.epochs_completed = j.at("epochs_completed").get<int>();

    const nn::Vec hist = vec_from_blob(j.at("history"), "history");
    if (hist.size() % 5 != 0) throw IoError("checkpoint history blob has invalid length");
    for (std::size_t i = 0; i < hist.size(); i += 5) {
        EpochStats h;
        h.total = hist[i];
        h.pos = hist[i + 1];
        h.neg = hist[i + 2];
        h.mean_pos_distance = hist[i + 3];
        h.mean_neg_distance = hist[i + 4];
        ckpt.history.push_back(h);
    }

    if (!j.at("calibration").is_null()) {
        const json& jc = j.at("calibration");
        CalibrationResult c;
        c.radius = jc.at("radius").get<double>();
        c.criterion = jc.at("criterion").get<std::string>();
        c.grid = vec_from_blob(jc.at("grid"), "calibration grid");
        c.objective_per_candidate = vec_from_blob(jc.at("objective_per_candidate"), "calibration objective");
        ckpt.calibration = std::move(c);
    }

    const json& jo = j.at("optimizer");
    ckpt.optimizer.step_count = jo.at("step_count").get<std::int64_t>();
    ckpt.optimizer.weight_decay = jo.at("weight_decay").get<double>();
    for (const auto& slot : jo.at("slots")) {
        ckpt.optimizer.m.push_back(vec_from_blob(slot.at("m"), "optimizer m"));
        ckpt.optimizer.v.push_back(vec_from_blob(slot.at("v"), "optimizer v"));
    }
    return ckpt;
}

}  // namespace stylefp
