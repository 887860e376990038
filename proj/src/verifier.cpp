#include "stylefp/verifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace stylefp {

using nn::Vec;

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(beta > 0.0)) throw ConfigError("beta must be > 0");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
    if (margin < 0.0) throw ConfigError("margin must be >= 0");
    if (lambda_pos < 0.0 || lambda_neg < 0.0) throw ConfigError("loss weights must be >= 0");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be > 0");
    if (optimizer != "adamw") throw ConfigError("unsupported optimizer '" + optimizer + "'");
    if (lr_schedule != "constant" && lr_schedule.rfind("exp:", 0) != 0 &&
        lr_schedule.rfind("expafter:", 0) != 0) {
        throw ConfigError("lr_schedule must be 'constant', 'exp:<gamma>' or 'expafter:<epoch>:<gamma>'");
    }
    if (lr_schedule.rfind("exp:", 0) == 0) {
        const double gamma = std::stod(lr_schedule.substr(4));
        if (!(gamma > 0.0) || gamma > 1.0) throw ConfigError("exp schedule gamma must be in (0,1]");
    }
    if (lr_schedule.rfind("expafter:", 0) == 0) {
        const std::string rest = lr_schedule.substr(9);
        const auto colon = rest.find(':');
        if (colon == std::string::npos) throw ConfigError("expafter schedule needs <epoch>:<gamma>");
        const int start = std::stoi(rest.substr(0, colon));
        const double gamma = std::stod(rest.substr(colon + 1));
        if (start < 0) throw ConfigError("expafter start epoch must be >= 0");
        if (!(gamma > 0.0) || gamma > 1.0) throw ConfigError("expafter gamma must be in (0,1]");
    }
}

double TrainConfig::lr_at_epoch(int epoch) const {
    if (lr_schedule.rfind("exp:", 0) == 0) {
        const double gamma = std::stod(lr_schedule.substr(4));
        return learning_rate * std::pow(gamma, static_cast<double>(epoch));
    }
    if (lr_schedule.rfind("expafter:", 0) == 0) {
        const std::string rest = lr_schedule.substr(9);
        const auto colon = rest.find(':');
        const int start = std::stoi(rest.substr(0, colon));
        const double gamma = std::stod(rest.substr(colon + 1));
        if (epoch <= start) return learning_rate;
        return learning_rate * std::pow(gamma, static_cast<double>(epoch - start));
    }
    return learning_rate;
}

VerifierParams VerifierParams::create(int embed_dim, int proj_dim, std::uint64_t seed,
                                      const TrainConfig& config) {
    config.validate();
    if (embed_dim <= 0 || proj_dim <= 0) throw SpecError("verifier dimensions must be positive");
    VerifierParams p;
    p.projection = nn::Linear(embed_dim, proj_dim, /*with_bias=*/false);
    Rng rng(derive_seed(seed, "phi"));
    p.projection.init_he(rng);
    p.center.assign(proj_dim, 0.0);
    p.grad_center.assign(proj_dim, 0.0);
    p.margin = config.margin;
    p.beta = config.beta;
    p.epsilon = config.epsilon;
    p.lambda_pos = config.lambda_pos;
    p.lambda_neg = config.lambda_neg;
    return p;
}

void VerifierParams::validate() const {
    if (static_cast<int>(center.size()) != projection.out_dim) {
        throw SpecError("center dimension does not match the projection output dimension");
    }
    if (margin < 0.0 || !(beta > 0.0) || !(epsilon > 0.0) || lambda_pos < 0.0 || lambda_neg < 0.0) {
        throw SpecError("verifier hyperparameters out of range");
    }
    for (double h : {margin, beta, epsilon, lambda_pos, lambda_neg}) {
        if (!std::isfinite(h)) throw SpecError("verifier hyperparameters must be finite");
    }
    if (radius && (!(*radius >= 0.0) || !std::isfinite(*radius))) {
        throw SpecError("radius must be finite and >= 0");
    }
}

void VerifierParams::zero_grads() {
    projection.zero_grad();
    std::fill(grad_center.begin(), grad_center.end(), 0.0);
}

std::vector<nn::ParamRef> VerifierParams::all_params(double center_lr_scale) {
    std::vector<nn::ParamRef> refs;
    refs.push_back({"phi/weight", &projection.weight, &projection.grad_weight, true});
    refs.push_back({"center", &center, &grad_center, false, center_lr_scale});
    return refs;
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

namespace {

void check_distances(const std::vector<double>& d, const char* which) {
    if (d.empty()) {
        throw SpecError(std::string(which) + ": empty batch");
    }
    for (double v : d) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw NumericError(std::string(which) + ": distances must be finite and >= 0");
        }
    }
}

}  // namespace

double loss_pos(const std::vector<double>& distances, double margin) {
    check_distances(distances, "loss_pos");
    double acc = 0.0;
    for (double d : distances) {
        acc += std::sqrt(d * d + 1.0) - margin;
    }
    return acc / static_cast<double>(distances.size());
}

double loss_neg(const std::vector<double>& distances, double margin, double beta, double epsilon) {
    check_distances(distances, "loss_neg");
    if (!(epsilon > 0.0)) throw NumericError("loss_neg: epsilon must be > 0");
    double acc = 0.0;
    for (double d : distances) {
        const double s = std::sqrt(d * d + 1.0);
        double arg = 1.0 - std::exp(-beta * (s - margin)) + epsilon;
        // epsilon floor: for margin > 1 the exponential exceeds 1 at small
        // distances and the raw argument goes negative; the floor keeps the
        // log finite while preserving monotonicity
        if (arg < epsilon) arg = epsilon;
        acc += -std::log(arg);
    }
    return acc / static_cast<double>(distances.size());
}

double total_loss(const std::vector<double>& pos_distances, const std::vector<double>& neg_distances,
                  const TrainConfig& config) {
    return config.lambda_pos * loss_pos(pos_distances, config.margin) +
           config.lambda_neg * loss_neg(neg_distances, config.margin, config.beta, config.epsilon);
}

double loss_pos_ddi(double d, double /*margin*/, std::size_t n) {
    return d / (static_cast<double>(n) * std::sqrt(d * d + 1.0));
}

double loss_neg_ddi(double d, double margin, double beta, double epsilon, std::size_t n) {
    const double s = std::sqrt(d * d + 1.0);
    const double e = std::exp(-beta * (s - margin));
    const double arg = 1.0 - e + epsilon;
    if (arg <= epsilon && margin > 1.0) return 0.0;  // inside the floored region
    return -(beta * e * (d / s)) / (static_cast<double>(n) * arg);
}

// ---------------------------------------------------------------------------
// projection / distance
// ---------------------------------------------------------------------------

nn::Vec project_embed(const StyleFingerprint& fp, const VerifierParams& params) {
    if (static_cast<int>(fp.vector.size()) != params.projection.in_dim) {
        throw SpecError("fingerprint dimension " + std::to_string(fp.vector.size()) +
                        " does not match the projection input dimension " +
                        std::to_string(params.projection.in_dim));
    }
    return params.projection.forward(fp.vector);
}

double distance(const nn::Vec& z, const nn::Vec& center) {
    if (z.size() != center.size()) {
        throw SpecError("distance: dimension mismatch");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double diff = z[i] - center[i];
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

// ---------------------------------------------------------------------------
// sampler
// ---------------------------------------------------------------------------

IndexSampler::IndexSampler(const std::vector<Label>& labels, std::uint64_t seed, int batch_size,
                           bool weighted)
    : n_(labels.size()), seed_(seed), batch_size_(batch_size), weighted_(weighted) {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        (labels[i] == Label::positive ? positives_ : negatives_).push_back(static_cast<int>(i));
    }
    if (positives_.empty() || negatives_.empty()) {
        throw ConfigError("sampler requires both classes in the train split (got " +
                          std::to_string(positives_.size()) + " positive / " +
                          std::to_string(negatives_.size()) + " negative)");
    }
    batches_per_epoch_ = static_cast<int>((n_ + batch_size_ - 1) / batch_size_);
}

std::vector<int> IndexSampler::epoch_indices(int epoch) const {
    Rng rng(derive_seed(seed_, "sampler", static_cast<std::uint64_t>(epoch)));
    std::vector<int> out;
    if (!weighted_) {
        out.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) out[i] = static_cast<int>(i);
        // Fisher-Yates
        for (std::size_t i = n_ - 1; i > 0; --i) {
            const std::size_t j = rng.uniform_int(i + 1);
            std::swap(out[i], out[j]);
        }
        return out;
    }
    out.reserve(static_cast<std::size_t>(batches_per_epoch_) * batch_size_);
    for (int b = 0; b < batches_per_epoch_; ++b) {
        for (int s = 0; s < batch_size_; ++s) {
            // inverse class-frequency weights give each class equal mass
            if (rng.bernoulli(0.5)) {
                out.push_back(positives_[rng.uniform_int(positives_.size())]);
            } else {
                out.push_back(negatives_[rng.uniform_int(negatives_.size())]);
            }
        }
    }
    return out;
}

ManifestSampler make_sampler(const DatasetManifest& manifest, std::uint64_t seed, int batch_size,
                             bool weighted) {
    std::vector<const ManifestEntry*> train;
    for (const auto& e : manifest.entries) {
        if (e.split == Split::train) train.push_back(&e);
    }
    std::sort(train.begin(), train.end(),
              [](const ManifestEntry* a, const ManifestEntry* b) { return a->id < b->id; });
    std::vector<Label> labels;
    labels.reserve(train.size());
    for (const auto* e : train) labels.push_back(e->label);
    return ManifestSampler{std::move(train), IndexSampler(labels, seed, batch_size, weighted)};
}

// ---------------------------------------------------------------------------
// training core
// ---------------------------------------------------------------------------

namespace {

struct SampleOps {
    std::function<Vec(int idx)> forward;                       // fingerprint v
    std::function<void(int idx, const Vec& d_v)> backward;     // may be empty
    std::function<void()> zero_extra_grads;                    // may be empty
};

TrainResult train_core(const std::vector<Label>& labels, VerifierParams& verifier, const TrainConfig& config,
                       nn::AdamW& optimizer, int start_epoch, const SampleOps& ops,
                       std::vector<nn::ParamRef>& params, const EpochCallback& on_epoch) {
    config.validate();
    verifier.validate();
    optimizer.weight_decay = config.weight_decay;
    optimizer.eps = config.adam_epsilon;

    IndexSampler sampler(labels, config.seed, config.batch_size, config.weighted_sampling);

    // center initialization: mean projected positive fingerprint
    if (start_epoch == 0 && optimizer.step_count == 0) {
        Vec mean(verifier.center.size(), 0.0);
        std::size_t count = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] != Label::positive) continue;
            const Vec v = ops.forward(static_cast<int>(i));
            const Vec z = verifier.projection.forward(v);
            for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += z[j];
            ++count;
        }
        for (auto& m : mean) m /= static_cast<double>(count);
        verifier.center = std::move(mean);
    }

    TrainResult result;
    for (int epoch = start_epoch; epoch < config.epochs; ++epoch) {
        const double lr = config.lr_at_epoch(epoch);
        const std::vector<int> order = sampler.epoch_indices(epoch);
        const int batches = config.weighted_sampling
                                ? sampler.batches_per_epoch()
                                : static_cast<int>((order.size() + config.batch_size - 1) / config.batch_size);

        EpochStats stats;
        double pos_dist_sum = 0.0, neg_dist_sum = 0.0;
        std::size_t pos_count = 0, neg_count = 0;

        for (int b = 0; b < batches; ++b) {
            const std::size_t begin = static_cast<std::size_t>(b) * config.batch_size;
            const std::size_t end = std::min(order.size(), begin + config.batch_size);
            std::size_t np = 0, nn_count = 0;
            for (std::size_t i = begin; i < end; ++i) {
                (labels[order[i]] == Label::positive ? np : nn_count) += 1;
            }

            if (ops.zero_extra_grads) ops.zero_extra_grads();
            verifier.zero_grads();

            std::vector<double> pos_d, neg_d;
            pos_d.reserve(np);
            neg_d.reserve(nn_count);
            for (std::size_t i = begin; i < end; ++i) {
                const int idx = order[i];
                const bool is_pos = labels[idx] == Label::positive;
                const Vec v = ops.forward(idx);
                const Vec z = verifier.projection.forward(v);
                Vec diff(z.size());
                double d2 = 0.0;
                for (std::size_t j = 0; j < z.size(); ++j) {
                    diff[j] = z[j] - verifier.center[j];
                    d2 += diff[j] * diff[j];
                }
                const double d = std::sqrt(d2);
                if (!std::isfinite(d)) {
                    throw NumericError("non-finite distance in epoch " + std::to_string(epoch) + " batch " +
                                       std::to_string(b) + " (" + (is_pos ? "pos" : "neg") + " term)");
                }
                (is_pos ? pos_d : neg_d).push_back(d);

                const double gscale =
                    is_pos ? config.lambda_pos * loss_pos_ddi(d, config.margin, np)
                           : config.lambda_neg *
                                 loss_neg_ddi(d, config.margin, config.beta, config.epsilon, nn_count);
                if (gscale != 0.0 && d > 0.0) {
                    Vec d_z(z.size());
                    for (std::size_t j = 0; j < z.size(); ++j) {
                        d_z[j] = gscale * diff[j] / d;
                        verifier.grad_center[j] -= d_z[j];
                    }
                    const Vec d_v = verifier.projection.backward(v, d_z);
                    if (ops.backward) ops.backward(idx, d_v);
                }
            }

            const double lp = pos_d.empty() ? 0.0 : loss_pos(pos_d, config.margin);
            const double ln =
                neg_d.empty() ? 0.0 : loss_neg(neg_d, config.margin, config.beta, config.epsilon);
            const double lt = config.lambda_pos * lp + config.lambda_neg * ln;
            if (!std::isfinite(lt)) {
                throw NumericError("non-finite loss in epoch " + std::to_string(epoch) + " batch " +
                                   std::to_string(b) + (std::isfinite(lp) ? " (neg term)" : " (pos term)"));
            }
            stats.pos += lp;
            stats.neg += ln;
            stats.total += lt;
            for (double d : pos_d) pos_dist_sum += d;
            for (double d : neg_d) neg_dist_sum += d;
            pos_count += pos_d.size();
            neg_count += neg_d.size();

            optimizer.step(params, lr);
        }

        stats.pos /= batches;
        stats.neg /= batches;
        stats.total /= batches;
        stats.mean_pos_distance = pos_count ? pos_dist_sum / static_cast<double>(pos_count) : 0.0;
        stats.mean_neg_distance = neg_count ? neg_dist_sum / static_cast<double>(neg_count) : 0.0;
        result.history.push_back(stats);
        if (on_epoch) on_epoch(epoch, stats);

        // degenerate all-points-to-center guard. With repulsion active the
        // trigger is a sphere shrunk to numerical zero with negatives at the
        // center too; with repulsion disabled nothing opposes the pull-in, so
        // the trigger is relative collapse of the positive radius against the
        // negative distance scale.
        bool collapsed = false;
        if (pos_count > 0 && neg_count > 0) {
            if (config.lambda_neg > 0.0) {
                collapsed = stats.mean_pos_distance < 1e-6 && stats.mean_neg_distance < 1e-3;
            } else {
                collapsed = stats.mean_pos_distance < 0.05 * stats.mean_neg_distance;
            }
        }
        if (collapsed) {
            throw CollapseError(
                "training collapsed to the degenerate all-points-to-center solution at epoch " +
                    std::to_string(epoch) + " (mean positive distance " +
                    std::to_string(stats.mean_pos_distance) + ", mean negative distance " +
                    std::to_string(stats.mean_neg_distance) + ", lambda_neg " +
                    std::to_string(config.lambda_neg) + ")",
                epoch, stats.mean_pos_distance, stats.mean_neg_distance);
        }
    }
    return result;
}

}  // namespace

TrainResult train(const DatasetManifest& manifest, ExtractorParams& extractor, VerifierParams& verifier,
                  const TrainConfig& config, ImageSource& images, nn::AdamW& optimizer, int start_epoch,
                  const EpochCallback& on_epoch) {
    const auto violations = validate_manifest(manifest);
    if (!violations.empty()) {
        throw ConfigError("manifest is invalid: [" + violations.front().rule + "] " +
                          violations.front().message);
    }
    if (extractor.embed_dim != verifier.projection.in_dim) {
        throw SpecError("extractor embed_dim does not match the verifier projection input");
    }

    ManifestSampler ms = make_sampler(manifest, config.seed, config.batch_size, config.weighted_sampling);
    std::vector<Label> labels;
    labels.reserve(ms.train_entries.size());
    for (const auto* e : ms.train_entries) labels.push_back(e->label);

    ExtractorAutograd autograd(extractor);
    std::unordered_map<std::string, FrozenPrefixState> frozen_cache;
    ExtractorTape* tape = autograd.make_tape();
    int tape_owner = -1;

    auto frozen_state_of = [&](int idx) -> const FrozenPrefixState& {
        const ManifestEntry& entry = *ms.train_entries[idx];
        auto it = frozen_cache.find(entry.id);
        if (it == frozen_cache.end()) {
            it = frozen_cache.emplace(entry.id, autograd.compute_frozen_state(images.load(entry))).first;
        }
        return it->second;
    };

    SampleOps ops;
    ops.forward = [&](int idx) -> Vec {
        tape_owner = idx;
        return autograd.forward(frozen_state_of(idx), *tape);
    };
    ops.backward = [&](int idx, const Vec& d_v) {
        if (tape_owner != idx) {
            throw Error("internal: backward without matching forward");
        }
        autograd.backward(frozen_state_of(idx), *tape, d_v);
    };
    ops.zero_extra_grads = [&]() { extractor.zero_grads(); };

    const double center_scale =
        config.center_learning_rate >= 0.0 ? config.center_learning_rate / config.learning_rate : 1.0;
    std::vector<nn::ParamRef> params = extractor.trainable_params();
    for (auto& ref : verifier.all_params(center_scale)) params.push_back(ref);

    TrainResult result;
    try {
        result = train_core(labels, verifier, config, optimizer, start_epoch, ops, params, on_epoch);
    } catch (...) {
        autograd.free_tape(tape);
        throw;
    }
    autograd.free_tape(tape);
    return result;
}

TrainResult train_on_fingerprints(const std::vector<StyleFingerprint>& fingerprints,
                                  const std::vector<Label>& labels, VerifierParams& verifier,
                                  const TrainConfig& config, nn::AdamW& optimizer, int start_epoch,
                                  const EpochCallback& on_epoch) {
    if (fingerprints.size() != labels.size()) {
        throw SpecError("train_on_fingerprints: one label per fingerprint required");
    }
    for (const auto& fp : fingerprints) {
        if (static_cast<int>(fp.vector.size()) != verifier.projection.in_dim) {
            throw SpecError("fingerprint dimension does not match the verifier projection input");
        }
    }
    SampleOps ops;
    ops.forward = [&](int idx) -> Vec { return fingerprints[idx].vector; };

    const double center_scale =
        config.center_learning_rate >= 0.0 ? config.center_learning_rate / config.learning_rate : 1.0;
    std::vector<nn::ParamRef> params = verifier.all_params(center_scale);
    return train_core(labels, verifier, config, optimizer, start_epoch, ops, params, on_epoch);
}

// ---------------------------------------------------------------------------
// calibration
// ---------------------------------------------------------------------------

CalibrationResult calibrate_from_distances(const std::vector<double>& pos_distances,
                                           const std::vector<double>& neg_distances, const GridSpec& grid) {
    if (pos_distances.empty()) throw ConfigError("calibration: validation set has no positive class");
    if (neg_distances.empty()) throw ConfigError("calibration: validation set has no negative class");
    if (!(grid.fpr_target > 0.0 && grid.fpr_target < 1.0)) {
        throw ConfigError("calibration: fpr_target must be in (0,1)");
    }
    if (grid.size < 2) throw ConfigError("calibration: grid size must be >= 2");
    if (grid.criterion != "tpr_at_fpr" && grid.criterion != "youden") {
        throw ConfigError("calibration: unknown criterion '" + grid.criterion + "'");
    }
    for (double d : pos_distances) {
        if (!(d >= 0.0) || !std::isfinite(d)) throw NumericError("calibration: invalid positive distance");
    }
    for (double d : neg_distances) {
        if (!(d >= 0.0) || !std::isfinite(d)) throw NumericError("calibration: invalid negative distance");
    }

    std::vector<double> pos = pos_distances;
    std::vector<double> neg = neg_distances;
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());
    const double max_d = std::max(pos.back(), neg.back());
    const double min_d = std::min(pos.front(), neg.front());

    // candidates: uniform grid plus every observed distance, so the optimum
    // of the closed-ball rule is always attainable exactly
    std::vector<double> candidates;
    candidates.reserve(static_cast<std::size_t>(grid.size) + pos.size() + neg.size());
    for (int i = 0; i < grid.size; ++i) {
        candidates.push_back(max_d * static_cast<double>(i) / static_cast<double>(grid.size - 1));
    }
    candidates.insert(candidates.end(), pos.begin(), pos.end());
    candidates.insert(candidates.end(), neg.begin(), neg.end());
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    const double n = static_cast<double>(pos.size());
    const double m = static_cast<double>(neg.size());
    auto tpr_at = [&](double r) {
        return static_cast<double>(std::upper_bound(pos.begin(), pos.end(), r) - pos.begin()) / n;
    };
    auto fpr_info = [&](double r) {
        const std::size_t fp = std::upper_bound(neg.begin(), neg.end(), r) - neg.begin();
        return std::pair<double, std::size_t>(static_cast<double>(fp) / m, fp);
    };

    CalibrationResult result;
    result.grid = candidates;
    result.objective_per_candidate.resize(candidates.size());

    if (max_d == min_d) {
        // every sample at the same distance: no threshold separates anything
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            result.objective_per_candidate[i] = tpr_at(candidates[i]);
        }
        result.radius = max_d;
        result.criterion = "degenerate";
        return result;
    }

    int best = -1;
    if (grid.criterion == "tpr_at_fpr") {
        double best_tpr = -1.0, best_margin = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            const double r = candidates[i];
            const auto [fpr, fp] = fpr_info(r);
            const double tpr = tpr_at(r);
            const bool feasible = fpr <= grid.fpr_target;
            result.objective_per_candidate[i] = feasible ? tpr : -1.0;
            if (!feasible) continue;
            const double margin =
                fp < neg.size() ? neg[fp] - r : -std::numeric_limits<double>::infinity();
            if (tpr > best_tpr || (tpr == best_tpr && margin > best_margin)) {
                best = static_cast<int>(i);
                best_tpr = tpr;
                best_margin = margin;
            }
        }
        if (best >= 0) {
            result.radius = candidates[best];
            result.criterion = grid.criterion;
            return result;
        }
        // nothing satisfies the FPR budget: fall through to the Youden pick
    }

    double best_j = -std::numeric_limits<double>::infinity();
    double best_fpr = 2.0;
    best = -1;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const double r = candidates[i];
        const auto [fpr, fp] = fpr_info(r);
        (void)fp;
        const double j = tpr_at(r) - fpr;
        if (grid.criterion == "youden") result.objective_per_candidate[i] = j;
        if (j > best_j || (j == best_j && fpr < best_fpr)) {
            best = static_cast<int>(i);
            best_j = j;
            best_fpr = fpr;
        }
    }
    result.radius = candidates[best];
    result.criterion = grid.criterion == "youden" ? "youden" : "degenerate";
    return result;
}

CalibrationResult calibrate_radius(const std::vector<StyleFingerprint>& fingerprints,
                                   const std::vector<Label>& labels, const VerifierParams& params,
                                   const GridSpec& grid) {
    if (fingerprints.size() != labels.size()) {
        throw SpecError("calibrate_radius: one label per fingerprint required");
    }
    params.validate();
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < fingerprints.size(); ++i) {
        const double d = distance(project_embed(fingerprints[i], params), params.center);
        (labels[i] == Label::positive ? pos : neg).push_back(d);
    }
    return calibrate_from_distances(pos, neg, grid);
}

// ---------------------------------------------------------------------------
// inference
// ---------------------------------------------------------------------------

Verdict verify(const ImageTensor& image, const ExtractorParams& extractor, const VerifierParams& verifier,
               const std::string& image_id) {
    if (!verifier.radius) {
        throw ConfigError("verifier has no calibrated radius; run calibration before verify");
    }
    const StyleFingerprint fp = extract_fingerprint(image, extractor, image_id);
    const double d = distance(project_embed(fp, verifier), verifier.center);
    return Verdict::make(image_id, d, *verifier.radius);
}

}  // namespace stylefp
