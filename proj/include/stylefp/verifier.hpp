#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stylefp/datamodel.hpp"
#include "stylefp/extractor.hpp"
#include "stylefp/nn.hpp"

namespace stylefp {

struct TrainConfig {
    double learning_rate = 5e-4;
    // decoupled-weight-decay adaptive gradient method
    std::string optimizer = "adamw";
    int epochs = 50;
    int batch_size = 32;
    double lambda_pos = 1.0;
    double lambda_neg = 1.0;
    double beta = 0.3;
    double margin = 1.0;
    double epsilon = 1e-6;
    double weight_decay = 0.0;
    // optimizer stability constant (distinct from the loss epsilon); larger
    // values trade adaptivity for gradient-proportional steps near optima
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 0;
    bool weighted_sampling = true;
    bool deterministic = true;
    // "constant" or "exp:<gamma>" (per-epoch multiplicative decay)
    std::string lr_schedule = "constant";
    // < 0 means: same as learning_rate (one optimizer group)
    double center_learning_rate = -1.0;

    void validate() const;
    double lr_at_epoch(int epoch) const;
};

// The trained verdict machine: projection phi, learnable center o, the loss
// hyperparameters, and (after calibration) the radius R.
struct VerifierParams {
    nn::Linear projection;  // embed_dim -> proj_dim, bias-free
    nn::Vec center;
    nn::Vec grad_center;
    double margin = 1.0;
    double beta = 0.3;
    double epsilon = 1e-6;
    double lambda_pos = 1.0;
    double lambda_neg = 1.0;
    std::optional<double> radius;
    std::string version = "sphere1";

    static VerifierParams create(int embed_dim, int proj_dim, std::uint64_t seed, const TrainConfig& config);

    int proj_dim() const { return projection.out_dim; }
    void validate() const;
    void zero_grads();
    std::vector<nn::ParamRef> all_params(double center_lr_scale = 1.0);
};

// --- losses (per-batch means of the per-sample terms) ---

double loss_pos(const std::vector<double>& distances, double margin);
double loss_neg(const std::vector<double>& distances, double margin, double beta, double epsilon);
double total_loss(const std::vector<double>& pos_distances, const std::vector<double>& neg_distances,
                  const TrainConfig& config);

// analytic per-sample derivatives d(loss)/d(d_i) for a batch of size n
double loss_pos_ddi(double d, double margin, std::size_t n);
double loss_neg_ddi(double d, double margin, double beta, double epsilon, std::size_t n);

// --- projection / distance ---

nn::Vec project_embed(const StyleFingerprint& fp, const VerifierParams& params);
double distance(const nn::Vec& z, const nn::Vec& center);

// --- sampling ---

// Batch index stream where each draw picks a sample with probability weight
// inversely proportional to its class frequency (expected positive fraction
// 1/2), with replacement. Deterministic given (seed, epoch).
class IndexSampler {
public:
    IndexSampler(const std::vector<Label>& labels, std::uint64_t seed, int batch_size, bool weighted);

    int batches_per_epoch() const { return batches_per_epoch_; }
    int batch_size() const { return batch_size_; }
    // all draws for one epoch, length batches_per_epoch * batch_size for the
    // weighted stream (unweighted mode is a plain without-replacement shuffle)
    std::vector<int> epoch_indices(int epoch) const;

private:
    std::vector<int> positives_;
    std::vector<int> negatives_;
    std::size_t n_ = 0;
    std::uint64_t seed_ = 0;
    int batch_size_ = 0;
    int batches_per_epoch_ = 0;
    bool weighted_ = true;
};

struct ManifestSampler {
    std::vector<const ManifestEntry*> train_entries;  // sorted by id
    IndexSampler sampler;
};

ManifestSampler make_sampler(const DatasetManifest& manifest, std::uint64_t seed, int batch_size,
                             bool weighted = true);

// --- training ---

struct EpochStats {
    double total = 0.0;
    double pos = 0.0;
    double neg = 0.0;
    double mean_pos_distance = 0.0;
    double mean_neg_distance = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;
};

class ImageSource {
public:
    virtual ~ImageSource() = default;
    virtual ImageTensor load(const ManifestEntry& entry) = 0;
};

using EpochCallback = std::function<void(int epoch, const EpochStats&)>;

// Joint minibatch training of the verifier (phi, o) together with the
// extractor's trainable groups. Center o is initialized to the mean projected
// positive fingerprint when starting from scratch. Deterministic given seed.
TrainResult train(const DatasetManifest& manifest, ExtractorParams& extractor, VerifierParams& verifier,
                  const TrainConfig& config, ImageSource& images, nn::AdamW& optimizer,
                  int start_epoch = 0, const EpochCallback& on_epoch = nullptr);

// Extractor-bypass variant operating on precomputed fingerprints (phi and o
// only). Same losses, sampler, guard, and determinism contract.
TrainResult train_on_fingerprints(const std::vector<StyleFingerprint>& fingerprints,
                                  const std::vector<Label>& labels, VerifierParams& verifier,
                                  const TrainConfig& config, nn::AdamW& optimizer, int start_epoch = 0,
                                  const EpochCallback& on_epoch = nullptr);

// --- calibration ---

struct GridSpec {
    int size = 512;
    std::string criterion = "tpr_at_fpr";  // or "youden"
    double fpr_target = 0.01;
};

struct CalibrationResult {
    double radius = 0.0;
    std::vector<double> grid;
    std::vector<double> objective_per_candidate;
    std::string criterion;
};

// Line search over candidate radii: a uniform grid from 0 to the maximum
// observed validation distance, augmented with every observed distance so the
// optimum of the closed-ball decision rule is always attainable.
CalibrationResult calibrate_from_distances(const std::vector<double>& pos_distances,
                                           const std::vector<double>& neg_distances, const GridSpec& grid);

CalibrationResult calibrate_radius(const std::vector<StyleFingerprint>& fingerprints,
                                   const std::vector<Label>& labels, const VerifierParams& params,
                                   const GridSpec& grid);

// --- inference ---

Verdict verify(const ImageTensor& image, const ExtractorParams& extractor, const VerifierParams& verifier,
               const std::string& image_id = "");

}  // namespace stylefp
