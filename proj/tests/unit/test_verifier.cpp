#include <cmath>

#include <doctest.h>

#include "../support/oracles.hpp"
#include "stylefp/verifier.hpp"

using namespace stylefp;

namespace {

StyleFingerprint fp_from(const nn::Vec& v) {
    StyleFingerprint fp;
    fp.vector = v;
    fp.attention = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    return fp;
}

// two gaussian clusters in fingerprint space, separation ~10 sigma
void make_clusters(int per_class, int dim, std::vector<StyleFingerprint>& fps, std::vector<Label>& labels,
                   std::uint64_t seed) {
    Rng rng(seed);
    for (int i = 0; i < per_class; ++i) {
        nn::Vec v(dim);
        for (auto& x : v) x = rng.normal() * 1.0;
        v[0] += 0.0;
        fps.push_back(fp_from(v));
        labels.push_back(Label::positive);
    }
    for (int i = 0; i < per_class; ++i) {
        nn::Vec v(dim);
        for (auto& x : v) x = rng.normal() * 1.0;
        v[0] += 10.0;
        fps.push_back(fp_from(v));
        labels.push_back(Label::negative);
    }
}

TrainConfig cluster_config(int epochs = 20) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = 32;
    cfg.seed = 99;
    cfg.learning_rate = 1e-2;  // the tiny fixture needs bigger steps than the paper-scale default
    return cfg;
}

}  // namespace

TEST_CASE("identity projection returns the fingerprint itself") {
    VerifierParams p = VerifierParams::create(8, 8, 1, TrainConfig{});
    p.projection.init_identity();
    const nn::Vec v = {1, 2, 3, 4, 5, 6, 7, 8};
    CHECK(project_embed(fp_from(v), p) == v);
}

TEST_CASE("zero projection annihilates") {
    VerifierParams p = VerifierParams::create(8, 4, 1, TrainConfig{});
    p.projection.init_zero();
    const nn::Vec z = project_embed(fp_from({1, 2, 3, 4, 5, 6, 7, 8}), p);
    for (double x : z) CHECK(x == 0.0);
}

TEST_CASE("seeded projection is reproducible") {
    const VerifierParams a = VerifierParams::create(16, 8, 42, TrainConfig{});
    const VerifierParams b = VerifierParams::create(16, 8, 42, TrainConfig{});
    nn::Vec v(16);
    Rng rng(3);
    for (auto& x : v) x = rng.normal();
    CHECK(project_embed(fp_from(v), a) == project_embed(fp_from(v), b));
    CHECK_THROWS_AS(project_embed(fp_from(nn::Vec(15, 0.0)), a), SpecError);
}

TEST_CASE("distance basics") {
    CHECK(distance({1, 2, 3}, {1, 2, 3}) == 0.0);
    CHECK(distance({3.0, 4.0}, {0.0, 0.0}) == doctest::Approx(5.0).epsilon(1e-15));
    CHECK_THROWS_AS(distance({1.0}, {1.0, 2.0}), SpecError);
}

TEST_CASE("distance matches an elementwise oracle in 512-D") {
    Rng rng(8);
    nn::Vec z(512), o(512);
    for (auto& x : z) x = rng.normal();
    for (auto& x : o) x = rng.normal();
    double acc = 0.0;
    for (int i = 0; i < 512; ++i) acc += (z[i] - o[i]) * (z[i] - o[i]);
    CHECK(std::abs(distance(z, o) - std::sqrt(acc)) < 1e-9);
}

TEST_CASE("positive loss worked values") {
    CHECK(loss_pos({0.0}, 1.0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(loss_pos({std::sqrt(3.0)}, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(loss_pos({0.0, std::sqrt(3.0)}, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS(loss_pos({}, 1.0), SpecError);
}

TEST_CASE("negative loss worked values") {
    const double v0 = loss_neg({0.0}, 1.0, 0.3, 1e-6);
    CHECK(v0 == doctest::Approx(-std::log(1e-6)).epsilon(1e-12));
    CHECK(std::abs(v0 - 13.8155) < 1e-4);

    const double v1 = loss_neg({std::sqrt(3.0)}, 1.0, 0.3, 1e-6);
    const double expected = -std::log(1.0 - std::exp(-0.3) + 1e-6);
    CHECK(v1 == doctest::Approx(expected).epsilon(1e-12));
    CHECK(std::abs(v1 - 1.35022) < 1e-4);

    const double v2 = loss_neg({1e6}, 1.0, 0.3, 1e-6);
    CHECK(std::abs(v2 - (-std::log(1.0 + 1e-6))) < 1e-12);
    CHECK(std::abs(v2) < 2e-6);

    CHECK_THROWS_AS(loss_neg({}, 1.0, 0.3, 1e-6), SpecError);
}

TEST_CASE("negative loss stays finite for every d >= 0, margin above 1 included") {
    for (double m : {0.0, 0.5, 1.0, 1.5, 3.0}) {
        for (double d : {0.0, 0.3, 1.0, 5.0, 1e4}) {
            CHECK(std::isfinite(loss_neg({d}, m, 0.3, 1e-6)));
        }
    }
}

TEST_CASE("total loss composes the worked values") {
    TrainConfig cfg;
    const std::vector<double> pos = {0.0, std::sqrt(3.0)};
    const std::vector<double> neg = {std::sqrt(3.0)};
    const double expected = 0.5 + loss_neg(neg, 1.0, 0.3, 1e-6);
    CHECK(total_loss(pos, neg, cfg) == doctest::Approx(expected).epsilon(1e-12));

    cfg.lambda_pos = 0.0;
    CHECK(total_loss(pos, neg, cfg) == loss_neg(neg, 1.0, 0.3, 1e-6));
}

TEST_CASE("total loss is linear in the lambda weights") {
    Rng rng(17);
    std::vector<double> pos(5), neg(7);
    for (auto& d : pos) d = rng.uniform(0.0, 6.0);
    for (auto& d : neg) d = rng.uniform(0.0, 6.0);
    TrainConfig cfg;
    const double lp = loss_pos(pos, cfg.margin);
    const double ln = loss_neg(neg, cfg.margin, cfg.beta, cfg.epsilon);
    for (int i = 0; i < 20; ++i) {
        cfg.lambda_pos = rng.uniform(0.0, 3.0);
        cfg.lambda_neg = rng.uniform(0.0, 3.0);
        CHECK(std::abs(total_loss(pos, neg, cfg) - (cfg.lambda_pos * lp + cfg.lambda_neg * ln)) < 1e-12);
    }
}

TEST_CASE("loss gradients match finite differences") {
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        const double d = rng.uniform(1e-3, 10.0);
        const double m = rng.uniform(0.0, 1.0);
        const double beta = rng.uniform(0.1, 1.0);
        const double eps = 1e-6;
        const double h = 1e-6;

        const double fd_pos =
            oracles::central_diff([&](double x) { return loss_pos({x}, m); }, d, h);
        CHECK(oracles::rel_err(loss_pos_ddi(d, m, 1), fd_pos) < 1e-5);

        const double fd_neg =
            oracles::central_diff([&](double x) { return loss_neg({x}, m, beta, eps); }, d, h);
        CHECK(oracles::rel_err(loss_neg_ddi(d, m, beta, eps, 1), fd_neg) < 1e-5);
    }
}

TEST_CASE("loss monotonicity in each distance") {
    Rng rng(32);
    for (int trial = 0; trial < 200; ++trial) {
        const double d1 = rng.uniform(0.0, 8.0);
        const double d2 = d1 + rng.uniform(0.0, 4.0);
        const double m = rng.uniform(0.0, 1.0);
        const double beta = rng.uniform(0.1, 1.0);
        CHECK(loss_pos({d2}, m) >= loss_pos({d1}, m));
        CHECK(loss_neg({d2}, m, beta, 1e-6) <= loss_neg({d1}, m, beta, 1e-6));
    }
}

TEST_CASE("weighted sampler balances a 10/990 imbalance") {
    std::vector<Label> labels(1000, Label::negative);
    for (int i = 0; i < 10; ++i) labels[i * 97] = Label::positive;
    IndexSampler sampler(labels, 5, 32, true);

    std::size_t positives = 0, total = 0;
    for (int epoch = 0; epoch < 32; ++epoch) {  // 32 epochs x 32 batches = 1024 batches
        const auto idx = sampler.epoch_indices(epoch);
        for (int i : idx) {
            positives += labels[i] == Label::positive;
            ++total;
        }
    }
    const double fraction = static_cast<double>(positives) / static_cast<double>(total);
    CHECK(fraction > 0.45);
    CHECK(fraction < 0.55);
}

TEST_CASE("weighted sampler on balanced classes is per-draw uniform") {
    std::vector<Label> labels(100);
    for (int i = 0; i < 100; ++i) labels[i] = i < 50 ? Label::positive : Label::negative;
    IndexSampler sampler(labels, 6, 25, true);
    std::vector<int> counts(100, 0);
    int total = 0;
    for (int epoch = 0; epoch < 400; ++epoch) {
        for (int i : sampler.epoch_indices(epoch)) {
            ++counts[i];
            ++total;
        }
    }
    // each index should appear ~1% of the time
    for (int c : counts) {
        const double p = static_cast<double>(c) / total;
        CHECK(p > 0.005);
        CHECK(p < 0.016);
    }
}

TEST_CASE("sampler is deterministic per seed and refuses single-class input") {
    std::vector<Label> labels = {Label::positive, Label::negative, Label::negative, Label::positive};
    IndexSampler a(labels, 11, 2, true);
    IndexSampler b(labels, 11, 2, true);
    for (int e = 0; e < 3; ++e) CHECK(a.epoch_indices(e) == b.epoch_indices(e));
    IndexSampler c(labels, 12, 2, true);
    CHECK(a.epoch_indices(0) != c.epoch_indices(0));

    CHECK_THROWS_AS(IndexSampler(std::vector<Label>(5, Label::positive), 1, 2, true), ConfigError);
}

TEST_CASE("training separates well-separated fingerprint clusters") {
    std::vector<StyleFingerprint> fps;
    std::vector<Label> labels;
    make_clusters(60, 512, fps, labels, 900);

    VerifierParams verifier = VerifierParams::create(512, 64, 5, cluster_config());
    nn::AdamW opt;
    const TrainResult result = train_on_fingerprints(fps, labels, verifier, cluster_config(), opt);
    REQUIRE(result.history.size() == 20);

    CHECK(result.history.back().mean_pos_distance < result.history.back().mean_neg_distance);

    // 5-epoch moving average of the total loss is non-increasing
    auto moving = [&](std::size_t i) {
        double acc = 0.0;
        for (std::size_t k = i; k < i + 5; ++k) acc += result.history[k].total;
        return acc / 5.0;
    };
    for (std::size_t i = 0; i + 6 <= result.history.size(); ++i) {
        CHECK(moving(i + 1) <= moving(i) + 1e-9);
    }
}

TEST_CASE("zero epochs returns initialization unchanged with empty history") {
    std::vector<StyleFingerprint> fps;
    std::vector<Label> labels;
    make_clusters(8, 16, fps, labels, 901);
    TrainConfig cfg = cluster_config(0);
    VerifierParams verifier = VerifierParams::create(16, 8, 5, cfg);
    const nn::Vec weight_before = verifier.projection.weight;
    nn::AdamW opt;
    const TrainResult result = train_on_fingerprints(fps, labels, verifier, cfg, opt);
    CHECK(result.history.empty());
    CHECK(verifier.projection.weight == weight_before);
}

TEST_CASE("lambda_neg=0 collapses positive distances (degenerate pull-in)") {
    std::vector<StyleFingerprint> fps;
    std::vector<Label> labels;
    make_clusters(40, 64, fps, labels, 902);

    TrainConfig cfg = cluster_config(30);
    cfg.lambda_neg = 0.0;
    VerifierParams verifier = VerifierParams::create(64, 16, 5, cfg);
    nn::AdamW opt;
    std::vector<double> pos_means;
    try {
        const TrainResult result = train_on_fingerprints(fps, labels, verifier, cfg, opt);
        for (const auto& h : result.history) pos_means.push_back(h.mean_pos_distance);
    } catch (const CollapseError& e) {
        // the guard firing *is* the documented endpoint of this ablation
        CHECK(e.mean_pos_distance < 1e-6);
        return;
    }
    REQUIRE(pos_means.size() >= 10);
    auto moving = [&](std::size_t i) {
        double acc = 0.0;
        for (std::size_t k = i; k < i + 5; ++k) acc += pos_means[k];
        return acc / 5.0;
    };
    for (std::size_t i = 0; i + 6 <= pos_means.size(); ++i) {
        CHECK(moving(i + 1) <= moving(i) + 1e-9);
    }
}

TEST_CASE("two identical training runs produce identical histories") {
    std::vector<StyleFingerprint> fps;
    std::vector<Label> labels;
    make_clusters(30, 32, fps, labels, 903);
    const TrainConfig cfg = cluster_config(8);

    VerifierParams v1 = VerifierParams::create(32, 16, 5, cfg);
    VerifierParams v2 = VerifierParams::create(32, 16, 5, cfg);
    nn::AdamW o1, o2;
    const TrainResult r1 = train_on_fingerprints(fps, labels, v1, cfg, o1);
    const TrainResult r2 = train_on_fingerprints(fps, labels, v2, cfg, o2);
    REQUIRE(r1.history.size() == r2.history.size());
    for (std::size_t i = 0; i < r1.history.size(); ++i) {
        CHECK(r1.history[i].total == r2.history[i].total);
        CHECK(r1.history[i].mean_pos_distance == r2.history[i].mean_pos_distance);
    }
    CHECK(v1.projection.weight == v2.projection.weight);
    CHECK(v1.center == v2.center);
}

TEST_CASE("calibration picks the max-margin radius in a separable interval") {
    GridSpec grid;
    const CalibrationResult r = calibrate_from_distances({1.0, 2.0}, {5.0, 6.0}, grid);
    CHECK(r.criterion == "tpr_at_fpr");
    CHECK(r.radius == 2.0);  // observed distances are candidates; 2.0 maximizes the gap to 5.0
    CHECK(r.grid.size() == r.objective_per_candidate.size());
    // radius must be a member of the evaluated grid
    CHECK(std::find(r.grid.begin(), r.grid.end(), r.radius) != r.grid.end());
    const auto op = oracles::op_point_at_radius({1.0, 2.0}, {5.0, 6.0}, r.radius);
    CHECK(op.tpr == 1.0);
    CHECK(op.fpr == 0.0);
}

TEST_CASE("calibration flags the all-equal-distances case as degenerate") {
    const CalibrationResult r = calibrate_from_distances({2.5, 2.5}, {2.5, 2.5, 2.5}, GridSpec{});
    CHECK(r.criterion == "degenerate");
    CHECK(r.radius == 2.5);
}

TEST_CASE("calibration refuses a single-class validation set") {
    CHECK_THROWS_AS(calibrate_from_distances({}, {1.0}, GridSpec{}), ConfigError);
    CHECK_THROWS_AS(calibrate_from_distances({1.0}, {}, GridSpec{}), ConfigError);
}

TEST_CASE("line-search radius reaches the midpoint-scan operating point") {
    Rng rng(41);
    GridSpec grid;
    for (int trial = 0; trial < 60; ++trial) {
        std::vector<double> pos(30 + rng.uniform_int(40)), neg(30 + rng.uniform_int(40));
        for (auto& d : pos) d = rng.uniform(0.0, 4.0);
        for (auto& d : neg) d = rng.uniform(2.0, 9.0);
        const CalibrationResult r = calibrate_from_distances(pos, neg, grid);
        const auto got = oracles::op_point_at_radius(pos, neg, r.radius);
        const auto want = oracles::calibration_scan_midpoints(pos, neg, grid.fpr_target);
        CHECK(got.tpr == want.tpr);
        CHECK(got.fpr <= grid.fpr_target);
    }
}

TEST_CASE("calibrated verdicts: boundary is inside, center is inside any radius") {
    CHECK(Verdict::make("a", 3.25, 3.25).inside);
    CHECK(Verdict::make("b", 0.0, 0.0).inside);

    VerifierParams p = VerifierParams::create(4, 4, 1, TrainConfig{});
    p.projection.init_identity();
    p.center = {1.0, 2.0, 3.0, 4.0};
    p.radius = 0.0;
    const nn::Vec z = project_embed(fp_from({1.0, 2.0, 3.0, 4.0}), p);
    CHECK(distance(z, p.center) == 0.0);
}

TEST_CASE("decision is invariant under monotone reparameterization of distances") {
    Rng rng(43);
    for (int trial = 0; trial < 100; ++trial) {
        const double d = rng.uniform(0.0, 10.0);
        const double r = rng.uniform(0.0, 10.0);
        const double a = rng.uniform(0.1, 3.0);
        const double b = rng.uniform(0.0, 2.0);
        auto g = [&](double x) { return a * (x * x * x + x) + b; };  // strictly increasing
        CHECK(Verdict::make("x", d, r).inside == Verdict::make("x", g(d), g(r)).inside);
    }
}

TEST_CASE("cluster fixture end to end: train, calibrate, verify held-out points") {
    std::vector<StyleFingerprint> fps;
    std::vector<Label> labels;
    make_clusters(50, 64, fps, labels, 904);

    // hold out the last 10 of each class
    std::vector<StyleFingerprint> train_fps;
    std::vector<Label> train_labels;
    std::vector<StyleFingerprint> held_pos, held_neg;
    for (std::size_t i = 0; i < fps.size(); ++i) {
        const bool is_pos = labels[i] == Label::positive;
        const std::size_t rank = i % 50;
        if (rank >= 40) {
            (is_pos ? held_pos : held_neg).push_back(fps[i]);
        } else {
            train_fps.push_back(fps[i]);
            train_labels.push_back(labels[i]);
        }
    }

    TrainConfig cfg = cluster_config(25);
    VerifierParams verifier = VerifierParams::create(64, 16, 5, cfg);
    nn::AdamW opt;
    train_on_fingerprints(train_fps, train_labels, verifier, cfg, opt);

    std::vector<double> val_pos, val_neg;
    for (const auto& fp : held_pos) val_pos.push_back(distance(project_embed(fp, verifier), verifier.center));
    for (const auto& fp : held_neg) val_neg.push_back(distance(project_embed(fp, verifier), verifier.center));
    const CalibrationResult cal = calibrate_from_distances(val_pos, val_neg, GridSpec{});
    verifier.radius = cal.radius;

    int pos_inside = 0, neg_inside = 0;
    for (double d : val_pos) pos_inside += Verdict::make("p", d, cal.radius).inside;
    for (double d : val_neg) neg_inside += Verdict::make("n", d, cal.radius).inside;
    CHECK(pos_inside == static_cast<int>(val_pos.size()));
    CHECK(neg_inside == 0);
}
