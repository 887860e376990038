#pragma once

// Independent reference implementations used to check the production code.
// Everything here is deliberately brute force and shares no code with the
// library paths it validates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

namespace oracles {

// AUC by explicit pair counting: (2*wins + ties) / (2*n*m).
inline double auc_pairwise(const std::vector<double>& pos, const std::vector<double>& neg) {
    std::uint64_t wins = 0, ties = 0;
    for (double p : pos) {
        for (double q : neg) {
            if (p > q) {
                ++wins;
            } else if (p == q) {
                ++ties;
            }
        }
    }
    return static_cast<double>(2 * wins + ties) /
           (2.0 * static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

// TPR at FPR<=target by scanning every observed score (plus +inf) as a
// threshold with the decision rule score >= threshold.
inline double tpr_at_fpr_scan(const std::vector<double>& pos, const std::vector<double>& neg,
                              double target) {
    std::vector<double> thresholds = pos;
    thresholds.insert(thresholds.end(), neg.begin(), neg.end());
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    thresholds.push_back(std::numeric_limits<double>::infinity());

    double best_tpr = 0.0;
    for (double th : thresholds) {
        std::size_t fp = 0, tp = 0;
        for (double q : neg) {
            if (q >= th) ++fp;
        }
        if (static_cast<double>(fp) / static_cast<double>(neg.size()) > target) continue;
        for (double p : pos) {
            if (p >= th) ++tp;
        }
        best_tpr = std::max(best_tpr, static_cast<double>(tp) / static_cast<double>(pos.size()));
    }
    return best_tpr;
}

struct OperatingPoint {
    double tpr = 0.0;
    double fpr = 0.0;
};

inline OperatingPoint op_point_at_radius(const std::vector<double>& pos_d, const std::vector<double>& neg_d,
                                         double radius) {
    std::size_t tp = 0, fp = 0;
    for (double d : pos_d) {
        if (d <= radius) ++tp;
    }
    for (double d : neg_d) {
        if (d <= radius) ++fp;
    }
    return {static_cast<double>(tp) / static_cast<double>(pos_d.size()),
            static_cast<double>(fp) / static_cast<double>(neg_d.size())};
}

// Exhaustive radius search over all inter-distance midpoints (plus the
// extremes): the best feasible (FPR<=target) operating point by TPR.
inline OperatingPoint calibration_scan_midpoints(const std::vector<double>& pos_d,
                                                 const std::vector<double>& neg_d, double target) {
    std::vector<double> all = pos_d;
    all.insert(all.end(), neg_d.begin(), neg_d.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());

    std::vector<double> candidates;
    candidates.push_back(all.front() > 0.0 ? all.front() / 2.0 : 0.0);
    for (std::size_t i = 0; i + 1 < all.size(); ++i) {
        candidates.push_back(0.5 * (all[i] + all[i + 1]));
    }
    candidates.push_back(all.back());
    candidates.push_back(all.back() + 1.0);

    OperatingPoint best{-1.0, 0.0};
    for (double r : candidates) {
        const OperatingPoint op = op_point_at_radius(pos_d, neg_d, r);
        if (op.fpr > target) continue;
        if (op.tpr > best.tpr) best = op;
    }
    return best;
}

// Direct per-sample evaluations of the hypersphere losses.
inline double loss_pos_direct(const std::vector<double>& d, double m) {
    double acc = 0.0;
    for (double di : d) acc += std::sqrt(di * di + 1.0) - m;
    return acc / static_cast<double>(d.size());
}

inline double loss_neg_direct(const std::vector<double>& d, double m, double beta, double eps) {
    double acc = 0.0;
    for (double di : d) {
        const double s = std::sqrt(di * di + 1.0);
        acc += -std::log(1.0 - std::exp(-beta * (s - m)) + eps);
    }
    return acc / static_cast<double>(d.size());
}

// Central finite difference of a scalar function at x.
inline double central_diff(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

// |a-b| / max(floor, |a|, |b|)
inline double rel_err(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({floor, std::abs(a), std::abs(b)});
}

}  // namespace oracles
