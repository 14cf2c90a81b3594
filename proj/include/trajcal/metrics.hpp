#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "trajcal/gaussian.hpp"
#include "trajcal/types.hpp"

namespace trajcal {

/// Calibration report over the standard-deviation levels and a 100-level
/// confidence grid. Negative deltas mean the predictor is overconfident
/// (its regions capture less ground truth than claimed), positive means
/// underconfident.
struct EsvReport {
    double delta_esv_1 = 0.0;
    double delta_esv_2 = 0.0;
    double delta_esv_3 = 0.0;
    double mean_abs_delta_esv = 0.0;

    struct LevelRow {
        double level = 0.0;      // nominal confidence level
        double empirical = 0.0;  // fraction of truth inside the region
        double ideal = 0.0;      // coverage an ideal Gaussian would give
    };
    std::vector<LevelRow> levels;  // 100 rows, levels k/100 (1.00 -> 0.9999)
};

/// Mean Euclidean error of the predicted means over all steps (ADE) and over
/// the final step only (FDE).
inline std::pair<double, double> ade_fde(const PredictionBatch& preds,
                                         const std::vector<Point2>& truth) {
    if (preds.gaussians.empty()) throw std::invalid_argument("ade_fde: empty batch");
    if (truth.size() != preds.gaussians.size()) {
        throw std::invalid_argument("ade_fde: prediction/truth size mismatch");
    }
    const int nw = preds.windows();
    const int h = preds.horizon;
    double ade = 0.0, fde = 0.0;
    for (int w = 0; w < nw; ++w) {
        for (int t = 0; t < h; ++t) {
            const size_t idx = static_cast<size_t>(w) * h + t;
            const double e = distance(preds.gaussians[idx].mean(), truth[idx]);
            ade += e;
            if (t == h - 1) fde += e;
        }
    }
    return {ade / (static_cast<double>(nw) * h), fde / nw};
}

/// Empirical-vs-ideal coverage report. The i-sigma level is the Mahalanobis
/// ball d2 <= i^2; the 100-level grid uses p_k = k/100 with the top level
/// replaced by 0.9999 to keep its d2 threshold finite.
inline EsvReport esv_report(const PredictionBatch& preds, const std::vector<Point2>& truth) {
    if (preds.gaussians.empty()) throw std::invalid_argument("esv_report: empty batch");
    if (truth.size() != preds.gaussians.size()) {
        throw std::invalid_argument("esv_report: prediction/truth size mismatch");
    }
    std::vector<double> d2;
    d2.reserve(preds.gaussians.size());
    for (size_t i = 0; i < preds.gaussians.size(); ++i) {
        d2.push_back(mahalanobis_sq(truth[i], preds.gaussians[i]));
    }
    std::sort(d2.begin(), d2.end());
    const double n = static_cast<double>(d2.size());
    const auto coverage = [&](double thr) {
        return static_cast<double>(std::upper_bound(d2.begin(), d2.end(), thr) - d2.begin()) / n;
    };

    EsvReport r;
    r.delta_esv_1 = coverage(1.0) - chi2_cdf_2dof(1.0);
    r.delta_esv_2 = coverage(4.0) - chi2_cdf_2dof(4.0);
    r.delta_esv_3 = coverage(9.0) - chi2_cdf_2dof(9.0);

    r.levels.reserve(100);
    double abs_sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double p = k == 100 ? 0.9999 : k / 100.0;
        EsvReport::LevelRow row;
        row.level = p;
        row.ideal = p;
        row.empirical = coverage(chi2_quantile_2dof(p));
        abs_sum += std::abs(row.empirical - row.ideal);
        r.levels.push_back(row);
    }
    r.mean_abs_delta_esv = abs_sum / 100.0;
    return r;
}

/// Best-of-N displacement errors: draws n full-trajectory samples per window,
/// scores each, and averages the per-window minima. Deterministic under the
/// caller's RNG seed.
inline std::pair<double, double> bon_ade_fde(const PredictionBatch& preds,
                                             const std::vector<Point2>& truth, int n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("bon_ade_fde: need n >= 1");
    if (preds.gaussians.empty()) throw std::invalid_argument("bon_ade_fde: empty batch");
    if (truth.size() != preds.gaussians.size()) {
        throw std::invalid_argument("bon_ade_fde: prediction/truth size mismatch");
    }
    const int nw = preds.windows();
    const int h = preds.horizon;
    double ade = 0.0, fde = 0.0;
    for (int w = 0; w < nw; ++w) {
        double best_ade = 1e300, best_fde = 1e300;
        for (int s = 0; s < n; ++s) {
            double sum = 0.0, last = 0.0;
            for (int t = 0; t < h; ++t) {
                const size_t idx = static_cast<size_t>(w) * h + t;
                const Point2 p = sample(preds.gaussians[idx], rng);
                const double e = distance(p, truth[idx]);
                sum += e;
                if (t == h - 1) last = e;
            }
            best_ade = std::min(best_ade, sum / h);
            best_fde = std::min(best_fde, last);
        }
        ade += best_ade;
        fde += best_fde;
    }
    return {ade / nw, fde / nw};
}

}  // namespace trajcal
