#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "trajcal/gaussian.hpp"
#include "trajcal/types.hpp"

namespace trajcal {

/// Squared Mahalanobis distances pooled over a prediction batch, with the
/// (step, window) provenance of every sample.
struct MdSampleSet {
    std::vector<double> samples;
    std::vector<std::pair<int, int>> provenance;  // (step t, window i)
};

/// Kernel density estimation settings for the calibration loss. Defaults are
/// the reference values: 0.01 bin spacing, 0.005 bandwidth and temperature.
struct KdeConfig {
    double bin_step = 0.01;
    double bandwidth = 0.005;
    double temperature = 0.005;

    void validate() const {
        if (!(bin_step > 0.0) || !(bandwidth > 0.0) || !(temperature > 0.0)) {
            throw std::invalid_argument(
                "KdeConfig: bin_step, bandwidth and temperature must be positive");
        }
    }
};

/// Upper bound on the number of KDE bins; one huge outlier distance would
/// otherwise make the bin grid unbounded.
inline constexpr int kMaxKdeBins = 10000;

/// A loss value together with its gradient. The gradient layout depends on
/// the loss: the batch losses use 5 entries (mu_x, mu_y, sx, sy, rho) per
/// prediction in batch order; cdf_loss uses one entry per sample.
struct LossValueAndGrad {
    double value = 0.0;
    std::vector<double> grad;
    bool bin_cap_hit = false;
    // filled by combined_loss only
    double cdf_term = 0.0;
    double mean_error_term = 0.0;
};

/// d2 of one (truth, prediction) pair and its gradient in
/// (mu_x, mu_y, sx, sy, rho). Callers must have validated the Gaussian.
struct MahalanobisGrad {
    double d2 = 0.0;
    double g[5] = {0, 0, 0, 0, 0};
};

inline MahalanobisGrad mahalanobis_sq_grad(Point2 p, const Gaussian2& gsn) {
    const double u = (p.x - gsn.mu_x) / gsn.sx;
    const double v = (p.y - gsn.mu_y) / gsn.sy;
    const double rho = gsn.rho;
    const double q = 1.0 - rho * rho;
    MahalanobisGrad r;
    r.d2 = (u * u - 2.0 * rho * u * v + v * v) / q;
    r.g[0] = -2.0 * (u - rho * v) / (q * gsn.sx);
    r.g[1] = -2.0 * (v - rho * u) / (q * gsn.sy);
    r.g[2] = -2.0 * u * (u - rho * v) / (q * gsn.sx);
    r.g[3] = -2.0 * v * (v - rho * u) / (q * gsn.sy);
    r.g[4] = (-2.0 * u * v * q + 2.0 * rho * r.d2 * q) / (q * q);
    return r;
}

namespace detail {

inline void check_batch(const PredictionBatch& preds, const std::vector<Point2>& truth,
                        const char* who) {
    if (preds.gaussians.empty()) {
        throw std::invalid_argument(std::string(who) + ": empty batch");
    }
    if (truth.size() != preds.gaussians.size()) {
        throw std::invalid_argument(std::string(who) + ": prediction/truth size mismatch");
    }
}

inline void check_covariance(const PredictionBatch& preds, size_t idx, const char* who) {
    const Gaussian2& g = preds.gaussians[idx];
    if (!g.valid() || g.det() < kMinCovarianceDet) {
        const int t = static_cast<int>(idx) % preds.horizon;
        const int i = static_cast<int>(idx) / preds.horizon;
        throw std::invalid_argument(std::string(who) + ": invalid covariance at (t=" +
                                    std::to_string(t) + ", i=" + std::to_string(i) + ")");
    }
}

}  // namespace detail

/// Pools the squared Mahalanobis distances of all (window, step) pairs of a
/// batch into one sample set.
inline MdSampleSet mahalanobis_samples(const PredictionBatch& preds,
                                       const std::vector<Point2>& truth) {
    detail::check_batch(preds, truth, "mahalanobis_samples");
    MdSampleSet set;
    set.samples.reserve(preds.gaussians.size());
    set.provenance.reserve(preds.gaussians.size());
    for (size_t idx = 0; idx < preds.gaussians.size(); ++idx) {
        detail::check_covariance(preds, idx, "mahalanobis_samples");
        set.samples.push_back(mahalanobis_sq(truth[idx], preds.gaussians[idx]));
        set.provenance.emplace_back(static_cast<int>(idx) % preds.horizon,
                                    static_cast<int>(idx) / preds.horizon);
    }
    return set;
}

/// Negative log likelihood of the ground truth under the predicted Gaussians:
/// sum over the batch of log sqrt(2 pi det Sigma) + d2 / 2.
inline LossValueAndGrad nll_loss(const PredictionBatch& preds,
                                 const std::vector<Point2>& truth) {
    detail::check_batch(preds, truth, "nll_loss");
    LossValueAndGrad out;
    out.grad.assign(5 * preds.gaussians.size(), 0.0);
    double value = 0.0;
    for (size_t idx = 0; idx < preds.gaussians.size(); ++idx) {
        detail::check_covariance(preds, idx, "nll_loss");
        const Gaussian2& g = preds.gaussians[idx];
        const MahalanobisGrad md = mahalanobis_sq_grad(truth[idx], g);
        const double q = 1.0 - g.rho * g.rho;
        value += 0.5 * std::log(2.0 * M_PI) + std::log(g.sx) + std::log(g.sy) +
                 0.5 * std::log(q) + 0.5 * md.d2;
        double* gr = &out.grad[5 * idx];
        gr[0] = 0.5 * md.g[0];
        gr[1] = 0.5 * md.g[1];
        gr[2] = 1.0 / g.sx + 0.5 * md.g[2];
        gr[3] = 1.0 / g.sy + 0.5 * md.g[3];
        gr[4] = -g.rho / q + 0.5 * md.g[4];
    }
    out.value = value;
    return out;
}

/// NLL plus `penalty_weight` times the batch mean of the unsquared
/// Mahalanobis distance. Weight 0 is bit-identical to nll_loss.
inline LossValueAndGrad nll_mhd_loss(const PredictionBatch& preds,
                                     const std::vector<Point2>& truth,
                                     double penalty_weight) {
    if (penalty_weight < 0.0) {
        throw std::invalid_argument("nll_mhd_loss: penalty_weight must be >= 0");
    }
    LossValueAndGrad out = nll_loss(preds, truth);
    if (penalty_weight == 0.0) return out;
    const double n = static_cast<double>(preds.gaussians.size());
    double mean_d = 0.0;
    for (size_t idx = 0; idx < preds.gaussians.size(); ++idx) {
        const MahalanobisGrad md = mahalanobis_sq_grad(truth[idx], preds.gaussians[idx]);
        const double d = std::sqrt(md.d2);
        mean_d += d;
        if (d > 1e-12) {  // subgradient 0 at the mean
            const double s = penalty_weight / (2.0 * d * n);
            for (int j = 0; j < 5; ++j) out.grad[5 * idx + j] += s * md.g[j];
        }
    }
    out.value += penalty_weight * mean_d / n;
    return out;
}

namespace detail {

/// Differentiable soft histogram of the d2 samples. Every sample is assigned
/// to the bin grid through a per-sample softmax over the tempered Gaussian
/// log-kernel, logit_ij = -(c_j - D_i)^2 / (2 b T), and the per-bin masses
/// are the sample average of those assignment weights. The product b*T sets
/// the squared assignment width, so the reference parameters blur each
/// sample by one bandwidth. Masses are strictly positive, sum to one, and
/// are smooth in every sample.
struct SoftBinning {
    std::vector<double> centers;
    std::vector<double> masses;
    bool capped = false;

    // Per-sample backward data: the softmax weights over the local bin
    // window plus what the softmax Jacobian needs.
    struct PerSample {
        int first_bin = 0;
        int count = 0;
        double weighted_dlogit = 0.0;  // sum_j w_j * dlogit_j/dD
        double tail = 0.0;             // per-bin softmax weight of the far bins
    };
    std::vector<PerSample> per_sample;
    std::vector<double> weights;    // concatenated window weights
    std::vector<double> dlogits;    // concatenated dlogit/dD
};

inline SoftBinning soft_binning(const std::vector<double>& samples, const KdeConfig& cfg,
                                bool with_grad) {
    cfg.validate();
    if (samples.size() < 2) {
        throw std::invalid_argument("kde_density: need at least 2 samples");
    }
    double dmax = 0.0;
    for (double d : samples) {
        if (!std::isfinite(d) || d < 0.0) {
            throw std::invalid_argument("kde_density: samples must be finite and >= 0");
        }
        dmax = std::max(dmax, d);
    }
    if (dmax <= 0.0) {
        throw std::domain_error(
            "kde_density: all distances are zero (degenerate single-bin estimate)");
    }

    SoftBinning sb;
    long k = static_cast<long>(std::floor(dmax / cfg.bin_step + 1e-9)) + 1;
    if (k > kMaxKdeBins) {
        k = kMaxKdeBins;
        sb.capped = true;
    }
    sb.centers.resize(k);
    for (long j = 0; j < k; ++j) sb.centers[j] = j * cfg.bin_step;
    sb.masses.assign(k, 0.0);

    const double n = static_cast<double>(samples.size());
    const double inv_bt = 1.0 / (cfg.bandwidth * cfg.temperature);
    // Bins farther than the reach carry logits below -40 relative to the
    // nearest bin and are folded into a constant-logit tail, which keeps
    // every bin at strictly positive mass.
    const double reach = std::sqrt(80.0 * cfg.bandwidth * cfg.temperature);
    const long halfwin = static_cast<long>(std::ceil(reach / cfg.bin_step)) + 1;
    const double tail_logit = -0.5 * reach * reach * inv_bt;  // = -40

    if (with_grad) {
        sb.per_sample.resize(samples.size());
        sb.weights.reserve(samples.size() * (2 * halfwin + 1));
        sb.dlogits.reserve(samples.size() * (2 * halfwin + 1));
    }

    double uniform_tail = 0.0;  // accumulated per-bin tail mass over samples
    std::vector<double> logits(2 * halfwin + 1);
    std::vector<double> dlog(2 * halfwin + 1);
    for (size_t i = 0; i < samples.size(); ++i) {
        const double d = samples[i];
        const long j0 = std::clamp(static_cast<long>(std::llround(d / cfg.bin_step)), 0L, k - 1);
        const long lo = std::max(0L, j0 - halfwin);
        const long hi = std::min(k - 1, j0 + halfwin);
        const long count = hi - lo + 1;

        double lmax = tail_logit;
        for (long j = lo; j <= hi; ++j) {
            const double dc = sb.centers[j] - d;
            logits[j - lo] = std::max(-0.5 * dc * dc * inv_bt, tail_logit);
            dlog[j - lo] = logits[j - lo] > tail_logit ? dc * inv_bt : 0.0;  // d(logit)/dD
            lmax = std::max(lmax, logits[j - lo]);
        }
        double denom = static_cast<double>(k - count) * std::exp(tail_logit - lmax);
        for (long j = 0; j < count; ++j) denom += std::exp(logits[j] - lmax);
        const double tail = std::exp(tail_logit - lmax) / denom;
        uniform_tail += tail;

        // Window bins store w - tail and every bin later gets the uniform
        // tail back, so the per-sample masses sum to exactly one. Window
        // weights never fall below the tail because their logits are floored
        // at the tail logit.
        double wdl = 0.0;
        for (long j = 0; j < count; ++j) {
            const double w = std::exp(logits[j] - lmax) / denom;
            sb.masses[lo + j] += w - tail;
            if (with_grad) {
                sb.weights.push_back(w);
                sb.dlogits.push_back(dlog[j]);
                wdl += w * dlog[j];
            }
        }
        if (with_grad) {
            sb.per_sample[i] = {static_cast<int>(lo), static_cast<int>(count), wdl, tail};
        }
    }
    for (long j = 0; j < k; ++j) sb.masses[j] = (sb.masses[j] + uniform_tail) / n;
    return sb;
}

}  // namespace detail

/// Kernel density estimate of the d2 samples over bin centers
/// 0, bin_step, ..., up to the largest sample: returns the centers and the
/// normalized per-bin probability masses.
struct KdeDensity {
    std::vector<double> centers;
    std::vector<double> masses;
    bool bin_cap_hit = false;
};

inline KdeDensity kde_density(const MdSampleSet& set, const KdeConfig& cfg) {
    detail::SoftBinning sb = detail::soft_binning(set.samples, cfg, false);
    return {std::move(sb.centers), std::move(sb.masses), sb.capped};
}

/// Mean absolute gap between the estimated CDF of the d2 samples (cumulative
/// KDE masses) and the chi-squared(2) CDF at the bin centers. The gradient is
/// with respect to the samples.
inline LossValueAndGrad cdf_loss(const MdSampleSet& set, const KdeConfig& cfg) {
    detail::SoftBinning sb = detail::soft_binning(set.samples, cfg, true);
    const long k = static_cast<long>(sb.centers.size());
    const double n = static_cast<double>(set.samples.size());

    // value and per-bin signs
    std::vector<double> sign(k);
    double value = 0.0;
    double cum = 0.0;
    for (long j = 0; j < k; ++j) {
        cum += sb.masses[j];
        const double diff = cum - chi2_cdf_2dof(sb.centers[j]);
        value += std::abs(diff);
        sign[j] = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    }
    value /= static_cast<double>(k);

    // dL/dm_j = (1/k) * sum_{j' >= j} sign_{j'}; suffix sums
    std::vector<double> dldm(k);
    double suffix = 0.0;
    for (long j = k - 1; j >= 0; --j) {
        suffix += sign[j];
        dldm[j] = suffix / static_cast<double>(k);
    }
    double total_dldm = 0.0;
    for (long j = 0; j < k; ++j) total_dldm += dldm[j];

    LossValueAndGrad out;
    out.value = value;
    out.bin_cap_hit = sb.capped;
    out.grad.assign(set.samples.size(), 0.0);
    size_t cursor = 0;
    for (size_t i = 0; i < set.samples.size(); ++i) {
        const auto& ps = sb.per_sample[i];
        double g = 0.0;
        double window_dldm = 0.0;
        for (int j = 0; j < ps.count; ++j) {
            const double w = sb.weights[cursor + j];
            const double dw = w * (sb.dlogits[cursor + j] - ps.weighted_dlogit);
            g += dldm[ps.first_bin + j] * dw;
            window_dldm += dldm[ps.first_bin + j];
        }
        cursor += ps.count;
        // the tail weight of the far bins also moves with the sample
        const double dtail = -ps.tail * ps.weighted_dlogit;
        g += dtail * (total_dldm - 2.0 * window_dldm);
        out.grad[i] = g / n;
    }
    return out;
}

/// Combined training objective: beta * cdf_loss of the pooled d2 samples plus
/// the batch mean Euclidean error of the predicted means. The gradient is in
/// Gaussian-parameter layout and flows through both terms, including through
/// the d2 samples into the means and covariances.
inline LossValueAndGrad combined_loss(const PredictionBatch& preds,
                                      const std::vector<Point2>& truth, double beta,
                                      const KdeConfig& cfg) {
    detail::check_batch(preds, truth, "combined_loss");
    if (beta < 0.0) throw std::invalid_argument("combined_loss: beta must be >= 0");
    const size_t n = preds.gaussians.size();
    LossValueAndGrad out;
    out.grad.assign(5 * n, 0.0);

    double mean_err = 0.0;
    for (size_t idx = 0; idx < n; ++idx) {
        detail::check_covariance(preds, idx, "combined_loss");
        const Point2 e = preds.gaussians[idx].mean() - truth[idx];
        const double en = norm(e);
        mean_err += en;
        if (en > 1e-12) {
            out.grad[5 * idx + 0] += e.x / (en * static_cast<double>(n));
            out.grad[5 * idx + 1] += e.y / (en * static_cast<double>(n));
        }
    }
    mean_err /= static_cast<double>(n);
    out.mean_error_term = mean_err;
    out.value = mean_err;

    if (beta != 0.0) {
        const MdSampleSet set = mahalanobis_samples(preds, truth);
        const LossValueAndGrad cdf = cdf_loss(set, cfg);
        out.cdf_term = cdf.value;
        out.bin_cap_hit = cdf.bin_cap_hit;
        out.value += beta * cdf.value;
        for (size_t idx = 0; idx < n; ++idx) {
            const MahalanobisGrad md = mahalanobis_sq_grad(truth[idx], preds.gaussians[idx]);
            const double c = beta * cdf.grad[idx];
            for (int j = 0; j < 5; ++j) out.grad[5 * idx + j] += c * md.g[j];
        }
    }
    return out;
}

}  // namespace trajcal
