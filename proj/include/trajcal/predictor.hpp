#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "trajcal/loss.hpp"
#include "trajcal/types.hpp"

namespace trajcal {

/// Constant-velocity baseline: the mean extrapolates the last observed
/// velocity linearly, the covariance is diag((sigma0 + k*growth)^2) at step k.
inline std::vector<Gaussian2> predict_cv(const std::vector<Point2>& obs, double sigma0,
                                         double growth, int horizon = kPredLen) {
    if (obs.size() < 2) throw std::invalid_argument("predict_cv: need at least 2 observed points");
    if (!(sigma0 > 0.0) || growth < 0.0) {
        throw std::invalid_argument("predict_cv: need sigma0 > 0 and growth >= 0");
    }
    const Point2 last = obs.back();
    const Point2 v = obs.back() - obs[obs.size() - 2];
    std::vector<Gaussian2> out;
    out.reserve(static_cast<size_t>(horizon));
    for (int k = 1; k <= horizon; ++k) {
        const Point2 mu = last + static_cast<double>(k) * v;
        const double s = sigma0 + k * growth;
        out.push_back({mu.x, mu.y, s, s, 0.0});
    }
    return out;
}

inline std::vector<Gaussian2> predict_cv(const TrajectoryWindow& w, double sigma0, double growth) {
    return predict_cv(w.obs, sigma0, growth);
}

/// Flat parameter vector plus the layer-size descriptor it belongs to.
struct ModelParams {
    std::vector<int> arch;  // {input, hidden..., output}
    std::vector<double> values;
    uint64_t seed = 0;
};

enum class LossKind { kNll, kNllMhd, kCdf };

inline const char* to_string(LossKind k) {
    switch (k) {
        case LossKind::kNll: return "nll";
        case LossKind::kNllMhd: return "nll_mhd";
        default: return "cdf";
    }
}

inline LossKind loss_kind_from_string(const std::string& s) {
    if (s == "nll") return LossKind::kNll;
    if (s == "nll_mhd") return LossKind::kNllMhd;
    if (s == "cdf") return LossKind::kCdf;
    throw std::invalid_argument("unknown loss kind '" + s + "' (expected nll|nll_mhd|cdf)");
}

struct TrainConfig {
    int epochs = 600;
    double learning_rate = 0.001;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double beta = 1.0;        // cdf-loss weight on the calibration term
    double mhd_weight = 1.0;  // nll_mhd penalty weight
    int batch_size = 32;
    int hidden = 64;
    uint64_t seed = 0;
    LossKind loss = LossKind::kNll;

    void validate() const {
        if (epochs <= 0 || !(learning_rate >= 0.0) || batch_size <= 0 || hidden <= 0 ||
            beta < 0.0 || mhd_weight < 0.0) {
            throw std::invalid_argument("TrainConfig: need positive epochs/batch/hidden, "
                                        "nonnegative learning_rate/beta/mhd_weight");
        }
    }
};

namespace detail {

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline size_t param_count(const std::vector<int>& arch) {
    size_t n = 0;
    for (size_t l = 0; l + 1 < arch.size(); ++l) {
        n += static_cast<size_t>(arch[l + 1]) * arch[l] + arch[l + 1];
    }
    return n;
}

}  // namespace detail

/// Fully connected tanh network over the 14 offsets of the observed window
/// from its last point, emitting a raw (dx, dy, log sx, log sy, atanh rho)
/// 5-tuple per prediction step. The output transforms (identity on the mean
/// offset, exp on the deviations, tanh on the correlation) keep every emitted
/// Gaussian valid for arbitrary parameter values.
class MlpPredictor {
public:
    static constexpr int kInputDim = 2 * (kObsLen - 1);
    static constexpr int kOutputDim = 5 * kPredLen;
    // raw pre-activations are clamped to a physically sensible band: the
    // deviations stay in [1 cm, 100 m] and the correlation below 0.95, which
    // keeps the covariance well conditioned for arbitrary parameters
    static constexpr double kLogSigmaClamp = 4.6;
    static constexpr double kRhoClamp = 1.832;

    static ModelParams init_params(uint64_t seed, int hidden = 64) {
        ModelParams p;
        p.arch = {kInputDim, hidden, hidden, kOutputDim};
        p.seed = seed;
        p.values.assign(detail::param_count(p.arch), 0.0);
        Rng rng(seed);
        size_t at = 0;
        for (size_t l = 0; l + 1 < p.arch.size(); ++l) {
            const int fan_in = p.arch[l], fan_out = p.arch[l + 1];
            const double limit = std::sqrt(6.0 / (fan_in + fan_out));
            for (int i = 0; i < fan_out * fan_in; ++i) {
                p.values[at++] = rng.uniform(-limit, limit);
            }
            at += static_cast<size_t>(fan_out);  // biases start at zero
        }
        return p;
    }

    explicit MlpPredictor(ModelParams params) : p_(std::move(params)) {
        if (p_.arch.size() != 4 || p_.arch[0] != kInputDim || p_.arch[3] != kOutputDim) {
            throw std::invalid_argument("MlpPredictor: unsupported architecture descriptor");
        }
        if (p_.values.size() != detail::param_count(p_.arch)) {
            throw std::invalid_argument("MlpPredictor: parameter vector length mismatch");
        }
        for (double v : p_.values) {
            if (!std::isfinite(v)) throw std::invalid_argument("MlpPredictor: non-finite parameter");
        }
    }

    const ModelParams& params() const { return p_; }
    std::vector<double>& mutable_values() { return p_.values; }

    struct Cache {
        Eigen::VectorXd x, h1, h2, raw;
        Point2 last;
    };

    std::vector<Gaussian2> forward(const TrajectoryWindow& w, Cache& c) const {
        if (static_cast<int>(w.obs.size()) != kObsLen) {
            throw std::invalid_argument("MlpPredictor: window must have 8 observed points");
        }
        const int h = p_.arch[1];
        c.last = w.obs.back();
        c.x.resize(kInputDim);
        for (int i = 0; i < kObsLen - 1; ++i) {
            c.x(2 * i) = w.obs[i].x - c.last.x;
            c.x(2 * i + 1) = w.obs[i].y - c.last.y;
        }
        const double* v = p_.values.data();
        Eigen::Map<const detail::MatrixRM> w1(v, h, kInputDim);
        Eigen::Map<const Eigen::VectorXd> b1(v + h * kInputDim, h);
        const double* v2 = v + h * kInputDim + h;
        Eigen::Map<const detail::MatrixRM> w2(v2, h, h);
        Eigen::Map<const Eigen::VectorXd> b2(v2 + h * h, h);
        const double* v3 = v2 + h * h + h;
        Eigen::Map<const detail::MatrixRM> w3(v3, kOutputDim, h);
        Eigen::Map<const Eigen::VectorXd> b3(v3 + kOutputDim * h, kOutputDim);

        c.h1 = (w1 * c.x + b1).array().tanh();
        c.h2 = (w2 * c.h1 + b2).array().tanh();
        c.raw = w3 * c.h2 + b3;

        std::vector<Gaussian2> out(kPredLen);
        for (int k = 0; k < kPredLen; ++k) {
            const double* r = c.raw.data() + 5 * k;
            Gaussian2& g = out[k];
            g.mu_x = c.last.x + r[0];
            g.mu_y = c.last.y + r[1];
            g.sx = std::exp(std::clamp(r[2], -kLogSigmaClamp, kLogSigmaClamp));
            g.sy = std::exp(std::clamp(r[3], -kLogSigmaClamp, kLogSigmaClamp));
            g.rho = std::tanh(std::clamp(r[4], -kRhoClamp, kRhoClamp));
        }
        return out;
    }

    std::vector<Gaussian2> predict(const TrajectoryWindow& w) const {
        Cache c;
        return forward(w, c);
    }

    /// Accumulates d(loss)/d(params) into `param_grad` given the gradient in
    /// Gaussian-parameter layout (5 per step, kPredLen steps) for one window.
    void backward(const Cache& c, const double* gauss_grad, std::vector<double>& param_grad) const {
        const int h = p_.arch[1];
        if (param_grad.size() != p_.values.size()) {
            throw std::invalid_argument("MlpPredictor::backward: gradient buffer size mismatch");
        }
        Eigen::VectorXd draw(kOutputDim);
        for (int k = 0; k < kPredLen; ++k) {
            const double* r = c.raw.data() + 5 * k;
            const double* gg = gauss_grad + 5 * k;
            draw(5 * k) = gg[0];
            draw(5 * k + 1) = gg[1];
            const double sx = std::exp(std::clamp(r[2], -kLogSigmaClamp, kLogSigmaClamp));
            const double sy = std::exp(std::clamp(r[3], -kLogSigmaClamp, kLogSigmaClamp));
            draw(5 * k + 2) = std::abs(r[2]) < kLogSigmaClamp ? gg[2] * sx : 0.0;
            draw(5 * k + 3) = std::abs(r[3]) < kLogSigmaClamp ? gg[3] * sy : 0.0;
            const double rho = std::tanh(std::clamp(r[4], -kRhoClamp, kRhoClamp));
            draw(5 * k + 4) = std::abs(r[4]) < kRhoClamp ? gg[4] * (1.0 - rho * rho) : 0.0;
        }

        const double* v = p_.values.data();
        const double* v2 = v + h * kInputDim + h;
        const double* v3 = v2 + h * h + h;
        Eigen::Map<const detail::MatrixRM> w2(v2, h, h);
        Eigen::Map<const detail::MatrixRM> w3(v3, kOutputDim, h);

        double* g = param_grad.data();
        Eigen::Map<detail::MatrixRM> gw1(g, h, kInputDim);
        Eigen::Map<Eigen::VectorXd> gb1(g + h * kInputDim, h);
        double* g2 = g + h * kInputDim + h;
        Eigen::Map<detail::MatrixRM> gw2(g2, h, h);
        Eigen::Map<Eigen::VectorXd> gb2(g2 + h * h, h);
        double* g3 = g2 + h * h + h;
        Eigen::Map<detail::MatrixRM> gw3(g3, kOutputDim, h);
        Eigen::Map<Eigen::VectorXd> gb3(g3 + kOutputDim * h, kOutputDim);

        gw3.noalias() += draw * c.h2.transpose();
        gb3 += draw;
        Eigen::VectorXd da2 =
            (w3.transpose() * draw).cwiseProduct((1.0 - c.h2.array().square()).matrix());
        gw2.noalias() += da2 * c.h1.transpose();
        gb2 += da2;
        Eigen::VectorXd da1 =
            (w2.transpose() * da2).cwiseProduct((1.0 - c.h1.array().square()).matrix());
        gw1.noalias() += da1 * c.x.transpose();
        gb1 += da1;
    }

private:
    ModelParams p_;
};

inline std::vector<Gaussian2> predict_mlp(const ModelParams& params, const TrajectoryWindow& w) {
    return MlpPredictor(params).predict(w);
}

/// Thrown when training hits a non-finite loss.
class TrainDivergedError : public std::runtime_error {
public:
    explicit TrainDivergedError(int at_epoch)
        : std::runtime_error("training diverged (non-finite loss) at epoch " +
                             std::to_string(at_epoch)),
          epoch(at_epoch) {}
    int epoch;
};

struct EpochStats {
    int epoch = 0;
    double loss = 0.0;
    double cdf_term = 0.0;        // cdf loss kind only
    double mean_error_term = 0.0; // cdf loss kind only
    double val_ade = std::numeric_limits<double>::quiet_NaN();
    double val_fde = std::numeric_limits<double>::quiet_NaN();
    bool bin_cap_hit = false;  // KDE bin cap triggered in some batch
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochStats> trace;
};

namespace detail {

inline std::pair<double, double> quick_ade_fde(const MlpPredictor& model,
                                               const std::vector<TrajectoryWindow>& windows) {
    if (windows.empty()) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        return {nan, nan};
    }
    double ade = 0.0, fde = 0.0;
    for (const auto& w : windows) {
        const auto preds = model.predict(w);
        for (int k = 0; k < kPredLen; ++k) ade += distance(preds[k].mean(), w.future[k]);
        fde += distance(preds[kPredLen - 1].mean(), w.future[kPredLen - 1]);
    }
    return {ade / (windows.size() * kPredLen), fde / windows.size()};
}

}  // namespace detail

/// Adam training of the reference model on the given split. Deterministic
/// under a fixed (seed, config, dataset); mini-batches group windows by scene
/// and start frame so pooled distance samples mix pedestrians.
inline TrainResult train(const ModelParams& init, std::vector<TrajectoryWindow> train_set,
                         const std::vector<TrajectoryWindow>& val_set, const TrainConfig& cfg,
                         const KdeConfig& kde = {}) {
    cfg.validate();
    kde.validate();
    if (train_set.empty()) throw std::invalid_argument("train: empty training split");

    std::sort(train_set.begin(), train_set.end(),
              [](const TrajectoryWindow& a, const TrajectoryWindow& b) {
                  return std::tie(a.scene_id, a.start_frame, a.ped_id) <
                         std::tie(b.scene_id, b.start_frame, b.ped_id);
              });
    const int n_batches =
        static_cast<int>((train_set.size() + cfg.batch_size - 1) / cfg.batch_size);

    MlpPredictor model(init);
    const size_t np = model.params().values.size();
    std::vector<double> adam_m(np, 0.0), adam_v(np, 0.0), grad(np, 0.0);
    long adam_t = 0;

    TrainResult result;
    std::vector<MlpPredictor::Cache> caches;
    std::vector<int> batch_order(n_batches);
    for (int i = 0; i < n_batches; ++i) batch_order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng epoch_rng(mix_seed(cfg.seed, static_cast<uint64_t>(epoch)));
        shuffle(batch_order, epoch_rng);

        double epoch_loss = 0.0, epoch_cdf = 0.0, epoch_mean_err = 0.0;
        bool epoch_cap = false;
        for (int bi : batch_order) {
            const size_t lo = static_cast<size_t>(bi) * cfg.batch_size;
            const size_t hi = std::min(train_set.size(), lo + cfg.batch_size);
            const int bn = static_cast<int>(hi - lo);

            PredictionBatch preds;
            preds.horizon = kPredLen;
            preds.gaussians.reserve(static_cast<size_t>(bn) * kPredLen);
            std::vector<Point2> truth;
            truth.reserve(static_cast<size_t>(bn) * kPredLen);
            caches.assign(bn, {});
            for (int i = 0; i < bn; ++i) {
                const TrajectoryWindow& w = train_set[lo + i];
                const auto g = model.forward(w, caches[i]);
                preds.gaussians.insert(preds.gaussians.end(), g.begin(), g.end());
                truth.insert(truth.end(), w.future.begin(), w.future.end());
            }

            LossValueAndGrad loss;
            switch (cfg.loss) {
                case LossKind::kNll: loss = nll_loss(preds, truth); break;
                case LossKind::kNllMhd: loss = nll_mhd_loss(preds, truth, cfg.mhd_weight); break;
                case LossKind::kCdf: loss = combined_loss(preds, truth, cfg.beta, kde); break;
            }
            if (!std::isfinite(loss.value)) throw TrainDivergedError(epoch);
            epoch_loss += loss.value;
            epoch_cdf += loss.cdf_term;
            epoch_mean_err += loss.mean_error_term;
            epoch_cap = epoch_cap || loss.bin_cap_hit;

            std::fill(grad.begin(), grad.end(), 0.0);
            for (int i = 0; i < bn; ++i) {
                model.backward(caches[i], &loss.grad[static_cast<size_t>(5 * kPredLen) * i], grad);
            }

            ++adam_t;
            const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(adam_t));
            const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(adam_t));
            std::vector<double>& values = model.mutable_values();
            bool finite = true;
            for (size_t j = 0; j < np; ++j) {
                adam_m[j] = cfg.adam_beta1 * adam_m[j] + (1.0 - cfg.adam_beta1) * grad[j];
                adam_v[j] = cfg.adam_beta2 * adam_v[j] + (1.0 - cfg.adam_beta2) * grad[j] * grad[j];
                values[j] -= cfg.learning_rate * (adam_m[j] / bc1) /
                             (std::sqrt(adam_v[j] / bc2) + cfg.adam_eps);
                finite = finite && std::isfinite(values[j]);
            }
            if (!finite) throw TrainDivergedError(epoch);
        }

        EpochStats st;
        st.epoch = epoch;
        st.bin_cap_hit = epoch_cap;
        st.loss = epoch_loss / n_batches;
        st.cdf_term = epoch_cdf / n_batches;
        st.mean_error_term = epoch_mean_err / n_batches;
        const auto [va, vf] = detail::quick_ade_fde(model, val_set);
        st.val_ade = va;
        st.val_fde = vf;
        result.trace.push_back(st);
    }

    result.params = model.params();
    return result;
}

}  // namespace trajcal
