#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "trajcal/dataset.hpp"
#include "trajcal/gaussian.hpp"
#include "trajcal/predictor.hpp"
#include "trajcal/types.hpp"

namespace trajcal {

struct RobotState {
    Point2 pos;
    double heading = 0.0;  // wrapped to (-pi, pi]
    double v = 0.0;        // last commanded forward speed, m/s
    double omega = 0.0;    // last commanded turn rate, rad/s
};

struct Control {
    double v = 0.0;
    double omega = 0.0;
};

struct ControlBounds {
    double v_min = 0.0;
    double v_max = 3.0;
    double omega_min = -0.2;
    double omega_max = 0.2;

    bool contains(Control u) const {
        return u.v >= v_min && u.v <= v_max && u.omega >= omega_min && u.omega <= omega_max;
    }
    Control clamp(Control u) const {
        return {std::clamp(u.v, v_min, v_max), std::clamp(u.omega, omega_min, omega_max)};
    }
};

/// Receding-horizon planner parameters. Weight and geometry defaults follow
/// the reference table: Q_u = I, Q_H = Q_p = Q_MD = 1e3, robot and pedestrian
/// radii 0.2 m, safety margin 0.4 m, collision probability threshold 0.2,
/// horizon 12 at 0.5 s; v in [0, 3] m/s, omega in [-0.2, 0.2] rad/s.
struct MpcConfig {
    int horizon = 12;
    double dt = 0.5;
    double qu_v = 1.0;   // diag(Q_u)
    double qu_omega = 1.0;
    double q_terminal = 1000.0;  // Q_H
    double q_progress = 1000.0;  // Q_p
    double q_md = 1000.0;        // Q_MD
    double r_rob = 0.2;
    double r_ped = 0.2;
    double d_safe = 0.4;
    double p_col = 0.2;
    ControlBounds bounds;
    double initial_speed = 1.0;  // start velocity, aimed at the goal
    double goal_radius = 0.3;
    double md_floor = 1e-3;         // floor for the 1/d_MD stage cost
    double penalty_weight = 1e6;    // exact-penalty weight on violations
    int random_candidates = 64;
    int refine_rounds = 30;
    double timeout_factor = 4.0;    // times the straight-line kinematic bound
    int timeout_floor_steps = 60;
    double cv_sigma0 = 0.2;  // constant-velocity fallback prediction
    double cv_growth = 0.05;
    uint64_t seed = 0;

    double a_col() const { return M_PI * (r_rob + r_ped) * (r_rob + r_ped); }

    void validate() const {
        if (horizon < 1 || !(dt > 0.0)) throw std::invalid_argument("MpcConfig: bad horizon/dt");
        if (qu_v < 0 || qu_omega < 0 || q_terminal < 0 || q_progress < 0 || q_md < 0) {
            throw std::invalid_argument("MpcConfig: weights must be >= 0");
        }
        if (bounds.v_min > bounds.v_max || bounds.omega_min > bounds.omega_max) {
            throw std::invalid_argument("MpcConfig: control bounds out of order");
        }
        if (!(p_col > 0.0) || !(r_rob > 0.0) || !(r_ped > 0.0) || d_safe < 0.0) {
            throw std::invalid_argument("MpcConfig: bad geometry/probability parameters");
        }
    }
};

/// Forward-Euler unicycle step; rejects controls outside the bounds.
inline RobotState unicycle_step(const RobotState& s, Control u, double dt,
                                const ControlBounds& bounds) {
    if (!bounds.contains(u)) throw std::invalid_argument("unicycle_step: control out of bounds");
    RobotState n = s;
    n.pos.x += u.v * std::cos(s.heading) * dt;
    n.pos.y += u.v * std::sin(s.heading) * dt;
    n.heading = wrap_angle(s.heading + u.omega * dt);
    n.v = u.v;
    n.omega = u.omega;
    return n;
}

/// Right-hand side of the probabilistic collision constraint
/// d_MD^2 >= -2 ln(sqrt(det(2 pi Sigma)) p_col / A_col).
inline double collision_constraint_rhs(const Gaussian2& g, const MpcConfig& cfg) {
    require_invertible(g);
    const double sqrt_det_2pi = 2.0 * M_PI * std::sqrt(g.det());
    return -2.0 * std::log(sqrt_det_2pi * cfg.p_col / cfg.a_col());
}

/// Predicted pedestrian Gaussians per MPC step: preds[t][i] constrains the
/// rolled-out robot position at step t+1.
using StepPredictions = std::vector<std::vector<Gaussian2>>;

struct ObjectiveResult {
    double cost = 0.0;
    std::vector<double> violations;  // per (step, pedestrian): {md, euclidean}

    double total_violation() const {
        double s = 0.0;
        for (double v : violations) s += v;
        return s;
    }
};

namespace detail {

// Cost and summed constraint violation of one control sequence; shared by
// the public objective and the solver's inner loop.
struct MpcEvaluator {
    const MpcConfig& cfg;
    const StepPredictions& preds;
    Point2 goal;
    RobotState start;
    double inv_goal_dist = 0.0;
    double ed_thresh_sq = 0.0;

    MpcEvaluator(const MpcConfig& c, const StepPredictions& p, Point2 g, const RobotState& s)
        : cfg(c), preds(p), goal(g), start(s) {
        const double d0 = distance(s.pos, g);
        if (!(d0 > 0.0)) throw std::invalid_argument("mpc: start position is at the goal");
        inv_goal_dist = 1.0 / d0;
        const double thr = cfg.r_rob + cfg.r_ped + cfg.d_safe;
        ed_thresh_sq = thr * thr;
    }

    const std::vector<Gaussian2>& peds_at(int t) const {  // t in 1..H
        const size_t idx = std::min(static_cast<size_t>(t - 1), preds.size() - 1);
        static const std::vector<Gaussian2> kNone;
        return preds.empty() ? kNone : preds[idx];
    }

    // violations, when non-null, receives max(0, rhs - d_md^2) and
    // max(0, thresh^2 - d_ed^2) for every (step, pedestrian)
    double evaluate(const std::vector<Control>& controls, double* violation_sum,
                    std::vector<double>* violations) const {
        const int h = cfg.horizon;
        double cost = 0.0;
        double viol = 0.0;
        RobotState s = start;
        for (int t = 0; t < h; ++t) {
            const Control u = controls[t];
            cost += cfg.qu_v * u.v * u.v + cfg.qu_omega * u.omega * u.omega;
            const double goal_frac = distance(s.pos, goal) * inv_goal_dist;
            cost += cfg.q_progress * goal_frac * goal_frac;

            s = unicycle_step(s, u, cfg.dt, cfg.bounds);
            for (const Gaussian2& g : peds_at(t + 1)) {
                const double d2 = mahalanobis_sq(s.pos, g);
                cost += cfg.q_md / std::max(std::sqrt(d2), cfg.md_floor);
                const double v_md = std::max(0.0, collision_constraint_rhs(g, cfg) - d2);
                const Point2 e = s.pos - g.mean();
                const double v_ed = std::max(0.0, ed_thresh_sq - dot(e, e));
                viol += v_md + v_ed;
                if (violations) {
                    violations->push_back(v_md);
                    violations->push_back(v_ed);
                }
            }
        }
        const double end_frac = distance(s.pos, goal) * inv_goal_dist;
        cost += cfg.q_terminal * end_frac * end_frac;
        if (violation_sum) *violation_sum = viol;
        return cost;
    }

    double penalized(const std::vector<Control>& controls) const {
        double viol = 0.0;
        const double cost = evaluate(controls, &viol, nullptr);
        return cost + cfg.penalty_weight * viol;
    }
};

}  // namespace detail

/// Cost of a control sequence plus the per-(step, pedestrian) constraint
/// violations of the rolled-out trajectory.
inline ObjectiveResult mpc_objective(const std::vector<Control>& controls,
                                     const RobotState& start, const StepPredictions& preds,
                                     Point2 goal, const MpcConfig& cfg) {
    cfg.validate();
    if (static_cast<int>(controls.size()) != cfg.horizon) {
        throw std::invalid_argument("mpc_objective: control sequence length != horizon");
    }
    for (const Control& u : controls) {
        if (!cfg.bounds.contains(u)) {
            throw std::invalid_argument("mpc_objective: control out of bounds");
        }
    }
    const detail::MpcEvaluator ev(cfg, preds, goal, start);
    ObjectiveResult r;
    r.cost = ev.evaluate(controls, nullptr, &r.violations);
    return r;
}

/// Direct-shooting solve of the receding-horizon problem: candidate control
/// sequences (warm start, greedy straight-to-goal, seeded random draws) are
/// scored under an exact-penalty objective and the best one is refined by
/// rounds of per-control line search. Deterministic under (seed, warm start);
/// when no violation-free sequence exists the lowest-violation candidate is
/// returned rather than aborting.
inline std::vector<Control> solve_mpc(const RobotState& state, const StepPredictions& preds,
                                      Point2 goal, const MpcConfig& cfg,
                                      const std::vector<Control>& warm_start, uint64_t seed) {
    cfg.validate();
    const int h = cfg.horizon;
    const detail::MpcEvaluator ev(cfg, preds, goal, state);

    std::vector<std::vector<Control>> candidates;
    if (static_cast<int>(warm_start.size()) == h) {
        std::vector<Control> w = warm_start;
        for (Control& u : w) u = cfg.bounds.clamp(u);
        candidates.push_back(std::move(w));
    }

    {  // greedy steer-to-goal rollout
        std::vector<Control> greedy(h);
        RobotState s = state;
        for (int t = 0; t < h; ++t) {
            const double bearing = std::atan2(goal.y - s.pos.y, goal.x - s.pos.x);
            const double err = wrap_angle(bearing - s.heading);
            Control u;
            u.omega = std::clamp(err / cfg.dt, cfg.bounds.omega_min, cfg.bounds.omega_max);
            u.v = std::clamp(distance(s.pos, goal) / cfg.dt, cfg.bounds.v_min, cfg.bounds.v_max);
            greedy[t] = u;
            s = unicycle_step(s, u, cfg.dt, cfg.bounds);
        }
        candidates.push_back(std::move(greedy));
    }

    Rng rng(seed);
    for (int c = 0; c < cfg.random_candidates; ++c) {
        std::vector<Control> u(h);
        for (int t = 0; t < h; ++t) {
            u[t].v = rng.uniform(cfg.bounds.v_min, cfg.bounds.v_max);
            u[t].omega = rng.uniform(cfg.bounds.omega_min, cfg.bounds.omega_max);
        }
        candidates.push_back(std::move(u));
    }

    std::vector<Control> best = candidates.front();
    double best_cost = ev.penalized(best);
    for (size_t c = 1; c < candidates.size(); ++c) {
        const double cost = ev.penalized(candidates[c]);
        if (cost < best_cost) {
            best_cost = cost;
            best = candidates[c];
        }
    }

    // per-control coordinate line search with a shrinking step; improvements
    // below the relative tolerance are not taken, so re-solving from a
    // converged sequence returns it unchanged
    const double v_span = cfg.bounds.v_max - cfg.bounds.v_min;
    const double w_span = cfg.bounds.omega_max - cfg.bounds.omega_min;
    std::vector<Control> trial = best;
    for (int round = 0; round < cfg.refine_rounds; ++round) {
        const double shrink = std::pow(0.8, round);
        const double dv = 0.25 * v_span * shrink;
        const double dw = 0.25 * w_span * shrink;
        for (int t = 0; t < h; ++t) {
            for (int comp = 0; comp < 2; ++comp) {
                const double delta = comp == 0 ? dv : dw;
                for (double dir : {+1.0, -1.0}) {
                    trial = best;
                    while (true) {
                        Control u = trial[t];
                        (comp == 0 ? u.v : u.omega) += dir * delta;
                        u = cfg.bounds.clamp(u);
                        if (u.v == trial[t].v && u.omega == trial[t].omega) break;
                        trial[t] = u;
                        const double cost = ev.penalized(trial);
                        if (cost < best_cost - 1e-9 * (1.0 + std::abs(best_cost))) {
                            best_cost = cost;
                            best[t] = u;
                        } else {
                            break;
                        }
                    }
                }
            }
        }
    }
    return best;
}

enum class Outcome { kSuccess, kCollision, kTimeout };

inline const char* to_string(Outcome o) {
    switch (o) {
        case Outcome::kSuccess: return "success";
        case Outcome::kCollision: return "collision";
        default: return "timeout";
    }
}

struct PlanStepRecord {
    double time = 0.0;  // seconds since scenario start
    RobotState state;   // after applying this step's control
    double min_ped_distance = std::numeric_limits<double>::quiet_NaN();
    bool intruded = false;
    double violation = 0.0;  // solver-reported violation of the applied plan
    StepPredictions predictions;  // per-step Gaussians the plan used
};

struct PlanResult {
    Outcome outcome = Outcome::kTimeout;
    int nav_time_steps = 0;      // executed 0.5 s planning steps
    double path_length = 0.0;    // meters travelled from the first planning step
    double intrusion_ratio = 0.0;
    // mean over intrusion events of the event's closest distance
    std::optional<double> min_intrusion_distance;
    // closest intrusion distance over the whole scenario
    std::optional<double> scenario_min_intrusion_distance;
    int cv_fallbacks = 0;  // pedestrian predictions served by the CV fallback
    std::vector<PlanStepRecord> trace;
    uint64_t replay_hash = 0;
};

/// Maps an up-to-8-frame observed history to 12 predicted Gaussians.
using PredictorFn = std::function<std::vector<Gaussian2>(const std::vector<Point2>&)>;

struct SimOptions {
    bool force_zero_controls = false;  // drive nothing, for timeout tests
    int max_steps_override = -1;
    bool record_predictions = false;
};

namespace detail {

// replayed pedestrian with gap-free runs for interpolation and history
struct PedReplay {
    int ped_id = 0;
    struct Run {
        long first = 0;
        std::vector<Point2> pos;
        long last() const { return first + static_cast<long>(pos.size()) - 1; }
    };
    std::vector<Run> runs;

    const Run* run_at(double frame) const {
        for (const Run& r : runs) {
            if (frame >= static_cast<double>(r.first) - 1e-9 &&
                frame <= static_cast<double>(r.last()) + 1e-9) {
                return &r;
            }
        }
        return nullptr;
    }

    std::optional<Point2> position_at(double time_s) const {
        const double frame = time_s / kFrameDt;
        const Run* r = run_at(frame);
        if (!r) return std::nullopt;
        const double local = std::clamp(frame - static_cast<double>(r->first), 0.0,
                                        static_cast<double>(r->pos.size() - 1));
        const size_t i = static_cast<size_t>(std::floor(local));
        if (i + 1 >= r->pos.size()) return r->pos.back();
        const double frac = local - static_cast<double>(i);
        return r->pos[i] + frac * (r->pos[i + 1] - r->pos[i]);
    }

    // most recent up-to-8 positions at integer frames <= time
    std::vector<Point2> history_at(double time_s) const {
        const double frame = time_s / kFrameDt + 1e-9;
        const Run* r = run_at(std::min(frame, 1e18));
        if (!r) return {};
        const long f = std::min(static_cast<long>(std::floor(frame)), r->last());
        if (f < r->first) return {};
        const long n = std::min<long>(f - r->first + 1, kObsLen);
        std::vector<Point2> h;
        h.reserve(static_cast<size_t>(n));
        for (long i = f - n + 1; i <= f; ++i) h.push_back(r->pos[i - r->first]);
        return h;
    }
};

inline std::vector<PedReplay> build_replay(const Scenario& scn) {
    std::vector<PedReplay> out;
    std::map<int, size_t> index;
    for (long f = 0; f < static_cast<long>(scn.frames.size()); ++f) {
        for (const auto& [ped, pos] : scn.frames[f]) {
            auto [it, inserted] = index.try_emplace(ped, out.size());
            if (inserted) out.push_back({ped, {}});
            PedReplay& pr = out[it->second];
            if (!pr.runs.empty() && pr.runs.back().last() == f - 1) {
                pr.runs.back().pos.push_back(pos);
            } else {
                pr.runs.push_back({f, {pos}});
            }
        }
    }
    return out;
}

inline uint64_t replay_hash(const Scenario& scn) {
    uint64_t h = 1469598103934665603ull;
    const auto mix = [&h](uint64_t v) {
        h ^= v;
        h *= 1099511628211ull;
    };
    for (const auto& frame : scn.frames) {
        for (const auto& [ped, pos] : frame) {
            mix(static_cast<uint64_t>(ped));
            uint64_t bits;
            static_assert(sizeof(bits) == sizeof(pos.x));
            std::memcpy(&bits, &pos.x, sizeof(bits));
            mix(bits);
            std::memcpy(&bits, &pos.y, sizeof(bits));
            mix(bits);
        }
    }
    return h;
}

// constant-velocity (or stationary) fallback prediction from partial history
inline std::vector<Gaussian2> fallback_prediction(const std::vector<Point2>& hist,
                                                  const MpcConfig& cfg) {
    if (hist.size() >= 2) return predict_cv(hist, cfg.cv_sigma0, cfg.cv_growth, kPredLen);
    std::vector<Gaussian2> out;
    out.reserve(kPredLen);
    for (int k = 1; k <= kPredLen; ++k) {
        const double s = cfg.cv_sigma0 + k * cfg.cv_growth;
        out.push_back({hist.back().x, hist.back().y, s, s, 0.0});
    }
    return out;
}

}  // namespace detail

/// Replays one scenario in closed loop: the first 8 replay frames are an
/// observation warm-up, then the robot plans at 0.5 s steps until it reaches
/// the goal, collides, or times out. Pedestrians follow the recording and are
/// never influenced by the robot; pedestrians with short history (or a
/// predictor failure) fall back to constant-velocity predictions.
inline PlanResult run_scenario(const Scenario& scn, const PredictorFn& predictor,
                               const MpcConfig& cfg, const SimOptions& opts = {}) {
    cfg.validate();
    if (static_cast<long>(scn.frames.size()) < kObsLen) {
        throw std::invalid_argument("run_scenario: need at least 8 replay frames");
    }
    const auto replay = detail::build_replay(scn);

    PlanResult result;
    result.replay_hash = detail::replay_hash(scn);

    const double t0 = kObsLen * kFrameDt;  // first planning instant
    const double collision_dist = cfg.r_rob + cfg.r_ped;

    RobotState robot;
    robot.pos = scn.start;
    robot.heading = std::atan2(scn.goal.y - scn.start.y, scn.goal.x - scn.start.x);
    robot.v = cfg.initial_speed;

    const auto min_ped_distance = [&](double t) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& pr : replay) {
            const auto p = pr.position_at(t);
            if (p) best = std::min(best, distance(robot.pos, *p));
        }
        return best;
    };

    // observation warm-up: the robot waits at the start; walked-over robots
    // still count as collisions
    for (int f = 0; f <= kObsLen; ++f) {
        if (min_ped_distance(f * kFrameDt) < collision_dist) {
            result.outcome = Outcome::kCollision;
            result.nav_time_steps = 0;
            return result;
        }
    }

    const double straight = distance(scn.start, scn.goal);
    const long kinematic_lb = static_cast<long>(
        std::ceil(straight / std::max(cfg.bounds.v_max * cfg.dt, 1e-9)));
    long max_steps = std::max<long>(cfg.timeout_floor_steps,
                                    static_cast<long>(std::ceil(cfg.timeout_factor * kinematic_lb)));
    if (opts.max_steps_override > 0) max_steps = opts.max_steps_override;

    std::vector<Control> warm;
    int intruding_steps = 0;
    int total_steps = 0;
    std::vector<double> event_minima;  // one entry per maximal intrusion run
    bool in_event = false;
    double event_min = std::numeric_limits<double>::infinity();
    double overall_min = std::numeric_limits<double>::infinity();

    result.outcome = Outcome::kTimeout;
    for (long step = 0;; ++step) {
        if (distance(robot.pos, scn.goal) < cfg.goal_radius) {
            result.outcome = Outcome::kSuccess;
            break;
        }
        if (step >= max_steps) {
            result.outcome = Outcome::kTimeout;
            break;
        }
        const double t = t0 + step * cfg.dt;

        // predictions for everyone currently visible
        StepPredictions preds(static_cast<size_t>(std::max(cfg.horizon, kPredLen)));
        int live = 0;
        for (const auto& pr : replay) {
            if (!pr.position_at(t)) continue;
            const auto hist = pr.history_at(t);
            if (hist.empty()) continue;
            std::vector<Gaussian2> g;
            if (static_cast<int>(hist.size()) < kObsLen) {
                g = detail::fallback_prediction(hist, cfg);
                ++result.cv_fallbacks;
            } else {
                try {
                    g = predictor(hist);
                    if (static_cast<int>(g.size()) != kPredLen) {
                        throw std::runtime_error("predictor returned wrong horizon");
                    }
                } catch (const std::exception&) {
                    g = detail::fallback_prediction(hist, cfg);
                    ++result.cv_fallbacks;
                }
            }
            for (size_t k = 0; k < preds.size(); ++k) {
                preds[k].push_back(g[std::min(k, g.size() - 1)]);
            }
            ++live;
        }
        preds.resize(static_cast<size_t>(cfg.horizon));

        std::vector<Control> controls;
        double applied_violation = 0.0;
        if (opts.force_zero_controls) {
            controls.assign(static_cast<size_t>(cfg.horizon), Control{0.0, 0.0});
        } else {
            controls = solve_mpc(robot, preds, scn.goal, cfg, warm,
                                 mix_seed(cfg.seed, static_cast<uint64_t>(step)));
            const detail::MpcEvaluator ev(cfg, preds, scn.goal, robot);
            ev.evaluate(controls, &applied_violation, nullptr);
        }

        const RobotState next = unicycle_step(robot, controls.front(), cfg.dt, cfg.bounds);
        result.path_length += distance(next.pos, robot.pos);
        robot = next;
        ++total_steps;

        // receding horizon: shift and repeat the tail
        warm.assign(controls.begin() + 1, controls.end());
        warm.push_back(controls.back());

        const double t_next = t + cfg.dt;
        const double dmin = min_ped_distance(t_next);
        const bool intruded = dmin < 0.6;
        if (intruded) {
            ++intruding_steps;
            in_event = true;
            event_min = std::min(event_min, dmin);
            overall_min = std::min(overall_min, dmin);
        } else if (in_event) {
            event_minima.push_back(event_min);
            event_min = std::numeric_limits<double>::infinity();
            in_event = false;
        }

        PlanStepRecord rec;
        rec.time = t_next;
        rec.state = robot;
        rec.min_ped_distance = dmin;
        rec.intruded = intruded;
        rec.violation = applied_violation;
        if (opts.record_predictions) rec.predictions = preds;
        result.trace.push_back(std::move(rec));
        (void)live;

        if (dmin < collision_dist) {
            result.outcome = Outcome::kCollision;
            break;
        }
    }
    if (in_event) event_minima.push_back(event_min);

    result.nav_time_steps = total_steps;
    result.intrusion_ratio =
        total_steps > 0 ? static_cast<double>(intruding_steps) / total_steps : 0.0;
    if (!event_minima.empty()) {
        double acc = 0.0;
        for (double m : event_minima) acc += m;
        result.min_intrusion_distance = acc / static_cast<double>(event_minima.size());
        result.scenario_min_intrusion_distance = overall_min;
    }
    return result;
}

/// Aggregate planning metrics over a scenario batch.
struct PlanAggregate {
    int scenarios = 0;
    double success_rate = 0.0;
    double collision_rate = 0.0;
    double timeout_rate = 0.0;

    struct MeanStderr {
        double mean = std::numeric_limits<double>::quiet_NaN();
        double stderr_ = std::numeric_limits<double>::quiet_NaN();
        int n = 0;
    };
    MeanStderr nav_time_steps;   // successful scenarios only
    MeanStderr path_length;      // successful scenarios only
    MeanStderr intrusion_ratio;  // all scenarios
    MeanStderr min_intrusion_distance;           // scenarios with intrusions
    MeanStderr scenario_min_intrusion_distance;  // scenarios with intrusions
};

namespace detail {

inline PlanAggregate::MeanStderr mean_stderr(const std::vector<double>& xs) {
    PlanAggregate::MeanStderr out;
    out.n = static_cast<int>(xs.size());
    if (xs.empty()) return out;
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    out.mean = mean;
    if (xs.size() == 1) {
        out.stderr_ = 0.0;
        return out;
    }
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    out.stderr_ = std::sqrt(ss / static_cast<double>(xs.size() - 1)) /
                  std::sqrt(static_cast<double>(xs.size()));
    return out;
}

}  // namespace detail

inline PlanAggregate aggregate(const std::vector<PlanResult>& results) {
    if (results.empty()) throw std::invalid_argument("aggregate: no results");
    PlanAggregate agg;
    agg.scenarios = static_cast<int>(results.size());
    std::vector<double> nav, path, intr, mid, smid;
    int s = 0, c = 0, t = 0;
    for (const PlanResult& r : results) {
        switch (r.outcome) {
            case Outcome::kSuccess:
                ++s;
                nav.push_back(static_cast<double>(r.nav_time_steps));
                path.push_back(r.path_length);
                break;
            case Outcome::kCollision: ++c; break;
            case Outcome::kTimeout: ++t; break;
        }
        intr.push_back(r.intrusion_ratio);
        if (r.min_intrusion_distance) mid.push_back(*r.min_intrusion_distance);
        if (r.scenario_min_intrusion_distance) {
            smid.push_back(*r.scenario_min_intrusion_distance);
        }
    }
    const double n = static_cast<double>(results.size());
    agg.success_rate = s / n;
    agg.collision_rate = c / n;
    agg.timeout_rate = t / n;
    agg.nav_time_steps = detail::mean_stderr(nav);
    agg.path_length = detail::mean_stderr(path);
    agg.intrusion_ratio = detail::mean_stderr(intr);
    agg.min_intrusion_distance = detail::mean_stderr(mid);
    agg.scenario_min_intrusion_distance = detail::mean_stderr(smid);
    return agg;
}

}  // namespace trajcal
