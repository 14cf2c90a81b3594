#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "trajcal/planner.hpp"

using namespace trajcal;
using Catch::Approx;

namespace {

Scenario empty_scene(Point2 start, Point2 goal) {
    Scenario s;
    s.scene_id = "unit";
    s.start = start;
    s.goal = goal;
    s.rect_x0 = std::min(start.x, goal.x) - 1;
    s.rect_y0 = std::min(start.y, goal.y) - 1;
    s.rect_x1 = std::max(start.x, goal.x) + 1;
    s.rect_y1 = std::max(start.y, goal.y) + 1;
    s.frames.assign(kScenarioFrames, {});
    return s;
}

// pedestrian walking a straight line over the whole replay
void add_walker(Scenario& s, int id, Point2 at, Point2 vel_per_frame) {
    for (size_t f = 0; f < s.frames.size(); ++f) {
        s.frames[f].emplace_back(id, at + static_cast<double>(f) * vel_per_frame);
    }
}

PredictorFn cv_predictor(double sigma0 = 0.2, double growth = 0.05) {
    return [=](const std::vector<Point2>& hist) { return predict_cv(hist, sigma0, growth); };
}

StepPredictions static_ped(Point2 at, double var, int horizon = 12) {
    StepPredictions p(horizon);
    for (auto& step : p) step.push_back({at.x, at.y, std::sqrt(var), std::sqrt(var), 0.0});
    return p;
}

}  // namespace

TEST_CASE("unicycle_step forward Euler") {
    const ControlBounds b;
    RobotState s;
    s.heading = 0.0;

    const RobotState a = unicycle_step(s, {1.0, 0.0}, 0.5, b);
    CHECK(a.pos.x == Approx(0.5));
    CHECK(a.pos.y == Approx(0.0));
    CHECK(a.heading == 0.0);

    s.heading = M_PI / 2.0;
    const RobotState c = unicycle_step(s, {2.0, 0.0}, 0.5, b);
    CHECK(c.pos.x == Approx(0.0).margin(1e-12));
    CHECK(c.pos.y == Approx(1.0));
    CHECK(c.heading == Approx(M_PI / 2.0));

    const RobotState d = unicycle_step(s, {0.0, 0.1}, 0.5, b);
    CHECK(d.pos == s.pos);
    CHECK(d.heading == Approx(M_PI / 2.0 + 0.05));

    CHECK_THROWS_AS(unicycle_step(s, {5.0, 0.0}, 0.5, b), std::invalid_argument);
    CHECK_THROWS_AS(unicycle_step(s, {1.0, 0.5}, 0.5, b), std::invalid_argument);
}

TEST_CASE("collision_constraint_rhs hand-derived value and monotonicity") {
    MpcConfig cfg;
    const Gaussian2 g{0, 0, 0.1, 0.1, 0.0};

    // oracle: sqrt(det(2 pi Sigma)) = 2 pi * 0.01, A_col = pi * 0.4^2
    const double oracle = -2.0 * std::log((2.0 * M_PI * 0.01) * 0.2 / (M_PI * 0.16));
    CHECK(oracle == Approx(7.378).margin(1e-3));
    CHECK(collision_constraint_rhs(g, cfg) == Approx(oracle).epsilon(1e-12));

    // huge covariance: the log argument exceeds 1, constraint trivially holds
    const Gaussian2 huge{0, 0, 10.0, 10.0, 0.0};
    CHECK(collision_constraint_rhs(huge, cfg) <= 0.0);

    // looser probability threshold weakens the constraint
    MpcConfig loose = cfg;
    loose.p_col = 0.4;
    CHECK(collision_constraint_rhs(g, loose) < collision_constraint_rhs(g, cfg));

    // monotone: shrinking p_col never decreases the RHS
    double prev = -1e300;
    for (double p = 0.9; p > 0.01; p -= 0.05) {
        MpcConfig c2 = cfg;
        c2.p_col = p;
        const double rhs = collision_constraint_rhs(g, c2);
        CHECK(rhs >= prev);
        prev = rhs;
    }
}

TEST_CASE("mpc_objective stage and terminal structure") {
    MpcConfig cfg;
    RobotState start;
    start.pos = {0.0, 0.0};
    start.heading = 0.0;
    const Point2 goal{10.0, 0.0};

    // zero controls, no pedestrians: the robot never moves, every stage pays
    // the full progress cost and the terminal pays Q_H
    const std::vector<Control> zeros(12, Control{0.0, 0.0});
    const ObjectiveResult r = mpc_objective(zeros, start, {}, goal, cfg);
    CHECK(r.cost == Approx(12.0 * cfg.q_progress + cfg.q_terminal).epsilon(1e-12));
    CHECK(r.violations.empty());
    CHECK(r.total_violation() == 0.0);

    // a tight pedestrian sitting on the straight path: full-speed straight
    // controls violate both constraints at the crossing step
    const std::vector<Control> straight(12, Control{3.0, 0.0});
    const ObjectiveResult v =
        mpc_objective(straight, start, static_ped({3.0, 0.0}, 0.01), goal, cfg);
    CHECK(v.total_violation() > 0.0);
    REQUIRE(v.violations.size() == 24);  // 12 steps x 1 ped x {md, ed}

    CHECK_THROWS_AS(mpc_objective(straight, RobotState{{10.0, 0.0}, 0, 0, 0}, {}, goal, cfg),
                    std::invalid_argument);
    const std::vector<Control> bad(12, Control{9.0, 0.0});
    CHECK_THROWS_AS(mpc_objective(bad, start, {}, goal, cfg), std::invalid_argument);
}

TEST_CASE("solve_mpc drives toward the goal in an empty scene") {
    MpcConfig cfg;
    RobotState start;
    start.pos = {0.0, 0.0};
    start.heading = 0.0;
    const Point2 goal{10.0, 0.0};

    const auto sol = solve_mpc(start, {}, goal, cfg, {}, 7);
    REQUIRE(sol.size() == 12);
    CHECK(sol.front().v > 0.0);

    RobotState s = start;
    for (const Control& u : sol) s = unicycle_step(s, u, cfg.dt, cfg.bounds);
    CHECK(distance(s.pos, goal) < distance(start.pos, goal));

    // re-solving from the converged solution changes nothing material
    const StepPredictions none;
    const auto again = solve_mpc(start, none, goal, cfg, sol, 7);
    const detail::MpcEvaluator ev(cfg, none, goal, start);
    CHECK(ev.penalized(again) <= ev.penalized(sol) + 1e-6);
    for (int t = 0; t < 12; ++t) {
        CHECK(again[t].v == sol[t].v);
        CHECK(again[t].omega == sol[t].omega);
    }
}

TEST_CASE("solve_mpc avoids a tight pedestrian gate") {
    MpcConfig cfg;
    RobotState start;
    start.pos = {0.0, 0.0};
    start.heading = 0.0;
    const Point2 goal{12.0, 0.0};

    StepPredictions preds(12);
    for (auto& step : preds) {
        step.push_back({5.0, 0.55, 0.1, 0.1, 0.0});
        step.push_back({5.0, -0.55, 0.1, 0.1, 0.0});
    }
    // the straight path is blocked
    const std::vector<Control> straight(12, Control{3.0, 0.0});
    CHECK(mpc_objective(straight, start, preds, goal, cfg).total_violation() > 0.0);

    // the solver's trajectory is violation-free
    const auto sol = solve_mpc(start, preds, goal, cfg, {}, 11);
    CHECK(mpc_objective(sol, start, preds, goal, cfg).total_violation() == 0.0);
}

TEST_CASE("solve_mpc returns the lowest-violation plan when surrounded") {
    MpcConfig cfg;
    RobotState start;
    start.pos = {0.0, 0.0};
    start.heading = 0.0;
    const Point2 goal{10.0, 0.0};

    // a dense pedestrian field around the start: every reachable rollout
    // point in the first steps sits within 0.8 m of someone
    StepPredictions preds(12);
    for (auto& step : preds) {
        for (double x = -4.0; x <= 4.01; x += 0.5) {
            for (double y = -4.0; y <= 4.01; y += 0.5) {
                if (x * x + y * y > 16.0) continue;
                step.push_back({x, y, 0.05, 0.05, 0.0});
            }
        }
    }
    const auto sol = solve_mpc(start, preds, goal, cfg, {}, 3);
    const double viol = mpc_objective(sol, start, preds, goal, cfg).total_violation();
    CHECK(viol > 0.0);  // nothing feasible exists
    const std::vector<Control> zeros(12, Control{0.0, 0.0});
    CHECK(viol <=
          mpc_objective(zeros, start, preds, goal, cfg).total_violation() + 1e-9);
}

TEST_CASE("run_scenario: empty scene reaches the goal efficiently") {
    const Scenario scn = empty_scene({0, 0}, {10, 0});
    const PlanResult r = run_scenario(scn, cv_predictor(), MpcConfig{});
    CHECK(r.outcome == Outcome::kSuccess);
    // kinematic lower bound is ceil(10 / 1.5) = 7 steps
    CHECK(r.nav_time_steps >= 7);
    CHECK(r.nav_time_steps <= 12);
    CHECK(r.path_length >= 9.6);
    CHECK(r.path_length <= 11.0);
    CHECK(r.intrusion_ratio == 0.0);
    CHECK_FALSE(r.min_intrusion_distance.has_value());
}

TEST_CASE("run_scenario: pedestrian on the start collides immediately") {
    Scenario scn = empty_scene({0, 0}, {10, 0});
    add_walker(scn, 1, {0.0, 0.0}, {0.0, 0.0});
    const PlanResult r = run_scenario(scn, cv_predictor(), MpcConfig{});
    CHECK(r.outcome == Outcome::kCollision);
    CHECK(r.nav_time_steps == 0);
}

TEST_CASE("run_scenario: a robot that never moves times out at the cap") {
    const Scenario scn = empty_scene({0, 0}, {10, 0});
    SimOptions opts;
    opts.force_zero_controls = true;
    const PlanResult r = run_scenario(scn, cv_predictor(), MpcConfig{}, opts);
    CHECK(r.outcome == Outcome::kTimeout);
    CHECK(r.nav_time_steps == 60);  // floor of the timeout rule
    CHECK(r.path_length == 0.0);
}

TEST_CASE("run_scenario is deterministic") {
    Scenario scn = empty_scene({0, 0}, {8, 3});
    add_walker(scn, 1, {8.0, -1.0}, {-0.32, 0.12});
    add_walker(scn, 2, {2.0, 4.0}, {0.2, -0.2});
    MpcConfig cfg;
    cfg.seed = 42;
    const PlanResult a = run_scenario(scn, cv_predictor(), cfg);
    const PlanResult b = run_scenario(scn, cv_predictor(), cfg);
    CHECK(a.outcome == b.outcome);
    CHECK(a.nav_time_steps == b.nav_time_steps);
    CHECK(a.path_length == b.path_length);
    CHECK(a.intrusion_ratio == b.intrusion_ratio);
    REQUIRE(a.trace.size() == b.trace.size());
    for (size_t i = 0; i < a.trace.size(); ++i) {
        CHECK(a.trace[i].state.pos == b.trace[i].state.pos);
    }
}

TEST_CASE("pedestrian replay is identical across planner variants") {
    Scenario scn = empty_scene({0, 0}, {8, 0});
    add_walker(scn, 1, {4.0, 5.0}, {0.0, -0.25});
    const PlanResult cv = run_scenario(scn, cv_predictor(), MpcConfig{});
    const PlanResult wide = run_scenario(scn, cv_predictor(1.0, 0.2), MpcConfig{});
    CHECK(cv.replay_hash == wide.replay_hash);
}

TEST_CASE("violation-free solutions keep the executed step violation-free") {
    Scenario scn = empty_scene({0, 0}, {9, 0});
    add_walker(scn, 1, {5.0, 2.5}, {0.0, -0.08});
    MpcConfig cfg;
    SimOptions opts;
    opts.record_predictions = true;
    const PlanResult r = run_scenario(scn, cv_predictor(), cfg, opts);

    RobotState prev;
    prev.pos = scn.start;
    for (const PlanStepRecord& rec : r.trace) {
        if (rec.violation == 0.0 && !rec.predictions.empty() && !rec.predictions[0].empty()) {
            for (const Gaussian2& g : rec.predictions[0]) {
                CHECK(mahalanobis_sq(rec.state.pos, g) >=
                      collision_constraint_rhs(g, cfg) - 1e-9);
                CHECK(distance(rec.state.pos, g.mean()) >=
                      cfg.r_rob + cfg.r_ped + cfg.d_safe - 1e-9);
            }
        }
        prev = rec.state;
    }
}

TEST_CASE("short-history pedestrians fall back to constant velocity") {
    Scenario scn = empty_scene({0, 0}, {10, 0});
    // appears mid-replay: at the first planning step it has < 8 frames
    for (size_t f = 6; f < scn.frames.size(); ++f) {
        scn.frames[f].emplace_back(9, Point2{8.0, 4.0 - 0.2 * static_cast<double>(f)});
    }
    const PlanResult r = run_scenario(scn, cv_predictor(), MpcConfig{});
    CHECK(r.cv_fallbacks > 0);

    // a predictor that always fails also falls back rather than aborting
    const PredictorFn broken = [](const std::vector<Point2>&) -> std::vector<Gaussian2> {
        throw std::runtime_error("no model");
    };
    const PlanResult rb = run_scenario(scn, broken, MpcConfig{});
    CHECK(rb.cv_fallbacks >= r.cv_fallbacks);
    CHECK((rb.outcome == Outcome::kSuccess || rb.outcome == Outcome::kTimeout ||
           rb.outcome == Outcome::kCollision));
}

TEST_CASE("aggregate planning metrics") {
    PlanResult s1;
    s1.outcome = Outcome::kSuccess;
    s1.nav_time_steps = 10;
    s1.path_length = 10.0;
    s1.intrusion_ratio = 0.1;
    s1.min_intrusion_distance = 0.5;
    s1.scenario_min_intrusion_distance = 0.45;
    PlanResult s2 = s1;
    s2.nav_time_steps = 14;
    s2.path_length = 12.0;
    s2.intrusion_ratio = 0.0;
    s2.min_intrusion_distance.reset();
    s2.scenario_min_intrusion_distance.reset();
    PlanResult s3 = s2;
    PlanResult c1;
    c1.outcome = Outcome::kCollision;
    c1.intrusion_ratio = 0.3;

    const PlanAggregate all_s = aggregate({s1, s2});
    CHECK(all_s.success_rate == 1.0);
    CHECK(all_s.collision_rate == 0.0);
    CHECK(all_s.timeout_rate == 0.0);
    CHECK(all_s.nav_time_steps.mean == Approx(12.0));
    CHECK(all_s.nav_time_steps.stderr_ == Approx(2.0));
    CHECK(all_s.min_intrusion_distance.n == 1);

    const PlanAggregate mixed = aggregate({s1, s2, s3, c1});
    CHECK(mixed.success_rate == Approx(0.75));
    CHECK(mixed.collision_rate == Approx(0.25));
    CHECK(mixed.timeout_rate == 0.0);
    CHECK(mixed.intrusion_ratio.n == 4);

    CHECK_THROWS_AS(aggregate({}), std::invalid_argument);
}

TEST_CASE("planner reference defaults") {
    const MpcConfig m;
    CHECK(m.horizon == 12);
    CHECK(m.dt == 0.5);
    CHECK((m.qu_v == 1.0 && m.qu_omega == 1.0));
    CHECK((m.q_terminal == 1000.0 && m.q_progress == 1000.0 && m.q_md == 1000.0));
    CHECK((m.r_rob == 0.2 && m.r_ped == 0.2 && m.d_safe == 0.4 && m.p_col == 0.2));
    CHECK((m.bounds.v_min == 0.0 && m.bounds.v_max == 3.0));
    CHECK((m.bounds.omega_min == -0.2 && m.bounds.omega_max == 0.2));
    CHECK(m.initial_speed == 1.0);
    CHECK(m.a_col() == Approx(M_PI * 0.16));
}
