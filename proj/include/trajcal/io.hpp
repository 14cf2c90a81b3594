#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "trajcal/dataset.hpp"
#include "trajcal/metrics.hpp"
#include "trajcal/planner.hpp"
#include "trajcal/predictor.hpp"

namespace trajcal {

using nlohmann::json;

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    return j;
}

inline void save_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
    if (!out) throw std::runtime_error("short write to " + path);
}

// ---------------------------------------------------------------------------
// dataset cache

struct DatasetCache {
    uint64_t seed = 0;
    std::vector<SceneLog> scenes;
    std::vector<TrajectoryWindow> train;
    std::vector<TrajectoryWindow> test;
    std::map<std::string, long> cut_frames;  // in-distribution split cuts
    std::vector<Scenario> scenarios;
};

namespace detail {

inline json window_to_json(const TrajectoryWindow& w) {
    json pts_obs = json::array(), pts_fut = json::array();
    for (const Point2& p : w.obs) pts_obs.push_back({p.x, p.y});
    for (const Point2& p : w.future) pts_fut.push_back({p.x, p.y});
    return {{"scene_id", w.scene_id},
            {"ped_id", w.ped_id},
            {"start_frame", w.start_frame},
            {"obs", pts_obs},
            {"future", pts_fut}};
}

inline TrajectoryWindow window_from_json(const json& j) {
    TrajectoryWindow w;
    w.scene_id = j.at("scene_id").get<std::string>();
    w.ped_id = j.at("ped_id").get<int>();
    w.start_frame = j.at("start_frame").get<long>();
    for (const auto& p : j.at("obs")) w.obs.push_back({p.at(0), p.at(1)});
    for (const auto& p : j.at("future")) w.future.push_back({p.at(0), p.at(1)});
    return w;
}

inline json frames_to_json(const std::vector<std::vector<std::pair<int, Point2>>>& frames) {
    json out = json::array();
    for (const auto& frame : frames) {
        json f = json::array();
        for (const auto& [ped, pos] : frame) f.push_back({ped, pos.x, pos.y});
        out.push_back(std::move(f));
    }
    return out;
}

inline std::vector<std::vector<std::pair<int, Point2>>> frames_from_json(const json& j) {
    std::vector<std::vector<std::pair<int, Point2>>> out;
    for (const auto& f : j) {
        std::vector<std::pair<int, Point2>> frame;
        for (const auto& row : f) {
            frame.emplace_back(row.at(0).get<int>(), Point2{row.at(1), row.at(2)});
        }
        out.push_back(std::move(frame));
    }
    return out;
}

}  // namespace detail

inline json scenario_to_json(const Scenario& s) {
    return {{"scene_id", s.scene_id},
            {"start_frame", s.start_frame},
            {"variant", to_string(s.variant)},
            {"rect", {s.rect_x0, s.rect_y0, s.rect_x1, s.rect_y1}},
            {"start", {s.start.x, s.start.y}},
            {"goal", {s.goal.x, s.goal.y}},
            {"frames", detail::frames_to_json(s.frames)}};
}

inline Scenario scenario_from_json(const json& j) {
    Scenario s;
    s.scene_id = j.at("scene_id").get<std::string>();
    s.start_frame = j.at("start_frame").get<long>();
    s.variant = scenario_variant_from_string(j.at("variant").get<std::string>());
    s.rect_x0 = j.at("rect").at(0);
    s.rect_y0 = j.at("rect").at(1);
    s.rect_x1 = j.at("rect").at(2);
    s.rect_y1 = j.at("rect").at(3);
    s.start = {j.at("start").at(0), j.at("start").at(1)};
    s.goal = {j.at("goal").at(0), j.at("goal").at(1)};
    s.frames = detail::frames_from_json(j.at("frames"));
    return s;
}

inline std::string scenario_id(const Scenario& s) {
    return s.scene_id + ":" + std::to_string(s.start_frame) + ":" + to_string(s.variant);
}

inline json cache_to_json(const DatasetCache& c) {
    json scenes = json::array();
    for (const SceneLog& log : c.scenes) {
        json frames = json::array();
        for (const auto& f : log.frames) {
            json peds = json::array();
            for (const auto& [ped, pos] : f.peds) peds.push_back({ped, pos.x, pos.y});
            frames.push_back({{"frame_id", f.frame_id}, {"peds", peds}});
        }
        scenes.push_back({{"scene_id", log.scene_id},
                          {"stride", log.stride},
                          {"fps", log.fps},
                          {"frames", frames}});
    }
    json train = json::array(), test = json::array();
    for (const auto& w : c.train) train.push_back(detail::window_to_json(w));
    for (const auto& w : c.test) test.push_back(detail::window_to_json(w));
    json cuts = json::object();
    for (const auto& [scene, cut] : c.cut_frames) cuts[scene] = cut;
    json scenarios = json::array();
    for (const auto& s : c.scenarios) scenarios.push_back(scenario_to_json(s));
    return {{"format", "trajcal-cache"}, {"version", 1},      {"seed", c.seed},
            {"scenes", scenes},          {"train", train},    {"test", test},
            {"cut_frames", cuts},        {"scenarios", scenarios}};
}

inline DatasetCache cache_from_json(const json& j) {
    if (j.value("format", "") != "trajcal-cache") {
        throw std::runtime_error("not a trajcal cache file");
    }
    DatasetCache c;
    c.seed = j.at("seed").get<uint64_t>();
    for (const auto& js : j.at("scenes")) {
        SceneLog log;
        log.scene_id = js.at("scene_id").get<std::string>();
        log.stride = js.at("stride").get<long>();
        log.fps = js.at("fps").get<double>();
        for (const auto& jf : js.at("frames")) {
            SceneLog::Frame f;
            f.frame_id = jf.at("frame_id").get<long>();
            for (const auto& row : jf.at("peds")) {
                f.peds.emplace_back(row.at(0).get<int>(), Point2{row.at(1), row.at(2)});
            }
            log.frames.push_back(std::move(f));
        }
        c.scenes.push_back(std::move(log));
    }
    for (const auto& jw : j.at("train")) c.train.push_back(detail::window_from_json(jw));
    for (const auto& jw : j.at("test")) c.test.push_back(detail::window_from_json(jw));
    for (const auto& [scene, cut] : j.at("cut_frames").items()) {
        c.cut_frames[scene] = cut.get<long>();
    }
    for (const auto& js : j.at("scenarios")) c.scenarios.push_back(scenario_from_json(js));
    return c;
}

/// Flat CSV of the window table, one row per window.
inline std::string windows_csv(const std::vector<TrajectoryWindow>& train,
                               const std::vector<TrajectoryWindow>& test, uint64_t seed) {
    std::ostringstream out;
    out << "# trajcal windows seed=" << seed << "\n";
    out << "scene_id,ped_id,start_frame,split";
    for (int i = 0; i < kObsLen; ++i) out << ",obs" << i << "_x,obs" << i << "_y";
    for (int i = 0; i < kPredLen; ++i) out << ",fut" << i << "_x,fut" << i << "_y";
    out << "\n";
    char buf[64];
    const auto emit = [&](const TrajectoryWindow& w, const char* split) {
        out << w.scene_id << ',' << w.ped_id << ',' << w.start_frame << ',' << split;
        for (const Point2& p : w.obs) {
            std::snprintf(buf, sizeof(buf), ",%.17g,%.17g", p.x, p.y);
            out << buf;
        }
        for (const Point2& p : w.future) {
            std::snprintf(buf, sizeof(buf), ",%.17g,%.17g", p.x, p.y);
            out << buf;
        }
        out << "\n";
    };
    for (const auto& w : train) emit(w, "train");
    for (const auto& w : test) emit(w, "test");
    return out.str();
}

// ---------------------------------------------------------------------------
// model checkpoint

inline json train_config_to_json(const TrainConfig& cfg) {
    return {{"epochs", cfg.epochs},
            {"learning_rate", cfg.learning_rate},
            {"adam_beta1", cfg.adam_beta1},
            {"adam_beta2", cfg.adam_beta2},
            {"adam_eps", cfg.adam_eps},
            {"beta", cfg.beta},
            {"mhd_weight", cfg.mhd_weight},
            {"batch_size", cfg.batch_size},
            {"hidden", cfg.hidden},
            {"loss", to_string(cfg.loss)}};
}

inline TrainConfig train_config_from_json(const json& j) {
    TrainConfig cfg;
    cfg.epochs = j.at("epochs").get<int>();
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.adam_beta1 = j.at("adam_beta1").get<double>();
    cfg.adam_beta2 = j.at("adam_beta2").get<double>();
    cfg.adam_eps = j.at("adam_eps").get<double>();
    cfg.beta = j.at("beta").get<double>();
    cfg.mhd_weight = j.at("mhd_weight").get<double>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.hidden = j.at("hidden").get<int>();
    cfg.loss = loss_kind_from_string(j.at("loss").get<std::string>());
    return cfg;
}

inline json kde_config_to_json(const KdeConfig& cfg) {
    return {{"bin_step", cfg.bin_step},
            {"bandwidth", cfg.bandwidth},
            {"temperature", cfg.temperature}};
}

inline KdeConfig kde_config_from_json(const json& j) {
    KdeConfig cfg;
    cfg.bin_step = j.at("bin_step").get<double>();
    cfg.bandwidth = j.at("bandwidth").get<double>();
    cfg.temperature = j.at("temperature").get<double>();
    return cfg;
}

inline json checkpoint_to_json(const ModelParams& params, const TrainConfig& train_cfg,
                               const KdeConfig& kde, uint64_t seed) {
    return {{"format", "trajcal-checkpoint"},
            {"version", 1},
            {"seed", seed},
            {"arch", params.arch},
            {"init_seed", params.seed},
            {"train", train_config_to_json(train_cfg)},
            {"kde", kde_config_to_json(kde)},
            {"values", params.values}};
}

struct Checkpoint {
    ModelParams params;
    TrainConfig train_cfg;
    KdeConfig kde;
    uint64_t seed = 0;
};

inline Checkpoint checkpoint_from_json(const json& j) {
    if (j.value("format", "") != "trajcal-checkpoint") {
        throw std::runtime_error("not a trajcal checkpoint file");
    }
    Checkpoint c;
    c.seed = j.at("seed").get<uint64_t>();
    c.params.arch = j.at("arch").get<std::vector<int>>();
    c.params.seed = j.at("init_seed").get<uint64_t>();
    c.params.values = j.at("values").get<std::vector<double>>();
    c.train_cfg = train_config_from_json(j.at("train"));
    c.kde = kde_config_from_json(j.at("kde"));
    return c;
}

// ---------------------------------------------------------------------------
// metric reports

struct MetricsReport {
    std::string predictor;
    int windows = 0;
    double ade = 0.0, fde = 0.0;
    EsvReport esv;
    std::optional<int> bon_n;
    double bon_ade = 0.0, bon_fde = 0.0;
};

inline json metrics_to_json(const MetricsReport& m, uint64_t seed) {
    json levels = json::array();
    for (const auto& row : m.esv.levels) {
        levels.push_back(
            {{"level", row.level}, {"empirical", row.empirical}, {"ideal", row.ideal}});
    }
    json j = {{"format", "trajcal-metrics"},
              {"version", 1},
              {"seed", seed},
              {"predictor", m.predictor},
              {"windows", m.windows},
              {"ade", m.ade},
              {"fde", m.fde},
              {"delta_esv_1", m.esv.delta_esv_1},
              {"delta_esv_2", m.esv.delta_esv_2},
              {"delta_esv_3", m.esv.delta_esv_3},
              {"mean_abs_delta_esv", m.esv.mean_abs_delta_esv},
              {"levels", levels}};
    if (m.bon_n) {
        j["bon"] = {{"n", *m.bon_n}, {"ade", m.bon_ade}, {"fde", m.bon_fde}};
    } else {
        j["bon"] = nullptr;
    }
    return j;
}

inline std::string metrics_csv(const MetricsReport& m, uint64_t seed) {
    std::ostringstream out;
    out << "# trajcal eval seed=" << seed << "\n";
    out << "predictor,windows,ade,fde,delta_esv_1,delta_esv_2,delta_esv_3,"
           "mean_abs_delta_esv,bon_n,bon_ade,bon_fde\n";
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", m.predictor.c_str(),
                  m.windows, m.ade, m.fde, m.esv.delta_esv_1, m.esv.delta_esv_2,
                  m.esv.delta_esv_3, m.esv.mean_abs_delta_esv);
    out << buf;
    if (m.bon_n) {
        std::snprintf(buf, sizeof(buf), ",%d,%.6f,%.6f\n", *m.bon_n, m.bon_ade, m.bon_fde);
        out << buf;
    } else {
        out << ",,,\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// planning reports

inline std::string plan_csv_header() {
    return "scenario_id,scene_id,start_frame,variant,outcome,nav_time_steps,path_length,"
           "intrusion_ratio,min_intrusion_distance,scenario_min_intrusion_distance,"
           "cv_fallbacks,replay_hash\n";
}

inline std::string plan_csv_row(const Scenario& scn, const PlanResult& r) {
    std::ostringstream out;
    out << scenario_id(scn) << ',' << scn.scene_id << ',' << scn.start_frame << ','
        << to_string(scn.variant) << ',' << to_string(r.outcome) << ',' << r.nav_time_steps;
    char buf[128];
    std::snprintf(buf, sizeof(buf), ",%.6f,%.6f", r.path_length, r.intrusion_ratio);
    out << buf;
    if (r.min_intrusion_distance) {
        std::snprintf(buf, sizeof(buf), ",%.6f", *r.min_intrusion_distance);
        out << buf;
    } else {
        out << ',';
    }
    if (r.scenario_min_intrusion_distance) {
        std::snprintf(buf, sizeof(buf), ",%.6f", *r.scenario_min_intrusion_distance);
        out << buf;
    } else {
        out << ',';
    }
    out << ',' << r.cv_fallbacks << ',' << r.replay_hash << "\n";
    return out.str();
}

namespace detail {

inline json mean_stderr_to_json(const PlanAggregate::MeanStderr& m) {
    json j;
    j["n"] = m.n;
    j["mean"] = m.n > 0 ? json(m.mean) : json(nullptr);
    j["stderr"] = m.n > 0 ? json(m.stderr_) : json(nullptr);
    return j;
}

}  // namespace detail

inline json aggregate_to_json(const PlanAggregate& a, uint64_t seed) {
    return {{"format", "trajcal-plan-aggregate"},
            {"version", 1},
            {"seed", seed},
            {"scenarios", a.scenarios},
            {"success_rate", a.success_rate},
            {"collision_rate", a.collision_rate},
            {"timeout_rate", a.timeout_rate},
            {"nav_time_steps", detail::mean_stderr_to_json(a.nav_time_steps)},
            {"path_length", detail::mean_stderr_to_json(a.path_length)},
            {"intrusion_ratio", detail::mean_stderr_to_json(a.intrusion_ratio)},
            {"min_intrusion_distance", detail::mean_stderr_to_json(a.min_intrusion_distance)},
            {"scenario_min_intrusion_distance",
             detail::mean_stderr_to_json(a.scenario_min_intrusion_distance)}};
}

/// Per-step trace of one scenario, for plot tooling.
inline json trace_to_json(const Scenario& scn, const PlanResult& r, uint64_t seed) {
    json steps = json::array();
    for (const PlanStepRecord& rec : r.trace) {
        json step = {{"time", rec.time},
                     {"x", rec.state.pos.x},
                     {"y", rec.state.pos.y},
                     {"heading", rec.state.heading},
                     {"v", rec.state.v},
                     {"omega", rec.state.omega},
                     {"min_ped_distance", rec.min_ped_distance},
                     {"intruded", rec.intruded},
                     {"violation", rec.violation}};
        if (!rec.predictions.empty()) {
            json preds = json::array();
            for (const auto& ped_step : rec.predictions) {
                json g = json::array();
                for (const Gaussian2& gg : ped_step) {
                    g.push_back({gg.mu_x, gg.mu_y, gg.sx, gg.sy, gg.rho});
                }
                preds.push_back(std::move(g));
            }
            step["predictions"] = std::move(preds);
        }
        steps.push_back(std::move(step));
    }
    return {{"format", "trajcal-trace"},
            {"version", 1},
            {"seed", seed},
            {"scenario_id", scenario_id(scn)},
            {"outcome", to_string(r.outcome)},
            {"replay_hash", r.replay_hash},
            {"steps", steps}};
}

}  // namespace trajcal
