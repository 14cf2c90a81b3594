#pragma once

#include <cctype>
#include <cstdlib>
#include <string>
#include <vector>

#include <json.hpp>

#include "trajcal/io.hpp"

namespace trajcal {

/// Full run configuration: one self-describing JSON document covering data,
/// split, training, KDE, MPC and predictor settings. Every piece of
/// randomness in a run is derived from the single root seed.
struct RunConfig {
    uint64_t seed = 0;
    std::string out_dir = "out";

    struct Data {
        std::vector<std::string> paths;      // annotation files, one per scene
        std::vector<std::string> scene_ids;  // optional; file stems otherwise
        int window_stride = 1;
    } data;

    struct Split {
        std::string mode = "in_dist";  // in_dist | loo
        double train_fraction = 0.7;
        std::vector<std::string> holdout;
    } split;

    TrainConfig train;
    KdeConfig kde;
    MpcConfig mpc;

    struct Predictor {
        std::string kind = "cv";  // cv | mlp
        std::string checkpoint;
        double sigma0 = 0.2;
        double growth = 0.05;
        double cov_scale = 1.0;  // multiplies predicted covariances
    } predictor;

    struct Eval {
        int bon_n = 0;  // best-of-N sample count; 0 disables
    } eval;

    uint64_t train_seed() const { return mix_seed(seed, 1); }
    uint64_t mpc_seed() const { return mix_seed(seed, 2); }
    uint64_t bon_seed() const { return mix_seed(seed, 3); }

    SplitSpec split_spec() const {
        SplitSpec s;
        if (split.mode == "in_dist") {
            s.mode = SplitSpec::Mode::kInDistribution;
        } else if (split.mode == "loo") {
            s.mode = SplitSpec::Mode::kLeaveOneOut;
        } else {
            throw std::invalid_argument("split.mode must be in_dist or loo, got '" + split.mode +
                                        "'");
        }
        s.train_fraction = split.train_fraction;
        s.holdout_scenes = split.holdout;
        return s;
    }

    void validate() const {
        train.validate();
        kde.validate();
        mpc.validate();
        split_spec();
        if (predictor.kind != "cv" && predictor.kind != "mlp") {
            throw std::invalid_argument("predictor.kind must be cv or mlp");
        }
        if (!(predictor.sigma0 > 0.0) || predictor.growth < 0.0 || !(predictor.cov_scale > 0.0)) {
            throw std::invalid_argument("predictor: need sigma0 > 0, growth >= 0, cov_scale > 0");
        }
        if (eval.bon_n < 0) throw std::invalid_argument("eval.bon_n must be >= 0");
    }
};

inline json mpc_config_to_json(const MpcConfig& m) {
    return {{"horizon", m.horizon},
            {"dt", m.dt},
            {"qu_v", m.qu_v},
            {"qu_omega", m.qu_omega},
            {"q_terminal", m.q_terminal},
            {"q_progress", m.q_progress},
            {"q_md", m.q_md},
            {"r_rob", m.r_rob},
            {"r_ped", m.r_ped},
            {"d_safe", m.d_safe},
            {"p_col", m.p_col},
            {"v_min", m.bounds.v_min},
            {"v_max", m.bounds.v_max},
            {"omega_min", m.bounds.omega_min},
            {"omega_max", m.bounds.omega_max},
            {"initial_speed", m.initial_speed},
            {"goal_radius", m.goal_radius},
            {"md_floor", m.md_floor},
            {"penalty_weight", m.penalty_weight},
            {"random_candidates", m.random_candidates},
            {"refine_rounds", m.refine_rounds},
            {"timeout_factor", m.timeout_factor},
            {"timeout_floor_steps", m.timeout_floor_steps},
            {"cv_sigma0", m.cv_sigma0},
            {"cv_growth", m.cv_growth}};
}

inline MpcConfig mpc_config_from_json(const json& j) {
    MpcConfig m;
    m.horizon = j.at("horizon").get<int>();
    m.dt = j.at("dt").get<double>();
    m.qu_v = j.at("qu_v").get<double>();
    m.qu_omega = j.at("qu_omega").get<double>();
    m.q_terminal = j.at("q_terminal").get<double>();
    m.q_progress = j.at("q_progress").get<double>();
    m.q_md = j.at("q_md").get<double>();
    m.r_rob = j.at("r_rob").get<double>();
    m.r_ped = j.at("r_ped").get<double>();
    m.d_safe = j.at("d_safe").get<double>();
    m.p_col = j.at("p_col").get<double>();
    m.bounds.v_min = j.at("v_min").get<double>();
    m.bounds.v_max = j.at("v_max").get<double>();
    m.bounds.omega_min = j.at("omega_min").get<double>();
    m.bounds.omega_max = j.at("omega_max").get<double>();
    m.initial_speed = j.at("initial_speed").get<double>();
    m.goal_radius = j.at("goal_radius").get<double>();
    m.md_floor = j.at("md_floor").get<double>();
    m.penalty_weight = j.at("penalty_weight").get<double>();
    m.random_candidates = j.at("random_candidates").get<int>();
    m.refine_rounds = j.at("refine_rounds").get<int>();
    m.timeout_factor = j.at("timeout_factor").get<double>();
    m.timeout_floor_steps = j.at("timeout_floor_steps").get<int>();
    m.cv_sigma0 = j.at("cv_sigma0").get<double>();
    m.cv_growth = j.at("cv_growth").get<double>();
    return m;
}

inline json run_config_to_json(const RunConfig& c) {
    return {{"seed", c.seed},
            {"out_dir", c.out_dir},
            {"data",
             {{"paths", c.data.paths},
              {"scene_ids", c.data.scene_ids},
              {"window_stride", c.data.window_stride}}},
            {"split",
             {{"mode", c.split.mode},
              {"train_fraction", c.split.train_fraction},
              {"holdout", c.split.holdout}}},
            {"train", train_config_to_json(c.train)},
            {"kde", kde_config_to_json(c.kde)},
            {"mpc", mpc_config_to_json(c.mpc)},
            {"predictor",
             {{"kind", c.predictor.kind},
              {"checkpoint", c.predictor.checkpoint},
              {"sigma0", c.predictor.sigma0},
              {"growth", c.predictor.growth},
              {"cov_scale", c.predictor.cov_scale}}},
            {"eval", {{"bon_n", c.eval.bon_n}}}};
}

namespace detail {

inline bool same_json_kind(const json& a, const json& b) {
    if (a.is_number() && b.is_number()) return true;
    return a.type() == b.type();
}

/// Overlays `patch` onto `base`, rejecting keys absent from the defaults and
/// mismatched value kinds. `path` is for error messages.
inline void strict_merge(json& base, const json& patch, const std::string& path) {
    if (!patch.is_object()) {
        throw std::runtime_error("config: expected an object at '" +
                                 (path.empty() ? "<root>" : path) + "'");
    }
    for (const auto& [key, value] : patch.items()) {
        const std::string here = path.empty() ? key : path + "." + key;
        if (!base.contains(key)) throw std::runtime_error("config: unknown key '" + here + "'");
        json& slot = base[key];
        if (slot.is_object()) {
            strict_merge(slot, value, here);
        } else {
            if (!same_json_kind(slot, value)) {
                throw std::runtime_error("config: wrong value type for '" + here + "'");
            }
            slot = value;
        }
    }
}

inline void set_dotted(json& doc, const std::string& dotted, const std::string& raw_value,
                       const std::string& origin) {
    json* at = &doc;
    size_t pos = 0;
    std::string path;
    while (true) {
        const size_t dot = dotted.find('.', pos);
        const std::string key = dotted.substr(pos, dot - pos);
        path = path.empty() ? key : path + "." + key;
        if (!at->contains(key)) {
            throw std::runtime_error(origin + ": unknown config key '" + path + "'");
        }
        at = &(*at)[key];
        if (dot == std::string::npos) break;
        pos = dot + 1;
    }
    json value;
    try {
        value = json::parse(raw_value);
    } catch (const json::parse_error&) {
        value = raw_value;  // plain string
    }
    if (at->is_object()) throw std::runtime_error(origin + ": '" + path + "' is a section");
    if (!same_json_kind(*at, value)) {
        throw std::runtime_error(origin + ": wrong value type for '" + path + "'");
    }
    *at = value;
}

inline void collect_paths(const json& doc, const std::string& prefix,
                          std::vector<std::string>& out) {
    for (const auto& [key, value] : doc.items()) {
        const std::string here = prefix.empty() ? key : prefix + "." + key;
        if (value.is_object()) {
            collect_paths(value, here, out);
        } else {
            out.push_back(here);
        }
    }
}

}  // namespace detail

inline RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    c.seed = j.at("seed").get<uint64_t>();
    c.out_dir = j.at("out_dir").get<std::string>();
    const json& d = j.at("data");
    c.data.paths = d.at("paths").get<std::vector<std::string>>();
    c.data.scene_ids = d.at("scene_ids").get<std::vector<std::string>>();
    c.data.window_stride = d.at("window_stride").get<int>();
    const json& s = j.at("split");
    c.split.mode = s.at("mode").get<std::string>();
    c.split.train_fraction = s.at("train_fraction").get<double>();
    c.split.holdout = s.at("holdout").get<std::vector<std::string>>();
    c.train = train_config_from_json(j.at("train"));
    c.kde = kde_config_from_json(j.at("kde"));
    c.mpc = mpc_config_from_json(j.at("mpc"));
    const json& p = j.at("predictor");
    c.predictor.kind = p.at("kind").get<std::string>();
    c.predictor.checkpoint = p.at("checkpoint").get<std::string>();
    c.predictor.sigma0 = p.at("sigma0").get<double>();
    c.predictor.growth = p.at("growth").get<double>();
    c.predictor.cov_scale = p.at("cov_scale").get<double>();
    c.eval.bon_n = j.at("eval").at("bon_n").get<int>();
    c.train.seed = c.train_seed();
    c.mpc.seed = c.mpc_seed();
    c.validate();
    return c;
}

/// Loads a run configuration: defaults, overlaid by the optional config file,
/// then TRAJCAL_* environment variables (double underscore as the path
/// separator, e.g. TRAJCAL_TRAIN__EPOCHS), then explicit key=value overrides.
inline RunConfig load_run_config(const std::string& config_path,
                                 const std::vector<std::string>& overrides) {
    json doc = run_config_to_json(RunConfig{});
    if (!config_path.empty()) {
        detail::strict_merge(doc, load_json_file(config_path), "");
    }

    std::vector<std::string> paths;
    detail::collect_paths(doc, "", paths);
    for (const std::string& dotted : paths) {
        std::string env = "TRAJCAL_";
        for (char ch : dotted) {
            env += ch == '.' ? std::string("__") : std::string(1, std::toupper(ch));
        }
        if (const char* v = std::getenv(env.c_str())) {
            detail::set_dotted(doc, dotted, v, env);
        }
    }

    for (const std::string& kv : overrides) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("--set expects key.path=value, got '" + kv + "'");
        }
        detail::set_dotted(doc, kv.substr(0, eq), kv.substr(eq + 1), "--set");
    }
    return run_config_from_json(doc);
}

}  // namespace trajcal
