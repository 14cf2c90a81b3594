// trajcal: calibration-aware Gaussian trajectory prediction and
// uncertainty-aware planning toolkit.

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "trajcal/config.hpp"
#include "trajcal/dataset.hpp"
#include "trajcal/io.hpp"
#include "trajcal/metrics.hpp"
#include "trajcal/planner.hpp"
#include "trajcal/predictor.hpp"

namespace fs = std::filesystem;
using namespace trajcal;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> sets;
    // shorthand overrides; translated into --set pairs
    std::string seed, out, loss, beta, split, predictor;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
    cmd->add_option("--config", a.config_path, "Run configuration JSON");
    cmd->add_option("--set", a.sets, "Override a config value: key.path=value");
    cmd->add_option("--seed", a.seed, "Root seed (overrides config)");
    cmd->add_option("--out", a.out, "Output directory");
    cmd->add_option("--loss", a.loss, "Training loss: nll|nll_mhd|cdf");
    cmd->add_option("--beta", a.beta, "Calibration-term weight");
    cmd->add_option("--split", a.split, "Split: in_dist or loo:<scene>");
    cmd->add_option("--predictor", a.predictor, "Predictor: cv or mlp:<checkpoint>");
}

RunConfig resolve_config(const CommonArgs& a) {
    std::vector<std::string> sets = a.sets;
    if (!a.seed.empty()) sets.push_back("seed=" + a.seed);
    if (!a.out.empty()) sets.push_back("out_dir=\"" + a.out + "\"");
    if (!a.loss.empty()) sets.push_back("train.loss=\"" + a.loss + "\"");
    if (!a.beta.empty()) sets.push_back("train.beta=" + a.beta);
    if (!a.split.empty()) {
        if (a.split == "in_dist") {
            sets.push_back("split.mode=\"in_dist\"");
        } else if (a.split.rfind("loo:", 0) == 0) {
            sets.push_back("split.mode=\"loo\"");
            sets.push_back("split.holdout=[\"" + a.split.substr(4) + "\"]");
        } else {
            throw std::runtime_error("--split expects in_dist or loo:<scene>");
        }
    }
    if (!a.predictor.empty()) {
        if (a.predictor == "cv") {
            sets.push_back("predictor.kind=\"cv\"");
        } else if (a.predictor.rfind("mlp:", 0) == 0) {
            sets.push_back("predictor.kind=\"mlp\"");
            sets.push_back("predictor.checkpoint=\"" + a.predictor.substr(4) + "\"");
        } else {
            throw std::runtime_error("--predictor expects cv or mlp:<checkpoint>");
        }
    }
    return load_run_config(a.config_path, sets);
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

void write_out(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    save_text_file(path.string(), text);
}

// scenario frame-index ranges of the test portion, per scene
std::vector<Scenario> extract_all_scenarios(const std::vector<SceneLog>& scenes,
                                            const RunConfig& cfg,
                                            const std::map<std::string, long>& cuts) {
    std::vector<Scenario> out;
    const SplitSpec spec = cfg.split_spec();
    for (const SceneLog& log : scenes) {
        long begin = 0;
        if (spec.mode == SplitSpec::Mode::kInDistribution) {
            const auto it = cuts.find(log.scene_id);
            if (it == cuts.end()) continue;
            begin = it->second;
        } else {
            const bool held = std::find(spec.holdout_scenes.begin(), spec.holdout_scenes.end(),
                                        log.scene_id) != spec.holdout_scenes.end();
            if (!held) continue;
        }
        const auto scns = extract_scenarios(log, begin, log.index_count());
        out.insert(out.end(), scns.begin(), scns.end());
    }
    std::sort(out.begin(), out.end(), [](const Scenario& a, const Scenario& b) {
        return scenario_id(a) < scenario_id(b);
    });
    return out;
}

int cmd_ingest(const CommonArgs& args, const std::vector<std::string>& paths) {
    RunConfig cfg = resolve_config(args);
    std::vector<std::string> inputs = paths.empty() ? cfg.data.paths : paths;
    if (inputs.empty()) {
        std::cerr << "ingest: no input files (give paths or set data.paths)\n";
        return 1;
    }

    DatasetCache cache;
    cache.seed = cfg.seed;
    std::vector<TrajectoryWindow> windows;
    for (size_t i = 0; i < inputs.size(); ++i) {
        std::ifstream in(inputs[i]);
        if (!in) {
            std::cerr << "ingest: cannot open " << inputs[i] << "\n";
            return 1;
        }
        const std::string scene_id =
            i < cfg.data.scene_ids.size() ? cfg.data.scene_ids[i] : stem_of(inputs[i]);
        SceneLog log = parse_log(in, scene_id);
        const auto w = make_windows(log, cfg.data.window_stride);
        windows.insert(windows.end(), w.begin(), w.end());
        cache.scenes.push_back(std::move(log));
    }

    if (!windows.empty()) {
        const SplitResult split_result = split(windows, cfg.split_spec());
        cache.train = split_result.train;
        cache.test = split_result.test;
        cache.cut_frames = split_result.cut_frames;
    }
    cache.scenarios = extract_all_scenarios(cache.scenes, cfg, cache.cut_frames);

    const fs::path dir(cfg.out_dir);
    write_out(dir / "cache.json", cache_to_json(cache).dump(1) + "\n");
    write_out(dir / "windows.csv", windows_csv(cache.train, cache.test, cfg.seed));
    std::cout << "scenes " << cache.scenes.size() << ", windows " << windows.size() << " (train "
              << cache.train.size() << ", test " << cache.test.size() << "), scenarios "
              << cache.scenarios.size() << "\n";
    std::cout << "wrote " << (dir / "cache.json").string() << " and "
              << (dir / "windows.csv").string() << "\n";
    return 0;
}

int cmd_train(const CommonArgs& args, const std::string& cache_path) {
    RunConfig cfg = resolve_config(args);
    const DatasetCache cache = cache_from_json(load_json_file(cache_path));
    if (cache.train.empty()) {
        std::cerr << "train: cache has no training windows\n";
        return 1;
    }

    std::vector<TrajectoryWindow> train_set = cache.train;
    std::sort(train_set.begin(), train_set.end(),
              [](const TrajectoryWindow& a, const TrajectoryWindow& b) {
                  return std::tie(a.scene_id, a.start_frame, a.ped_id) <
                         std::tie(b.scene_id, b.start_frame, b.ped_id);
              });
    // hold the last tenth out of the optimizer's sight as a validation slice
    const size_t val_n = train_set.size() >= 10 ? train_set.size() / 10 : 0;
    std::vector<TrajectoryWindow> val_set(train_set.end() - val_n, train_set.end());
    train_set.resize(train_set.size() - val_n);

    const ModelParams init = MlpPredictor::init_params(mix_seed(cfg.seed, 4), cfg.train.hidden);
    TrainResult result;
    try {
        result = train(init, train_set, val_set, cfg.train, cfg.kde);
    } catch (const TrainDivergedError& e) {
        std::cerr << "train: " << e.what() << "\n";
        return 2;
    }

    for (const EpochStats& st : result.trace) {
        if (st.bin_cap_hit) {
            std::cerr << "warning: KDE bin cap (10000 bins) hit during training; "
                         "an outlier distance truncated the bin range\n";
            break;
        }
    }
    const fs::path dir(cfg.out_dir);
    write_out(dir / "checkpoint.json",
              checkpoint_to_json(result.params, cfg.train, cfg.kde, cfg.seed).dump(1) + "\n");
    std::ostringstream trace;
    trace << "# trajcal train seed=" << cfg.seed << "\n";
    trace << "epoch,loss,cdf_term,mean_error_term,val_ade,val_fde\n";
    for (const EpochStats& st : result.trace) {
        char buf[192];
        std::snprintf(buf, sizeof(buf), "%d,%.8f,%.8f,%.8f,%.6f,%.6f\n", st.epoch, st.loss,
                      st.cdf_term, st.mean_error_term, st.val_ade, st.val_fde);
        trace << buf;
    }
    write_out(dir / "trace.csv", trace.str());
    std::cout << "trained " << cfg.train.epochs << " epochs (" << to_string(cfg.train.loss)
              << "), final loss " << result.trace.back().loss << "\n";
    std::cout << "wrote " << (dir / "checkpoint.json").string() << " and "
              << (dir / "trace.csv").string() << "\n";
    return 0;
}

// prediction surface shared by eval and plan
struct LoadedPredictor {
    std::string label;
    PredictorFn fn;                      // 8-point history -> 12 Gaussians
    std::optional<MlpPredictor> model;   // kept alive for fn
};

LoadedPredictor build_predictor(const RunConfig& cfg) {
    LoadedPredictor p;
    const double scale = cfg.predictor.cov_scale;
    if (cfg.predictor.kind == "cv") {
        p.label = "cv";
        const double s0 = cfg.predictor.sigma0, gr = cfg.predictor.growth;
        p.fn = [s0, gr, scale](const std::vector<Point2>& hist) {
            auto g = predict_cv(hist, s0, gr);
            if (scale != 1.0) {
                for (auto& gg : g) gg = scaled_covariance(gg, scale);
            }
            return g;
        };
        return p;
    }
    if (cfg.predictor.checkpoint.empty()) {
        throw std::runtime_error("predictor.kind=mlp needs predictor.checkpoint");
    }
    const Checkpoint ck = checkpoint_from_json(load_json_file(cfg.predictor.checkpoint));
    p.label = "mlp:" + cfg.predictor.checkpoint;
    p.model.emplace(ck.params);
    const MlpPredictor* model = &*p.model;
    p.fn = [model, scale](const std::vector<Point2>& hist) {
        if (static_cast<int>(hist.size()) != kObsLen) {
            throw std::runtime_error("mlp predictor needs an 8-point history");
        }
        TrajectoryWindow w;
        w.obs = hist;
        auto g = model->predict(w);
        if (scale != 1.0) {
            for (auto& gg : g) gg = scaled_covariance(gg, scale);
        }
        return g;
    };
    return p;
}

int cmd_eval(const CommonArgs& args, const std::string& cache_path) {
    RunConfig cfg = resolve_config(args);
    const DatasetCache cache = cache_from_json(load_json_file(cache_path));
    if (cache.test.empty()) {
        std::cerr << "eval: no windows in the test split\n";
        return 1;
    }
    const LoadedPredictor pred = build_predictor(cfg);

    PredictionBatch batch;
    batch.horizon = kPredLen;
    for (const TrajectoryWindow& w : cache.test) {
        if (static_cast<int>(w.obs.size()) != kObsLen ||
            static_cast<int>(w.future.size()) != kPredLen) {
            std::cerr << "eval: window shape mismatch (need 8 observed / 12 future)\n";
            return 1;
        }
        const auto g = pred.fn(w.obs);
        batch.gaussians.insert(batch.gaussians.end(), g.begin(), g.end());
    }
    const std::vector<Point2> truth = flatten_futures(cache.test);

    MetricsReport report;
    report.predictor = pred.label;
    report.windows = static_cast<int>(cache.test.size());
    std::tie(report.ade, report.fde) = ade_fde(batch, truth);
    report.esv = esv_report(batch, truth);
    if (cfg.eval.bon_n > 0) {
        Rng rng(cfg.bon_seed());
        report.bon_n = cfg.eval.bon_n;
        std::tie(report.bon_ade, report.bon_fde) = bon_ade_fde(batch, truth, cfg.eval.bon_n, rng);
    }

    const fs::path dir(cfg.out_dir);
    write_out(dir / "metrics.json", metrics_to_json(report, cfg.seed).dump(1) + "\n");
    write_out(dir / "metrics.csv", metrics_csv(report, cfg.seed));
    std::cout << "windows " << report.windows << "  ADE/FDE " << report.ade << "/" << report.fde
              << "  dESV1 " << report.esv.delta_esv_1 << "  mean|dESV| "
              << report.esv.mean_abs_delta_esv << "\n";
    std::cout << "wrote " << (dir / "metrics.json").string() << " and "
              << (dir / "metrics.csv").string() << "\n";
    return 0;
}

int cmd_make_scenarios(const CommonArgs& args, const std::string& cache_path) {
    RunConfig cfg = resolve_config(args);
    const DatasetCache cache = cache_from_json(load_json_file(cache_path));
    const auto scenarios = extract_all_scenarios(cache.scenes, cfg, cache.cut_frames);
    json out = {{"format", "trajcal-scenarios"},
                {"version", 1},
                {"seed", cfg.seed},
                {"scenarios", json::array()}};
    for (const Scenario& s : scenarios) out["scenarios"].push_back(scenario_to_json(s));
    const fs::path dir(cfg.out_dir);
    write_out(dir / "scenarios.json", out.dump(1) + "\n");
    std::cout << "scenarios " << scenarios.size() << "\n";
    std::cout << "wrote " << (dir / "scenarios.json").string() << "\n";
    return 0;
}

std::vector<Scenario> load_scenarios(const std::string& path) {
    const json j = load_json_file(path);
    const std::string format = j.value("format", "");
    std::vector<Scenario> out;
    if (format == "trajcal-cache") {
        for (const auto& js : j.at("scenarios")) out.push_back(scenario_from_json(js));
    } else if (format == "trajcal-scenarios") {
        for (const auto& js : j.at("scenarios")) out.push_back(scenario_from_json(js));
    } else {
        throw std::runtime_error(path + ": expected a trajcal cache or scenarios file");
    }
    return out;
}

int cmd_plan(const CommonArgs& args, const std::string& scenarios_path,
             const std::string& trace_dir) {
    RunConfig cfg = resolve_config(args);
    std::vector<Scenario> scenarios = load_scenarios(scenarios_path);
    if (scenarios.empty()) {
        std::cerr << "plan: no scenarios\n";
        return 1;
    }
    std::sort(scenarios.begin(), scenarios.end(), [](const Scenario& a, const Scenario& b) {
        return scenario_id(a) < scenario_id(b);
    });
    const LoadedPredictor pred = build_predictor(cfg);

    MpcConfig mpc = cfg.mpc;
    mpc.seed = cfg.mpc_seed();
    SimOptions opts;
    opts.record_predictions = !trace_dir.empty();

    std::ostringstream csv;
    csv << "# trajcal plan seed=" << cfg.seed << " predictor=" << pred.label << "\n";
    csv << plan_csv_header();
    std::vector<PlanResult> results;
    results.reserve(scenarios.size());
    for (const Scenario& scn : scenarios) {
        PlanResult r = run_scenario(scn, pred.fn, mpc, opts);
        csv << plan_csv_row(scn, r);
        if (!trace_dir.empty()) {
            fs::create_directories(trace_dir);
            std::string name = scenario_id(scn);
            std::replace(name.begin(), name.end(), ':', '_');
            save_text_file((fs::path(trace_dir) / (name + ".json")).string(),
                           trace_to_json(scn, r, cfg.seed).dump(1) + "\n");
        }
        results.push_back(std::move(r));
    }
    const PlanAggregate agg = aggregate(results);

    const fs::path dir(cfg.out_dir);
    write_out(dir / "plan.csv", csv.str());
    write_out(dir / "plan_aggregate.json", aggregate_to_json(agg, cfg.seed).dump(1) + "\n");
    std::cout << "scenarios " << agg.scenarios << "  SR/CR/TR " << agg.success_rate << "/"
              << agg.collision_rate << "/" << agg.timeout_rate << "  nav "
              << agg.nav_time_steps.mean << "  path " << agg.path_length.mean << "  intr "
              << agg.intrusion_ratio.mean << "\n";
    std::cout << "wrote " << (dir / "plan.csv").string() << " and "
              << (dir / "plan_aggregate.json").string() << "\n";
    return 0;
}

std::string fmt(double v, int prec = 3) {
    if (std::isnan(v)) return "-";
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

int cmd_report(const std::vector<std::string>& paths, const std::string& out_csv) {
    std::ostringstream merged;
    bool metrics_header = false, plan_header = false;
    for (const std::string& path : paths) {
        const json j = load_json_file(path);
        const std::string format = j.value("format", "");
        if (format == "trajcal-metrics") {
            if (!metrics_header) {
                std::cout << "prediction  " << std::setw(28) << std::left << "predictor"
                          << "ADE / FDE        dESV1   dESV2   dESV3   mean|dESV|\n";
                metrics_header = true;
            }
            std::cout << "            " << std::setw(28) << std::left
                      << j.at("predictor").get<std::string>()
                      << fmt(j.at("ade")) + " / " + fmt(j.at("fde")) << "    "
                      << fmt(j.at("delta_esv_1")) << "  " << fmt(j.at("delta_esv_2")) << "  "
                      << fmt(j.at("delta_esv_3")) << "  " << fmt(j.at("mean_abs_delta_esv"))
                      << "\n";
            merged << path << ",metrics," << j.at("ade") << "," << j.at("fde") << ","
                   << j.at("delta_esv_1") << "," << j.at("delta_esv_2") << ","
                   << j.at("delta_esv_3") << "," << j.at("mean_abs_delta_esv") << "\n";
        } else if (format == "trajcal-plan-aggregate") {
            if (!plan_header) {
                std::cout << "planning    SR / CR / TR         nav time        path len        "
                             "%intr ratio / min intr dist\n";
                plan_header = true;
            }
            const auto ms = [&](const char* key, double mul = 1.0) {
                const json& m = j.at(key);
                if (m.at("n").get<int>() == 0) return std::string("-");
                return fmt(m.at("mean").get<double>() * mul) + " +- " +
                       fmt(m.at("stderr").get<double>() * mul);
            };
            std::cout << "            " << fmt(j.at("success_rate"), 2) << " / "
                      << fmt(j.at("collision_rate"), 2) << " / " << fmt(j.at("timeout_rate"), 2)
                      << "    " << std::setw(15) << std::left << ms("nav_time_steps")
                      << " " << std::setw(15) << std::left << ms("path_length") << " "
                      << ms("intrusion_ratio", 100.0) << " / " << ms("min_intrusion_distance")
                      << "\n";
            merged << path << ",plan," << j.at("success_rate") << "," << j.at("collision_rate")
                   << "," << j.at("timeout_rate") << "\n";
        } else {
            std::cerr << "report: " << path << " is not a trajcal report JSON\n";
            return 1;
        }
    }
    if (!out_csv.empty()) write_out(out_csv, merged.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"calibration-aware trajectory prediction and planning toolkit"};
    app.require_subcommand(1);

    CommonArgs ingest_args, train_args, eval_args, scen_args, plan_args;
    std::vector<std::string> ingest_paths;
    std::string train_cache, eval_cache, scen_cache, plan_scenarios, plan_trace_dir;
    std::vector<std::string> report_paths;
    std::string report_out;

    CLI::App* ingest = app.add_subcommand("ingest", "Parse logs into a windows/scenarios cache");
    ingest->add_option("paths", ingest_paths, "Annotation files (frame ped x y rows)");
    add_common(ingest, ingest_args);

    CLI::App* train_cmd = app.add_subcommand("train", "Train the reference predictor");
    train_cmd->add_option("cache", train_cache, "Cache file from ingest")->required();
    add_common(train_cmd, train_args);

    CLI::App* eval_cmd = app.add_subcommand("eval", "Prediction metrics on the test split");
    eval_cmd->add_option("cache", eval_cache, "Cache file from ingest")->required();
    add_common(eval_cmd, eval_args);

    CLI::App* scen = app.add_subcommand("make-scenarios", "Re-extract planning scenarios");
    scen->add_option("cache", scen_cache, "Cache file from ingest")->required();
    add_common(scen, scen_args);

    CLI::App* plan = app.add_subcommand("plan", "Closed-loop planning over scenarios");
    plan->add_option("scenarios", plan_scenarios, "Cache or scenarios JSON")->required();
    plan->add_option("--trace-dir", plan_trace_dir, "Write per-scenario trace JSONs here");
    add_common(plan, plan_args);

    CLI::App* report = app.add_subcommand("report", "Render metric/planning JSONs as tables");
    report->add_option("reports", report_paths, "metrics.json / plan_aggregate.json files")
        ->required();
    report->add_option("--out", report_out, "Also write a merged CSV");

    CLI11_PARSE(app, argc, argv);

    try {
        if (ingest->parsed()) return cmd_ingest(ingest_args, ingest_paths);
        if (train_cmd->parsed()) return cmd_train(train_args, train_cache);
        if (eval_cmd->parsed()) return cmd_eval(eval_args, eval_cache);
        if (scen->parsed()) return cmd_make_scenarios(scen_args, scen_cache);
        if (plan->parsed()) return cmd_plan(plan_args, plan_scenarios, plan_trace_dir);
        if (report->parsed()) return cmd_report(report_paths, report_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
