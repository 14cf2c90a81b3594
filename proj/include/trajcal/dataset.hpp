#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "trajcal/random.hpp"
#include "trajcal/types.hpp"

namespace trajcal {

/// A pedestrian log: per frame, the ids and positions of everyone present.
/// Frame ids keep their source values; `stride` is the auto-detected spacing
/// between consecutive frame ids (1 and 10 both occur in the wild), and
/// frame_index() maps ids onto consecutive indices.
struct SceneLog {
    struct Frame {
        long frame_id = 0;
        std::vector<std::pair<int, Point2>> peds;  // sorted by ped id
    };

    std::string scene_id;
    long stride = 1;
    std::vector<Frame> frames;  // strictly increasing frame ids
    double fps = 2.5;

    long frame_index(long frame_id) const {
        return frames.empty() ? 0 : (frame_id - frames.front().frame_id) / stride;
    }
    long index_count() const {
        return frames.empty() ? 0 : frame_index(frames.back().frame_id) + 1;
    }
};

/// Parses whitespace-separated rows "frame_id ped_id x y" (meters). Lines
/// starting with '#' and blank lines are skipped. Frame and pedestrian ids
/// may be written as floats (common in the exported annotation files) but
/// must hold integral values.
inline SceneLog parse_log(std::istream& in, const std::string& scene_id = "") {
    SceneLog log;
    log.scene_id = scene_id;
    std::map<long, std::vector<std::pair<int, Point2>>> frames;

    std::string line;
    long line_no = 0;
    long prev_frame = std::numeric_limits<long>::min();
    while (std::getline(in, line)) {
        ++line_no;
        const size_t first = line.find_first_not_of(" \t\r\n");
        if (first == std::string::npos || line[first] == '#') continue;

        std::istringstream row(line);
        double f = 0, p = 0, x = 0, y = 0;
        std::string extra;
        if (!(row >> f >> p >> x >> y) || (row >> extra)) {
            throw std::runtime_error(log.scene_id + ": malformed row at line " +
                                     std::to_string(line_no) + " (expected: frame ped x y)");
        }
        if (std::abs(f - std::llround(f)) > 1e-6 || std::abs(p - std::llround(p)) > 1e-6) {
            throw std::runtime_error(log.scene_id + ": non-integral frame or pedestrian id at line " +
                                     std::to_string(line_no));
        }
        if (!std::isfinite(x) || !std::isfinite(y)) {
            throw std::runtime_error(log.scene_id + ": non-finite position at line " +
                                     std::to_string(line_no));
        }
        const long frame = std::llround(f);
        const int ped = static_cast<int>(std::llround(p));
        if (frame < prev_frame) {
            throw std::runtime_error(log.scene_id + ": non-monotone frame ids at line " +
                                     std::to_string(line_no));
        }
        prev_frame = frame;
        auto& lst = frames[frame];
        for (const auto& [pid, pos] : lst) {
            (void)pos;
            if (pid == ped) {
                throw std::runtime_error(log.scene_id + ": duplicate (frame, ped) row at line " +
                                         std::to_string(line_no));
            }
        }
        lst.emplace_back(ped, Point2{x, y});
    }

    log.frames.reserve(frames.size());
    for (auto& [fid, peds] : frames) {
        std::sort(peds.begin(), peds.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        log.frames.push_back({fid, std::move(peds)});
    }

    long stride = 0;
    for (size_t i = 1; i < log.frames.size(); ++i) {
        stride = std::gcd(stride, log.frames[i].frame_id - log.frames[i - 1].frame_id);
    }
    log.stride = stride > 0 ? stride : 1;
    return log;
}

/// Writes the normalized row set back out, ordered by (frame, ped), with
/// round-trip-exact coordinates.
inline void serialize_log(const SceneLog& log, std::ostream& out) {
    char buf[128];
    for (const auto& frame : log.frames) {
        for (const auto& [ped, pos] : frame.peds) {
            std::snprintf(buf, sizeof(buf), "%ld %d %.17g %.17g\n", frame.frame_id, ped, pos.x,
                          pos.y);
            out << buf;
        }
    }
}

/// Slides a 20-frame window one frame at a time (configurable stride) over
/// every gap-free stretch of each pedestrian's track.
inline std::vector<TrajectoryWindow> make_windows(const SceneLog& log, int window_stride = 1) {
    if (window_stride < 1) throw std::invalid_argument("make_windows: window_stride must be >= 1");
    constexpr int kLen = kObsLen + kPredLen;

    std::map<int, std::vector<std::pair<long, Point2>>> tracks;  // ped -> (index, pos)
    for (const auto& frame : log.frames) {
        const long idx = log.frame_index(frame.frame_id);
        for (const auto& [ped, pos] : frame.peds) tracks[ped].emplace_back(idx, pos);
    }

    std::vector<TrajectoryWindow> out;
    for (const auto& [ped, track] : tracks) {
        size_t run_start = 0;
        for (size_t i = 1; i <= track.size(); ++i) {
            const bool gap = i == track.size() || track[i].first != track[i - 1].first + 1;
            if (!gap) continue;
            const long run_len = static_cast<long>(i - run_start);
            for (long o = 0; o + kLen <= run_len; o += window_stride) {
                TrajectoryWindow w;
                w.scene_id = log.scene_id;
                w.ped_id = ped;
                w.start_frame = track[run_start + o].first;
                w.obs.reserve(kObsLen);
                w.future.reserve(kPredLen);
                for (int j = 0; j < kObsLen; ++j) w.obs.push_back(track[run_start + o + j].second);
                for (int j = 0; j < kPredLen; ++j) {
                    w.future.push_back(track[run_start + o + kObsLen + j].second);
                }
                out.push_back(std::move(w));
            }
            run_start = i;
        }
    }
    return out;
}

struct SplitSpec {
    enum class Mode { kInDistribution, kLeaveOneOut };
    Mode mode = Mode::kInDistribution;
    double train_fraction = 0.7;
    std::vector<std::string> holdout_scenes;

    void validate() const {
        if (mode == Mode::kInDistribution &&
            !(train_fraction > 0.0 && train_fraction < 1.0)) {
            throw std::invalid_argument("SplitSpec: train_fraction must be in (0, 1)");
        }
        if (mode == Mode::kLeaveOneOut && holdout_scenes.empty()) {
            throw std::invalid_argument("SplitSpec: leave-one-out needs holdout scenes");
        }
    }
};

struct SplitResult {
    std::vector<TrajectoryWindow> train;
    std::vector<TrajectoryWindow> test;
    // per scene: first frame index assigned to the test side (in-distribution)
    std::map<std::string, long> cut_frames;
};

/// Deterministic split. In-distribution mode cuts each scene's timeline at
/// the start frame below which `train_fraction` of that scene's windows
/// begin; windows are assigned by start frame so none straddles the cut.
inline SplitResult split(const std::vector<TrajectoryWindow>& windows, const SplitSpec& spec) {
    spec.validate();
    if (windows.empty()) throw std::invalid_argument("split: no windows");
    SplitResult out;

    if (spec.mode == SplitSpec::Mode::kLeaveOneOut) {
        for (const auto& w : windows) {
            const bool held = std::find(spec.holdout_scenes.begin(), spec.holdout_scenes.end(),
                                        w.scene_id) != spec.holdout_scenes.end();
            (held ? out.test : out.train).push_back(w);
        }
        return out;
    }

    std::map<std::string, std::vector<long>> starts;
    for (const auto& w : windows) starts[w.scene_id].push_back(w.start_frame);
    for (auto& [scene, s] : starts) {
        std::sort(s.begin(), s.end());
        const size_t k =
            static_cast<size_t>(std::floor(spec.train_fraction * static_cast<double>(s.size()) + 1e-9));
        out.cut_frames[scene] = k < s.size() ? s[k] : s.back() + 1;
    }
    for (const auto& w : windows) {
        (w.start_frame < out.cut_frames[w.scene_id] ? out.train : out.test).push_back(w);
    }
    return out;
}

/// One closed-loop planning scenario: a 40-frame (16 s) replay slice, the
/// workspace rectangle around the recorded trajectories, and a start/goal
/// pair on its boundary.
struct Scenario {
    enum class Variant { kBottomTop, kRightLeft, kBlTr, kBrTl };

    std::string scene_id;
    long start_frame = 0;  // normalized frame index within the scene
    Variant variant = Variant::kBottomTop;
    double rect_x0 = 0.0, rect_y0 = 0.0, rect_x1 = 0.0, rect_y1 = 0.0;
    Point2 start;
    Point2 goal;
    std::vector<std::vector<std::pair<int, Point2>>> frames;  // replay, index 0..39
};

inline const char* to_string(Scenario::Variant v) {
    switch (v) {
        case Scenario::Variant::kBottomTop: return "bottom_top";
        case Scenario::Variant::kRightLeft: return "right_left";
        case Scenario::Variant::kBlTr: return "bl_tr";
        default: return "br_tl";
    }
}

inline Scenario::Variant scenario_variant_from_string(const std::string& s) {
    if (s == "bottom_top") return Scenario::Variant::kBottomTop;
    if (s == "right_left") return Scenario::Variant::kRightLeft;
    if (s == "bl_tr") return Scenario::Variant::kBlTr;
    if (s == "br_tl") return Scenario::Variant::kBrTl;
    throw std::invalid_argument("unknown scenario variant '" + s + "'");
}

inline constexpr int kScenarioFrames = 40;     // 16 s
inline constexpr int kScenarioSkipFrames = 20; // 8 s between starts

/// Extracts scenarios from the frame-index range [begin_index, end_index):
/// starts every 20 frames, workspace = bounding box of the pedestrians in
/// the 40-frame slice (inflated to 4 m x 4 m around the centroid when
/// degenerate), four start/goal variants per slice. Slices without any
/// pedestrian are skipped.
inline std::vector<Scenario> extract_scenarios(const SceneLog& log, long begin_index,
                                               long end_index) {
    if (begin_index < 0 || end_index < begin_index) {
        throw std::invalid_argument("extract_scenarios: bad frame-index range");
    }
    std::vector<Scenario> out;

    // frame lookup by normalized index
    std::map<long, const SceneLog::Frame*> by_index;
    for (const auto& f : log.frames) by_index[log.frame_index(f.frame_id)] = &f;

    for (long s = begin_index; s + kScenarioFrames <= end_index; s += kScenarioSkipFrames) {
        std::vector<std::vector<std::pair<int, Point2>>> replay(kScenarioFrames);
        double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
        double cx = 0.0, cy = 0.0;
        long count = 0;
        for (int j = 0; j < kScenarioFrames; ++j) {
            const auto it = by_index.find(s + j);
            if (it == by_index.end()) continue;
            replay[j] = it->second->peds;
            for (const auto& [ped, pos] : replay[j]) {
                (void)ped;
                x0 = std::min(x0, pos.x);
                y0 = std::min(y0, pos.y);
                x1 = std::max(x1, pos.x);
                y1 = std::max(y1, pos.y);
                cx += pos.x;
                cy += pos.y;
                ++count;
            }
        }
        if (count == 0) continue;  // nothing to plan around
        if ((x1 - x0) * (y1 - y0) < 1.0) {
            // degenerate workspace: inflate around the trajectory centroid
            cx /= static_cast<double>(count);
            cy /= static_cast<double>(count);
            x0 = cx - 2.0;
            x1 = cx + 2.0;
            y0 = cy - 2.0;
            y1 = cy + 2.0;
        }

        const double mx = 0.5 * (x0 + x1), my = 0.5 * (y0 + y1);
        const std::pair<Point2, Point2> endpoints[4] = {
            {{mx, y0}, {mx, y1}},  // mid-bottom -> mid-top
            {{x1, my}, {x0, my}},  // mid-right -> mid-left
            {{x0, y0}, {x1, y1}},  // bottom-left -> top-right
            {{x1, y0}, {x0, y1}},  // bottom-right -> top-left
        };
        for (int v = 0; v < 4; ++v) {
            Scenario scn;
            scn.scene_id = log.scene_id;
            scn.start_frame = s;
            scn.variant = static_cast<Scenario::Variant>(v);
            scn.rect_x0 = x0;
            scn.rect_y0 = y0;
            scn.rect_x1 = x1;
            scn.rect_y1 = y1;
            scn.start = endpoints[v].first;
            scn.goal = endpoints[v].second;
            scn.frames = replay;
            out.push_back(std::move(scn));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic data for tests and benchmarks

/// Scene of straight-line walkers, noiseless. Pedestrians enter at staggered
/// frames and move with constant velocity.
inline SceneLog make_linear_scene(const std::string& scene_id, int n_peds, int n_frames,
                                  uint64_t seed) {
    SceneLog log;
    log.scene_id = scene_id;
    Rng rng(seed);
    struct Walker {
        Point2 start;
        Point2 vel_per_frame;
        long first, last;
    };
    std::vector<Walker> walkers;
    for (int p = 0; p < n_peds; ++p) {
        Walker w;
        w.start = {rng.uniform(-8.0, 8.0), rng.uniform(-8.0, 8.0)};
        const double speed = rng.uniform(0.5, 1.5) * kFrameDt;  // meters per frame
        const double ang = rng.uniform(0.0, 2.0 * M_PI);
        w.vel_per_frame = {speed * std::cos(ang), speed * std::sin(ang)};
        w.first = n_peds > 1 ? static_cast<long>(rng.below(std::max(1, n_frames / 4))) : 0;
        w.last = n_frames - 1;
        walkers.push_back(w);
    }
    for (long f = 0; f < n_frames; ++f) {
        SceneLog::Frame frame;
        frame.frame_id = f;
        for (int p = 0; p < n_peds; ++p) {
            const Walker& w = walkers[p];
            if (f < w.first || f > w.last) continue;
            frame.peds.emplace_back(p, w.start + static_cast<double>(f - w.first) * w.vel_per_frame);
        }
        if (!frame.peds.empty()) log.frames.push_back(std::move(frame));
    }
    log.stride = 1;
    return log;
}

/// Windows of constant-velocity walkers whose recorded positions deviate
/// from the linear mean path by iid N(0, noise_sigma^2 I), observed and
/// future alike. The generative distribution is known, so near-ideal
/// calibration is achievable.
inline std::vector<TrajectoryWindow> make_noisy_linear_windows(int count, double noise_sigma,
                                                               uint64_t seed,
                                                               bool noisy_obs = true) {
    Rng rng(seed);
    std::vector<TrajectoryWindow> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        TrajectoryWindow w;
        w.scene_id = "synthetic";
        w.ped_id = i;
        w.start_frame = i;
        const Point2 start{rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0)};
        const double speed = rng.uniform(0.5, 1.5) * kFrameDt;
        const double ang = rng.uniform(0.0, 2.0 * M_PI);
        const Point2 v{speed * std::cos(ang), speed * std::sin(ang)};
        for (int j = 0; j < kObsLen; ++j) {
            Point2 p = start + static_cast<double>(j) * v;
            if (noisy_obs) p = {p.x + noise_sigma * rng.normal(), p.y + noise_sigma * rng.normal()};
            w.obs.push_back(p);
        }
        for (int j = 0; j < kPredLen; ++j) {
            const Point2 mean = start + static_cast<double>(kObsLen + j) * v;
            w.future.push_back(
                {mean.x + noise_sigma * rng.normal(), mean.y + noise_sigma * rng.normal()});
        }
        out.push_back(std::move(w));
    }
    return out;
}

/// Crossing-crowd scenario on a square workspace: constant-velocity
/// pedestrians traverse it laterally while the robot goes bottom to top.
/// `noise_sigma` jitters the recorded positions around the mean path.
inline Scenario make_crossing_scenario(int n_peds, uint64_t seed, double side = 12.0,
                                       double noise_sigma = 0.0) {
    Rng rng(seed);
    Scenario scn;
    scn.scene_id = "crossing";
    scn.start_frame = 0;
    scn.variant = Scenario::Variant::kBottomTop;
    scn.rect_x0 = 0.0;
    scn.rect_y0 = 0.0;
    scn.rect_x1 = side;
    scn.rect_y1 = side;
    scn.start = {side / 2.0, 0.0};
    scn.goal = {side / 2.0, side};
    scn.frames.assign(kScenarioFrames, {});
    for (int p = 0; p < n_peds; ++p) {
        const bool from_left = rng.uniform() < 0.5;
        const double y = rng.uniform(0.15 * side, 0.85 * side);
        const double speed = rng.uniform(0.8, 1.5) * kFrameDt;
        const long first = static_cast<long>(rng.below(kScenarioFrames - 10));
        const Point2 start{from_left ? 0.0 : side, y};
        const Point2 v{from_left ? speed : -speed, 0.0};
        for (long f = first; f < kScenarioFrames; ++f) {
            Point2 pos = start + static_cast<double>(f - first) * v;
            if (pos.x < 0.0 || pos.x > side) break;
            if (noise_sigma > 0.0) {
                pos = {pos.x + noise_sigma * rng.normal(), pos.y + noise_sigma * rng.normal()};
            }
            scn.frames[f].emplace_back(p, pos);
        }
    }
    return scn;
}

}  // namespace trajcal
