#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "trajcal/gaussian.hpp"

namespace trajcal {

inline constexpr int kObsLen = 8;        // 3.2 s observed at 2.5 fps
inline constexpr int kPredLen = 12;      // 4.8 s predicted
inline constexpr double kFrameDt = 0.4;  // seconds per frame at 2.5 fps

/// One pedestrian's observed/future slice of a scene.
struct TrajectoryWindow {
    std::string scene_id;
    int ped_id = 0;
    long start_frame = 0;        // normalized frame index of obs.front()
    std::vector<Point2> obs;     // kObsLen points
    std::vector<Point2> future;  // kPredLen points
};

/// Gaussian predictions for a set of windows, window-major and step-minor:
/// entry w * horizon + t is step t of window w.
struct PredictionBatch {
    std::vector<Gaussian2> gaussians;
    int horizon = kPredLen;

    int windows() const {
        return horizon > 0 ? static_cast<int>(gaussians.size()) / horizon : 0;
    }
    const Gaussian2& at(int window, int step) const {
        return gaussians[static_cast<size_t>(window) * horizon + step];
    }
};

/// Ground-truth future points of `windows` flattened in batch order.
inline std::vector<Point2> flatten_futures(const std::vector<TrajectoryWindow>& windows) {
    std::vector<Point2> out;
    for (const auto& w : windows) {
        if (static_cast<int>(w.future.size()) != kPredLen) {
            throw std::invalid_argument("flatten_futures: window future length != 12");
        }
        out.insert(out.end(), w.future.begin(), w.future.end());
    }
    return out;
}

}  // namespace trajcal
