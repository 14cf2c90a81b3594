#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "trajcal/metrics.hpp"

using namespace trajcal;
using Catch::Approx;

namespace {

// batch of `windows` windows whose Gaussians sit at given offsets from truth
PredictionBatch offset_batch(int windows, double (*offset)(int step), std::vector<Point2>& truth) {
    PredictionBatch b;
    b.horizon = kPredLen;
    truth.clear();
    for (int w = 0; w < windows; ++w) {
        for (int t = 0; t < kPredLen; ++t) {
            const Point2 gt{static_cast<double>(w), static_cast<double>(t)};
            truth.push_back(gt);
            b.gaussians.push_back({gt.x + offset(t + 1), gt.y, 1.0, 1.0, 0.0});
        }
    }
    return b;
}

PredictionBatch sampled_truth_batch(int n, Rng& rng, std::vector<Point2>& truth,
                                    double cov_scale = 1.0) {
    PredictionBatch b;
    b.horizon = kPredLen;
    truth.clear();
    for (int i = 0; i < n; ++i) {
        Gaussian2 g{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0.2, 2.0),
                    rng.uniform(0.2, 2.0), rng.uniform(-0.9, 0.9)};
        truth.push_back(sample(g, rng));
        b.gaussians.push_back(scaled_covariance(g, cov_scale));
    }
    return b;
}

}  // namespace

TEST_CASE("ade_fde closed forms") {
    std::vector<Point2> truth;

    auto zero = offset_batch(3, [](int) { return 0.0; }, truth);
    auto [a0, f0] = ade_fde(zero, truth);
    CHECK(a0 == 0.0);
    CHECK(f0 == 0.0);

    auto one = offset_batch(3, [](int) { return 1.0; }, truth);
    auto [a1, f1] = ade_fde(one, truth);
    CHECK(a1 == Approx(1.0));
    CHECK(f1 == Approx(1.0));

    // offset 0.1 * k at step k: ADE = 0.1 * (1 + ... + 12)/12 = 0.65, FDE = 1.2
    auto ramp = offset_batch(2, [](int k) { return 0.1 * k; }, truth);
    auto [ar, fr] = ade_fde(ramp, truth);
    CHECK(ar == Approx(0.65));
    CHECK(fr == Approx(1.2));

    CHECK_THROWS_AS(ade_fde(PredictionBatch{}, {}), std::invalid_argument);
}

TEST_CASE("esv_report at the exact mean is maximally underconfident per level") {
    std::vector<Point2> truth;
    auto exact = offset_batch(4, [](int) { return 0.0; }, truth);
    const EsvReport r = esv_report(exact, truth);
    CHECK(r.delta_esv_1 == Approx(1.0 - 0.3935).margin(1e-4));
    CHECK(r.delta_esv_2 == Approx(1.0 - 0.8647).margin(1e-4));
    CHECK(r.delta_esv_3 == Approx(1.0 - 0.9889).margin(1e-4));
    REQUIRE(r.levels.size() == 100);
    for (const auto& row : r.levels) {
        CHECK(row.empirical == 1.0);
        CHECK(row.ideal == Approx(row.level));
    }
    CHECK(r.levels.back().level == Approx(0.9999));
}

TEST_CASE("esv_report is calibrated when truth is sampled from the predictions") {
    Rng rng(314);
    std::vector<Point2> truth;
    auto b = sampled_truth_batch(10008, rng, truth);
    const EsvReport r = esv_report(b, truth);
    CHECK(std::abs(r.delta_esv_1) < 0.03);
    CHECK(std::abs(r.delta_esv_2) < 0.03);
    CHECK(std::abs(r.delta_esv_3) < 0.03);
    CHECK(r.mean_abs_delta_esv < 0.03);

    // consistency: the reported mean is the mean of the level table
    double acc = 0.0;
    for (const auto& row : r.levels) acc += std::abs(row.empirical - row.ideal);
    CHECK(r.mean_abs_delta_esv == Approx(acc / 100.0));
}

TEST_CASE("esv_report flags shrunken covariances as overconfident") {
    Rng rng(271);
    std::vector<Point2> truth;
    auto b = sampled_truth_batch(5004, rng, truth, 0.01);  // 10x smaller deviations
    const EsvReport r = esv_report(b, truth);
    CHECK(r.delta_esv_1 < 0.0);
    CHECK(r.delta_esv_2 < 0.0);
    CHECK(r.delta_esv_3 < 0.0);
}

TEST_CASE("esv deltas are invariant under rigid transforms") {
    Rng rng(161);
    std::vector<Point2> truth;
    auto b = sampled_truth_batch(1200, rng, truth);
    const EsvReport base = esv_report(b, truth);

    const double ang = 0.83;
    const std::array<double, 4> rot{std::cos(ang), -std::sin(ang), std::sin(ang), std::cos(ang)};
    const Point2 shift{13.0, -4.0};
    PredictionBatch tb;
    tb.horizon = b.horizon;
    std::vector<Point2> tt;
    for (size_t i = 0; i < truth.size(); ++i) {
        tb.gaussians.push_back(affine_transform(b.gaussians[i], rot, shift));
        tt.push_back({rot[0] * truth[i].x + rot[1] * truth[i].y + shift.x,
                      rot[2] * truth[i].x + rot[3] * truth[i].y + shift.y});
    }
    const EsvReport moved = esv_report(tb, tt);
    CHECK(moved.delta_esv_1 == Approx(base.delta_esv_1).margin(1e-9));
    CHECK(moved.delta_esv_2 == Approx(base.delta_esv_2).margin(1e-9));
    CHECK(moved.delta_esv_3 == Approx(base.delta_esv_3).margin(1e-9));
    CHECK(moved.mean_abs_delta_esv == Approx(base.mean_abs_delta_esv).margin(1e-9));
}

TEST_CASE("bon_ade_fde degenerates to ade_fde for n=1 with tiny covariance") {
    std::vector<Point2> truth;
    auto b = offset_batch(3, [](int k) { return 0.1 * k; }, truth);
    for (auto& g : b.gaussians) g.sx = g.sy = 1e-9;
    Rng rng(5);
    const auto [ba, bf] = bon_ade_fde(b, truth, 1, rng);
    const auto [a, f] = ade_fde(b, truth);
    CHECK(ba == Approx(a).margin(1e-6));
    CHECK(bf == Approx(f).margin(1e-6));
}

TEST_CASE("bon with more samples cannot do worse on aggregate") {
    std::vector<Point2> truth;
    Rng gen(8);
    auto b = sampled_truth_batch(240, gen, truth);
    double sum1 = 0.0, sum20 = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        Rng r1(mix_seed(1000, rep)), r20(mix_seed(2000, rep));
        sum1 += bon_ade_fde(b, truth, 1, r1).first;
        sum20 += bon_ade_fde(b, truth, 20, r20).first;
    }
    CHECK(sum20 <= sum1);
}

TEST_CASE("bon at the exact mean stays within the sampling noise bound") {
    std::vector<Point2> truth;
    auto b = offset_batch(6, [](int) { return 0.0; }, truth);
    const double sigma = 0.3;
    for (auto& g : b.gaussians) g.sx = g.sy = sigma;
    Rng rng(77);
    const auto [ba, bf] = bon_ade_fde(b, truth, 8, rng);
    CHECK(ba < 3.0 * sigma);
    CHECK(bf < 3.0 * sigma);
    CHECK(ba > 0.0);
}

TEST_CASE("bon is deterministic under the seed") {
    std::vector<Point2> truth;
    Rng gen(9);
    auto b = sampled_truth_batch(60, gen, truth);
    Rng r1(123), r2(123);
    CHECK(bon_ade_fde(b, truth, 5, r1) == bon_ade_fde(b, truth, 5, r2));
}
