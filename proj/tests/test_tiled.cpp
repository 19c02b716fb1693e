#include <doctest.h>

#include <cmath>

#include "wassdiff/rng.hpp"
#include "wassdiff/tiled.hpp"

using namespace wassdiff;

namespace {

ScoreFn pointwise_gaussian_score(double mu, double sd, const NoiseSchedule& schedule) {
    return [mu, sd, schedule](const GridField& x, double t) {
        double var = sd * sd + sigma_at(schedule, t) * sigma_at(schedule, t);
        GridField s(x.height, x.width, Space::normalized, x.cell_km);
        for (size_t i = 0; i < x.values.size(); ++i) s.values[i] = -(x.values[i] - mu) / var;
        return s;
    };
}

}  // namespace

TEST_SUITE("tiled") {

TEST_CASE("patch offsets step by stride and clamp at the edge") {
    PatchPlan plan = plan_patches(512, 512, 256, 192);
    CHECK(plan.row_offsets == std::vector<int>{0, 192, 256});
    CHECK(plan.col_offsets == std::vector<int>{0, 192, 256});

    PatchPlan single = plan_patches(64, 64, 64, 48);
    CHECK(single.row_offsets == std::vector<int>{0});
    CHECK(single.patch_count() == 1);

    CHECK_THROWS_AS(plan_patches(32, 32, 64, 48), DimensionError);
    CHECK_THROWS_AS(plan_patches(64, 64, 32, 0), DomainError);
    CHECK_THROWS_AS(plan_patches(64, 64, 32, 40), DomainError);
}

TEST_CASE("every pixel is covered for random valid plans") {
    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        int patch = 8 + static_cast<int>(rng.uniform_index(24));
        int stride = 1 + static_cast<int>(rng.uniform_index(patch));
        int h = patch + static_cast<int>(rng.uniform_index(64));
        int w = patch + static_cast<int>(rng.uniform_index(64));
        PatchPlan plan = plan_patches(h, w, patch, stride);
        std::vector<int> cover(static_cast<size_t>(h) * w, 0);
        for (int r0 : plan.row_offsets)
            for (int c0 : plan.col_offsets)
                for (int r = 0; r < patch; ++r)
                    for (int c = 0; c < patch; ++c)
                        cover[static_cast<size_t>(r0 + r) * w + (c0 + c)] = 1;
        for (int covered : cover) CHECK(covered == 1);
    }
}

TEST_CASE("blend kernel is strictly positive and center-peaked") {
    BlendKernel kernel = make_blend_kernel(16);
    for (double w : kernel.weights) CHECK(w > 0.0);
    double center = kernel.weights[8 * 16 + 8];
    CHECK(center > kernel.weights[0]);
}

TEST_CASE("normalized blend weights sum to one everywhere") {
    PatchPlan plan = plan_patches(96, 80, 32, 24);
    BlendKernel kernel = make_blend_kernel(32);
    std::vector<double> map = normalization_map(plan, kernel);
    for (double m : map) CHECK(m > 0.0);

    // normalized per-pixel sums
    std::vector<double> normalized(map.size(), 0.0);
    for (int r0 : plan.row_offsets)
        for (int c0 : plan.col_offsets)
            for (int r = 0; r < plan.patch; ++r)
                for (int c = 0; c < plan.patch; ++c) {
                    size_t px = static_cast<size_t>(r0 + r) * plan.width + (c0 + c);
                    normalized[px] += kernel.weights[static_cast<size_t>(r) * plan.patch + c] / map[px];
                }
    for (double s : normalized) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("merge of restrictions of one field reproduces the field") {
    Rng rng(9);
    GridField global(48, 40, Space::normalized);
    for (double& v : global.values) v = rng.normal();
    PatchPlan plan = plan_patches(48, 40, 16, 12);
    BlendKernel kernel = make_blend_kernel(16);
    std::vector<GridField> outputs;
    for (int r0 : plan.row_offsets)
        for (int c0 : plan.col_offsets)
            outputs.push_back(extract_window(global, r0, c0, 16, 16));
    GridField merged = merge_step(outputs, plan, kernel);
    for (size_t i = 0; i < global.size(); ++i)
        CHECK(merged.values[i] == doctest::Approx(global.values[i]).epsilon(1e-12));
}

TEST_CASE("single-patch merge is the identity") {
    Rng rng(10);
    GridField patch_out(32, 32, Space::normalized);
    for (double& v : patch_out.values) v = rng.normal();
    PatchPlan plan = plan_patches(32, 32, 32, 32);
    BlendKernel kernel = make_blend_kernel(32);
    GridField merged = merge_step({patch_out}, plan, kernel);
    CHECK(merged.values == patch_out.values);
}

TEST_CASE("merge requires one output per planned patch") {
    PatchPlan plan = plan_patches(32, 32, 16, 12);
    BlendKernel kernel = make_blend_kernel(16);
    std::vector<GridField> too_few(2, GridField(16, 16, Space::normalized));
    CHECK_THROWS_AS(merge_step(too_few, plan, kernel), StateError);
}

TEST_CASE("overlap between constant patches blends monotonically") {
    PatchPlan plan = plan_patches(16, 24, 16, 8);  // two patches overlapping by 8 columns
    REQUIRE(plan.col_offsets == std::vector<int>{0, 8});
    BlendKernel kernel = make_blend_kernel(16);
    GridField zeros(16, 16, Space::normalized);
    GridField ones(16, 16, Space::normalized, 1.0, 1.0);
    GridField merged = merge_step({zeros, ones}, plan, kernel);
    for (int c = 8; c < 16; ++c) {
        double v = merged.at(8, c);
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        if (c > 8) CHECK(v >= merged.at(8, c - 1));
    }
}

TEST_CASE("degenerate whole-image plan reproduces the plain sampler bit for bit") {
    NoiseSchedule schedule{0.01, 50.0};
    ScoreFn score = pointwise_gaussian_score(0.4, 0.7, schedule);
    SamplerConfig cfg;
    cfg.num_steps = 40;
    cfg.seed = 77;
    GridField direct = pc_sample_with_score(score, 32, 32, schedule, cfg);

    PatchPlan plan = plan_patches(32, 32, 32, 32);
    BlendKernel kernel = make_blend_kernel(32);
    PatchScoreFn patch_score = [&](const GridField& x, double t, int, int) { return score(x, t); };
    GridField tiled = tiled_pc_sample_with_score(patch_score, 32, 32, schedule, cfg, plan, kernel);
    CHECK(tiled.values == direct.values);
}

TEST_CASE("pointwise scores make tiled and full-frame sampling agree") {
    NoiseSchedule schedule{0.01, 50.0};
    ScoreFn score = pointwise_gaussian_score(-0.3, 0.5, schedule);
    SamplerConfig cfg;
    cfg.num_steps = 120;
    cfg.seed = 13;
    GridField direct = pc_sample_with_score(score, 64, 64, schedule, cfg);

    PatchPlan plan = plan_patches(64, 64, 32, 24);
    BlendKernel kernel = make_blend_kernel(32);
    PatchScoreFn patch_score = [&](const GridField& x, double t, int, int) { return score(x, t); };
    GridField tiled = tiled_pc_sample_with_score(patch_score, 64, 64, schedule, cfg, plan, kernel);

    double max_abs = 0.0;
    for (size_t i = 0; i < direct.size(); ++i)
        max_abs = std::max(max_abs, std::abs(tiled.values[i] - direct.values[i]));
    CHECK(max_abs < 1e-5);
    CHECK(tiled.height == 64);
    CHECK(tiled.width == 64);
}

}  // TEST_SUITE
